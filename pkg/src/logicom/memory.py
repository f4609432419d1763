"""Keep an agent's context inside its token budget by summarizing old turns."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, replace
from importlib import resources
from typing import Callable, Sequence

from .backend import (
    NO_WAIT,
    Backend,
    BackendConfig,
    BackendFailure,
    CompletionRequest,
    RetryPolicy,
    ScriptExhausted,
    Speaker,
    TransportError,
    complete_with_policy,
)
from .model import Author, ChatMessage, Transcript

logger = logging.getLogger(__name__)

Counter = Callable[[str], int]
Summarizer = Callable[[Sequence[ChatMessage]], str]

SPEAKER_LABELS = {Author.PERSUADER: "Human", Author.DEBATER: "AI", Author.SYSTEM: "System"}


class BudgetInfeasible(Exception):
    """The irreducible part of the context does not fit the budget."""


class SummaryNotSmaller(Exception):
    """The summarizer kept producing summaries at least as long as its input."""


@dataclass(frozen=True)
class TokenBudget:
    context_window: int
    reserved_output: int = 0

    def __post_init__(self) -> None:
        if self.effective_budget <= 0:
            raise ValueError(
                f"effective budget {self.effective_budget} must be positive "
                f"(context {self.context_window}, reserved {self.reserved_output})"
            )

    @property
    def effective_budget(self) -> int:
        return self.context_window - self.reserved_output

    @classmethod
    def for_backend(cls, config: BackendConfig) -> "TokenBudget":
        return cls(config.context_window_tokens, config.reserved_output)


def label(message: ChatMessage) -> str:
    return f"{SPEAKER_LABELS[message.author]}: {message.text}"


def attach_summary(system_text: str, note: str | None) -> str:
    if not note:
        return system_text
    return f"{system_text}\n\n{note}" if system_text else note


def context_tokens(transcript: Transcript, system_text: str, counter: Counter) -> int:
    """Tokens an agent would send: system prompt with summary note plus every turn."""
    total = counter(attach_summary(system_text, transcript.summary_note))
    return total + sum(counter(m.text) for m in transcript.dialogue())


def fit_to_budget(
    transcript: Transcript,
    budget: TokenBudget,
    summarizer: Summarizer,
    counter: Counter,
    system_text: str = "",
) -> Transcript:
    """Summarize intermediate messages, earliest first, until the context fits.

    The opener and the latest message are kept byte-identical. Each summarized
    message is dropped from the turns and its summary appended to
    ``summary_note``. Returns ``transcript`` itself when it already fits.
    """
    limit = budget.effective_budget
    if context_tokens(transcript, system_text, counter) <= limit:
        return transcript
    turns = list(transcript.dialogue())
    if not turns:
        raise BudgetInfeasible(f"system prompt alone exceeds budget {limit}")
    opener, last = turns[0], turns[-1]
    floor = counter(system_text) + counter(opener.text)
    if len(turns) > 1:
        floor += counter(last.text)
    if floor > limit:
        raise BudgetInfeasible(f"opener, last message and system prompt need {floor} tokens, budget is {limit}")

    middle = turns[1:-1]
    note = transcript.summary_note
    fitted = transcript
    while middle:
        summary = summarizer([middle.pop(0)])
        note = f"{note}\n{summary}" if note else summary
        kept = (opener, *middle, last) if len(turns) > 1 else (opener,)
        fitted = replace(transcript, messages=kept, summary_note=note)
        if context_tokens(fitted, system_text, counter) <= limit:
            return fitted
    raise BudgetInfeasible(
        f"{context_tokens(fitted, system_text, counter)} tokens after summarizing every "
        f"intermediate message, budget is {limit}"
    )


def _round_span(messages: Sequence[ChatMessage]) -> str:
    first = min(m.round_index for m in messages) + 1
    last = max(m.round_index for m in messages) + 1
    return f"Rounds {first}-{last}:"


SUMMARIZER_PROMPT = resources.files("logicom.prompts").joinpath("summarizer.txt").read_text(encoding="utf-8").strip()


def summarize_messages(
    backend: Backend,
    messages: Sequence[ChatMessage],
    *,
    policy: RetryPolicy = NO_WAIT,
    fallback: Backend | None = None,
    counter: Counter | None = None,
) -> str:
    """Summarize ``messages`` in one completion, retrying once with a word limit.

    The returned string starts with the 1-based round span it covers, e.g.
    ``"Rounds 2-3: ..."``.
    """
    if not messages:
        raise ValueError("nothing to summarize")
    counter = counter or backend.count_tokens
    source = sum(counter(m.text) for m in messages)
    header = _round_span(messages)
    body = "\n\n".join(label(m) for m in messages)
    system = SUMMARIZER_PROMPT
    for attempt in (1, 2):
        request = CompletionRequest(system_text=system, turns=((Speaker.OTHER, body),))
        try:
            response = complete_with_policy(backend, fallback, request, policy)
        except (TransportError, ScriptExhausted) as exc:
            raise BackendFailure(f"summarizer failed: {exc}") from exc
        if response.refused:
            raise BackendFailure(f"summarizer {response.answered_by} refused")
        summary = f"{header} {response.text.strip()}"
        if counter(summary) < source:
            return summary
        logger.info("summary of %d tokens not smaller than input of %d (attempt %d)",
                    counter(summary), source, attempt)
        words = max(1, source // 2 - counter(header))
        system = f"{SUMMARIZER_PROMPT} Use at most {words} words."
    raise SummaryNotSmaller(f"summaries kept exceeding the {source}-token input")


class Memory:
    """The memory agent for one debate.

    Summaries are cached per message, so re-fitting a growing transcript only
    summarizes messages that were not summarized before.
    """

    def __init__(
        self,
        summarizer: Backend | None,
        *,
        policy: RetryPolicy = NO_WAIT,
        fallback: Backend | None = None,
    ) -> None:
        self.summarizer = summarizer
        self.policy = policy
        self.fallback = fallback
        self._cache: dict[tuple, str] = {}
        self._lock = threading.Lock()

    def summarize(self, messages: Sequence[ChatMessage]) -> str:
        if self.summarizer is None:
            raise BudgetInfeasible("context exceeds budget and no summarizer is configured")
        key = tuple((m.author, m.round_index, m.text) for m in messages)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = summarize_messages(
                    self.summarizer, messages, policy=self.policy, fallback=self.fallback
                )
            return self._cache[key]

    def fit(self, transcript: Transcript, system_text: str, budget: TokenBudget, counter: Counter) -> Transcript:
        return fit_to_budget(transcript, budget, self.summarize, counter, system_text)
