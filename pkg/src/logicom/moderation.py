"""Subordinate moderator checks, the master continue/terminate rule, final verdict."""

from __future__ import annotations

import logging
import re
from concurrent.futures import Executor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .agents import Agent
from .backend import BackendFailure, CompletionRequest, Speaker
from .memory import BudgetInfeasible, SummaryNotSmaller, attach_summary, label
from .model import Author, ChatMessage, ClaimRecord, Stance, TerminationReason, Transcript

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    YES = "Yes"
    NO = "No"
    UNKNOWN = "Unknown"


class Action(str, Enum):
    CONTINUE = "Continue"
    TERMINATE = "Terminate"


@dataclass(frozen=True)
class SubordinateVerdicts:
    convinced: Verdict
    on_topic: Verdict
    pleasantry_loop: Verdict


@dataclass(frozen=True)
class MasterDecision:
    action: Action
    reason: TerminationReason | None = None

    def __post_init__(self) -> None:
        if (self.action is Action.TERMINATE) != (self.reason is not None):
            raise ValueError("reason must be given iff the action is Terminate")

    @classmethod
    def terminate(cls, reason: TerminationReason) -> "MasterDecision":
        return cls(Action.TERMINATE, reason)


CONTINUE = MasterDecision(Action.CONTINUE)

# Hedges a moderator sometimes puts before its answer word.
_HEDGES = (
    "i would say", "i'd say", "i think", "i believe", "my answer is", "the answer is",
    "final answer", "answer", "verdict", "response",
)
_LEAD_JUNK = " \t\r\n*_`\"'“”‘’([{#>-:.,"


def parse_yes_no(reply: str) -> Verdict:
    """Read a leading YES/NO answer, case-insensitively.

    Markdown emphasis, quotes and a short hedge ("I think", "Answer:") are
    stripped first; anything else yields ``Unknown``.
    """
    text = reply.strip().lower().lstrip(_LEAD_JUNK)
    for hedge in _HEDGES:
        if text.startswith(hedge):
            text = text[len(hedge):].lstrip(_LEAD_JUNK)
            break
    match = re.match(r"[a-z]+", text)
    word = match.group(0) if match else ""
    if word == "yes":
        return Verdict.YES
    if word == "no":
        return Verdict.NO
    return Verdict.UNKNOWN


def _last_rounds(transcript: Transcript, rounds: int) -> tuple[ChatMessage, ...]:
    turns = transcript.dialogue()
    return turns[-2 * rounds:]


def _ask(agent: Agent, claim: ClaimRecord, transcript: Transcript, messages: Sequence[ChatMessage]) -> str:
    system = agent.system_text(claim)
    excerpt = Transcript(
        transcript.claim_id,
        transcript.scenario,
        transcript.repetition,
        tuple(ChatMessage(m.author, label(m), m.round_index) for m in messages),
    )
    fitted = agent.fit(excerpt, system)
    request = CompletionRequest(
        system_text=attach_summary(system, fitted.summary_note),
        turns=((Speaker.OTHER, "\n\n".join(m.text for m in fitted.dialogue())),),
        max_output_tokens=agent.backend.config.max_output_tokens,
    )
    response = agent.ask(request)
    if response.refused:
        logger.warning("%s refused on %s", response.answered_by, transcript.claim_id)
        return ""
    return response.text


def _require_debater(transcript: Transcript) -> None:
    if not any(m.author is Author.DEBATER for m in transcript.dialogue()):
        raise ValueError("moderation needs at least one debater message")


def check_convinced(agent: Agent, claim: ClaimRecord, transcript: Transcript) -> tuple[Verdict, str]:
    """Ask whether the debater's latest stance agrees with the claim.

    Returns the parsed verdict and the raw reply (kept for audit).
    """
    _require_debater(transcript)
    raw = _ask(agent, claim, transcript, _last_rounds(transcript, 1))
    return parse_yes_no(raw), raw


def check_on_topic(agent: Agent, claim: ClaimRecord, transcript: Transcript) -> tuple[Verdict, str]:
    _require_debater(transcript)
    raw = _ask(agent, claim, transcript, _last_rounds(transcript, 2))
    return parse_yes_no(raw), raw


def check_pleasantry_loop(agent: Agent, claim: ClaimRecord, transcript: Transcript) -> tuple[Verdict, str]:
    _require_debater(transcript)
    raw = _ask(agent, claim, transcript, _last_rounds(transcript, 2))
    return parse_yes_no(raw), raw


def master_decision(verdicts: SubordinateVerdicts, round_index: int, max_rounds: int) -> MasterDecision:
    """Combine subordinate verdicts after round ``round_index`` (1-based).

    Priority: convinced, pleasantry loop, off topic, round cap. Unknown never
    terminates.
    """
    if round_index < 1 or max_rounds < 1:
        raise ValueError("round_index and max_rounds must be >= 1")
    if verdicts.convinced is Verdict.YES:
        return MasterDecision.terminate(TerminationReason.CONVINCED)
    if verdicts.pleasantry_loop is Verdict.YES:
        return MasterDecision.terminate(TerminationReason.PLEASANTRY_LOOP)
    if verdicts.on_topic is Verdict.NO:
        return MasterDecision.terminate(TerminationReason.OFF_TOPIC)
    if round_index >= max_rounds:
        return MasterDecision.terminate(TerminationReason.ROUND_LIMIT)
    return CONTINUE


@dataclass
class Moderator:
    """The master moderator and its three subordinates for one debate."""

    convinced: Agent
    topic: Agent
    pleasantry: Agent
    executor: Executor | None = None

    def agents(self) -> tuple[Agent, Agent, Agent]:
        return (self.convinced, self.topic, self.pleasantry)

    def review(self, claim: ClaimRecord, transcript: Transcript) -> tuple[SubordinateVerdicts, dict[str, str]]:
        """Run the three subordinate checks, concurrently when an executor is set."""
        checks = (
            (check_convinced, self.convinced),
            (check_on_topic, self.topic),
            (check_pleasantry_loop, self.pleasantry),
        )
        if self.executor is None:
            outcomes = [fn(agent, claim, transcript) for fn, agent in checks]
        else:
            futures = [self.executor.submit(fn, agent, claim, transcript) for fn, agent in checks]
            outcomes = [f.result() for f in futures]
        verdicts = SubordinateVerdicts(outcomes[0][0], outcomes[1][0], outcomes[2][0])
        raw = {"convinced": outcomes[0][1], "on_topic": outcomes[1][1], "pleasantry_loop": outcomes[2][1]}
        return verdicts, raw

    def decide(
        self, claim: ClaimRecord, transcript: Transcript, round_index: int, max_rounds: int
    ) -> tuple[MasterDecision, SubordinateVerdicts, dict[str, str]]:
        verdicts, raw = self.review(claim, transcript)
        return master_decision(verdicts, round_index, max_rounds), verdicts, raw


def final_verdict(
    agent: Agent, claim: ClaimRecord, transcript: Transcript, termination: TerminationReason
) -> Stance:
    """The debater's stance at the end of the debate.

    A ``Convinced`` termination is final without another call; otherwise the
    convinced check is asked over the whole transcript.
    """
    if termination is TerminationReason.CONVINCED:
        return Stance.AGREE
    try:
        raw = _ask(agent, claim, transcript, transcript.dialogue())
    except (BackendFailure, BudgetInfeasible, SummaryNotSmaller) as exc:
        logger.warning("final verdict for %s unavailable: %s", transcript.claim_id, exc)
        return Stance.UNKNOWN
    verdict = parse_yes_no(raw)
    return {Verdict.YES: Stance.AGREE, Verdict.NO: Stance.DISAGREE}.get(verdict, Stance.UNKNOWN)
