"""Prompt templates and turn logic for the persuader, debater and helpers."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .backend import (
    NO_WAIT,
    Backend,
    BackendConfig,
    BackendFailure,
    CompletionRequest,
    CompletionResponse,
    RetryPolicy,
    ScriptExhausted,
    Speaker,
    TransportError,
    complete_with_policy,
    open_backend,
)
from .memory import Memory, TokenBudget, attach_summary, label
from .model import Author, ChatMessage, ClaimRecord, ScenarioKind, Transcript

logger = logging.getLogger(__name__)


class Role(str, Enum):
    PERSUADER = "Persuader"
    DEBATER = "Debater"
    FALLACIOUS_HELPER = "FallaciousHelper"
    LOGICAL_HELPER = "LogicalHelper"
    MODERATOR_CONVINCED = "ModeratorConvinced"
    MODERATOR_TOPIC = "ModeratorTopic"
    MODERATOR_PLEASANTRY = "ModeratorPleasantry"
    VERIFIER = "Verifier"


TEMPLATE_FILES = {
    Role.PERSUADER: "persuader.txt",
    Role.DEBATER: "debater.txt",
    Role.FALLACIOUS_HELPER: "fallacious_helper.txt",
    Role.LOGICAL_HELPER: "logical_helper.txt",
    Role.MODERATOR_CONVINCED: "moderator_convinced.txt",
    Role.MODERATOR_TOPIC: "moderator_topic.txt",
    Role.MODERATOR_PLEASANTRY: "moderator_pleasantry.txt",
    Role.VERIFIER: "verifier.txt",
}

PLACEHOLDERS = frozenset({"CLAIM", "REASON", "TOPIC"})
_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class UnknownPlaceholder(ValueError):
    pass


class HelperParseError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    role: Role
    body: str

    def __post_init__(self) -> None:
        unknown = sorted(set(_PLACEHOLDER.findall(self.body)) - PLACEHOLDERS)
        if unknown:
            raise UnknownPlaceholder(f"{self.role.value} template uses unknown placeholders {unknown}")


def load_template(role: Role, path: str | Path | None = None) -> PromptTemplate:
    """Load a role's template from ``path`` or from the bundled defaults."""
    if path is None:
        body = resources.files("logicom.prompts").joinpath(TEMPLATE_FILES[role]).read_text(encoding="utf-8")
    else:
        body = Path(path).read_text(encoding="utf-8")
    return PromptTemplate(role, body.strip())


def render_template(template: PromptTemplate | str, claim: ClaimRecord) -> str:
    body = template.body if isinstance(template, PromptTemplate) else template
    values = {"CLAIM": claim.claim, "REASON": claim.reason, "TOPIC": claim.topic}

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise UnknownPlaceholder(f"unknown placeholder {{{name}}}")
        return values[name]

    return _PLACEHOLDER.sub(sub, body)


# Fallacy taxonomy and label normalization

DEFAULT_TAXONOMY = (
    "Ad Hominem",
    "appeal to emotion",
    "false information",
    "causal fallacy",
    "slippery slope",
    "appeal to authority",
    "appeal to popular opinion",
    "straw man",
    "false dilemma",
)

LABEL_ALIASES = {
    "ad hominem attack": "ad hominem",
    "personal attack": "ad hominem",
    "emotional appeal": "appeal to emotion",
    "appeal to emotions": "appeal to emotion",
    "misinformation": "false information",
    "false facts": "false information",
    "false cause": "causal fallacy",
    "questionable cause": "causal fallacy",
    "post hoc": "causal fallacy",
    "post hoc ergo propter hoc": "causal fallacy",
    "strawman": "straw man",
    "straw man argument": "straw man",
    "bandwagon": "appeal to popular opinion",
    "appeal to popularity": "appeal to popular opinion",
    "ad populum": "appeal to popular opinion",
    "argumentum ad populum": "appeal to popular opinion",
    "appeal to the people": "appeal to popular opinion",
    "authority": "appeal to authority",
    "false dichotomy": "false dilemma",
    "black and white thinking": "false dilemma",
    "either or fallacy": "false dilemma",
}


def normalize_label(raw: str) -> str:
    """Lowercase, strip punctuation, and map known aliases to canonical names."""
    text = re.sub(r"[^a-z0-9 ]+", " ", raw.lower().replace("-", " "))
    text = " ".join(text.split())
    text = LABEL_ALIASES.get(text, text)
    if text.endswith(" fallacy") and text != "causal fallacy":
        text = LABEL_ALIASES.get(text[: -len(" fallacy")], text[: -len(" fallacy")])
    return text


def on_taxonomy(raw: str, taxonomy: Iterable[str] = DEFAULT_TAXONOMY) -> bool:
    return normalize_label(raw) in {normalize_label(t) for t in taxonomy}


@dataclass(frozen=True)
class HelperOutput:
    revised_text: str
    fallacy_label: str | None = None
    on_taxonomy: bool = True


_FIELD = re.compile(r"^\s*[*_#>\s]*(FALLACY|ARGUMENT)[*_\s]*:[*_\s]*(.*)$", re.IGNORECASE)


def parse_helper_output(
    raw: str, kind: Role, taxonomy: Sequence[str] = DEFAULT_TAXONOMY
) -> HelperOutput:
    """Parse a ``FALLACY: ...`` / ``ARGUMENT: ...`` helper reply.

    ARGUMENT runs to the end of the reply (or the next FALLACY line), so
    multi-paragraph arguments survive. Labels outside ``taxonomy`` are kept
    verbatim and flagged via ``on_taxonomy``. Logical helper replies never
    yield a label.
    """
    fallacy = None
    argument_lines: list[str] | None = None
    for line in raw.splitlines():
        match = _FIELD.match(line)
        if match and match.group(1).upper() == "FALLACY":
            fallacy = match.group(2).strip().strip("*").strip()
            continue
        if match and match.group(1).upper() == "ARGUMENT" and argument_lines is None:
            argument_lines = [match.group(2)]
            continue
        if argument_lines is not None:
            argument_lines.append(line)
    argument = "\n".join(argument_lines).strip() if argument_lines is not None else ""
    if not argument:
        raise HelperParseError("reply has no ARGUMENT field")
    if kind is Role.LOGICAL_HELPER:
        return HelperOutput(argument)
    if kind is not Role.FALLACIOUS_HELPER:
        raise ValueError(f"{kind} is not a helper role")
    if not fallacy:
        raise HelperParseError("reply has no FALLACY field")
    flagged = on_taxonomy(fallacy, taxonomy)
    if not flagged:
        logger.warning("helper used off-taxonomy fallacy label %r", fallacy)
    return HelperOutput(argument, fallacy, flagged)


# Agents

@dataclass(frozen=True)
class AgentConfig:
    role: Role
    backend: BackendConfig
    template: PromptTemplate | None = None
    helper: "AgentConfig | None" = None
    fallback: BackendConfig | None = None

    def resolved_template(self) -> PromptTemplate:
        return self.template or load_template(self.role)

    def open(
        self,
        *,
        salt: str = "",
        policy: RetryPolicy = NO_WAIT,
        memory: Memory | None = None,
        taxonomy: Sequence[str] = DEFAULT_TAXONOMY,
    ) -> "Agent":
        return Agent(
            role=self.role,
            backend=open_backend(self.backend, salt=salt),
            template=self.resolved_template(),
            fallback=open_backend(self.fallback, salt=salt) if self.fallback else None,
            helper=self.helper.open(salt=salt, policy=policy, memory=memory, taxonomy=taxonomy)
            if self.helper
            else None,
            policy=policy,
            memory=memory,
            taxonomy=tuple(taxonomy),
        )


@dataclass
class Agent:
    """An agent bound to live backend handles for the duration of one debate."""

    role: Role
    backend: Backend
    template: PromptTemplate
    fallback: Backend | None = None
    helper: "Agent | None" = None
    policy: RetryPolicy = NO_WAIT
    memory: Memory | None = None
    taxonomy: tuple[str, ...] = DEFAULT_TAXONOMY
    budget: TokenBudget = field(init=False)

    def __post_init__(self) -> None:
        self.budget = TokenBudget.for_backend(self.backend.config)

    def count(self, text: str) -> int:
        return self.backend.count_tokens(text) if text else 0

    def system_text(self, claim: ClaimRecord) -> str:
        return render_template(self.template, claim)

    def fit(self, transcript: Transcript, system_text: str) -> Transcript:
        if self.memory is None:
            return transcript
        return self.memory.fit(transcript, system_text, self.budget, self.count)

    def ask(self, request: CompletionRequest) -> CompletionResponse:
        try:
            response = complete_with_policy(self.backend, self.fallback, request, self.policy)
        except (TransportError, ScriptExhausted) as exc:
            raise BackendFailure(f"{self.role.value}: {exc}") from exc
        return response

    def backends(self) -> list[Backend]:
        """Every backend handle this agent (and its helper) owns."""
        handles = [self.backend] + ([self.fallback] if self.fallback else [])
        return handles + (self.helper.backends() if self.helper else [])


def perspective(messages: Iterable[ChatMessage], me: Author) -> tuple[tuple[Speaker, str], ...]:
    """Map final message texts onto Self/Other from ``me``'s point of view."""
    return tuple(
        (Speaker.SELF if m.author is me else Speaker.OTHER, m.text)
        for m in messages
        if m.author is not Author.SYSTEM
    )


def _agent_request(agent: Agent, claim: ClaimRecord, transcript: Transcript, me: Author) -> CompletionRequest:
    system = agent.system_text(claim)
    fitted = agent.fit(transcript, system)
    return CompletionRequest(
        system_text=attach_summary(system, fitted.summary_note),
        turns=perspective(fitted.dialogue(), me),
        max_output_tokens=agent.backend.config.max_output_tokens,
    )


def build_opener(claim: ClaimRecord) -> str:
    """The persuader's fixed first message: topic, claim, reason, then a question."""
    lines = []
    if claim.topic.strip():
        lines.append(f"Topic: “{claim.topic}”")
    else:
        logger.info("claim %s has no topic; opener topic line omitted", claim.claim_id)
    lines.append(f'Claim: "{claim.claim}"')
    lines.append(f'Reason: "{claim.reason}"')
    lines.append(f'Given this reason, I hold that "{claim.claim}" is correct. What do you think?')
    return "\n".join(lines)


def debater_turn(agent: Agent, claim: ClaimRecord, transcript: Transcript) -> ChatMessage:
    if transcript.last_author is not Author.PERSUADER:
        raise ValueError("debater can only reply to a persuader message")
    request = _agent_request(agent, claim, transcript, Author.DEBATER)
    response = agent.ask(request)
    round_index = transcript.dialogue()[-1].round_index
    return ChatMessage(Author.DEBATER, response.text, round_index, token_count=agent.count(response.text))


def persuader_turn(
    agent: Agent, claim: ClaimRecord, transcript: Transcript, scenario: ScenarioKind
) -> ChatMessage:
    """Produce the persuader's next message, revised by its helper if any.

    The opener is never sent to the helper.
    """
    turns = transcript.dialogue()
    if not turns:
        text = build_opener(claim)
        return ChatMessage(Author.PERSUADER, text, 0, token_count=agent.count(text))
    if turns[-1].author is not Author.DEBATER:
        raise ValueError("persuader can only reply to a debater message")
    round_index = turns[-1].round_index + 1
    draft = agent.ask(_agent_request(agent, claim, transcript, Author.PERSUADER)).text
    if not scenario.has_helper:
        return ChatMessage(Author.PERSUADER, draft, round_index, token_count=agent.count(draft))
    if agent.helper is None:
        raise ValueError(f"scenario {scenario.value} needs a helper agent")
    out = helper_revise(agent.helper, claim, transcript, draft)
    return ChatMessage(
        Author.PERSUADER,
        out.revised_text,
        round_index,
        draft_text=draft,
        fallacy_label=out.fallacy_label if scenario is ScenarioKind.FALLACIOUS_HELPER else None,
        token_count=agent.count(out.revised_text),
    )


FORMAT_REMINDER = {
    Role.FALLACIOUS_HELPER: "Your reply did not follow the required format. Reply again using exactly two fields:\nFALLACY: <fallacy name>\nARGUMENT: <rewritten reply>",
    Role.LOGICAL_HELPER: "Your reply did not follow the required format. Reply again using exactly:\nARGUMENT: <rewritten reply>",
}


def helper_revise(helper: Agent, claim: ClaimRecord, transcript: Transcript, draft: str) -> HelperOutput:
    """Send history plus the persuader's draft to the helper and parse its rewrite.

    A malformed reply gets one re-prompt with a format reminder.
    """
    if helper.role not in FORMAT_REMINDER:
        raise ValueError(f"{helper.role.value} is not a helper role")
    system = helper.system_text(claim)
    extra = [ChatMessage(Author.PERSUADER, f"Desired response: {draft}", len(transcript.messages))]
    raw = ""
    for attempt in (1, 2):
        pseudo = Transcript(
            transcript.claim_id,
            transcript.scenario,
            transcript.repetition,
            tuple(ChatMessage(m.author, label(m), m.round_index) for m in transcript.dialogue()) + tuple(extra),
            transcript.summary_note,
        )
        fitted = helper.fit(pseudo, system)
        request = CompletionRequest(
            system_text=attach_summary(system, fitted.summary_note),
            turns=((Speaker.OTHER, "\n\n".join(m.text for m in fitted.dialogue())),),
            max_output_tokens=helper.backend.config.max_output_tokens,
        )
        raw = helper.ask(request).text
        try:
            return parse_helper_output(raw, helper.role, helper.taxonomy)
        except HelperParseError as exc:
            logger.warning("helper reply unparseable (attempt %d): %s", attempt, exc)
            extra = extra + [
                ChatMessage(Author.DEBATER, f"Your previous reply: {raw}", len(transcript.messages)),
                ChatMessage(Author.PERSUADER, FORMAT_REMINDER[helper.role], len(transcript.messages)),
            ]
    raise HelperParseError(f"helper reply still malformed after re-prompt: {raw[:120]!r}")
