"""Shared domain records for debates, claims and outcomes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable


class Side(str, Enum):
    PRO = "Pro"
    CON = "Con"


class Author(str, Enum):
    PERSUADER = "Persuader"
    DEBATER = "Debater"
    SYSTEM = "System"


class ScenarioKind(str, Enum):
    NO_HELPER = "NoHelper"
    FALLACIOUS_HELPER = "FallaciousHelper"
    LOGICAL_HELPER = "LogicalHelper"

    @property
    def has_helper(self) -> bool:
        return self is not ScenarioKind.NO_HELPER


class Stance(str, Enum):
    AGREE = "Agree"
    DISAGREE = "Disagree"
    UNKNOWN = "Unknown"


class TerminationReason(str, Enum):
    CONVINCED = "Convinced"
    ROUND_LIMIT = "RoundLimit"
    OFF_TOPIC = "OffTopic"
    PLEASANTRY_LOOP = "PleasantryLoop"
    BACKEND_FAILURE = "BackendFailure"


ALL_SCENARIOS = tuple(ScenarioKind)


@dataclass(frozen=True)
class ClaimRecord:
    """One side of a polarizing topic, with the reason given to the persuader."""

    claim_id: str
    topic: str
    claim: str
    reason: str
    side: Side
    pair_id: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "topic": self.topic,
            "claim": self.claim,
            "reason": self.reason,
            "side": self.side.value,
            "pair_id": self.pair_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ClaimRecord":
        return cls(
            claim_id=str(data["claim_id"]),
            topic=str(data.get("topic", "")),
            claim=str(data["claim"]),
            reason=str(data["reason"]),
            side=Side(data["side"]),
            pair_id=str(data["pair_id"]),
        )


@dataclass(frozen=True)
class ChatMessage:
    author: Author
    text: str
    round_index: int
    draft_text: str | None = None
    fallacy_label: str | None = None
    token_count: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "author": self.author.value,
            "text": self.text,
            "round_index": self.round_index,
            "draft_text": self.draft_text,
            "fallacy_label": self.fallacy_label,
            "token_count": self.token_count,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ChatMessage":
        return cls(
            author=Author(data["author"]),
            text=data["text"],
            round_index=int(data["round_index"]),
            draft_text=data.get("draft_text"),
            fallacy_label=data.get("fallacy_label"),
            token_count=int(data.get("token_count", 0)),
        )


@dataclass(frozen=True)
class Transcript:
    claim_id: str
    scenario: ScenarioKind
    repetition: int
    messages: tuple[ChatMessage, ...] = ()
    summary_note: str | None = None

    def append(self, message: ChatMessage) -> "Transcript":
        return replace(self, messages=self.messages + (message,))

    def dialogue(self) -> tuple[ChatMessage, ...]:
        """Messages exchanged between the two debaters, system notes dropped."""
        return tuple(m for m in self.messages if m.author is not Author.SYSTEM)

    @property
    def last_author(self) -> Author | None:
        turns = self.dialogue()
        return turns[-1].author if turns else None

    def exchanges(self) -> int:
        """Number of completed (persuader, debater) rounds."""
        return sum(1 for m in self.dialogue() if m.author is Author.DEBATER)


@dataclass(frozen=True)
class DebateResult:
    claim_id: str
    scenario: ScenarioKind
    repetition: int
    rounds_completed: int
    termination: TerminationReason
    final_stance: Stance
    initial_stance: Stance
    transcript_ref: str
    model_ids: dict[str, str] = field(default_factory=dict)
    total_tokens: int = 0

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.claim_id, self.scenario.value, self.repetition)

    @property
    def succeeded(self) -> bool:
        # Unknown final stances count as failures for success metrics.
        return self.final_stance is Stance.AGREE

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "scenario": self.scenario.value,
            "repetition": self.repetition,
            "rounds_completed": self.rounds_completed,
            "termination": self.termination.value,
            "final_stance": self.final_stance.value,
            "initial_stance": self.initial_stance.value,
            "transcript_ref": self.transcript_ref,
            "model_ids": dict(sorted(self.model_ids.items())),
            "total_tokens": self.total_tokens,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DebateResult":
        return cls(
            claim_id=str(data["claim_id"]),
            scenario=ScenarioKind(data["scenario"]),
            repetition=int(data["repetition"]),
            rounds_completed=int(data["rounds_completed"]),
            termination=TerminationReason(data["termination"]),
            final_stance=Stance(data["final_stance"]),
            initial_stance=Stance(data["initial_stance"]),
            transcript_ref=str(data.get("transcript_ref", "")),
            model_ids=dict(data.get("model_ids", {})),
            total_tokens=int(data.get("total_tokens", 0)),
        )


def infer_initial_stance(
    rounds_completed: int, termination: TerminationReason, final_stance: Stance
) -> Stance:
    """Infer the debater's stance at the start of a debate.

    The convinced check runs after every round, so a debate that lasts more
    than two rounds means the debater did not agree from the outset. Short
    debates are classified by how they ended: an immediate ``Convinced`` is
    taken as agreement from the start, an explicit final disagreement as
    disagreement, anything else is ``Unknown``.
    """
    if rounds_completed > 2:
        return Stance.DISAGREE
    if termination is TerminationReason.CONVINCED:
        return Stance.AGREE
    if final_stance is Stance.DISAGREE:
        return Stance.DISAGREE
    return Stance.UNKNOWN


def validate_claim_record(record: ClaimRecord) -> list[str]:
    """Return the invariant violations of a single record; empty means valid."""
    problems = []
    if not record.claim_id.strip():
        problems.append("claim_id empty")
    if not record.claim.strip():
        problems.append("claim empty")
    if not record.reason.strip():
        problems.append("reason empty")
    if not record.pair_id.strip():
        problems.append("pair_id empty")
    return problems


def validate_dataset(records: Iterable[ClaimRecord]) -> list[str]:
    """Dataset-level checks: per-record invariants, unique ids, Pro/Con pairing."""
    records = list(records)
    problems: list[str] = []
    if not records:
        return ["no records"]
    seen: set[str] = set()
    pairs: dict[str, list[ClaimRecord]] = {}
    for rec in records:
        problems.extend(f"{rec.claim_id}: {p}" for p in validate_claim_record(rec))
        if rec.claim_id in seen:
            problems.append(f"duplicate claim_id {rec.claim_id!r}")
        seen.add(rec.claim_id)
        pairs.setdefault(rec.pair_id, []).append(rec)
    for pair_id, members in pairs.items():
        sides = sorted(m.side.value for m in members)
        if sides != ["Con", "Pro"]:
            problems.append(
                f"pair_id {pair_id!r} must have exactly one Pro and one Con claim, found {sides}"
            )
    return problems


def check_transcript(transcript: Transcript, claim: ClaimRecord | None = None) -> list[str]:
    """Check alternation and opener invariants of a debate transcript."""
    problems = []
    turns = transcript.dialogue()
    expected = Author.PERSUADER
    for i, msg in enumerate(turns):
        if msg.author is not expected:
            problems.append(f"message {i} authored by {msg.author.value}, expected {expected.value}")
        expected = Author.DEBATER if msg.author is Author.PERSUADER else Author.PERSUADER
        if msg.fallacy_label is not None and (
            msg.author is not Author.PERSUADER
            or transcript.scenario is not ScenarioKind.FALLACIOUS_HELPER
        ):
            problems.append(f"message {i} carries a fallacy label outside a fallacious-helper turn")
    if claim is not None and turns:
        opener = turns[0].text
        if claim.claim not in opener or claim.reason not in opener:
            problems.append("opener does not contain claim and reason verbatim")
    return problems


def dumps_line(record: dict[str, Any]) -> str:
    """Serialize one JSONL record deterministically."""
    return json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"
