"""Shared fixtures and scripted-backend builders for the test suite."""

from __future__ import annotations

import re

from logicom.backend import BackendConfig, CompletionRequest, Speaker
from logicom.engine import DebateConfig
from logicom.model import (
    Author,
    ChatMessage,
    ClaimRecord,
    DebateResult,
    ScenarioKind,
    Side,
    Stance,
    TerminationReason,
    Transcript,
)

TOPICS = (
    ("dst", "Should daylight saving time be abolished?", "Daylight saving time should be abolished",
     "Changing the clocks twice a year disrupts sleep and saves no measurable energy."),
    ("cats", "Should declawing cats be banned?", "Declawing cats should be banned",
     "The procedure amputates the last bone of each toe."),
    ("tfa", "Should TFA teachers be classed as highly qualified?", "TFA teachers should be highly qualified",
     "They pass the same subject exams as other teachers."),
    ("zoo", "Should zoos exist?", "Zoos should exist", "They fund conservation of endangered species."),
)


def make_claim(claim_id: str = "c1", *, topic: str = "Topic?", claim: str = "X is true",
               reason: str = "because of R", side: Side = Side.PRO, pair_id: str = "p1") -> ClaimRecord:
    return ClaimRecord(claim_id, topic, claim, reason, side, pair_id)


def make_claims(n_pairs: int = 2) -> list[ClaimRecord]:
    """``2 * n_pairs`` claims, one Pro and one Con per topic."""
    out = []
    for i in range(n_pairs):
        pair, topic, claim, reason = TOPICS[i % len(TOPICS)]
        pair = f"{pair}{i // len(TOPICS) or ''}"
        out.append(ClaimRecord(f"{pair}-pro", topic, claim, reason, Side.PRO, pair))
        out.append(ClaimRecord(f"{pair}-con", topic, f"It is false that {claim[0].lower()}{claim[1:]}",
                               f"Opponents say: {reason}", Side.CON, pair))
    return out


def last_other(request: CompletionRequest) -> str:
    for speaker, text in reversed(request.turns):
        if speaker is Speaker.OTHER:
            return text
    return ""


def debater_rounds(request: CompletionRequest) -> int:
    """Debater-side round number (1-based) of the reply being requested."""
    return sum(1 for s, _ in request.turns if s is Speaker.OTHER)


AGREE = "You make a fair point. I agree with the claim."
DISAGREE = "I disagree, the evidence is weak."


def fixture_backends(
    *,
    agree_at: int | None = None,
    helper_label: str = "appeal to emotion",
    topic_reply: str = "YES",
    pleasantry_reply: str = "NO",
    final_reply: str = "NO",
    window: int = 100_000,
    summarizer: bool = True,
) -> dict[str, BackendConfig]:
    """Independent scripted fixture for engine tests (not the package simulator).

    The debater says AGREE on its ``agree_at``-th reply (1-based) and DISAGREE
    before that. The convinced moderator answers YES iff the last AI line in
    its excerpt is AGREE; over a multi-round excerpt (the final verdict) it
    answers ``final_reply`` instead of NO.
    """
    def persuader(req, i):
        return f"Draft argument number {i + 1} for the claim."

    def debater(req, i):
        n = i + 1
        return AGREE if agree_at is not None and n >= agree_at else DISAGREE

    def helper(req, i):
        return f"FALLACY: {helper_label}\nARGUMENT: Revised argument number {i + 1}, think of the children."

    def logical(req, i):
        return f"ARGUMENT: Logical argument number {i + 1}."

    def convinced(req, i):
        text = last_other(req)
        ai = re.findall(r"(?:^|\n\n)AI: (.*?)(?=\n\nHuman: |\n\nAI: |$)", text, flags=re.S)
        if ai and ai[-1].strip() == AGREE:
            return "YES"
        return final_reply if text.count("Human: ") > 1 else "NO"

    def summarize(req, i):
        return "gist"

    def cfg(name, fn):
        return BackendConfig(name, context_window_tokens=window, responder=fn)

    out = {
        "persuader": cfg("fx-persuader", persuader),
        "debater": cfg("fx-debater", debater),
        "fallacious_helper": cfg("fx-fallacious", helper),
        "logical_helper": cfg("fx-logical", logical),
        "moderator_convinced": cfg("fx-convinced", convinced),
        "moderator_topic": cfg("fx-topic", lambda r, i: topic_reply),
        "moderator_pleasantry": cfg("fx-pleasantry", lambda r, i: pleasantry_reply),
    }
    if summarizer:
        out["summarizer"] = cfg("fx-summarizer", summarize)
    return out


def fixture_config(scenario: ScenarioKind = ScenarioKind.NO_HELPER, **kwargs) -> DebateConfig:
    options = {k: kwargs.pop(k) for k in ("max_rounds", "parallel_moderation") if k in kwargs}
    return DebateConfig.from_backends(scenario, fixture_backends(**kwargs), **options)


def result(claim_id: str, scenario: ScenarioKind, rep: int, final: Stance,
           initial: Stance = Stance.DISAGREE, rounds: int = 3,
           termination: TerminationReason | None = None, debater: str = "model-a") -> DebateResult:
    if termination is None:
        termination = TerminationReason.CONVINCED if final is Stance.AGREE else TerminationReason.ROUND_LIMIT
    return DebateResult(
        claim_id=claim_id,
        scenario=scenario,
        repetition=rep,
        rounds_completed=rounds,
        termination=termination,
        final_stance=final,
        initial_stance=initial,
        transcript_ref=f"{claim_id}.{scenario.value}.{rep}.jsonl",
        model_ids={"debater": debater},
    )


# Memory fixtures

def words(n: int, tag: str) -> str:
    return " ".join(f"{tag}{i}" for i in range(n))


def transcript_of(lengths: list[int], note: str | None = None) -> Transcript:
    msgs = []
    for i, n in enumerate(lengths):
        author = Author.PERSUADER if i % 2 == 0 else Author.DEBATER
        msgs.append(ChatMessage(author, words(n, f"m{i}_"), i // 2))
    return Transcript("c", ScenarioKind.NO_HELPER, 0, tuple(msgs), note)


class StubSummarizer:
    """Fixed-size summaries; remembers which messages it was given, in order."""

    def __init__(self, size: int = 5) -> None:
        self.size = size
        self.calls: list[tuple[str, ...]] = []

    def __call__(self, messages):
        self.calls.append(tuple(m.text for m in messages))
        return words(self.size, f"s{len(self.calls)}_")


def memory_oracle(system: int, lengths: list[int], budget: int, size: int) -> int | None:
    """Number of intermediates summarized (None = infeasible), by direct simulation."""
    if system + sum(lengths) <= budget:
        return 0
    opener, last = lengths[0], (lengths[-1] if len(lengths) > 1 else 0)
    if system + opener + last > budget:
        return None
    middle = lengths[1:-1]
    for k in range(1, len(middle) + 1):
        if system + k * size + opener + sum(middle[k:]) + last <= budget:
            return k
    return None


# Acceptance reporting: criterion number -> "criterion N: PASS|FAIL ..." line.
CRITERIA: dict[int, str] = {}


def report(number: int, ok: bool | None, detail: str) -> None:
    """Record one criterion outcome; ``ok=None`` marks a skipped criterion."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"criterion {number}: {status} {detail}"
    CRITERIA[number] = line
    print(line)
