"""Build (logical draft, fallacious revision) argument pairs and verify labels."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from .agents import DEFAULT_TAXONOMY, Agent, load_template, normalize_label, Role
from .backend import BackendFailure, CompletionRequest, Speaker
from .engine import _atomic_write
from .model import Author, ScenarioKind, dumps_line

logger = logging.getLogger(__name__)


class Verification(str, Enum):
    CONFIRMED = "Confirmed"
    MISMATCH = "Mismatch"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class ArgumentPair:
    claim_id: str
    repetition: int
    round_index: int
    topic: str
    claim: str
    logical_text: str
    fallacious_text: str
    fallacy_label: str
    verifier_label: str | None = None
    verified: Verification = Verification.UNKNOWN
    unchanged: bool = False

    @property
    def pair_key(self) -> tuple[str, int, int]:
        return (self.claim_id, self.repetition, self.round_index)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair_key": list(self.pair_key),
            "topic": self.topic,
            "claim": self.claim,
            "logical_text": self.logical_text,
            "fallacious_text": self.fallacious_text,
            "fallacy_label": self.fallacy_label,
            "verifier_label": self.verifier_label,
            "verified": self.verified.value,
            "unchanged": self.unchanged,
        }


def extract_pairs(store) -> list[ArgumentPair]:
    """One pair per helper-revised persuader message in FallaciousHelper transcripts.

    ``store`` is a :class:`~logicom.runner.ResultsStore`. Openers are never
    revised, so they never yield pairs; messages with a draft but no label
    are skipped.
    """
    pairs = []
    for result in store.results():
        if result.scenario is not ScenarioKind.FALLACIOUS_HELPER:
            continue
        header, transcript = store.load_transcript(result)
        claim = header["claim"]
        for msg in transcript.dialogue():
            if msg.author is not Author.PERSUADER or msg.draft_text is None:
                continue
            if not msg.fallacy_label:
                logger.warning("%s round %d: revised message without fallacy label skipped",
                               result.transcript_ref, msg.round_index)
                continue
            unchanged = msg.draft_text == msg.text
            if unchanged:
                logger.info("%s round %d: helper returned the draft unchanged",
                            result.transcript_ref, msg.round_index)
            pairs.append(ArgumentPair(
                claim_id=result.claim_id,
                repetition=result.repetition,
                round_index=msg.round_index,
                topic=claim.get("topic", ""),
                claim=claim["claim"],
                logical_text=msg.draft_text,
                fallacious_text=msg.text,
                fallacy_label=msg.fallacy_label,
                unchanged=unchanged,
            ))
    pairs.sort(key=lambda p: p.pair_key)
    return pairs


def match_taxonomy(reply: str, taxonomy: Sequence[str]) -> str | None:
    """Canonical taxonomy entry named by a verifier reply, or None."""
    canon = {normalize_label(t): t for t in taxonomy}
    first_line = reply.strip().splitlines()[0] if reply.strip() else ""
    label = normalize_label(first_line)
    if label in canon:
        return canon[label]
    # Tolerate a short sentence around the label ("This is a straw man.").
    hits = [t for key, t in canon.items() if f" {key} " in f" {label} "]
    return hits[0] if len(hits) == 1 else None


def verifier_prompt(taxonomy: Sequence[str]) -> str:
    body = load_template(Role.VERIFIER).body
    return body + "\nFallacies: " + "; ".join(taxonomy) + "."


def verify_pair(verifier: Agent, pair: ArgumentPair, taxonomy: Sequence[str] = DEFAULT_TAXONOMY) -> ArgumentPair:
    request = CompletionRequest(system_text=verifier_prompt(taxonomy), turns=((Speaker.OTHER, pair.fallacious_text),))
    try:
        response = verifier.ask(request)
    except BackendFailure as exc:
        logger.warning("verifier failed on %s: %s", pair.pair_key, exc)
        return replace(pair, verifier_label=None, verified=Verification.UNKNOWN)
    if response.refused:
        return replace(pair, verifier_label=None, verified=Verification.UNKNOWN)
    label = match_taxonomy(response.text, taxonomy)
    if label is None:
        return replace(pair, verifier_label=response.text.strip() or None, verified=Verification.UNKNOWN)
    same = normalize_label(label) == normalize_label(pair.fallacy_label)
    return replace(pair, verifier_label=label, verified=Verification.CONFIRMED if same else Verification.MISMATCH)


def verify_labels(
    pairs: Iterable[ArgumentPair],
    verifier: Agent,
    taxonomy: Sequence[str] = DEFAULT_TAXONOMY,
    concurrency: int = 1,
) -> list[ArgumentPair]:
    """Ask ``verifier`` to classify every fallacious text; failures become Unknown.

    Output order matches input order. Keep ``concurrency`` at 1 with scripted
    verifiers, whose replies depend on call order.
    """
    pairs = list(pairs)
    if concurrency <= 1:
        return [verify_pair(verifier, p, taxonomy) for p in pairs]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(lambda p: verify_pair(verifier, p, taxonomy), pairs))


def summarize_pairs(pairs: Sequence[ArgumentPair]) -> dict[str, Any]:
    confirmed = sum(p.verified is Verification.CONFIRMED for p in pairs)
    checked = sum(p.verified is not Verification.UNKNOWN for p in pairs)
    return {
        "record": "extraction_summary",
        "pair_count": len(pairs),
        "confirmed": confirmed,
        "mismatch": checked - confirmed,
        "unknown": len(pairs) - checked,
        "confirmation_rate": confirmed / len(pairs) if pairs else 0.0,
    }


def write_pairs(pairs: Iterable[ArgumentPair], path: str | Path) -> Path:
    path = Path(path)
    _atomic_write(path, "".join(dumps_line(p.to_dict()) for p in pairs))
    return path
