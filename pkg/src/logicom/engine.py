"""The per-debate loop: persuader, debater, moderation, final verdict."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .agents import (
    DEFAULT_TAXONOMY,
    Agent,
    AgentConfig,
    HelperParseError,
    Role,
    build_opener,
    debater_turn,
    persuader_turn,
)
from .backend import NO_WAIT, BackendConfig, BackendFailure, RetryPolicy, open_backend
from .memory import BudgetInfeasible, Memory, SummaryNotSmaller
from .moderation import Action, Moderator, final_verdict
from .model import (
    ChatMessage,
    ClaimRecord,
    DebateResult,
    ScenarioKind,
    Stance,
    TerminationReason,
    Transcript,
    dumps_line,
    infer_initial_stance,
)

__all__ = [
    "DebateConfig",
    "DebateRun",
    "build_opener",
    "conduct_debate",
    "read_transcript",
    "run_debate",
    "transcript_name",
    "write_transcript",
]

logger = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 10

HELPER_ROLE = {
    ScenarioKind.FALLACIOUS_HELPER: Role.FALLACIOUS_HELPER,
    ScenarioKind.LOGICAL_HELPER: Role.LOGICAL_HELPER,
}

# Failures that end a debate as BackendFailure instead of aborting a run.
DEBATE_FAILURES = (BackendFailure, BudgetInfeasible, SummaryNotSmaller, HelperParseError)


@dataclass(frozen=True)
class DebateConfig:
    scenario: ScenarioKind
    persuader: AgentConfig
    debater: AgentConfig
    convinced_moderator: AgentConfig
    topic_moderator: AgentConfig
    pleasantry_moderator: AgentConfig
    helper: AgentConfig | None = None
    summarizer: BackendConfig | None = None
    max_rounds: int = DEFAULT_MAX_ROUNDS
    retry: RetryPolicy = NO_WAIT
    taxonomy: tuple[str, ...] = DEFAULT_TAXONOMY
    parallel_moderation: bool = True

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.scenario.has_helper != (self.helper is not None):
            raise ValueError(f"scenario {self.scenario.value} {'needs' if self.scenario.has_helper else 'forbids'} a helper")
        if self.helper is not None and self.helper.role is not HELPER_ROLE[self.scenario]:
            raise ValueError(f"scenario {self.scenario.value} needs a {HELPER_ROLE[self.scenario].value} helper")

    @classmethod
    def from_backends(
        cls,
        scenario: ScenarioKind,
        backends: Mapping[str, BackendConfig],
        **options: Any,
    ) -> "DebateConfig":
        """Assemble a config from role-keyed backend configs.

        Keys: ``persuader``, ``debater``, ``fallacious_helper``,
        ``logical_helper``, ``moderator`` (default for all three checks),
        ``moderator_convinced`` / ``moderator_topic`` / ``moderator_pleasantry``,
        ``moderator_fallback`` and ``summarizer``.
        """
        def moderator(key: str, role: Role) -> AgentConfig:
            cfg = backends.get(key) or backends.get("moderator")
            if cfg is None:
                raise ValueError(f"no backend configured for {key} (or moderator)")
            return AgentConfig(role, cfg, fallback=backends.get("moderator_fallback"))

        helper = None
        if scenario.has_helper:
            key = "fallacious_helper" if scenario is ScenarioKind.FALLACIOUS_HELPER else "logical_helper"
            if key not in backends:
                raise ValueError(f"scenario {scenario.value} needs a {key} backend")
            helper = AgentConfig(HELPER_ROLE[scenario], backends[key])
        for key in ("persuader", "debater"):
            if key not in backends:
                raise ValueError(f"no backend configured for {key}")
        return cls(
            scenario=scenario,
            persuader=AgentConfig(Role.PERSUADER, backends["persuader"]),
            debater=AgentConfig(Role.DEBATER, backends["debater"]),
            convinced_moderator=moderator("moderator_convinced", Role.MODERATOR_CONVINCED),
            topic_moderator=moderator("moderator_topic", Role.MODERATOR_TOPIC),
            pleasantry_moderator=moderator("moderator_pleasantry", Role.MODERATOR_PLEASANTRY),
            helper=helper,
            summarizer=backends.get("summarizer"),
            **options,
        )


@dataclass
class DebateRun:
    """Everything one debate produced, before persistence."""

    result: DebateResult
    transcript: Transcript
    claim: ClaimRecord
    moderation: list[dict[str, Any]] = field(default_factory=list)
    error: str | None = None
    agents: dict[str, Agent] = field(default_factory=dict)


def transcript_name(claim_id: str, scenario: ScenarioKind, repetition: int) -> str:
    return f"{claim_id}.{scenario.value}.{repetition}.jsonl"


def conduct_debate(claim: ClaimRecord, config: DebateConfig, repetition: int) -> DebateRun:
    """Run one debate to termination without touching the filesystem."""
    if repetition < 0:
        raise ValueError("repetition must be >= 0")
    salt = f"{claim.claim_id}|{config.scenario.value}|{repetition}"
    summarizer = open_backend(config.summarizer, salt=salt) if config.summarizer else None
    memory = Memory(summarizer, policy=config.retry)
    opts = dict(salt=salt, policy=config.retry, memory=memory, taxonomy=config.taxonomy)
    persuader = replace(config.persuader, helper=config.helper).open(**opts)
    debater = config.debater.open(**opts)
    agents = {
        "persuader": persuader,
        "debater": debater,
        "moderator_convinced": config.convinced_moderator.open(**opts),
        "moderator_topic": config.topic_moderator.open(**opts),
        "moderator_pleasantry": config.pleasantry_moderator.open(**opts),
    }
    if persuader.helper is not None:
        agents["helper"] = persuader.helper

    transcript = Transcript(claim.claim_id, config.scenario, repetition)
    audit: list[dict[str, Any]] = []
    termination: TerminationReason | None = None
    error = None
    pool = ThreadPoolExecutor(max_workers=3) if config.parallel_moderation else None
    moderator = Moderator(
        agents["moderator_convinced"], agents["moderator_topic"], agents["moderator_pleasantry"], executor=pool
    )
    try:
        for round_number in range(1, config.max_rounds + 1):
            transcript = transcript.append(persuader_turn(persuader, claim, transcript, config.scenario))
            transcript = transcript.append(debater_turn(debater, claim, transcript))
            decision, verdicts, raw = moderator.decide(claim, transcript, round_number, config.max_rounds)
            audit.append({
                "round": round_number,
                "convinced": verdicts.convinced.value,
                "on_topic": verdicts.on_topic.value,
                "pleasantry_loop": verdicts.pleasantry_loop.value,
                "raw": raw,
                "decision": decision.action.value,
            })
            if decision.action is Action.TERMINATE:
                termination = decision.reason
                break
    except DEBATE_FAILURES as exc:
        logger.warning("debate %s failed: %s", salt, exc)
        termination = TerminationReason.BACKEND_FAILURE
        error = f"{type(exc).__name__}: {exc}"
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    assert termination is not None

    if termination is TerminationReason.BACKEND_FAILURE:
        final = Stance.UNKNOWN
    else:
        final = final_verdict(agents["moderator_convinced"], claim, transcript, termination)
    rounds = max(1, transcript.exchanges())
    handles = [h for agent in agents.values() if agent is not persuader.helper for h in agent.backends()]
    if summarizer is not None:
        handles.append(summarizer)
    model_ids = {name: agent.backend.backend_id for name, agent in agents.items()}
    if summarizer is not None:
        model_ids["summarizer"] = summarizer.backend_id
    result = DebateResult(
        claim_id=claim.claim_id,
        scenario=config.scenario,
        repetition=repetition,
        rounds_completed=rounds,
        termination=termination,
        final_stance=final,
        initial_stance=infer_initial_stance(rounds, termination, final),
        transcript_ref=transcript_name(claim.claim_id, config.scenario, repetition),
        model_ids=model_ids,
        total_tokens=sum(h.tokens_used for h in handles),
    )
    logger.info("debate %s: %s after %d rounds, %d tokens", salt, termination.value, rounds, result.total_tokens)
    return DebateRun(result, transcript, claim, audit, error, agents)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_transcript(run: DebateRun, directory: str | Path) -> Path:
    """Persist one debate as JSONL: a header record, then one message per line."""
    header = {
        "record": "header",
        "claim": run.claim.to_dict(),
        "scenario": run.transcript.scenario.value,
        "repetition": run.transcript.repetition,
        "summary_note": run.transcript.summary_note,
        "result": run.result.to_dict(),
        "moderation": run.moderation,
        "error": run.error,
    }
    lines = [dumps_line(header)] + [dumps_line(m.to_dict()) for m in run.transcript.messages]
    path = Path(directory) / run.result.transcript_ref
    _atomic_write(path, "".join(lines))
    return path


def read_transcript(path: str | Path) -> tuple[dict[str, Any], Transcript]:
    with open(path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    if not records or records[0].get("record") != "header":
        raise ValueError(f"{path}: missing transcript header")
    header = records[0]
    transcript = Transcript(
        claim_id=header["claim"]["claim_id"],
        scenario=ScenarioKind(header["scenario"]),
        repetition=int(header["repetition"]),
        messages=tuple(ChatMessage.from_dict(r) for r in records[1:]),
        summary_note=header.get("summary_note"),
    )
    return header, transcript


def run_debate(
    claim: ClaimRecord, config: DebateConfig, repetition: int, transcript_dir: str | Path | None = None
) -> DebateResult:
    """Run one debate; write its transcript when ``transcript_dir`` is given."""
    run = conduct_debate(claim, config, repetition)
    if transcript_dir is not None:
        write_transcript(run, transcript_dir)
    return run.result
