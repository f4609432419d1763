"""Experiment matrix execution over claims x scenarios x repetitions."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator

import yaml

from .backend import NO_WAIT, BackendConfig, RetryPolicy
from .engine import (
    DEFAULT_MAX_ROUNDS,
    DebateConfig,
    DebateRun,
    _atomic_write,
    conduct_debate,
    read_transcript,
    transcript_name,
    write_transcript,
)
from .model import (
    ALL_SCENARIOS,
    ClaimRecord,
    DebateResult,
    ScenarioKind,
    Stance,
    TerminationReason,
    Transcript,
    dumps_line,
    validate_dataset,
)

logger = logging.getLogger(__name__)

Key = tuple[str, str, int]


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, problems: list[str]) -> None:
        super().__init__("; ".join(problems))
        self.problems = problems


class ConfigError(ValueError):
    pass


def read_claims(path: str | Path) -> list[ClaimRecord]:
    """Parse a claims JSONL file without validating it."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(ClaimRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return records


def load_claims(path: str | Path) -> list[ClaimRecord]:
    """Read and validate a claims dataset; every pair_id needs one Pro and one Con."""
    records = read_claims(path)
    problems = validate_dataset(records)
    if problems:
        raise ValidationError(problems)
    return records


def sample_dataset() -> Path:
    """Path of the small bundled claims file (four topics, eight claims)."""
    return Path(str(resources.files("logicom.data").joinpath("sample_claims.jsonl")))


def write_claims(records: Iterable[ClaimRecord], path: str | Path) -> None:
    _atomic_write(Path(path), "".join(dumps_line(r.to_dict()) for r in records))


@dataclass
class ExperimentPlan:
    dataset: Path
    output_dir: Path
    backends: dict[str, BackendConfig]
    scenarios: tuple[ScenarioKind, ...] = ALL_SCENARIOS
    repetitions: int = 3
    concurrency_limit: int = 4
    max_rounds: int = DEFAULT_MAX_ROUNDS
    retry: RetryPolicy = NO_WAIT
    seed: int | None = None
    parallel_moderation: bool = True

    def __post_init__(self) -> None:
        self.dataset = Path(self.dataset)
        self.output_dir = Path(self.output_dir)
        self.scenarios = tuple(ScenarioKind(s) for s in self.scenarios)
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")

    def debate_config(self, scenario: ScenarioKind) -> DebateConfig:
        try:
            return DebateConfig.from_backends(
                scenario,
                self.backends,
                max_rounds=self.max_rounds,
                retry=self.retry,
                parallel_moderation=self.parallel_moderation,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def matrix(self, claims: Iterable[ClaimRecord]) -> Iterator[tuple[ClaimRecord, ScenarioKind, int]]:
        """Claim-major, then scenario, then repetition."""
        for claim in claims:
            for scenario in self.scenarios:
                for rep in range(self.repetitions):
                    yield claim, scenario, rep

    @classmethod
    def from_dict(cls, data: dict[str, Any], *, base_dir: Path | None = None) -> "ExperimentPlan":
        data = dict(data)
        base = base_dir or Path.cwd()

        def resolve(value: Any) -> Path:
            path = Path(value)
            return path if path.is_absolute() else base / path

        try:
            seed = data.pop("seed", None)
            raw_backends = data.pop("backends", None)
            if raw_backends is None:
                if seed is None:
                    raise ConfigError("plan needs 'backends' (or a 'seed' for simulated backends)")
                from .simulate import simulated_backends

                backends = simulated_backends(int(seed))
            else:
                backends = {}
                for role, cfg in raw_backends.items():
                    cfg = dict(cfg)
                    cfg.setdefault("backend_id", role)
                    if seed is not None:
                        cfg.setdefault("seed", int(seed))
                    backends[role] = BackendConfig.from_dict(cfg, base_dir=base)
            retry_data = data.pop("retry", None) or {}
            retry = RetryPolicy(
                max_attempts=int(retry_data.get("max_attempts", 3)),
                backoff=tuple(float(b) for b in retry_data.get("backoff", (1.0, 2.0, 4.0))),
            ) if retry_data else RetryPolicy()
            unknown = set(data) - {"dataset", "output_dir", "scenarios", "repetitions",
                                   "concurrency_limit", "max_rounds", "parallel_moderation"}
            if unknown:
                raise ConfigError(f"unknown plan fields: {sorted(unknown)}")
            if "dataset" not in data:
                raise ConfigError("plan needs a 'dataset'")
            return cls(
                dataset=resolve(data["dataset"]),
                output_dir=resolve(data.get("output_dir", "logicom-out")),
                backends=backends,
                scenarios=tuple(data.get("scenarios", [s.value for s in ALL_SCENARIOS])),
                repetitions=int(data.get("repetitions", 3)),
                concurrency_limit=int(data.get("concurrency_limit", 4)),
                max_rounds=int(data.get("max_rounds", DEFAULT_MAX_ROUNDS)),
                retry=retry,
                seed=None if seed is None else int(seed),
                parallel_moderation=bool(data.get("parallel_moderation", True)),
            )
        except (ValueError, TypeError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentPlan":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read plan {path}: {exc}") from exc
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse plan {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"plan {path} must be a mapping")
        return cls.from_dict(data, base_dir=path.parent)


class ResultsStore:
    """Append-only DebateResult store backed by ``manifest.jsonl`` + transcripts.

    The manifest is rewritten atomically (temp file, then rename) and sorted
    by key after every append, so its bytes do not depend on completion order.
    Entries whose transcript file is missing are dropped on open.
    """

    MANIFEST = "manifest.jsonl"
    TRANSCRIPTS = "transcripts"

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.manifest_path = self.root / self.MANIFEST
        self.transcript_dir = self.root / self.TRANSCRIPTS
        self._lock = threading.Lock()
        self._results: dict[Key, DebateResult] = {}
        self._extras: list[dict[str, Any]] = []
        self.executed: list[Key] = []
        if self.manifest_path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.manifest_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                data = json.loads(line)
                if "record" in data:
                    self._extras.append(data)
                    continue
                result = DebateResult.from_dict(data)
                if not (self.transcript_dir / result.transcript_ref).exists():
                    logger.warning("manifest entry %s has no transcript; treating as missing", result.key)
                    continue
                if result.key in self._results:
                    raise ValueError(f"duplicate manifest key {result.key}")
                self._results[result.key] = result

    def _flush(self) -> None:
        lines = [dumps_line(self._results[k].to_dict()) for k in sorted(self._results)]
        lines += [dumps_line(extra) for extra in self._extras]
        _atomic_write(self.manifest_path, "".join(lines))

    def __contains__(self, key: Key) -> bool:
        return key in self._results

    def __len__(self) -> int:
        return len(self._results)

    def __iter__(self) -> Iterator[DebateResult]:
        return iter(self.results())

    def results(self) -> list[DebateResult]:
        with self._lock:
            return [self._results[k] for k in sorted(self._results)]

    def get(self, key: Key) -> DebateResult | None:
        return self._results.get(key)

    def add(self, run: DebateRun) -> None:
        key = run.result.key
        with self._lock:
            if key in self._results:
                raise ValueError(f"result {key} already stored")
            write_transcript(run, self.transcript_dir)
            self._results[key] = run.result
            self._flush()

    def discard(self, key: Key) -> None:
        """Forget a result and delete its transcript (used to force a re-run)."""
        with self._lock:
            result = self._results.pop(key)
            path = self.transcript_dir / result.transcript_ref
            if path.exists():
                path.unlink()
            self._flush()

    def add_summary(self, record: dict[str, Any]) -> None:
        """Append a non-result record (e.g. an extraction summary) to the manifest."""
        if "record" not in record:
            raise ValueError("summary records need a 'record' type field")
        with self._lock:
            self._extras.append(record)
            self._flush()

    @property
    def extras(self) -> list[dict[str, Any]]:
        return list(self._extras)

    def load_transcript(self, result: DebateResult) -> tuple[dict[str, Any], Transcript]:
        return read_transcript(self.transcript_dir / result.transcript_ref)


def _failed_run(claim: ClaimRecord, scenario: ScenarioKind, rep: int, exc: BaseException) -> DebateRun:
    result = DebateResult(
        claim_id=claim.claim_id,
        scenario=scenario,
        repetition=rep,
        rounds_completed=1,
        termination=TerminationReason.BACKEND_FAILURE,
        final_stance=Stance.UNKNOWN,
        initial_stance=Stance.UNKNOWN,
        transcript_ref=transcript_name(claim.claim_id, scenario, rep),
    )
    return DebateRun(result, Transcript(claim.claim_id, scenario, rep), claim,
                     error=f"{type(exc).__name__}: {exc}")


def plan_size(plan: ExperimentPlan, claims: list[ClaimRecord]) -> int:
    return len(claims) * len(plan.scenarios) * plan.repetitions


def run_matrix(plan: ExperimentPlan, claims: list[ClaimRecord] | None = None) -> ResultsStore:
    """Run every missing (claim, scenario, repetition) debate of ``plan``.

    Keys already in the store are skipped, so an interrupted run resumes.
    Keys executed by this call are listed in ``store.executed``.
    """
    if claims is None:
        claims = load_claims(plan.dataset)
    configs = {scenario: plan.debate_config(scenario) for scenario in plan.scenarios}
    store = ResultsStore(plan.output_dir)
    todo = []
    for claim, scenario, rep in plan.matrix(claims):
        if (claim.claim_id, scenario.value, rep) not in store:
            todo.append((claim, scenario, rep))
    total = plan_size(plan, claims)
    logger.info("matrix: %d debates planned, %d already stored, %d to run",
                total, total - len(todo), len(todo))

    def job(claim: ClaimRecord, scenario: ScenarioKind, rep: int) -> DebateResult:
        try:
            run = conduct_debate(claim, configs[scenario], rep)
        except Exception as exc:  # noqa: BLE001 - one debate must not abort the matrix
            logger.exception("debate %s/%s/%d crashed", claim.claim_id, scenario.value, rep)
            run = _failed_run(claim, scenario, rep, exc)
        store.add(run)
        return run.result

    done = 0
    with ThreadPoolExecutor(max_workers=plan.concurrency_limit) as pool:
        futures = {pool.submit(job, *item): item for item in todo}
        for future in as_completed(futures):
            result = future.result()
            done += 1
            store.executed.append(result.key)
            logger.info("[%d/%d] %s %s rep %d: %s (%d tokens)", done, len(todo), result.claim_id,
                        result.scenario.value, result.repetition, result.termination.value, result.total_tokens)
    store.executed.sort()
    return store
