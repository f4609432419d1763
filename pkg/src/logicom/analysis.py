"""Susceptibility metrics over a results store, and CSV report export."""

from __future__ import annotations

import csv
import io
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .model import ALL_SCENARIOS, DebateResult, ScenarioKind, Stance

SUCCESS_GROUPS = ("Zero Success", "One Success", "Two Success", "Three Success")


class EmptyDenominator(ValueError):
    pass


class MissingRepetition(ValueError):
    pass


class ZeroReference(ValueError):
    pass


class OpinionChange(NamedTuple):
    changed: int
    initially_disagreeing: int
    excluded: int


class A1Stats(NamedTuple):
    mean_count: float
    sample_variance: float
    rate: float


def opinion_change_counts(results: Iterable[DebateResult]) -> OpinionChange:
    """Count Disagree->Agree debates among those that began in disagreement.

    Debates with an Unknown initial or final stance are excluded and counted
    separately.
    """
    changed = disagreeing = excluded = 0
    for r in results:
        if r.initial_stance is Stance.UNKNOWN or r.final_stance is Stance.UNKNOWN:
            excluded += 1
            continue
        if r.initial_stance is Stance.DISAGREE:
            disagreeing += 1
            changed += r.final_stance is Stance.AGREE
    return OpinionChange(changed, disagreeing, excluded)


def rq1_opinion_change_rate(results: Iterable[DebateResult]) -> float:
    """Opinion-change rate aggregated over every scenario and repetition."""
    counts = opinion_change_counts(results)
    if counts.initially_disagreeing == 0:
        raise EmptyDenominator("no debate started in disagreement")
    return counts.changed / counts.initially_disagreeing


def rq1_by_model(results: Iterable[DebateResult]) -> dict[str, OpinionChange]:
    groups: dict[str, list[DebateResult]] = defaultdict(list)
    for r in results:
        groups[r.model_ids.get("debater", "unknown")].append(r)
    return {model: opinion_change_counts(rs) for model, rs in sorted(groups.items())}


def _grid(results: Iterable[DebateResult], scenario: ScenarioKind) -> tuple[list[str], list[int], dict]:
    outcome: dict[tuple[str, int], bool] = {}
    for r in results:
        if r.scenario is scenario:
            outcome[(r.claim_id, r.repetition)] = r.succeeded
    if not outcome:
        raise MissingRepetition(f"no results for scenario {scenario.value}")
    claims = sorted({c for c, _ in outcome})
    reps = sorted({rep for _, rep in outcome})
    missing = [(c, rep) for c in claims for rep in reps if (c, rep) not in outcome]
    if missing:
        raise MissingRepetition(
            f"{scenario.value}: {len(missing)} (claim, repetition) results missing, e.g. {missing[0]}"
        )
    return claims, reps, outcome


def per_repetition_successes(results: Iterable[DebateResult], scenario: ScenarioKind) -> list[int]:
    claims, reps, outcome = _grid(results, scenario)
    return [sum(outcome[(c, rep)] for c in claims) for rep in reps]


def a1_success_stats(results: Iterable[DebateResult], scenario: ScenarioKind) -> A1Stats:
    """Mean and sample variance of per-repetition success counts, and the rate.

    Unknown final stances count as failures. With a single repetition the
    variance is NaN.
    """
    results = list(results)
    claims, _, _ = _grid(results, scenario)
    counts = per_repetition_successes(results, scenario)
    mean = statistics.fmean(counts)
    variance = float(statistics.variance(counts)) if len(counts) > 1 else math.nan
    return A1Stats(mean, variance, mean / len(claims))


def per_claim_successes(results: Iterable[DebateResult], scenario: ScenarioKind) -> dict[str, int]:
    claims, reps, outcome = _grid(results, scenario)
    return {c: sum(outcome[(c, rep)] for rep in reps) for c in claims}


def a2_histogram(
    results: Iterable[DebateResult], scenario: ScenarioKind, repetitions: int = 3
) -> dict[int, int]:
    """How many claims the persuader won 0, 1, ..., ``repetitions`` times."""
    results = list(results)
    _, reps, _ = _grid(results, scenario)
    if len(reps) != repetitions:
        raise MissingRepetition(f"{scenario.value}: expected {repetitions} repetitions, found {len(reps)}")
    hist = {k: 0 for k in range(repetitions + 1)}
    for successes in per_claim_successes(results, scenario).values():
        hist[successes] += 1
    return hist


def histogram_fractions(hist: dict[int, int]) -> dict[int, float]:
    total = sum(hist.values())
    return {k: v / total for k, v in hist.items()}


def relative_increase(p_treatment: float, p_reference: float) -> float:
    if p_reference <= 0:
        raise ZeroReference("reference rate must be positive")
    return (p_treatment - p_reference) / p_reference


def ablation_cross(
    results: Iterable[DebateResult], helper_a: ScenarioKind, helper_b: ScenarioKind
) -> tuple[float, float]:
    """Fractions of claims where A fails but B succeeds, and vice versa.

    Counted per repetition, averaged over repetitions, divided by the number
    of claims.
    """
    results = list(results)
    claims_a, reps_a, out_a = _grid(results, helper_a)
    claims_b, reps_b, out_b = _grid(results, helper_b)
    if claims_a != claims_b or reps_a != reps_b:
        raise MissingRepetition(f"{helper_a.value} and {helper_b.value} cover different claims or repetitions")
    a_fail_b_win = [sum(not out_a[(c, r)] and out_b[(c, r)] for c in claims_a) for r in reps_a]
    a_win_b_fail = [sum(out_a[(c, r)] and not out_b[(c, r)] for c in claims_a) for r in reps_a]
    n = len(claims_a)
    return statistics.fmean(a_fail_b_win) / n, statistics.fmean(a_win_b_fail) / n


# Reports

@dataclass
class MetricReport:
    rq1: dict[str, float | None]
    rq1_counts: dict[str, OpinionChange]
    a1: dict[ScenarioKind, A1Stats] = field(default_factory=dict)
    a2: dict[ScenarioKind, dict[int, int]] = field(default_factory=dict)
    unknown_final: dict[ScenarioKind, int] = field(default_factory=dict)
    relative: dict[tuple[str, ScenarioKind, ScenarioKind], float | None] = field(default_factory=dict)
    ablation: dict[tuple[ScenarioKind, ScenarioKind], tuple[float, float]] = field(default_factory=dict)


RELATIVE_PAIRS = (
    (ScenarioKind.FALLACIOUS_HELPER, ScenarioKind.NO_HELPER),
    (ScenarioKind.FALLACIOUS_HELPER, ScenarioKind.LOGICAL_HELPER),
    (ScenarioKind.LOGICAL_HELPER, ScenarioKind.NO_HELPER),
)
ABLATION_PAIRS = (
    (ScenarioKind.LOGICAL_HELPER, ScenarioKind.FALLACIOUS_HELPER),
    (ScenarioKind.NO_HELPER, ScenarioKind.FALLACIOUS_HELPER),
)


def build_report(results: Iterable[DebateResult], repetitions: int = 3) -> MetricReport:
    """Compute every metric the store supports.

    A2 is reported only for scenarios with exactly ``repetitions`` repetitions;
    relative increases are computed against both the no-helper and the
    logical-helper baselines.
    """
    results = list(results)
    if not results:
        raise EmptyDenominator("results store is empty")
    by_model = rq1_by_model(results)
    rq1 = {
        model: (c.changed / c.initially_disagreeing if c.initially_disagreeing else None)
        for model, c in by_model.items()
    }
    report = MetricReport(rq1=rq1, rq1_counts=by_model)
    present = [s for s in ALL_SCENARIOS if any(r.scenario is s for r in results)]
    for scenario in present:
        report.a1[scenario] = a1_success_stats(results, scenario)
        report.unknown_final[scenario] = sum(
            r.scenario is scenario and r.final_stance is Stance.UNKNOWN for r in results
        )
        try:
            report.a2[scenario] = a2_histogram(results, scenario, repetitions)
        except MissingRepetition:
            pass
    for treatment, baseline in RELATIVE_PAIRS:
        if treatment in report.a1 and baseline in report.a1:
            report.relative[("a1_success_rate", treatment, baseline)] = _safe_increase(
                report.a1[treatment].rate, report.a1[baseline].rate
            )
        if treatment in report.a2 and baseline in report.a2:
            report.relative[("a2_all_success_fraction", treatment, baseline)] = _safe_increase(
                histogram_fractions(report.a2[treatment])[repetitions],
                histogram_fractions(report.a2[baseline])[repetitions],
            )
    for a, b in ABLATION_PAIRS:
        if a in report.a1 and b in report.a1:
            try:
                report.ablation[(a, b)] = ablation_cross(results, a, b)
            except MissingRepetition:
                pass
    return report


def _safe_increase(p: float, ref: float) -> float | None:
    try:
        return relative_increase(p, ref)
    except ZeroReference:
        return None


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.6f}"


def metric_rows(report: MetricReport) -> list[tuple[str, str, str, str]]:
    rows = []
    for model, counts in report.rq1_counts.items():
        rows.append(("rq1_opinion_change_rate", model, "", _fmt(report.rq1[model])))
        rows.append(("rq1_changed", model, "", _fmt(counts.changed)))
        rows.append(("rq1_initially_disagreeing", model, "", _fmt(counts.initially_disagreeing)))
        rows.append(("rq1_excluded_unknown", model, "", _fmt(counts.excluded)))
    for scenario, stats in report.a1.items():
        name = scenario.value
        rows.append(("a1_mean_success_count", name, "", _fmt(stats.mean_count)))
        rows.append(("a1_sample_variance", name, "", _fmt(stats.sample_variance)))
        rows.append(("a1_success_rate", name, "", _fmt(stats.rate)))
        rows.append(("unknown_final_as_disagree", name, "", _fmt(report.unknown_final[scenario])))
        if scenario in report.a2:
            hist = report.a2[scenario]
            fractions = histogram_fractions(hist)
            for k in hist:
                rows.append((f"a2_claims_{k}_success", name, "", _fmt(hist[k])))
            for k in hist:
                rows.append((f"a2_fraction_{k}_success", name, "", _fmt(fractions[k])))
    for (metric, treatment, baseline), value in report.relative.items():
        rows.append((f"relative_increase_{metric}", treatment.value, baseline.value, _fmt(value)))
    for (a, b), (fail_win, win_fail) in report.ablation.items():
        rows.append(("ablation_a_fail_b_success", a.value, b.value, _fmt(fail_win)))
        rows.append(("ablation_a_success_b_fail", a.value, b.value, _fmt(win_fail)))
    return rows


def _csv(header: tuple[str, ...], rows: Iterable[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


METRICS_HEADER = ("metric", "subject", "reference", "value")
CLAIMS_HEADER = ("claim_id", "scenario", "repetitions", "successes", "final_stances")


def claim_rows(results: Iterable[DebateResult]) -> list[tuple]:
    grouped: dict[tuple[str, str], list[DebateResult]] = defaultdict(list)
    order = {s.value: i for i, s in enumerate(ALL_SCENARIOS)}
    for r in results:
        grouped[(r.claim_id, r.scenario.value)].append(r)
    rows = []
    for (claim_id, scenario), rs in sorted(grouped.items(), key=lambda kv: (kv[0][0], order[kv[0][1]])):
        rs.sort(key=lambda r: r.repetition)
        stances = "|".join(r.final_stance.value for r in rs)
        rows.append((claim_id, scenario, len(rs), sum(r.succeeded for r in rs), stances))
    return rows


def plot_rows(report: MetricReport) -> tuple[tuple[str, ...], list[tuple]]:
    """Fraction of claims per success-count group, one column per scenario."""
    scenarios = [s for s in ALL_SCENARIOS if s in report.a2]
    header = ("success_count", "group") + tuple(s.value for s in scenarios)
    if not scenarios:
        return header, []
    bins = sorted(report.a2[scenarios[0]])
    rows = []
    for k in bins:
        group = SUCCESS_GROUPS[k] if k < len(SUCCESS_GROUPS) else f"{k} Success"
        rows.append((k, group) + tuple(_fmt(histogram_fractions(report.a2[s])[k]) for s in scenarios))
    return header, rows


def export_report(report: MetricReport, results: Iterable[DebateResult], out_dir: str | Path) -> list[Path]:
    """Write ``metrics.csv``, ``claims.csv`` and ``plot_data.csv`` to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plot_header, plot = plot_rows(report)
    files = {
        "metrics.csv": _csv(METRICS_HEADER, metric_rows(report)),
        "claims.csv": _csv(CLAIMS_HEADER, claim_rows(results)),
        "plot_data.csv": _csv(plot_header, plot),
    }
    paths = []
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths
