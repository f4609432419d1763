"""Acceptance criteria 1-10, each reported as one PASS/FAIL line.

Run directly with ``pytest tests/test_acceptance.py -v``; the lines also
appear in the "acceptance criteria" section of the terminal summary.
"""

from __future__ import annotations

import dataclasses
import itertools
import os
import random
import threading
import time
from pathlib import Path

import pytest

from logicom.agents import on_taxonomy, DEFAULT_TAXONOMY
from logicom.analysis import (
    EmptyDenominator,
    a1_success_stats,
    a2_histogram,
    ablation_cross,
    build_report,
    export_report,
    per_repetition_successes,
    relative_increase,
    rq1_opinion_change_rate,
)
from logicom.backend import BackendConfig, BackendKind, whitespace_tokens
from logicom.engine import DebateConfig, conduct_debate
from logicom.extractor import extract_pairs, write_pairs
from logicom.memory import BudgetInfeasible, TokenBudget, context_tokens, fit_to_budget
from logicom.model import Author, ScenarioKind, Stance, TerminationReason
from logicom.moderation import Action, SubordinateVerdicts, Verdict, master_decision
from logicom.runner import ExperimentPlan, ResultsStore, run_matrix, write_claims
from logicom.simulate import simulated_backends

from support import (
    StubSummarizer,
    fixture_backends,
    make_claims,
    memory_oracle,
    report,
    result,
    transcript_of,
    words,
)
from test_analysis import close, naive_a1, naive_a2, naive_ablation, naive_rq1, random_store

GOLDEN = Path(__file__).parent / "golden"
FH = ScenarioKind.FALLACIOUS_HELPER


def scripted_plan(tmp_path: Path, name: str, backends=None, claims=None) -> ExperimentPlan:
    dataset = tmp_path / "claims.jsonl"
    write_claims(claims or make_claims(2), dataset)
    return ExperimentPlan(dataset=dataset, output_dir=tmp_path / name,
                          backends=backends if backends is not None else simulated_backends(11))


def store_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.jsonl"))}


def test_criterion_1_end_to_end_determinism(tmp_path):
    start = time.perf_counter()
    first = run_matrix(scripted_plan(tmp_path, "a"))
    elapsed = time.perf_counter() - start
    second = run_matrix(scripted_plan(tmp_path, "b"))
    a, b = store_bytes(tmp_path / "a"), store_bytes(tmp_path / "b")
    transcripts = [k for k in a if k.startswith("transcripts")]
    ok = (elapsed < 10 and len(first) == len(second) == 36 and len(transcripts) == 36 and a == b)
    report(1, ok, f"{len(first)} results, {len(transcripts)} transcripts, {elapsed:.2f}s, identical={a == b}")
    assert ok


def random_debate_backends(rng: random.Random) -> dict[str, BackendConfig]:
    seed = rng.random()
    agree_at = rng.choice([None, None, 1, 2, 3, 5, 8, 10, 11, 15])
    p_off, p_loop, p_junk = rng.choice([0, 0.02, 0.1]), rng.choice([0, 0.02, 0.1]), rng.choice([0, 0.05, 0.3])
    dies_at = rng.choice([None] * 9 + [rng.randint(1, 12)])

    def pick(role, i, p_hit, hit, miss):
        r = random.Random(f"{seed}|{role}|{i}")
        roll = r.random()
        if roll < p_junk:
            return r.choice(["maybe", "", "unclear", "Yesterday"])
        return hit if roll < p_junk + p_hit else miss

    def debater(req, i):
        if dies_at is not None and i + 1 >= dies_at:
            return {"error": "outage", "retryable": False}
        return "I agree with the claim." if agree_at is not None and i + 1 >= agree_at else "I disagree."

    def convinced(req, i):
        if random.Random(f"{seed}|c|{i}").random() < p_junk:
            return "hmm"
        return "YES" if "AI: I agree" in req.turns[-1][1].rsplit("Human: ", 1)[-1] else "NO"

    backends = fixture_backends(helper_label=rng.choice(DEFAULT_TAXONOMY))
    backends["debater"] = BackendConfig("rand-debater", responder=debater)
    backends["moderator_convinced"] = BackendConfig("rand-c", responder=convinced)
    backends["moderator_topic"] = BackendConfig("rand-t", responder=lambda r, i: pick("t", i, p_off, "NO", "YES"))
    backends["moderator_pleasantry"] = BackendConfig("rand-p", responder=lambda r, i: pick("p", i, p_loop, "YES", "NO"))
    return backends


def test_criterion_2_round_cap():
    rng = random.Random(2024)
    claims = make_claims(4)
    bad, seen = [], {reason: 0 for reason in TerminationReason}
    for n in range(1000):
        scenario = rng.choice(list(ScenarioKind))
        config = DebateConfig.from_backends(scenario, random_debate_backends(rng))
        r = conduct_debate(rng.choice(claims), config, n).result
        seen[r.termination] += 1
        if r.rounds_completed > 10 or (r.termination is TerminationReason.ROUND_LIMIT and r.rounds_completed != 10):
            bad.append((n, r.rounds_completed, r.termination.value))
    counts = ", ".join(f"{k.value}={v}" for k, v in seen.items())
    report(2, not bad, f"1000 debates, violations={len(bad)} ({counts})")
    assert not bad, bad[:5]


def test_criterion_3_memory_safety():
    rng = random.Random(3)
    over = identity = order = 0
    infeasible = 0
    for _ in range(10_000):
        system_len = rng.randint(0, 20)
        lengths = [rng.randint(0, 30) for _ in range(rng.randint(1, 12))]
        budget, size = rng.randint(1, 200), rng.randint(1, 8)
        t, stub = transcript_of(lengths), StubSummarizer(size)
        system = words(system_len, "sys")
        expected = memory_oracle(system_len, lengths, budget, size)
        try:
            fitted = fit_to_budget(t, TokenBudget(budget), stub, whitespace_tokens, system)
        except BudgetInfeasible:
            infeasible += 1
            order += expected is not None
            continue
        over += context_tokens(fitted, system, whitespace_tokens) > budget
        identity += (fitted.messages[0].text != t.messages[0].text or fitted.messages[-1].text != t.messages[-1].text)
        middle = [m.text for m in t.messages[1:-1]]
        order += expected is None or stub.calls != [(x,) for x in middle[:expected]]
    ok = over == identity == order == 0
    report(3, ok, f"10000 cases ({infeasible} infeasible): over_budget={over}, "
                  f"endpoint_changes={identity}, oracle_mismatches={order}")
    assert ok


def enumeration_oracle(c, t, p, rnd, cap):
    if c is Verdict.YES:
        return Action.TERMINATE, TerminationReason.CONVINCED
    if p is Verdict.YES:
        return Action.TERMINATE, TerminationReason.PLEASANTRY_LOOP
    if t is Verdict.NO:
        return Action.TERMINATE, TerminationReason.OFF_TOPIC
    if rnd >= cap:
        return Action.TERMINATE, TerminationReason.ROUND_LIMIT
    return Action.CONTINUE, None


def test_criterion_4_moderation_truth_table():
    cases = mismatches = 0
    for (c, t, p), rnd in itertools.product(itertools.product(Verdict, repeat=3), range(1, 11)):
        cases += 1
        d = master_decision(SubordinateVerdicts(c, t, p), rnd, 10)
        mismatches += (d.action, d.reason) != enumeration_oracle(c, t, p, rnd, 10)
    report(4, mismatches == 0, f"{cases} combinations (27 verdicts x 10 rounds), mismatches={mismatches}")
    assert mismatches == 0


def test_criterion_5_metric_oracles():
    rng = random.Random(5)
    failures = []
    identities = 0
    for trial in range(1000):
        rs = random_store(rng)
        try:
            expected = naive_rq1(rs)
        except ZeroDivisionError:
            try:
                rq1_opinion_change_rate(rs)
                failures.append((trial, "rq1 no raise"))
            except EmptyDenominator:
                pass
        else:
            if not close(rq1_opinion_change_rate(rs), expected):
                failures.append((trial, "rq1"))
        rates = {}
        for s in ScenarioKind:
            got = a1_success_stats(rs, s)
            want = naive_a1(rs, s)
            if not all(close(x, y) for x, y in zip(got, want)):
                failures.append((trial, "a1", s.value))
            rates[s] = want[2]
            hist = a2_histogram(rs, s)
            if hist != naive_a2(rs, s):
                failures.append((trial, "a2", s.value))
            if sum(k * v for k, v in hist.items()) != sum(per_repetition_successes(rs, s)):
                failures.append((trial, "identity", s.value))
            identities += 1
        for a, b in itertools.permutations(ScenarioKind, 2):
            if not all(close(x, y) for x, y in zip(ablation_cross(rs, a, b), naive_ablation(rs, a, b))):
                failures.append((trial, "ablation", a.value, b.value))
            if rates[b] > 0 and not close(relative_increase(rates[a], rates[b]), (rates[a] - rates[b]) / rates[b]):
                failures.append((trial, "relative", a.value, b.value))
    report(5, not failures, f"1000 stores, {identities} identity checks, failures={len(failures)}")
    assert not failures, failures[:5]


def rq1_fixture():
    """12 results: 6 open with agreement, 6 open with disagreement of which 3 flip."""
    NH, LH = ScenarioKind.NO_HELPER, ScenarioKind.LOGICAL_HELPER
    agreed = dict(initial=Stance.AGREE, rounds=1, termination=TerminationReason.CONVINCED)
    flipped = dict(initial=Stance.DISAGREE, rounds=4, termination=TerminationReason.CONVINCED)
    held = dict(initial=Stance.DISAGREE, rounds=10, termination=TerminationReason.ROUND_LIMIT)
    layout = {
        NH: [agreed, agreed, flipped, held],
        FH: [agreed, flipped, flipped, held],
        LH: [agreed, agreed, agreed, held],
    }
    out = []
    for scenario, kinds in layout.items():
        for c, kind in enumerate(kinds):
            final = Stance.DISAGREE if kind is held else Stance.AGREE
            out.append(result(f"c{c}", scenario, 0, final, **kind))
    return out


def test_criterion_6_rq1_fixture(tmp_path):
    rs = rq1_fixture()
    rate = rq1_opinion_change_rate(rs)
    metrics = export_report(build_report(rs, repetitions=1), rs, tmp_path)[0]
    golden = (GOLDEN / "rq1_metrics.csv").read_bytes()
    ok = len(rs) == 12 and rate == 0.5 and metrics.read_bytes() == golden
    report(6, ok, f"rate={rate}, csv_matches_golden={metrics.read_bytes() == golden}")
    assert ok


def test_criterion_7_helper_pipeline():
    claims = make_claims(4)
    revised = leaks = missing = 0
    configs = [fixture_backends(agree_at=None, helper_label=label) for label in DEFAULT_TAXONOMY]
    configs += [simulated_backends(seed) for seed in range(6)]
    for n, backends in enumerate(configs):
        run = conduct_debate(claims[n % len(claims)], DebateConfig.from_backends(FH, backends), n)
        persuaders = [m for m in run.transcript.dialogue() if m.author is Author.PERSUADER][1:]
        secrets = set()
        for m in persuaders:
            revised += 1
            if m.draft_text is None or m.fallacy_label is None or not on_taxonomy(m.fallacy_label):
                missing += 1
                continue
            secrets |= {m.draft_text, m.fallacy_label.lower()}
        for request in run.agents["debater"].backend.requests:
            blob = (request.system_text + "\n".join(x for _, x in request.turns)).lower()
            leaks += sum(s.lower() in blob for s in secrets)
    ok = revised > 0 and missing == 0 and leaks == 0
    report(7, ok, f"{len(configs)} debates, {revised} revised messages, unlabeled={missing}, leaks={leaks}")
    assert ok


def counting(backends, key):
    lock, log = threading.Lock(), []
    inner = backends[key].responder

    def wrapped(request, index):
        with lock:
            log.append(index)
        return inner(request, index)

    backends[key] = dataclasses.replace(backends[key], responder=wrapped)
    return log


def test_criterion_8_extractor_count(tmp_path):
    mismatches, totals = [], []
    for n, agree_at in enumerate([None, 2, 4, 7]):
        backends = fixture_backends(agree_at=agree_at)
        helper_calls = counting(backends, "fallacious_helper")
        plan = scripted_plan(tmp_path, f"s{n}", backends)
        store = run_matrix(plan)
        pairs = extract_pairs(store)
        a = write_pairs(pairs, tmp_path / f"s{n}-a.jsonl").read_bytes()
        b = write_pairs(extract_pairs(ResultsStore(plan.output_dir)), tmp_path / f"s{n}-b.jsonl").read_bytes()
        totals.append(len(pairs))
        if len(pairs) != len(helper_calls) or a != b:
            mismatches.append((agree_at, len(pairs), len(helper_calls), a == b))
    report(8, not mismatches, f"pair counts {totals} vs helper calls, mismatches={len(mismatches)}")
    assert not mismatches, mismatches


CRITERIA_9: dict[str, list[str]] = {}


@pytest.mark.parametrize("k", [1, 5, 36])
def test_criterion_9_resume(tmp_path, k):
    backends = fixture_backends(agree_at=3)
    first_replies = counting(backends, "debater")
    plan = scripted_plan(tmp_path, "out", backends)
    store = run_matrix(plan)
    rng = random.Random(k)
    victims = sorted(rng.sample([r.key for r in store.results()], k))
    for key in victims:
        store.discard(key)
    before = first_replies.count(0)
    again = run_matrix(plan)
    executed = first_replies.count(0) - before
    ok = executed == k and again.executed == victims and len(again) == 36
    line = CRITERIA_9.setdefault("runs", [])
    line.append(f"k={k}:{'ok' if ok else f'ran {executed}'}")
    report(9, ok and all(x.endswith("ok") for x in line), "resume " + ", ".join(line))
    assert ok


LIVE_VARS = ("LOGICOM_LIVE_ENDPOINT", "LOGICOM_LIVE_MODEL")


@pytest.mark.skipif(not all(os.environ.get(v) for v in LIVE_VARS),
                    reason="live smoke test needs LOGICOM_LIVE_ENDPOINT and LOGICOM_LIVE_MODEL")
def test_criterion_10_live_smoke():
    live = BackendConfig(
        "live",
        kind=BackendKind.HTTP,
        endpoint=os.environ["LOGICOM_LIVE_ENDPOINT"],
        model=os.environ["LOGICOM_LIVE_MODEL"],
        api_key_env=os.environ.get("LOGICOM_LIVE_KEY_ENV", "OPENAI_API_KEY"),
        context_window_tokens=int(os.environ.get("LOGICOM_LIVE_WINDOW", "8192")),
        max_output_tokens=512,
    )
    backends = {"persuader": live, "debater": live, "moderator": live, "summarizer": live}
    config = DebateConfig.from_backends(ScenarioKind.NO_HELPER, backends)
    run = conduct_debate(make_claims(1)[0], config, 0)
    r = run.result
    ok = (run.error is None and 1 <= r.rounds_completed <= 10 and r.total_tokens > 0
          and r.final_stance in set(Stance))
    report(10, ok, f"rounds={r.rounds_completed}, termination={r.termination.value}, tokens={r.total_tokens}")
    assert ok, run.error


def test_criterion_10_skip_notice():
    if all(os.environ.get(v) for v in LIVE_VARS):
        pytest.skip("live run enabled")
    report(10, None, "live smoke test disabled (set LOGICOM_LIVE_ENDPOINT and LOGICOM_LIVE_MODEL)")

