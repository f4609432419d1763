from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor

import pytest
from hypothesis import given, strategies as st

from logicom.agents import AgentConfig, Role
from logicom.backend import BackendConfig
from logicom.model import Author, ChatMessage, ScenarioKind, Stance, TerminationReason, Transcript
from logicom.moderation import (
    CONTINUE,
    Action,
    MasterDecision,
    Moderator,
    SubordinateVerdicts,
    Verdict,
    check_convinced,
    check_on_topic,
    check_pleasantry_loop,
    final_verdict,
    master_decision,
    parse_yes_no,
)

from support import make_claim

CLAIM = make_claim()
V = list(Verdict)


def moderator(role, *script, fallback=None):
    fb = BackendConfig("fallback", script=tuple(fallback)) if fallback is not None else None
    return AgentConfig(role, BackendConfig("mod", script=tuple(script)), fallback=fb).open()


def debate(rounds: int, persuader="argument {i}", debater="reply {i}") -> Transcript:
    msgs = []
    for i in range(rounds):
        msgs.append(ChatMessage(Author.PERSUADER, persuader.format(i=i), i))
        msgs.append(ChatMessage(Author.DEBATER, debater.format(i=i), i))
    return Transcript("c1", ScenarioKind.NO_HELPER, 0, tuple(msgs))


@pytest.mark.parametrize(
    "reply, expected",
    [
        ("YES", Verdict.YES),
        ("yes.", Verdict.YES),
        ("**No**", Verdict.NO),
        ("I think no, because...", Verdict.NO),
        ("Answer: YES", Verdict.YES),
        ("cannot determine", Verdict.UNKNOWN),
        ("", Verdict.UNKNOWN),
        ("Nope", Verdict.UNKNOWN),
        ("Yesterday", Verdict.UNKNOWN),
    ],
)
def test_parse_yes_no(reply, expected):
    assert parse_yes_no(reply) is expected


def oracle(convinced, on_topic, pleasantry, rnd, max_rounds):
    """Brute-force reading of the priority rules as a list of (cause, reason)."""
    causes = [
        (convinced == Verdict.YES, TerminationReason.CONVINCED),
        (pleasantry == Verdict.YES, TerminationReason.PLEASANTRY_LOOP),
        (on_topic == Verdict.NO, TerminationReason.OFF_TOPIC),
        (rnd >= max_rounds, TerminationReason.ROUND_LIMIT),
    ]
    fired = [reason for hit, reason in causes if hit]
    return (Action.TERMINATE, fired[0]) if fired else (Action.CONTINUE, None)


@pytest.mark.parametrize("rnd", [1, 9, 10])
def test_truth_table_matches_enumeration(rnd):
    for c, t, p in itertools.product(V, V, V):
        d = master_decision(SubordinateVerdicts(c, t, p), rnd, 10)
        assert (d.action, d.reason) == oracle(c, t, p, rnd, 10), (c, t, p, rnd)


@given(st.sampled_from(V), st.sampled_from(V), st.sampled_from(V), st.integers(1, 30), st.integers(1, 30))
def test_truth_table_property(c, t, p, rnd, cap):
    d = master_decision(SubordinateVerdicts(c, t, p), rnd, cap)
    assert (d.action, d.reason) == oracle(c, t, p, rnd, cap)


def test_worked_decisions():
    assert master_decision(SubordinateVerdicts(Verdict.YES, Verdict.NO, Verdict.YES), 3, 10).reason is TerminationReason.CONVINCED
    assert master_decision(SubordinateVerdicts(Verdict.NO, Verdict.YES, Verdict.NO), 10, 10).reason is TerminationReason.ROUND_LIMIT
    assert master_decision(SubordinateVerdicts(Verdict.NO, Verdict.YES, Verdict.NO), 4, 10) == CONTINUE


def test_master_decision_invariants():
    with pytest.raises(ValueError):
        MasterDecision(Action.TERMINATE)
    with pytest.raises(ValueError):
        MasterDecision(Action.CONTINUE, TerminationReason.CONVINCED)
    with pytest.raises(ValueError):
        master_decision(SubordinateVerdicts(Verdict.NO, Verdict.YES, Verdict.NO), 0, 10)


def test_convinced_check_sees_latest_round_only():
    agent = moderator(Role.MODERATOR_CONVINCED, "YES")
    verdict, raw = check_convinced(agent, CLAIM, debate(3))
    assert (verdict, raw) == (Verdict.YES, "YES")
    sent = agent.backend.requests[0].turns[0][1]
    assert "reply 2" in sent and "argument 2" in sent and "reply 1" not in sent


def test_topic_and_pleasantry_checks_see_two_rounds():
    for check, role in ((check_on_topic, Role.MODERATOR_TOPIC), (check_pleasantry_loop, Role.MODERATOR_PLEASANTRY)):
        agent = moderator(role, "NO")
        assert check(agent, CLAIM, debate(4))[0] is Verdict.NO
        sent = agent.backend.requests[0].turns[0][1]
        assert "reply 2" in sent and "reply 3" in sent and "reply 1" not in sent


def test_topic_refusal_falls_back():
    agent = moderator(Role.MODERATOR_TOPIC, {"refused": True}, fallback=["YES"])
    assert check_on_topic(agent, CLAIM, debate(1))[0] is Verdict.YES


def test_pleasantry_fixtures():
    thanks = debate(2, persuader="Thank you so much, I appreciate it.", debater="Thank you too, my pleasure.")
    assert check_pleasantry_loop(moderator(Role.MODERATOR_PLEASANTRY, "YES"), CLAIM, thanks)[0] is Verdict.YES
    assert check_pleasantry_loop(moderator(Role.MODERATOR_PLEASANTRY, "NO"), CLAIM, debate(2))[0] is Verdict.NO
    assert check_pleasantry_loop(moderator(Role.MODERATOR_PLEASANTRY, "@@garbled"), CLAIM, debate(2))[0] is Verdict.UNKNOWN


def test_checks_need_a_debater_message():
    t = Transcript("c1", ScenarioKind.NO_HELPER, 0, (ChatMessage(Author.PERSUADER, "hi", 0),))
    with pytest.raises(ValueError):
        check_convinced(moderator(Role.MODERATOR_CONVINCED, "YES"), CLAIM, t)


def test_final_verdict_convinced_needs_no_call():
    agent = moderator(Role.MODERATOR_CONVINCED)
    assert final_verdict(agent, CLAIM, debate(2), TerminationReason.CONVINCED) is Stance.AGREE
    assert agent.backend.calls == 0


def test_final_verdict_round_limit_no_is_disagree():
    agent = moderator(Role.MODERATOR_CONVINCED, "NO")
    assert final_verdict(agent, CLAIM, debate(10), TerminationReason.ROUND_LIMIT) is Stance.DISAGREE
    sent = agent.backend.requests[0].turns[0][1]
    assert "reply 0" in sent and "reply 9" in sent


def test_final_verdict_double_refusal_is_unknown():
    agent = moderator(Role.MODERATOR_CONVINCED, {"refused": True}, fallback=[{"refused": True}])
    assert final_verdict(agent, CLAIM, debate(2), TerminationReason.OFF_TOPIC) is Stance.UNKNOWN


def test_final_verdict_backend_failure_is_unknown(caplog):
    agent = moderator(Role.MODERATOR_CONVINCED)  # exhausted
    assert final_verdict(agent, CLAIM, debate(2), TerminationReason.OFF_TOPIC) is Stance.UNKNOWN
    assert "unavailable" in caplog.text


@pytest.mark.parametrize("parallel", [False, True])
def test_moderator_runs_all_three_checks(parallel):
    pool = ThreadPoolExecutor(3) if parallel else None
    mod = Moderator(
        moderator(Role.MODERATOR_CONVINCED, "NO"),
        moderator(Role.MODERATOR_TOPIC, "NO"),
        moderator(Role.MODERATOR_PLEASANTRY, "maybe"),
        executor=pool,
    )
    decision, verdicts, raw = mod.decide(CLAIM, debate(1), 1, 10)
    if pool:
        pool.shutdown()
    assert verdicts == SubordinateVerdicts(Verdict.NO, Verdict.NO, Verdict.UNKNOWN)
    assert decision.reason is TerminationReason.OFF_TOPIC
    assert raw == {"convinced": "NO", "on_topic": "NO", "pleasantry_loop": "maybe"}
