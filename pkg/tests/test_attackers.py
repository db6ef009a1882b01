import random

import numpy as np
import pytest

from corrsim.analytics import expected_screened_mistakes
from corrsim.attackers import (
    AttackerSpec,
    Feedback,
    FeedbackOrderError,
    NaturalUser,
    RateTrackingAttacker,
    TestSetAttacker,
    WhiteBoxScreening,
)
from corrsim.core import ABSTAIN, REJECTED, Origin, Query, Response
from corrsim.defenders import FixedDeterministic, Memorization
from corrsim.world import build_world


@pytest.fixture(scope="module")
def world():
    return build_world(10, 10000, 0.02, seed=4)


def feed(attacker, world, response):
    y = world.labels[attacker._pending.point_id]
    err = response.is_class and response.label != y
    hit = attacker.target is not None and response.is_class and response.label == attacker.target != y
    attacker.observe(Feedback(attacker._pending, response, y, err, hit))


def correct_for(world, pid):
    return Response.of_class(world.labels[pid])


def wrong_for(world, pid, label=None):
    y = world.labels[pid]
    return Response.of_class((y + 1) % world.k if label is None else label)


def test_test_set_replays_first_mistake(world):
    a = TestSetAttacker()
    rng = random.Random(0)
    for resp_for in (correct_for, correct_for, wrong_for):
        q = a.next_query(world, rng)
        assert q.origin is Origin.FRESH_PROBE
        feed(a, world, resp_for(world, q.point_id))
    p = q.point_id
    assert a.found_mistake == p
    for _ in range(20):
        q = a.next_query(world, rng)
        assert q == Query(p, Origin.REPLAY)
        feed(a, world, correct_for(world, p))


def test_test_set_keeps_replaying_under_abstention(world):
    a = TestSetAttacker()
    rng = random.Random(0)
    q = a.next_query(world, rng)
    feed(a, world, wrong_for(world, q.point_id))
    abstentions = 0
    for _ in range(50):
        assert a.next_query(world, rng).point_id == q.point_id
        feed(a, world, ABSTAIN)
        abstentions += 1
    assert a.found_mistake == q.point_id and abstentions == 50


def test_abstain_and_reject_are_not_mistakes(world):
    a = TestSetAttacker()
    rng = random.Random(0)
    for resp in (ABSTAIN, REJECTED, ABSTAIN):
        a.next_query(world, rng)
        feed(a, world, resp)
    assert a.found_mistake is None


def test_targeted_replays_only_target_class_hits(world):
    a = TestSetAttacker(target=7)
    rng = random.Random(1)
    q = a.next_query(world, rng)
    y = world.labels[q.point_id]
    other = next(c for c in range(world.k) if c not in (y, 7))
    feed(a, world, Response.of_class(other))
    assert a.found_mistake is None

    q = a.next_query(world, rng)
    assert q.origin is Origin.FRESH_PROBE
    if world.labels[q.point_id] == 7:
        # answering the true class 7 is not a targeted hit
        feed(a, world, Response.of_class(7))
        assert a.found_mistake is None
        q = a.next_query(world, rng)
    assert world.labels[q.point_id] != 7
    feed(a, world, Response.of_class(7))
    assert a.found_mistake == q.point_id
    assert a.next_query(world, rng) == Query(q.point_id, Origin.REPLAY)


def test_out_of_order_feedback_rejected(world):
    a = TestSetAttacker()
    with pytest.raises(FeedbackOrderError):
        a.observe(Feedback(Query(1), ABSTAIN, 0, False, False))
    q = a.next_query(world, random.Random(0))
    with pytest.raises(FeedbackOrderError):
        a.observe(Feedback(Query(q.point_id + 1), ABSTAIN, 0, False, False))
    a.observe(Feedback(q, ABSTAIN, 0, False, False))
    with pytest.raises(FeedbackOrderError):
        a.observe(Feedback(q, ABSTAIN, 0, False, False))


def test_rate_tracking_estimate(world):
    a = RateTrackingAttacker()
    rng = random.Random(0)
    q = a.next_query(world, rng)
    p = q.point_id
    outcomes = [1, 0, 1, 1, 0, 1, 0, 1, 0, 1]
    feed(a, world, wrong_for(world, p) if outcomes[0] else correct_for(world, p))
    for o in outcomes[1:]:
        a._pending = Query(p, Origin.REPLAY)
        feed(a, world, wrong_for(world, p) if o else correct_for(world, p))
    assert a.trials(p) == 10
    assert a.estimate(p) == pytest.approx(0.6)


def test_rate_tracking_prefers_exploitable_point(world):
    a = RateTrackingAttacker(exploration=1.0)
    rng = random.Random(3)
    bad = set(world.mistake_points())
    d = FixedDeterministic()
    replays = 0
    for i in range(3000):
        q = a.next_query(world, rng)
        feed(a, world, d.respond(q, world, rng))
        if i >= 2000:
            replays += q.point_id in bad
    assert replays > 900


def test_natural_user_never_replays_intentionally(world):
    a = NaturalUser()
    rng = random.Random(0)
    for _ in range(100):
        q = a.next_query(world, rng)
        assert q.origin is Origin.FRESH_PROBE
        feed(a, world, ABSTAIN)


def brute_force_screen(n, bad, budget, rng):
    draws = rng.integers(0, n, size=budget)
    return len(set(draws[np.isin(draws, bad)].tolist()))


def test_screening_matches_coupon_collector(world):
    bad = np.array(world.mistake_points())
    budget = 10000
    found = []
    for e in range(40):
        a = WhiteBoxScreening(screen_budget=budget)
        a.screen_offline(FixedDeterministic(), world, random.Random(e))
        assert len(set(a.screened_mistakes)) == len(a.screened_mistakes)
        assert set(a.screened_mistakes) <= set(bad.tolist())
        found.append(len(a.screened_mistakes))
    gen = np.random.default_rng(99)
    oracle = [brute_force_screen(world.n, bad, budget, gen) for _ in range(400)]
    expected = expected_screened_mistakes(len(bad), world.n, budget)
    assert np.mean(oracle) == pytest.approx(expected, rel=0.01)
    se = np.std(found, ddof=1) / np.sqrt(len(found))
    assert abs(np.mean(found) - expected) < 4 * se + 0.5


def test_large_budget_finds_all_mistakes(world):
    a = WhiteBoxScreening(screen_budget=10**6)
    a.screen_offline(FixedDeterministic(), world, random.Random(5))
    assert sorted(a.screened_mistakes) == world.mistake_points()


def test_screening_stops_once_enough_found(world):
    a = WhiteBoxScreening(screen_budget=10**6)
    a.screen_offline(Memorization(FixedDeterministic()), world, random.Random(5), needed=12)
    assert len(a.screened_mistakes) == 12
    assert a.screening_probes < 10**6


def test_screening_zero_budget_degenerates_to_test_set(world):
    a = WhiteBoxScreening(screen_budget=0)
    a.screen_offline(FixedDeterministic(), world, random.Random(0))
    assert a.screened_mistakes == []
    b = TestSetAttacker()
    ra, rb = random.Random(8), random.Random(8)
    d = FixedDeterministic()
    for _ in range(300):
        qa, qb = a.next_query(world, ra), b.next_query(world, rb)
        assert qa == qb
        feed(a, world, d.respond(qa, world, ra))
        feed(b, world, d.respond(qb, world, rb))


def test_screening_on_clean_and_broken_worlds():
    clean = build_world(10, 100, 0.0, seed=0)
    a = WhiteBoxScreening(screen_budget=10**4)
    a.screen_offline(FixedDeterministic(), clean, random.Random(0))
    assert a.screened_mistakes == []

    broken = build_world(10, 1000, 1.0, seed=0)
    a = WhiteBoxScreening(screen_budget=10)
    a.screen_offline(FixedDeterministic(), broken, random.Random(0))
    assert 1 <= len(a.screened_mistakes) <= 10


def test_white_box_replays_unique_points_then_falls_back(world):
    a = WhiteBoxScreening(screen_budget=10**6)
    a.screen_offline(FixedDeterministic(), world, random.Random(2), needed=5)
    rng = random.Random(0)
    d = Memorization(FixedDeterministic())
    seen = []
    for _ in range(5):
        q = a.next_query(world, rng)
        r = d.respond(q, world, rng)
        assert r.is_class and r.label != world.labels[q.point_id]
        feed(a, world, r)
        seen.append(q.point_id)
    assert len(set(seen)) == 5
    assert a.next_query(world, rng).point_id == seen[0]


def test_white_box_requires_screening(world):
    with pytest.raises(RuntimeError):
        WhiteBoxScreening(screen_budget=5).next_query(world, random.Random(0))


def test_spec_build():
    assert isinstance(AttackerSpec("rate_tracking", exploration=0.5).build(), RateTrackingAttacker)
    wb = AttackerSpec("white_box_screening", screen_budget=7).build()
    assert wb.screen_budget == 7
    with pytest.raises(ValueError):
        AttackerSpec("gradient").build()
