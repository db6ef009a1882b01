import pytest
from hypothesis import given, strategies as st

from corrsim.core import (
    ABSTAIN,
    REJECTED,
    Origin,
    Query,
    Response,
    SeedSpec,
    TranscriptRecord,
    compute_metrics,
    validate_label,
)


def rec(i, kind, truth=0, target=None, pid=None, repeat=False):
    if kind == "error":
        resp = Response.of_class(truth + 1)
    elif kind == "correct":
        resp = Response.of_class(truth)
    elif kind == "abstain":
        resp = ABSTAIN
    else:
        resp = REJECTED
    hit = target is not None and resp.is_class and resp.label == target and target != truth
    return TranscriptRecord(i, Query(i if pid is None else pid), resp, kind == "error", hit, repeat)


def test_counts_and_rates():
    kinds = ["correct", "correct", "abstain", "error", "correct", "error", "abstain", "correct", "error", "correct"]
    m = compute_metrics([rec(i, k) for i, k in enumerate(kinds)])
    assert (m.m_test, m.errors, m.abstentions, m.rejections) == (10, 3, 2, 0)
    assert m.error_rate == 0.3
    assert m.abstention_rate == 0.2
    assert m.first_mistake_index == 3
    assert m.unique_points_queried == 10


def test_all_correct_has_no_first_mistake():
    m = compute_metrics([rec(i, "correct") for i in range(5)])
    assert m.error_rate == 0
    assert m.first_mistake_index is None


def test_headline_count():
    records = [rec(i, "correct", pid=i) for i in range(49)] + [rec(i, "error", pid=49) for i in range(49, 10000)]
    m = compute_metrics(records)
    assert m.error_rate == pytest.approx(0.9951, abs=1e-15)
    assert m.first_mistake_index == 49
    assert m.unique_points_queried == 50


def test_empty_transcript_rejected():
    with pytest.raises(ValueError):
        compute_metrics([])


def test_targeted_hits_counted():
    records = [rec(0, "error", truth=0, target=1), rec(1, "error", truth=2, target=1), rec(2, "correct", truth=1, target=1)]
    m = compute_metrics(records)
    assert m.targeted_hits == 1
    assert m.targeted_rate == pytest.approx(1 / 3)


@given(st.lists(st.sampled_from(["correct", "error", "abstain", "rejected"]), min_size=1, max_size=200))
def test_counting_closure(kinds):
    records = [rec(i, k, pid=i % 7) for i, k in enumerate(kinds)]
    m = compute_metrics(records)
    assert m.errors + m.abstentions + m.rejections + m.correct == m.m_test
    assert m.correct == kinds.count("correct")
    for rate in (m.error_rate, m.abstention_rate, m.rejection_rate, m.targeted_rate):
        assert 0.0 <= rate <= 1.0
    assert m.error_rate + m.abstention_rate <= 1.0 + 1e-15
    assert compute_metrics(records) == m


def test_abstain_and_reject_are_never_errors():
    for r in (rec(0, "abstain"), rec(0, "rejected")):
        assert not r.is_error


def test_label_validation():
    assert validate_label(3, 10) == 3
    with pytest.raises(ValueError):
        validate_label(10, 10)
    with pytest.raises(TypeError):
        validate_label(True, 10)


def test_seed_streams_are_reproducible_and_distinct():
    s = SeedSpec(42)
    a = [s.stream("attacker", 0).random() for _ in range(3)]
    b = [s.stream("attacker", 0).random() for _ in range(3)]
    assert a == b
    draws = {
        (role, ep): s.stream(role, ep).random()
        for role in ("world", "defender", "attacker", "engine")
        for ep in (None, 0, 1)
    }
    assert len(set(draws.values())) == len(draws)
    assert SeedSpec(43).stream("attacker", 0).random() != a[0]


def test_seed_validation():
    with pytest.raises(ValueError):
        SeedSpec(-1)
    with pytest.raises(ValueError):
        SeedSpec(2**64)
    with pytest.raises(ValueError):
        SeedSpec(1).stream("nobody")


def test_response_json_forms():
    assert Response.of_class(4).to_json() == 4
    assert ABSTAIN.to_json() == "abstain"
    assert REJECTED.to_json() == "rejected"
    assert Query(3).origin is Origin.FRESH_PROBE
