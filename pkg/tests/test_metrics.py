import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import levenshtein
from trlab.decode import DecodeStats
from trlab.metrics import SUMMARY_HEADER, aggregate, edit_distance, summary_row

seqs = st.lists(st.integers(1, 6), max_size=12)


@pytest.mark.parametrize("ref,hyp,expected", [
    ([1, 2, 3], [1, 2, 3], (0, 0, 0)),
    ([1, 2, 3], [1, 4, 3], (1, 0, 0)),
    ([1, 2, 3], [1, 3], (0, 0, 1)),
    ([1, 2], [1, 2, 5], (0, 1, 0)),
])
def test_edit_distance_examples(backend, ref, hyp, expected):
    assert tuple(edit_distance(ref, hyp)) == expected


@given(seqs, seqs)
@settings(max_examples=200, deadline=None)
def test_edit_distance_total_matches_plain_dp(ref, hyp):
    assert edit_distance(ref, hyp).errors == levenshtein(ref, hyp)


@given(seqs, seqs)
@settings(max_examples=200, deadline=None)
def test_swapping_roles_swaps_insertions_and_deletions(ref, hyp):
    a, b = edit_distance(ref, hyp), edit_distance(hyp, ref)
    assert a.errors == b.errors
    assert a.insertions - a.deletions == b.deletions - b.insertions


@given(st.lists(st.integers(1, 6), min_size=1, max_size=12), st.data())
@settings(max_examples=200, deadline=None)
def test_single_substitution(ref, data):
    i = data.draw(st.integers(0, len(ref) - 1))
    hyp = list(ref)
    hyp[i] = 99
    assert tuple(edit_distance(ref, hyp)) == (1, 0, 0)


def test_swap_example_insertion_vs_deletion():
    assert edit_distance([1, 2], [1]).deletions == 1
    assert edit_distance([1], [1, 2]).insertions == 1


def _stats(T, kept, blank, label, wall=0.1, audio=1.0):
    return DecodeStats(T, kept, blank, label, wall, audio)


def test_aggregate_single_utterance_equals_its_values():
    st_ = _stats(10, 4, 12, 6)
    s = aggregate([st_], [([1, 2, 3, 4], [1, 2, 4])])
    assert s.wer == 25.0 and s.deletions == 1
    assert s.nbp == st_.nbp and s.jcr == st_.jcr and s.rtf == pytest.approx(st_.rtf)


def test_aggregate_uses_corpus_sums():
    s = aggregate(
        [_stats(10, 5, 10, 5, 0.2, 1.0), _stats(30, 3, 30, 3, 0.4, 3.0)],
        [([1, 2], [1, 2]), ([1, 2, 3, 4, 5, 6], [1])],
    )
    assert s.wer == pytest.approx(100 * 5 / 8)
    assert s.nbp == pytest.approx(100 * 8 / 40)
    assert s.jcr == pytest.approx(100 * 8 / 40)
    assert s.rtf == pytest.approx(0.6 / 4.0)
    assert s.oracle_nbp == pytest.approx(100 * 8 / 40)


def test_aggregate_mode_none_corpus():
    s = aggregate([_stats(8, 8, 9, 9), _stats(5, 5, 6, 6)], [([1], [1]), ([2], [2])])
    assert s.nbp == 100.0 and s.jcr == 100.0


def test_aggregate_order_invariant():
    rng = random.Random(0)
    stats = [_stats(rng.randint(5, 20), rng.randint(0, 5), rng.randint(5, 20), rng.randint(0, 5)) for _ in range(6)]
    pairs = [([1, 2, 3], [1, rng.randint(1, 4)]) for _ in range(6)]
    idx = list(range(6))
    rng.shuffle(idx)
    a = aggregate(stats, pairs)
    b = aggregate([stats[i] for i in idx], [pairs[i] for i in idx])
    assert a.wer == b.wer and a.nbp == b.nbp and a.jcr == b.jcr
    assert a.rtf == pytest.approx(b.rtf, rel=1e-12)


def test_aggregate_rejects_mismatch():
    with pytest.raises(ValueError):
        aggregate([], [])
    with pytest.raises(ValueError):
        aggregate([_stats(1, 1, 1, 1)], [])


def test_summary_row_columns():
    s = aggregate([_stats(10, 4, 12, 6)], [([1, 2], [1, 2])])
    row = summary_row(s, "alsd", 2.0, None)
    assert len(row) == len(SUMMARY_HEADER)
    assert row[:4] == ("0.00", "alsd", "2", "-")
