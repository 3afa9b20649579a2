import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfd.errors import EmptyList, EmptyTrack, LengthMismatch
from hfd.metrics import (
    MetricsReport,
    Segment,
    aggregate_runs,
    dataset_f1,
    dataset_frame_accuracy,
    frame_accuracy,
    frames_to_segments,
    outcome_accuracy,
    segment_counts,
    segmental_f1,
    segments_to_frames,
)

from oracles import brute_counts, brute_f1

tracks = st.integers(1, 50).flatmap(
    lambda T: st.tuples(st.lists(st.integers(0, 3), min_size=T, max_size=T),
                        st.lists(st.integers(0, 3), min_size=T, max_size=T)))


def test_frames_to_segments_examples():
    assert frames_to_segments([5, 5, 7]) == [Segment(5, 0, 1), Segment(7, 2, 2)]
    assert frames_to_segments([2] * 5) == [Segment(2, 0, 4)]
    with pytest.raises(EmptyTrack):
        frames_to_segments([])


@given(st.lists(st.integers(0, 6), min_size=1, max_size=80))
def test_segments_round_trip(track):
    segs = frames_to_segments(track)
    assert segments_to_frames(segs).tolist() == track
    assert all(a.label != b.label for a, b in zip(segs, segs[1:]))


def test_identical_tracks_score_100():
    track = [0, 0, 1, 1, 1, 2, 3, 3]
    for k in (10, 25, 50):
        assert segmental_f1(track, track, k) == 100.0


def test_split_gt_segment_in_halves():
    gt = [1] * 10
    pred = [1] * 5 + [2] * 5
    # pred (1,0..4) overlaps GT with IoU 0.5 -> TP; pred (2,5..9) has no same-label GT -> FP
    assert segment_counts(pred, gt, 50) == (1, 1, 0)
    assert segmental_f1(pred, gt, 50) == pytest.approx(200 / 3)
    # as segment lists, two same-label halves stay separate: one TP, one FP, no FN
    halves = [Segment(1, 0, 4), Segment(1, 5, 9)]
    assert segment_counts(halves, [Segment(1, 0, 9)], 50) == (1, 1, 0)
    assert round(segmental_f1(halves, [Segment(1, 0, 9)], 50), 1) == 66.7


def test_empty_edge_cases():
    assert segmental_f1([], [], 50) == 100.0
    assert segment_counts([0, 0], [0, 0], 50, ignore=(0,)) == (0, 0, 0)
    assert segmental_f1([0, 0], [0, 0], 50, ignore=(0,)) == 100.0
    assert segmental_f1([1, 1], [0, 0], 50) == 0.0
    with pytest.raises(LengthMismatch):
        segmental_f1([0, 1], [0, 1, 1], 10)


@settings(max_examples=300, deadline=None)
@given(tracks, st.sampled_from([10, 25, 50]))
def test_f1_matches_brute_force(pair, k):
    pred, gt = pair
    assert segment_counts(pred, gt, k) == brute_counts(pred, gt, k)
    assert segmental_f1(pred, gt, k) == brute_f1(pred, gt, k)


@settings(max_examples=100, deadline=None)
@given(tracks)
def test_f1_non_increasing_in_threshold(pair):
    pred, gt = pair
    values = [segmental_f1(pred, gt, k) for k in (0, 10, 25, 50, 75, 100)]
    assert all(a >= b for a, b in zip(values, values[1:]))


@settings(max_examples=100, deadline=None)
@given(tracks, st.permutations([0, 1, 2, 3]))
def test_f1_relabeling_symmetry(pair, perm):
    pred, gt = pair
    relabel = lambda t: [perm[x] for x in t]
    for k in (10, 50):
        assert segmental_f1(relabel(pred), relabel(gt), k) == segmental_f1(pred, gt, k)


def test_dataset_f1_pools_counts():
    preds = [[0, 0, 1], [2, 2, 2]]
    gts = [[0, 0, 1], [2, 3, 3]]
    tp = fp = fn = 0
    for p, g in zip(preds, gts):
        a, b, c = brute_counts(p, g, 50)
        tp, fp, fn = tp + a, fp + b, fn + c
    assert dataset_f1(preds, gts, (50,))[50] == pytest.approx(200 * tp / (2 * tp + fp + fn))


def test_frame_accuracy_examples():
    assert frame_accuracy([1, 2, 3], [1, 2, 3]) == 100.0
    assert frame_accuracy([1, 1], [2, 2]) == 0.0
    assert frame_accuracy([1, 2, 3, 4], [1, 2, 0, 0]) == 50.0
    assert outcome_accuracy([0, 1], [0, 2]) == 50.0
    assert dataset_frame_accuracy([[1, 1], [2]], [[1, 0], [2]]) == pytest.approx(200 / 3)
    with pytest.raises(LengthMismatch):
        frame_accuracy([1], [1, 2])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.randoms())
def test_frame_accuracy_permutation_invariant(pairs, random):
    shuffled = pairs[:]
    random.shuffle(shuffled)
    a = frame_accuracy([p for p, _ in pairs], [g for _, g in pairs])
    b = frame_accuracy([p for p, _ in shuffled], [g for _, g in shuffled])
    assert a == pytest.approx(b, abs=1e-12)


def test_aggregate_runs():
    one = aggregate_runs([MetricsReport(outcome_accuracy=61.0)])
    assert one.outcome_accuracy == 61.0 and one.std is None
    two = aggregate_runs([MetricsReport(outcome_accuracy=60.0), MetricsReport(outcome_accuracy=70.0)])
    assert two.outcome_accuracy == 65.0
    assert two.std["outcome_accuracy"] == pytest.approx(math.sqrt(50))
    assert two.format("outcome_accuracy") == "65.0 ± 7.1"
    with pytest.raises(EmptyList):
        aggregate_runs([])


def test_aggregate_matches_direct_formula(rng):
    values = rng.uniform(0, 100, size=(5, 5))
    reports = [MetricsReport(v[0], v[1], {10: v[2], 25: v[3], 50: v[4]}) for v in values]
    agg = aggregate_runs(reports)
    n = len(values)
    for col, key in enumerate(["outcome_accuracy", "frame_accuracy", "f1@10", "f1@25", "f1@50"]):
        mean = sum(values[:, col]) / n
        std = math.sqrt(sum((x - mean) ** 2 for x in values[:, col]) / (n - 1))
        assert abs(agg.values()[key] - mean) < 1e-10
        assert abs(agg.std[key] - std) < 1e-10


def test_report_validation_and_json():
    with pytest.raises(ValueError):
        MetricsReport(outcome_accuracy=101.0)
    r = MetricsReport(50.0, 40.0, {10: 1.0}, {"outcome_accuracy": 2.0}, n_runs=3)
    assert MetricsReport.from_json(r.to_json()) == r
    assert MetricsReport(50.0, std={"outcome_accuracy": 1.0}, n_runs=1).std is None
