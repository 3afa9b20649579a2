import json
import shutil
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfd.dataset import (
    GRIPPER_CALIBRATION,
    AnnotationTrack,
    NormalizationStats,
    TrialRecord,
    Video,
    align_to_frames,
    compute_ft_stats,
    dataset_table,
    discretize_gripper,
    extract_robot_actions,
    load_split_spec,
    load_trial,
    nearest_indices,
    normalize_ft,
    parse_split_spec,
    segments_to_track,
    split_by_participant,
    track_to_segments,
    write_trial,
)
from hfd.errors import (
    DegenerateChannel,
    EmptyOverlap,
    InvariantViolation,
    MissingStream,
    SchemaError,
    SegmentationAmbiguous,
    SplitSpecError,
    UnknownPlatform,
)
from hfd.labels import HumanAction, OutcomeLabel, Platform, RobotActionFull, Task
from hfd.synthetic import generate_record, random_script


def make_record(T=12, fps=10.0, ft_rate=100.0, joint_rate=50.0, platform="HSR", task="R2H",
                participant="p1", trial_id="t0", annotations=None, seed=0):
    rng = np.random.default_rng(seed)
    frame_t = np.arange(T) / fps
    ft_t = np.arange(0, frame_t[-1] + 1 / ft_rate, 1 / ft_rate)
    joint_t = np.arange(0, frame_t[-1] + 1 / joint_rate, 1 / joint_rate)
    nj = len(joint_t)
    return TrialRecord(
        trial_id=trial_id, robot_platform=platform, task=task, participant_id=participant, object_class="box",
        video=Video(frame_t, frames=rng.integers(0, 255, (T, 8, 8, 3), dtype=np.uint8)),
        ft_t=ft_t, ft=rng.normal(size=(len(ft_t), 6)),
        joint_t=joint_t, joint_names=("j1", "j2"),
        joint_pos=rng.normal(size=(nj, 2)), joint_vel=rng.normal(size=(nj, 2)),
        joint_effort=rng.normal(size=(nj, 2)),
        gripper_pos=np.full(nj, GRIPPER_CALIBRATION[Platform.parse(platform)][0]),
        annotations=annotations,
    )


# ---------------------------------------------------------------------------
# label tracks


def test_segments_round_trip():
    segs = [[0, 2, "idle"], [3, 5, "approach"], [6, 9, "interact"]]
    track = segments_to_track(segs, 10, HumanAction.parse)
    assert track.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
    assert track_to_segments(track, HumanAction) == [[0, 2, "idle"], [3, 5, "approach"], [6, 9, "transfer"]]


def test_segments_must_cover_all_frames():
    with pytest.raises(InvariantViolation):
        segments_to_track([[0, 3, "idle"]], 6, HumanAction.parse)
    with pytest.raises(InvariantViolation):
        segments_to_track([[0, 6, "idle"]], 6, HumanAction.parse)


def test_annotation_track_invariants():
    AnnotationTrack([0, 1, 2], [0, 1, 2], "success")
    with pytest.raises(InvariantViolation):
        AnnotationTrack([0, 1, 2], [0, 2, 1], "success")  # robot actions out of order
    with pytest.raises(InvariantViolation):
        AnnotationTrack([0, 1], [0, 1, 2], "success")
    ann = AnnotationTrack([0, 0, 0], [0, 0, 0], "no_grasp")
    with pytest.raises(InvariantViolation):
        ann.check_task(Task.H2R)


# ---------------------------------------------------------------------------
# loading


def test_load_trial_round_trip(tmp_path):
    record, _ = generate_record(random_script("R2H", "success", seed=4))
    path = write_trial(record, tmp_path)
    loaded = load_trial(path)
    assert loaded.n_frames == record.n_frames
    assert loaded.task is Task.R2H
    np.testing.assert_array_equal(loaded.ft_t, record.ft_t)
    np.testing.assert_array_equal(loaded.ft, record.ft)
    np.testing.assert_array_equal(loaded.joint_vel, record.joint_vel)
    np.testing.assert_array_equal(loaded.annotations.human_actions, record.annotations.human_actions)
    np.testing.assert_array_equal(loaded.video.load([0, 5]), record.video.load([0, 5]))


def test_load_trial_missing_ft(tmp_path):
    record, _ = generate_record(random_script("H2R", "drop", seed=5))
    path = write_trial(record, tmp_path)
    (path / "ft.csv").unlink()
    with pytest.raises(MissingStream):
        load_trial(path)


def test_load_trial_schema_and_monotonic_errors(tmp_path):
    record, _ = generate_record(random_script("H2R", "success", seed=6))
    path = write_trial(record, tmp_path)
    backup = (path / "ft.csv").read_text()
    (path / "ft.csv").write_text("t,fx,fy\n0,1,2\n")
    with pytest.raises(SchemaError):
        load_trial(path)
    lines = backup.splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    (path / "ft.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(InvariantViolation):
        load_trial(path)


def test_load_trial_without_labels(tmp_path):
    record, _ = generate_record(random_script("R2H", "drop", seed=8))
    path = write_trial(record, tmp_path)
    ann = json.loads((path / "annotations.json").read_text())
    for key in ("human_actions", "robot_actions", "outcome"):
        ann.pop(key)
    (path / "annotations.json").write_text(json.dumps(ann))
    assert load_trial(path).annotations is None


def test_ft_rows_must_have_six_components():
    rec = make_record()
    with pytest.raises(InvariantViolation):
        TrialRecord(**{**rec.__dict__, "ft": rec.ft[:, :5]})


# ---------------------------------------------------------------------------
# alignment


def test_alignment_identity_when_ft_at_frame_times():
    rec = make_record(T=8, fps=10.0, ft_rate=10.0)
    aligned = align_to_frames(rec)
    np.testing.assert_array_equal(aligned.ft, rec.ft[: len(aligned)])


def brute_nearest(sample_t, query):
    best = 0
    for j in range(len(sample_t)):
        if abs(sample_t[j] - query) < abs(sample_t[best] - query):
            best = j
    return best


def test_alignment_matches_exhaustive_scan():
    rec = make_record(T=30, fps=30.0, ft_rate=100.0)
    aligned = align_to_frames(rec)
    expected = [brute_nearest(rec.ft_t, t) for t in rec.video.timestamps]
    np.testing.assert_array_equal(aligned.ft, rec.ft[expected])


def test_nearest_tie_goes_to_earlier_sample():
    assert nearest_indices([0.0, 1.0], [0.5]).tolist() == [0]
    assert nearest_indices([0.0, 1.0, 2.0], [1.5, 2.5, -1.0]).tolist() == [1, 2, 0]


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(5, 500), fps=st.floats(5, 60), T=st.integers(1, 40))
def test_alignment_length_for_any_rate(rate, fps, T):
    rec = make_record(T=T, fps=fps, ft_rate=rate, joint_rate=rate)
    aligned = align_to_frames(rec)
    assert len(aligned) == T == len(aligned.ft) == len(aligned.gripper)
    idx = nearest_indices(rec.ft_t, rec.video.timestamps)
    expected = [brute_nearest(rec.ft_t, t) for t in rec.video.timestamps]
    np.testing.assert_array_equal(idx, expected)


def test_empty_overlap():
    rec = make_record(T=5)
    shifted = TrialRecord(**{**rec.__dict__, "ft_t": rec.ft_t + 100.0})
    with pytest.raises(EmptyOverlap):
        align_to_frames(shifted)


# ---------------------------------------------------------------------------
# gripper


@pytest.mark.parametrize("platform", list(Platform))
def test_gripper_extremes(platform):
    closed, opened = GRIPPER_CALIBRATION[platform]
    assert discretize_gripper(opened, platform) == -0.5
    assert discretize_gripper(closed, platform) == 0.5
    assert discretize_gripper((opened + closed) / 2, platform) == 0.0


def test_gripper_monotone_and_total():
    closed, opened = GRIPPER_CALIBRATION[Platform.HSR]
    pos = np.linspace(closed - 1, opened + 1, 401)
    out = discretize_gripper(pos, Platform.HSR)
    assert set(np.unique(out)) <= {-0.5, 0.0, 0.5}
    assert np.all(np.diff(out) <= 0)


def test_gripper_unknown_platform():
    with pytest.raises(UnknownPlatform):
        discretize_gripper(0.0, "spot")
    with pytest.raises(UnknownPlatform):
        discretize_gripper(0.0, "HSR", calibration={})


# ---------------------------------------------------------------------------
# robot actions


def bump_profile(lengths, amplitude=0.3):
    """idle, bump, rest, bump, rest; returns velocities and the constructed boundaries."""
    parts = []
    for i, n in enumerate(lengths):
        parts.append(np.full(n, amplitude if i in (1, 3) else 0.0))
    return np.concatenate(parts), np.cumsum(lengths)


def test_extract_robot_actions_constructed_boundaries():
    vel, b = bump_profile([10, 20, 15, 25, 12])
    track = extract_robot_actions(np.column_stack([vel, vel]))
    expected = np.repeat([0, 1, 2, 3, 4], [10, 20, 15, 25, 12])
    np.testing.assert_array_equal(track, expected)


def test_extract_robot_actions_ignores_flicker():
    vel, _ = bump_profile([10, 20, 15, 25, 12])
    vel[5:7] = 0.5  # two-frame spike during idle
    vel[35:38] = 0.0  # three-frame pause during the first bump
    track = extract_robot_actions(vel)
    np.testing.assert_array_equal(track, np.repeat([0, 1, 2, 3, 4], [10, 20, 15, 25, 12]))


def test_extract_robot_actions_no_motion():
    with pytest.raises(SegmentationAmbiguous):
        extract_robot_actions(np.zeros((50, 3)))
    single, _ = bump_profile([10, 20, 30, 0, 0])
    with pytest.raises(SegmentationAmbiguous):
        extract_robot_actions(single)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(6, 30), min_size=5, max_size=5), st.integers(0, 3))
def test_extract_robot_actions_canonical_order(lengths, extra_bumps):
    lengths[2] += 10
    vel, _ = bump_profile(lengths)
    # one-frame twitches inside the rest phase, away from its ends, are debounced
    mid = lengths[0] + lengths[1]
    for k in range(extra_bumps):
        s = mid + 5 + k * 3
        if s + 6 <= mid + lengths[2]:
            vel[s] = 0.5
    track = extract_robot_actions(vel)
    assert len(track) == sum(lengths)
    assert np.all(np.diff(track) >= 0)
    assert np.all(np.diff(track) <= 1)
    counts = np.bincount(track, minlength=5)
    assert (counts[1:4] > 0).all()


# ---------------------------------------------------------------------------
# splits


def test_split_partitions_and_disjoint():
    trials = [make_record(participant=f"p{i % 5}", trial_id=f"t{i}") for i in range(15)]
    spec = {"p0": "train", "p1": "train", "p2": "val", "p3": "test", "p4": "test"}
    train, val, test = split_by_participant(trials, spec)
    assert len(train) + len(val) + len(test) == 15
    sets = [{t.participant_id for t in part} for part in (train, val, test)]
    assert not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])


def test_split_single_participant():
    trials = [make_record(participant="solo", trial_id=f"t{i}") for i in range(3)]
    train, val, test = split_by_participant(trials, {"solo": "train"})
    assert len(train) == 3 and val == [] and test == []


def test_split_spec_conflicts(tmp_path):
    with pytest.raises(SplitSpecError):
        parse_split_spec({"train": ["p1"], "test": ["p1"]})
    with pytest.raises(SplitSpecError):
        parse_split_spec({"p1": "holdout"})
    path = tmp_path / "split.json"
    path.write_text('{"p1": "train", "p1": "test"}')
    with pytest.raises(SplitSpecError):
        load_split_spec(path)
    assert parse_split_spec({"train": ["a"], "val": ["b"], "test": []}) == {"a": "train", "b": "val"}


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.sampled_from(["train", "val", "test"]),
                       min_size=1, max_size=8))
def test_split_disjoint_property(spec):
    trials = [make_record(T=3, participant=p, trial_id=f"{p}{k}") for p in spec for k in range(2)]
    parts = split_by_participant(trials, spec)
    pids = [{t.participant_id for t in part} for part in parts]
    assert sum(len(p) for p in parts) == len(trials)
    assert not (pids[0] & pids[1] or pids[0] & pids[2] or pids[1] & pids[2])


# ---------------------------------------------------------------------------
# normalisation


def test_two_point_pool():
    pool = np.zeros((2, 6))
    pool[:, 0] = [0.0, 2.0]
    pool[:, 1:] = [[1, 2, 3, 4, 5], [3, 4, 5, 6, 7]]
    stats = compute_ft_stats([pool])
    assert stats.mean[0] == 1.0 and stats.std[0] == 1.0
    np.testing.assert_array_equal(normalize_ft(pool, stats)[:, 0], [-1.0, 1.0])


def test_constant_channel_warns():
    pool = np.random.default_rng(0).normal(size=(20, 6))
    pool[:, 3] = 5.0
    with pytest.warns(DegenerateChannel):
        stats = compute_ft_stats([pool])
    assert stats.std[3] == 1.0
    np.testing.assert_array_equal(normalize_ft(pool, stats)[:, 3], 0.0)


def test_normalised_pool_is_standard(rng):
    pools = [rng.normal(loc=rng.normal(size=6) * 10, scale=rng.uniform(0.1, 5, size=6), size=(n, 6))
             for n in (30, 50, 7)]
    stats = compute_ft_stats(pools)
    z = normalize_ft(np.vstack(pools), stats)
    assert np.abs(z.mean(axis=0)).max() < 1e-9
    assert np.abs(z.std(axis=0) - 1).max() < 1e-9
    restored = NormalizationStats.from_json(json.loads(json.dumps(stats.to_json())))
    np.testing.assert_array_equal(restored.mean, stats.mean)


def test_dataset_table_counts(cell_trials):
    aligned = [a for a, _ in cell_trials.values()]
    table = dataset_table(aligned)
    assert sum(table.values()) == 8
    assert all(n == 1 for n in table.values())
