"""Handover trial data model: on-disk ingestion, frame alignment, label tracks and splits.

A trial directory looks like::

    <trial_id>/
        video.mp4                  (or frames/000000.png ... + frame_timestamps.csv)
        frame_timestamps.csv       column ``t`` in seconds, one row per frame
        ft.csv                     t,fx,fy,fz,tx,ty,tz
        joints.csv                 t,<joint>_pos,<joint>_vel,<joint>_effort,...,gripper_pos
        annotations.json           metadata plus optional label segments

Segments in ``annotations.json`` are ``[start_frame, end_frame, label]`` with an
inclusive end frame.
"""

from __future__ import annotations

import json
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateChannel,
    EmptyOverlap,
    InvariantViolation,
    MissingStream,
    SchemaError,
    SegmentationAmbiguous,
    SplitSpecError,
    UnknownPlatform,
)
from .labels import (
    HumanAction,
    OutcomeLabel,
    Platform,
    RobotActionFull,
    Task,
    outcome_allowed,
    robot_to_model,
)

log = logging.getLogger(__name__)

FT_COLUMNS = ("fx", "fy", "fz", "tx", "ty", "tz")
GRIPPER_COLUMN = "gripper_pos"
SPLITS = ("train", "val", "test")

# (closed position, open position) of the gripper joint, in joint units.
GRIPPER_CALIBRATION: dict[Platform, tuple[float, float]] = {
    Platform.HSR: (-0.83, 1.24),
    Platform.KINOVA_GEN3: (0.8, 0.0),
}

MOTION_THRESHOLD = 0.01  # rad/s
MOTION_HYSTERESIS = 5  # frames


# ---------------------------------------------------------------------------
# label tracks


def segments_to_track(segments, n_frames: int, parse) -> np.ndarray:
    """Expand ``[[start, end, label], ...]`` (inclusive ends) into a per-frame track."""
    track = np.full(n_frames, -1, dtype=np.int64)
    for seg in segments:
        if len(seg) != 3:
            raise SchemaError(f"segment must be [start, end, label], got {seg!r}")
        start, end, label = int(seg[0]), int(seg[1]), parse(seg[2])
        if start < 0 or end >= n_frames or end < start:
            raise InvariantViolation(f"segment {seg!r} outside [0, {n_frames - 1}]")
        track[start : end + 1] = int(label)
    if (track < 0).any():
        missing = int(np.flatnonzero(track < 0)[0])
        raise InvariantViolation(f"frame {missing} is not covered by any segment")
    return track


def track_to_segments(track, vocab) -> list[list]:
    track = np.asarray(track)
    out = []
    start = 0
    for i in range(1, len(track) + 1):
        if i == len(track) or track[i] != track[start]:
            out.append([start, i - 1, vocab(int(track[start])).label])
            start = i
    return out


@dataclass(frozen=True)
class AnnotationTrack:
    human_actions: np.ndarray
    robot_actions: np.ndarray
    outcome: OutcomeLabel

    def __post_init__(self):
        human = np.asarray(self.human_actions, dtype=np.int64)
        robot = np.asarray(self.robot_actions, dtype=np.int64)
        object.__setattr__(self, "human_actions", human)
        object.__setattr__(self, "robot_actions", robot)
        object.__setattr__(self, "outcome", OutcomeLabel.parse(self.outcome))
        if human.ndim != 1 or human.shape != robot.shape:
            raise InvariantViolation(
                f"human/robot tracks must be 1-D of equal length, got {human.shape} and {robot.shape}"
            )
        if human.size and (human.min() < 0 or human.max() >= len(HumanAction)):
            raise InvariantViolation("human action index out of range")
        if robot.size and (robot.min() < 0 or robot.max() >= len(RobotActionFull)):
            raise InvariantViolation("robot action index out of range")
        # canonical order idle -> approach -> transfer -> retract -> post_idle
        if np.any(np.diff(robot) < 0):
            raise InvariantViolation("robot actions are not in canonical order")

    def __len__(self) -> int:
        return len(self.human_actions)

    @property
    def robot_model(self) -> np.ndarray:
        return robot_to_model(self.robot_actions)

    def check_task(self, task: Task) -> None:
        if not outcome_allowed(self.outcome, task):
            raise InvariantViolation(f"outcome {self.outcome.label} is not valid for task {task.value}")

    def to_json(self) -> dict:
        return {
            "human_actions": track_to_segments(self.human_actions, HumanAction),
            "robot_actions": track_to_segments(self.robot_actions, RobotActionFull),
            "outcome": self.outcome.label,
        }


# ---------------------------------------------------------------------------
# video


class Video:
    """Lazily loaded RGB frames with per-frame timestamps.

    Frames come from an in-memory array, a directory of PNG files or a video
    file; they are only decoded when :meth:`load` is called.
    """

    def __init__(self, timestamps, frames=None, frame_dir=None, video_path=None):
        self.timestamps = np.asarray(timestamps, dtype=np.float64)
        self._frames = None if frames is None else np.asarray(frames, dtype=np.uint8)
        self.frame_dir = None if frame_dir is None else Path(frame_dir)
        self.video_path = None if video_path is None else Path(video_path)
        if self._frames is not None and len(self._frames) != len(self.timestamps):
            raise InvariantViolation(
                f"{len(self._frames)} frames but {len(self.timestamps)} timestamps"
            )

    def __len__(self) -> int:
        return len(self.timestamps)

    def load(self, indices=None) -> np.ndarray:
        """Return frames as a ``(N, H, W, 3)`` uint8 RGB array."""
        idx = np.arange(len(self)) if indices is None else np.asarray(indices, dtype=np.int64)
        if self._frames is not None:
            return self._frames[idx]
        import cv2

        if self.frame_dir is not None:
            out = []
            for i in idx:
                img = cv2.imread(str(self.frame_dir / f"{int(i):06d}.png"), cv2.IMREAD_COLOR)
                if img is None:
                    raise MissingStream(f"cannot read frame {int(i)} in {self.frame_dir}")
                out.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
            return np.stack(out) if out else np.zeros((0, 1, 1, 3), np.uint8)
        cap = cv2.VideoCapture(str(self.video_path))
        wanted = set(int(i) for i in idx)
        frames = {}
        i = 0
        while wanted - frames.keys():
            ok, img = cap.read()
            if not ok:
                break
            if i in wanted:
                frames[i] = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
            i += 1
        cap.release()
        if wanted - frames.keys():
            raise MissingStream(f"{self.video_path} has fewer frames than timestamps")
        return np.stack([frames[int(i)] for i in idx])


# ---------------------------------------------------------------------------
# trial record


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    robot_platform: Platform
    task: Task
    participant_id: str
    object_class: str
    video: Video
    ft_t: np.ndarray
    ft: np.ndarray
    joint_t: np.ndarray
    joint_names: tuple[str, ...]
    joint_pos: np.ndarray
    joint_vel: np.ndarray
    joint_effort: np.ndarray
    gripper_pos: np.ndarray
    annotations: AnnotationTrack | None = None

    def __post_init__(self):
        object.__setattr__(self, "robot_platform", Platform.parse(self.robot_platform))
        object.__setattr__(self, "task", Task.parse(self.task))
        for name in ("ft_t", "ft", "joint_t", "joint_pos", "joint_vel", "joint_effort", "gripper_pos"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        self.validate()

    @property
    def n_frames(self) -> int:
        return len(self.video)

    def validate(self) -> None:
        for name, ts in (("video", self.video.timestamps), ("ft", self.ft_t), ("joints", self.joint_t)):
            if ts.ndim != 1 or len(ts) == 0:
                raise InvariantViolation(f"{self.trial_id}: {name} timestamps are empty")
            if np.any(np.diff(ts) <= 0):
                raise InvariantViolation(f"{self.trial_id}: {name} timestamps are not strictly increasing")
        if self.ft.ndim != 2 or self.ft.shape[1] != 6 or len(self.ft) != len(self.ft_t):
            raise InvariantViolation(f"{self.trial_id}: force-torque samples must be N x 6, got {self.ft.shape}")
        n_j = len(self.joint_t)
        for name in ("joint_pos", "joint_vel", "joint_effort"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape != (n_j, len(self.joint_names)):
                raise InvariantViolation(f"{self.trial_id}: {name} has shape {arr.shape}")
        if self.gripper_pos.shape != (n_j,):
            raise InvariantViolation(f"{self.trial_id}: gripper_pos has shape {self.gripper_pos.shape}")
        if self.annotations is not None:
            if len(self.annotations) != self.n_frames:
                raise InvariantViolation(
                    f"{self.trial_id}: {len(self.annotations)} annotated frames, video has {self.n_frames}"
                )
            self.annotations.check_task(self.task)

    def metadata(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "robot": self.robot_platform.value,
            "task": self.task.value,
            "participant_id": self.participant_id,
            "object_class": self.object_class,
        }


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path) as fh:
            header = [h.strip() for h in fh.readline().strip().split(",")]
            data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if data.size == 0:
        data = data.reshape(0, len(header))
    if data.shape[1] != len(header):
        raise SchemaError(f"{path}: {data.shape[1]} columns but header has {len(header)}")
    return header, data


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingStream(f"missing {path.name} in {path.parent}")
    return path


def load_trial(path) -> TrialRecord:
    """Load and validate one trial directory."""
    root = Path(path)
    if not root.is_dir():
        raise MissingStream(f"{root} is not a directory")

    ann_path = _require(root / "annotations.json")
    try:
        ann = json.loads(ann_path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{ann_path}: {exc}") from exc
    for key in ("task", "robot", "participant_id"):
        if key not in ann:
            raise SchemaError(f"{ann_path}: missing field {key!r}")

    # video
    ts_path = root / "frame_timestamps.csv"
    frame_dir = root / "frames"
    video_path = root / "video.mp4"
    if frame_dir.is_dir():
        header, ts = _read_csv(_require(ts_path))
        video = Video(ts[:, header.index("t") if "t" in header else 0], frame_dir=frame_dir)
    elif video_path.exists():
        if ts_path.exists():
            header, ts = _read_csv(ts_path)
            times = ts[:, header.index("t") if "t" in header else 0]
        else:
            import cv2

            cap = cv2.VideoCapture(str(video_path))
            n = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
            fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
            cap.release()
            times = np.arange(n) / fps
        video = Video(times, video_path=video_path)
    else:
        raise MissingStream(f"no video.mp4 or frames/ in {root}")

    header, ft = _read_csv(_require(root / "ft.csv"))
    missing = [c for c in ("t",) + FT_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{root / 'ft.csv'}: missing columns {missing}")
    ft_t = ft[:, header.index("t")]
    ft_vals = ft[:, [header.index(c) for c in FT_COLUMNS]]

    header, joints = _read_csv(_require(root / "joints.csv"))
    if "t" not in header or GRIPPER_COLUMN not in header:
        raise SchemaError(f"{root / 'joints.csv'}: needs 't' and '{GRIPPER_COLUMN}' columns")
    names = [h[: -len("_pos")] for h in header if h.endswith("_pos") and h != GRIPPER_COLUMN]
    for name in names:
        for suffix in ("_vel", "_effort"):
            if name + suffix not in header:
                raise SchemaError(f"{root / 'joints.csv'}: missing column {name + suffix}")
    col = header.index

    def block(suffix):
        return joints[:, [col(n + suffix) for n in names]].reshape(len(joints), len(names))

    annotations = None
    if "human_actions" in ann and "robot_actions" in ann and "outcome" in ann:
        n = len(video)
        annotations = AnnotationTrack(
            segments_to_track(ann["human_actions"], n, HumanAction.parse),
            segments_to_track(ann["robot_actions"], n, RobotActionFull.parse),
            OutcomeLabel.parse(ann["outcome"]),
        )

    return TrialRecord(
        trial_id=str(ann.get("trial_id", root.name)),
        robot_platform=ann["robot"],
        task=ann["task"],
        participant_id=str(ann["participant_id"]),
        object_class=str(ann.get("object_class", "")),
        video=video,
        ft_t=ft_t,
        ft=ft_vals,
        joint_t=joints[:, col("t")],
        joint_names=tuple(names),
        joint_pos=block("_pos"),
        joint_vel=block("_vel"),
        joint_effort=block("_effort"),
        gripper_pos=joints[:, col(GRIPPER_COLUMN)],
        annotations=annotations,
    )


def iter_trial_dirs(root) -> list[Path]:
    root = Path(root)
    return sorted(p.parent for p in root.glob("*/annotations.json"))


def load_dataset(root) -> list[TrialRecord]:
    """Load every trial directory directly under ``root``."""
    return [load_trial(p) for p in iter_trial_dirs(root)]


def write_trial(record: TrialRecord, root, frames=None) -> Path:
    """Write a record in the on-disk layout. ``frames`` overrides ``record.video``."""
    out = Path(root) / record.trial_id
    (out / "frames").mkdir(parents=True, exist_ok=True)
    import cv2

    imgs = record.video.load() if frames is None else frames
    for i, img in enumerate(imgs):
        cv2.imwrite(str(out / "frames" / f"{i:06d}.png"), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
    fmt = "%.17g"
    np.savetxt(out / "frame_timestamps.csv", record.video.timestamps[:, None], delimiter=",",
               header="t", comments="", fmt=fmt)
    np.savetxt(out / "ft.csv", np.column_stack([record.ft_t, record.ft]), delimiter=",",
               header=",".join(("t",) + FT_COLUMNS), comments="", fmt=fmt)
    cols = ["t"]
    blocks = [record.joint_t[:, None]]
    for j, name in enumerate(record.joint_names):
        cols += [f"{name}_pos", f"{name}_vel", f"{name}_effort"]
        blocks += [record.joint_pos[:, j : j + 1], record.joint_vel[:, j : j + 1], record.joint_effort[:, j : j + 1]]
    cols.append(GRIPPER_COLUMN)
    blocks.append(record.gripper_pos[:, None])
    np.savetxt(out / "joints.csv", np.hstack(blocks), delimiter=",", header=",".join(cols),
               comments="", fmt=fmt)
    ann = record.metadata()
    if record.annotations is not None:
        ann.update(record.annotations.to_json())
    (out / "annotations.json").write_text(json.dumps(ann, indent=1))
    return out


# ---------------------------------------------------------------------------
# alignment


@dataclass(frozen=True)
class AlignedTrial:
    """Per-frame view of a trial. All per-frame arrays have length ``T``."""

    video: Video
    ft: np.ndarray
    gripper: np.ndarray
    joint_vel: np.ndarray
    labels: AnnotationTrack | None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        T = len(self.video)
        if self.ft.shape != (T, 6) or self.gripper.shape != (T,) or len(self.joint_vel) != T:
            raise InvariantViolation("aligned arrays do not share the frame count")
        if not np.isin(self.gripper, (-0.5, 0.0, 0.5)).all():
            raise InvariantViolation("gripper values must be in {-0.5, 0.0, 0.5}")
        if self.labels is not None and len(self.labels) != T:
            raise InvariantViolation("label track length differs from frame count")

    def __len__(self) -> int:
        return len(self.video)

    @property
    def frames(self) -> np.ndarray:
        return self.video.load()

    @property
    def trial_id(self) -> str:
        return self.metadata.get("trial_id", "")

    @property
    def task(self) -> Task:
        return Task.parse(self.metadata["task"])

    @property
    def platform(self) -> Platform:
        return Platform.parse(self.metadata["robot"])

    @property
    def participant_id(self) -> str:
        return self.metadata.get("participant_id", "")


def nearest_indices(sample_t, query_t) -> np.ndarray:
    """Index of the sample nearest in time to each query; ties go to the earlier sample."""
    sample_t = np.asarray(sample_t, dtype=np.float64)
    query_t = np.asarray(query_t, dtype=np.float64)
    right = np.searchsorted(sample_t, query_t, side="left").clip(0, len(sample_t) - 1)
    left = (right - 1).clip(0, None)
    take_left = np.abs(query_t - sample_t[left]) <= np.abs(sample_t[right] - query_t)
    return np.where(take_left, left, right)


def _check_overlap(name, sample_t, frame_t):
    covered = (frame_t >= sample_t[0]) & (frame_t <= sample_t[-1])
    if not covered.any():
        raise EmptyOverlap(f"{name} stream [{sample_t[0]:.3f}, {sample_t[-1]:.3f}] s covers no frame")


def discretize_gripper(gripper_position, platform, calibration=None):
    """Map a raw gripper joint position to the 3-level state.

    The position is first converted to an opening ratio ``r`` in [0, 1]
    (1 = fully open) with the platform calibration; then ``r <= 0.25`` is
    closed (0.5), ``r >= 0.75`` is open (-0.5) and anything in between is
    partially closed (0.0). Works elementwise on arrays.
    """
    calibration = GRIPPER_CALIBRATION if calibration is None else calibration
    try:
        key = Platform.parse(platform)
    except SchemaError:
        raise UnknownPlatform(f"no gripper calibration for {platform!r}") from None
    if key not in calibration:
        raise UnknownPlatform(f"no gripper calibration for {platform!r}")
    closed, opened = calibration[key]
    ratio = np.clip((np.asarray(gripper_position, dtype=np.float64) - closed) / (opened - closed), 0.0, 1.0)
    out = np.where(ratio <= 0.25, 0.5, np.where(ratio >= 0.75, -0.5, 0.0))
    return float(out) if out.ndim == 0 else out


def align_to_frames(trial: TrialRecord, calibration=None) -> AlignedTrial:
    frame_t = trial.video.timestamps
    _check_overlap("force-torque", trial.ft_t, frame_t)
    _check_overlap("joint-state", trial.joint_t, frame_t)
    ft_idx = nearest_indices(trial.ft_t, frame_t)
    j_idx = nearest_indices(trial.joint_t, frame_t)
    return AlignedTrial(
        video=trial.video,
        ft=trial.ft[ft_idx],
        gripper=discretize_gripper(trial.gripper_pos[j_idx], trial.robot_platform, calibration),
        joint_vel=trial.joint_vel[j_idx],
        labels=trial.annotations,
        metadata=trial.metadata(),
    )


# ---------------------------------------------------------------------------
# robot actions from joint motion


def _debounce(moving: np.ndarray, hysteresis: int) -> np.ndarray:
    state = False
    out = np.zeros_like(moving)
    i = 0
    n = len(moving)
    while i < n:
        j = i
        while j < n and moving[j] == moving[i]:
            j += 1
        if moving[i] != state and j - i >= hysteresis:
            state = bool(moving[i])
        out[i:j] = state
        i = j
    return out


def extract_robot_actions(joint_velocities, v_min: float = MOTION_THRESHOLD,
                          hysteresis: int = MOTION_HYSTERESIS) -> np.ndarray:
    """Per-frame robot actions from arm joint velocities (``T`` or ``T x J``).

    The arm counts as moving when its mean absolute joint velocity exceeds
    ``v_min``; state changes shorter than ``hysteresis`` frames are ignored.
    The first motion episode is the approach, the last one the retract and
    everything in between is the transfer.
    """
    vel = np.asarray(joint_velocities, dtype=np.float64)
    speed = np.abs(vel).mean(axis=1) if vel.ndim == 2 else np.abs(vel)
    moving = _debounce(speed > v_min, hysteresis)
    edges = np.diff(np.concatenate([[0], moving.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    if len(starts) < 2:
        raise SegmentationAmbiguous(f"found {len(starts)} motion episode(s), need at least 2")
    track = np.full(len(speed), int(RobotActionFull.POST_IDLE), dtype=np.int64)
    track[: starts[0]] = RobotActionFull.IDLE
    track[starts[0] : ends[0]] = RobotActionFull.APPROACH
    track[ends[0] : starts[-1]] = RobotActionFull.TRANSFER
    track[starts[-1] : ends[-1]] = RobotActionFull.RETRACT
    return track


# ---------------------------------------------------------------------------
# splits


def _no_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise SplitSpecError(f"participant {key!r} listed twice")
        seen[key] = value
    return seen


def parse_split_spec(spec) -> dict[str, str]:
    """Normalise a split spec to ``{participant_id: 'train'|'val'|'test'}``.

    Accepts either that mapping directly or ``{"train": [...], "val": [...], "test": [...]}``.
    """
    if set(spec) <= set(SPLITS) and all(isinstance(v, (list, tuple)) for v in spec.values()):
        out: dict[str, str] = {}
        for split, members in spec.items():
            for pid in members:
                pid = str(pid)
                if pid in out and out[pid] != split:
                    raise SplitSpecError(f"participant {pid!r} assigned to {out[pid]} and {split}")
                out[pid] = split
        return out
    out = {}
    for pid, split in spec.items():
        if split not in SPLITS:
            raise SplitSpecError(f"participant {pid!r} assigned to unknown split {split!r}")
        out[str(pid)] = split
    return out


def load_split_spec(path) -> dict[str, str]:
    with open(path) as fh:
        return parse_split_spec(json.load(fh, object_pairs_hook=_no_duplicate_keys))


def split_by_participant(trials: Sequence, split_spec: Mapping) -> tuple[list, list, list]:
    assignment = parse_split_spec(split_spec)
    parts = {s: [] for s in SPLITS}
    for trial in trials:
        pid = str(trial.participant_id)
        if not pid:
            raise SplitSpecError(f"trial {getattr(trial, 'trial_id', '?')} has no participant id")
        if pid not in assignment:
            raise SplitSpecError(f"participant {pid!r} is not assigned to any split")
        parts[assignment[pid]].append(trial)
    return parts["train"], parts["val"], parts["test"]


# ---------------------------------------------------------------------------
# force-torque normalisation


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d) -> "NormalizationStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def compute_ft_stats(train_trials: Iterable) -> NormalizationStats:
    """Per-channel mean and (population) std of the pooled training F-T samples.

    Items may be :class:`AlignedTrial` objects or raw ``N x 6`` arrays.
    """
    pool = np.vstack([np.asarray(getattr(t, "ft", t), dtype=np.float64).reshape(-1, 6) for t in train_trials])
    mean = pool.mean(axis=0)
    std = pool.std(axis=0)
    if np.any(std == 0):
        warnings.warn(f"zero-variance F-T channel(s) {np.flatnonzero(std == 0).tolist()}; using std=1",
                      DegenerateChannel, stacklevel=2)
        std = np.where(std == 0, 1.0, std)
    return NormalizationStats(mean, std)


def normalize_ft(ft, stats: NormalizationStats) -> np.ndarray:
    return (np.asarray(ft, dtype=np.float64) - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# dataset summaries


def dataset_table(trials: Iterable) -> dict[tuple[str, str, str], int]:
    """Trial counts per (platform, task, outcome), the layout of the dataset statistics table."""
    counts: Counter = Counter()
    for t in trials:
        labels = t.annotations if isinstance(t, TrialRecord) else t.labels
        platform = getattr(t, "robot_platform", None) or t.platform
        outcome = labels.outcome.label if labels is not None else "unlabeled"
        counts[(platform.value, t.task.value, outcome)] += 1
    return dict(counts)
