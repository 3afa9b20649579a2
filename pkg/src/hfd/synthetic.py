"""Procedurally generated handover trials covering every (task, outcome) failure mode.

Each scenario produces raw streams at their native rates (video 30 Hz, F-T
100 Hz, joint states 50 Hz), label tracks consistent with the outcome, and
"pseudo-backbone" features: per-frame Gaussian clusters conditioned on the
human and robot action, embedded into 2048 dimensions with a fixed random
projection. The features make segmentation learnable without a pretrained
video network.

Scripted sensor signatures (pull axis is ``fx``, object weight acts on ``-fz``):

* human transfer: a pull of ``transfer_amplitude`` newtons
* not released: a sustained pull of ``pull_magnitude`` newtons
* drop: a short spike after which the robot carries no load
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import (
    GRIPPER_CALIBRATION,
    AlignedTrial,
    AnnotationTrack,
    TrialRecord,
    Video,
    align_to_frames,
    write_trial,
)
from .errors import ScriptError
from .features import BACKBONE_DIM, FeatureSequence, save_features
from .labels import HumanAction as H
from .labels import OutcomeLabel as O
from .labels import Platform, RobotActionFull as R, Task, outcome_allowed, outcomes_for

FPS = 30.0
FT_RATE = 100.0
JOINT_RATE = 50.0
N_ARM_JOINTS = 5
LATENT_DIM = 16
PROJECTION_SEED = 20240513
PSEUDO_BACKBONE = "pseudo-v1"
ARM_SPEED = 0.3  # rad/s peak


@dataclass
class ScenarioScript:
    task: Task
    outcome: O
    durations: tuple[int, int, int, int, int] = (10, 30, 25, 30, 10)
    platform: Platform = Platform.HSR
    transfer_amplitude: float = 15.0
    pull_magnitude: float = 25.0
    object_weight: float = 5.0
    noise: float = 0.05
    feature_noise: float = 0.3
    frame_size: int = 32
    seed: int = 0
    trial_id: str = "synth_000"
    participant_id: str = "p00"
    object_class: str = "box"

    def __post_init__(self):
        self.task = Task.parse(self.task)
        self.outcome = O.parse(self.outcome)
        self.platform = Platform.parse(self.platform)
        self.durations = tuple(int(d) for d in self.durations)

    def validate(self) -> None:
        if not outcome_allowed(self.outcome, self.task):
            raise ScriptError(f"outcome {self.outcome.label} cannot occur in {self.task.value}")
        if len(self.durations) != 5 or min(self.durations) < 1:
            raise ScriptError(f"robot phase durations must be 5 positive counts, got {self.durations}")
        if min(self.durations[1:4]) < 8:
            raise ScriptError("approach, transfer and retract need at least 8 frames each")
        if min(self.transfer_amplitude, self.pull_magnitude, self.object_weight, self.noise) < 0:
            raise ScriptError("amplitudes and noise must be non-negative")


def random_script(task, outcome, seed: int, **kwargs) -> ScenarioScript:
    rng = np.random.default_rng([seed, 1])
    durations = (int(rng.integers(5, 16)), int(rng.integers(25, 41)), int(rng.integers(20, 36)),
                 int(rng.integers(25, 41)), int(rng.integers(5, 16)))
    return ScenarioScript(task, outcome, durations, seed=seed, **kwargs)


# ---------------------------------------------------------------------------
# timelines


def robot_track(durations) -> np.ndarray:
    return np.repeat(np.arange(5), durations).astype(np.int64)


def _human_timeline(script: ScenarioScript, rng) -> tuple[np.ndarray, int | None]:
    """Per-frame human actions and the frame the gripper switches (None = never)."""
    d = script.durations
    b = np.cumsum(d)  # ends of idle, approach, transfer, retract, post_idle
    T = int(b[-1])
    h = np.full(T, int(H.IDLE), dtype=np.int64)
    o, task = script.outcome, script.task
    if o == O.NO_APPROACH:
        return h, None

    start = int(b[0] + rng.uniform(0.2, 0.5) * d[1])
    contact = int(b[1] + rng.integers(0, 3))  # human reaches the robot
    switch = int(min(contact + 3 + rng.integers(0, max(1, d[2] // 3)), b[2] - 3))
    leave = int(b[2] + rng.uniform(0.4, 0.7) * d[3])
    h[start:contact] = H.APPROACH

    if o == O.NO_GRASP:
        h[contact:leave] = H.RETRACT
        h[leave:] = H.POST_IDLE
        return h, None
    if task == Task.H2R and o == O.DROP:
        drop = contact + 2
        h[contact:drop] = H.TRANSFER
        h[drop:leave] = H.DROPPED
        h[leave:] = H.POST_IDLE
        return h, None
    h[contact:switch] = H.TRANSFER
    if o == O.NO_RELEASE:
        h[switch:b[3]] = H.NOT_RELEASED
        h[b[3]:] = H.POST_IDLE
        return h, switch
    if o == O.DROP:
        fall = switch + max(2, (leave - switch) // 3)
        h[switch:fall] = H.RETRACT
        h[fall:leave] = H.DROPPED
        h[leave:] = H.POST_IDLE
        return h, switch
    h[switch:leave] = H.RETRACT
    h[leave:] = H.POST_IDLE
    return h, switch


def _robot_holds(script: ScenarioScript, T: int, switch: int | None) -> np.ndarray:
    holds = np.zeros(T, dtype=bool)
    if script.task == Task.R2H:
        holds[: T if switch is None else switch] = True
    elif switch is not None:
        holds[switch:] = True
    return holds


def _frame_ft(script: ScenarioScript, human: np.ndarray, holds: np.ndarray) -> np.ndarray:
    T = len(human)
    ft = np.zeros((T, 6))
    ft[:, 2] = np.where(holds, -script.object_weight, 0.0)
    ft[human == H.TRANSFER, 0] = script.transfer_amplitude
    ft[human == H.NOT_RELEASED, 0] = script.pull_magnitude
    if script.outcome == O.DROP:
        # short jerk when the object leaves the hand
        first = np.flatnonzero(human == H.DROPPED)
        if len(first):
            ft[first[0] : first[0] + 2, 2] -= 2 * script.object_weight
    # torques for a 0.1 m lever arm along z
    ft[:, 3] = -0.1 * ft[:, 1]
    ft[:, 4] = 0.1 * ft[:, 0]
    return ft


def _speed_profile(durations) -> np.ndarray:
    T = sum(durations)
    speed = np.zeros(T)
    b = np.concatenate([[0], np.cumsum(durations)])
    for phase in (1, 3):
        n = durations[phase]
        x = (np.arange(n) + 0.5) / n
        speed[b[phase] : b[phase + 1]] = ARM_SPEED * np.sin(np.pi * x) ** 2
    return speed


# ---------------------------------------------------------------------------
# rendering


def _render(script: ScenarioScript, robot: np.ndarray, human: np.ndarray, holds: np.ndarray,
            rng) -> np.ndarray:
    S = script.frame_size
    T = len(robot)
    b = np.concatenate([[0], np.cumsum(script.durations)])
    reach_r = np.zeros(T)
    for t in range(T):
        r = robot[t]
        if r == R.APPROACH:
            reach_r[t] = (t - b[1] + 1) / script.durations[1]
        elif r == R.TRANSFER:
            reach_r[t] = 1.0
        elif r == R.RETRACT:
            reach_r[t] = 1.0 - (t - b[3] + 1) / script.durations[3]
    reach_h = np.zeros(T)
    level = 0.0
    for t in range(T):
        a = human[t]
        if a == H.APPROACH:
            level = min(1.0, level + 0.08)
        elif a in (H.TRANSFER, H.NOT_RELEASED):
            level = 1.0
        elif a in (H.RETRACT, H.DROPPED, H.POST_IDLE):
            level = max(0.0, level - 0.08)
        reach_h[t] = level
    frames = np.full((T, S, S, 3), 80.0)
    mid = S // 2
    obj_y = float(mid)
    dropped = False
    for t in range(T):
        rx = int(round(3 + reach_r[t] * (mid - 6)))
        hx = int(round(S - 4 - reach_h[t] * (mid - 6)))
        frames[t, mid - 3 : mid + 3, max(0, rx - 3) : rx + 3] = (40, 60, 200)
        frames[t, mid - 3 : mid + 3, hx - 3 : min(S, hx + 3)] = (200, 70, 60)
        if human[t] == H.DROPPED:
            dropped = True
        if dropped:
            obj_y = min(S - 3.0, obj_y + 2.0)
            ox = hx if script.task == Task.R2H else (rx + hx) // 2
        else:
            ox = rx + 3 if holds[t] else hx - 3
        oy = int(obj_y)
        frames[t, max(0, oy - 2) : oy + 2, max(0, ox - 2) : ox + 2] = (60, 200, 60)
    frames += rng.normal(0.0, 50.0 * script.noise, frames.shape)
    return np.clip(np.rint(frames), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# pseudo-backbone


def _projection():
    rng = np.random.default_rng(PROJECTION_SEED)
    human_means = rng.normal(0.0, 1.0, (len(H), LATENT_DIM))
    robot_means = rng.normal(0.0, 0.5, (len(R), LATENT_DIM))
    weights = rng.normal(0.0, 1.0 / np.sqrt(LATENT_DIM), (LATENT_DIM, BACKBONE_DIM))
    return human_means, robot_means, weights


def pseudo_backbone(human, robot, noise: float, rng) -> np.ndarray:
    """Class-conditioned Gaussian latent per frame, projected to the backbone width."""
    human_means, robot_means, weights = _projection()
    z = human_means[np.asarray(human)] + robot_means[np.asarray(robot)]
    z = z + rng.normal(0.0, noise, z.shape)
    return (z @ weights).astype(np.float32)


# ---------------------------------------------------------------------------
# generation


def generate_record(script: ScenarioScript) -> tuple[TrialRecord, np.ndarray]:
    """Raw trial record (with in-memory video) and the per-frame pseudo-backbone features."""
    script.validate()
    rng = np.random.default_rng([script.seed, 0])
    robot = robot_track(script.durations)
    T = len(robot)
    human, switch = _human_timeline(script, rng)
    holds = _robot_holds(script, T, switch)
    closed = holds  # the gripper is closed exactly while the robot holds the object

    t0 = float(rng.uniform(0.0, 0.01))
    frame_t = t0 + np.arange(T) / FPS

    def sample_times(rate):
        start = t0 - 0.1 + rng.uniform(0.0, 1.0 / rate)
        return start + np.arange(int((T / FPS + 0.2) * rate)) / rate

    def to_frame(times):
        return np.clip(np.rint((times - t0) * FPS), 0, T - 1).astype(np.int64)

    ft_t = sample_times(FT_RATE)
    frame_ft = _frame_ft(script, human, holds)
    sigma = script.noise * max(script.transfer_amplitude, 1e-9)
    ft = frame_ft[to_frame(ft_t)] + rng.normal(0.0, 1.0, (len(ft_t), 6)) * np.r_[[sigma] * 3, [0.1 * sigma] * 3]

    joint_t = sample_times(JOINT_RATE)
    jf = to_frame(joint_t)
    speed = _speed_profile(script.durations)[jf]
    direction = np.where(robot[jf] == R.RETRACT, -1.0, 1.0)
    signs = np.array([1.0, -1.0, 1.0, -1.0, 1.0])
    vel = (speed * direction)[:, None] * signs + rng.normal(0.0, 1e-3, (len(joint_t), N_ARM_JOINTS))
    pos = np.cumsum(vel, axis=0) / JOINT_RATE
    effort = 2.0 + 0.1 * pos + rng.normal(0.0, 0.01, pos.shape)
    closed_pos, open_pos = GRIPPER_CALIBRATION[script.platform]
    gripper = np.where(closed[jf], closed_pos, open_pos) + rng.normal(0.0, 0.005, len(joint_t))

    frames = _render(script, robot, human, holds, rng)
    record = TrialRecord(
        trial_id=script.trial_id,
        robot_platform=script.platform,
        task=script.task,
        participant_id=script.participant_id,
        object_class=script.object_class,
        video=Video(frame_t, frames=frames),
        ft_t=ft_t,
        ft=ft,
        joint_t=joint_t,
        joint_names=tuple(f"arm_{j}" for j in range(N_ARM_JOINTS)),
        joint_pos=pos,
        joint_vel=vel,
        joint_effort=effort,
        gripper_pos=gripper,
        annotations=AnnotationTrack(human, robot, script.outcome),
    )
    backbone = pseudo_backbone(human, robot, script.feature_noise, np.random.default_rng([script.seed, 2]))
    return record, backbone


def features_from(aligned: AlignedTrial, backbone) -> FeatureSequence:
    labels = aligned.labels
    return FeatureSequence(backbone, aligned.ft, aligned.gripper, labels.human_actions, labels.robot_actions,
                           labels.outcome, dict(aligned.metadata, backbone=PSEUDO_BACKBONE))


def generate_trial(script: ScenarioScript) -> tuple[AlignedTrial, FeatureSequence]:
    record, backbone = generate_record(script)
    aligned = align_to_frames(record)
    return aligned, features_from(aligned, backbone)


# ---------------------------------------------------------------------------
# suites


@dataclass
class SuiteInfo:
    root: Path
    trial_ids: list[str] = field(default_factory=list)
    split: dict[str, str] = field(default_factory=dict)

    @property
    def feature_dir(self) -> Path:
        return self.root / "features" / PSEUDO_BACKBONE

    @property
    def split_path(self) -> Path:
        return self.root / "split.json"


def suite_cells() -> list[tuple[Task, O]]:
    return [(task, o) for task in (Task.R2H, Task.H2R) for o in outcomes_for(task)]


def participant_split(participants: list[str], seed: int) -> dict[str, str]:
    order = np.random.default_rng([seed, 3]).permutation(len(participants))
    n_hold = max(1, round(0.2 * len(participants)))
    out = {}
    for rank, i in enumerate(order):
        out[participants[i]] = "test" if rank < n_hold else "val" if rank < 2 * n_hold else "train"
    return out


def suite_scripts(n: int, seed: int = 0, n_participants: int = 6, **kwargs) -> list[ScenarioScript]:
    if n < 1:
        raise ScriptError("need at least one trial per cell")
    scripts = []
    k = 0
    for i in range(n):
        for task, outcome in suite_cells():
            script = random_script(task, outcome, seed=seed * 100_003 + k, **kwargs)
            scripts.append(replace(
                script,
                trial_id=f"synth_{k:04d}",
                participant_id=f"p{k % n_participants:02d}",
                platform=Platform.HSR if (k // n_participants) % 2 == 0 else Platform.KINOVA_GEN3,
                object_class=("box", "bottle", "book", "sponge")[k % 4],
            ))
            k += 1
    return scripts


def generate_suite(n: int, out_dir, seed: int = 0, n_participants: int = 6, write_features: bool = True,
                   **kwargs) -> SuiteInfo:
    """Write ``n`` trials for each of the 8 (task, outcome) cells in the on-disk trial layout.

    Also writes ``split.json`` (participant-disjoint) and, unless disabled, the
    pseudo-backbone feature cache under ``features/``.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    info = SuiteInfo(root)
    for script in suite_scripts(n, seed, n_participants, **kwargs):
        record, backbone = generate_record(script)
        write_trial(record, root)
        if write_features:
            aligned = align_to_frames(record)
            save_features(features_from(aligned, backbone), root / "features", script.trial_id, PSEUDO_BACKBONE)
        info.trial_ids.append(script.trial_id)
    participants = sorted({f"p{k % n_participants:02d}" for k in range(len(info.trial_ids))})
    info.split = participant_split(participants, seed)
    info.split_path.write_text(json.dumps(info.split, indent=1))
    return info
