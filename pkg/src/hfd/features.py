"""Model inputs: uniformly sampled clips, optical flow, per-frame backbone features
and the learned F-T/gripper encoder.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dataset import AlignedTrial, NormalizationStats, normalize_ft
from .errors import BackboneContractError, EmptyTrial, ShapeError
from .labels import HumanAction, OutcomeLabel, Platform, RobotActionFull, Task, robot_to_model

CLIP_LEN = 64
STREAM_DIM = 1024
BACKBONE_DIM = 2 * STREAM_DIM
FLOW_CLIP = 20.0


def uniform_indices(T: int, n: int) -> np.ndarray:
    """``round(i * (T - 1) / (n - 1))`` for ``i = 0..n-1`` (round half to even)."""
    if T <= 0:
        raise EmptyTrial("cannot sample from an empty sequence")
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    # one correctly rounded division per index keeps exact halves exact
    return np.rint(np.arange(n) * (T - 1) / (n - 1)).astype(np.int64)


@dataclass
class ClipInput:
    rgb_clip: np.ndarray  # (n, H, W, 3) uint8
    flow_clip: np.ndarray  # (n, H, W, 2) float32 in [-1, 1]
    ft_clip: np.ndarray  # (n, 6)
    gripper_clip: np.ndarray  # (n, 1)
    label: OutcomeLabel | None = None
    indices: np.ndarray | None = None
    task: Task | None = None

    def __post_init__(self):
        n = len(self.rgb_clip)
        if not (len(self.flow_clip) == len(self.ft_clip) == len(self.gripper_clip) == n):
            raise ShapeError("clip streams have different temporal lengths")


def sample_uniform_clip(trial: AlignedTrial, n: int = CLIP_LEN, stats: NormalizationStats | None = None,
                        flow=None, flow_fn=None) -> ClipInput:
    """Sample ``n`` equally spaced frames (with F-T and gripper at the same indices).

    ``flow`` may be a precomputed ``(T, H, W, 2)`` flow array; otherwise flow is
    computed only for the sampled frames against their predecessors.
    """
    T = len(trial)
    if T == 0:
        raise EmptyTrial(f"trial {trial.trial_id!r} has no frames")
    idx = uniform_indices(T, n)
    needed = np.unique(np.concatenate([idx, (idx - 1).clip(0)]))
    frames = dict(zip(needed.tolist(), trial.video.load(needed)))
    rgb = np.stack([frames[i] for i in idx.tolist()])
    if flow is None:
        fn = flow_fn or pairwise_flow
        cache: dict[int, np.ndarray] = {}
        out = []
        for i in idx.tolist():
            if i not in cache:
                if i == 0:
                    cache[i] = np.zeros(rgb.shape[1:3] + (2,), np.float32)
                else:
                    cache[i] = fn(frames[i - 1], frames[i])
            out.append(cache[i])
        flow_clip = np.stack(out)
    else:
        flow_clip = np.asarray(flow, dtype=np.float32)[idx]
    ft = trial.ft if stats is None else normalize_ft(trial.ft, stats)
    labels = trial.labels
    return ClipInput(rgb, flow_clip, ft[idx], trial.gripper[idx, None],
                     labels.outcome if labels is not None else None, idx,
                     Task.parse(trial.metadata["task"]) if "task" in trial.metadata else None)


# ---------------------------------------------------------------------------
# optical flow


def _gray(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim == 3:
        frame = frame @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    return frame / 255.0


def raw_flow(prev, nxt, method: str = "tvl1") -> np.ndarray:
    """Dense (u, v) flow in pixels such that ``nxt(x + u, y + v) ~ prev(x, y)``."""
    a, b = _gray(prev), _gray(nxt)
    if method == "tvl1":
        from skimage.registration import optical_flow_tvl1

        v, u = optical_flow_tvl1(a, b)
    elif method == "farneback":
        import cv2

        uv = cv2.calcOpticalFlowFarneback((a * 255).astype(np.uint8), (b * 255).astype(np.uint8),
                                          None, 0.5, 3, 15, 3, 5, 1.2, 0)
        u, v = uv[..., 0], uv[..., 1]
    else:
        raise ValueError(f"unknown flow method {method!r}")
    return np.stack([u, v], axis=-1).astype(np.float32)


def pairwise_flow(prev, nxt, method: str = "tvl1") -> np.ndarray:
    """Flow clipped to +-20 px and rescaled to [-1, 1]."""
    return np.clip(raw_flow(prev, nxt, method), -FLOW_CLIP, FLOW_CLIP) / FLOW_CLIP


def compute_optical_flow(frames, method: str = "tvl1") -> np.ndarray:
    """``(T, H, W, 2)`` flow for every frame against its predecessor; frame 0 is zero."""
    frames = np.asarray(frames)
    out = np.zeros(frames.shape[:3] + (2,), dtype=np.float32)
    for t in range(1, len(frames)):
        out[t] = pairwise_flow(frames[t - 1], frames[t], method)
    return out


def preprocess_frames(frames, short_side: int = 256, crop: int = 224) -> np.ndarray:
    """Resize so the shorter side is ``short_side`` and take a centred ``crop`` square."""
    import cv2

    out = []
    for f in frames:
        h, w = f.shape[:2]
        s = short_side / min(h, w)
        f = cv2.resize(f, (max(crop, round(w * s)), max(crop, round(h * s))), interpolation=cv2.INTER_LINEAR)
        h, w = f.shape[:2]
        y, x = (h - crop) // 2, (w - crop) // 2
        out.append(f[y : y + crop, x : x + crop])
    return np.stack(out)


# ---------------------------------------------------------------------------
# backbone


class VideoEncoder(nn.Module):
    """Small 3D-conv video encoder emitting one pooled feature vector per clip.

    Stands in for a pretrained spatiotemporal network; pretrained weights can
    be loaded into it or it can be swapped for any module with the same
    ``(B, C, n, H, W) -> (B, out_dim)`` contract.
    """

    def __init__(self, in_channels: int, out_dim: int = STREAM_DIM, width: int = 16):
        super().__init__()
        self.out_dim = out_dim
        self.features = nn.Sequential(
            nn.Conv3d(in_channels, width, kernel_size=3, stride=(1, 2, 2), padding=1),
            nn.ReLU(),
            nn.Conv3d(width, 2 * width, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv3d(2 * width, 4 * width, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.proj = nn.Linear(4 * width, out_dim)

    def forward(self, x):
        return self.proj(self.pool(self.features(x)).flatten(1))


def rgb_to_tensor(clip) -> torch.Tensor:
    """(B, n, H, W, 3) uint8 -> (B, 3, n, H, W) float scaled to [-1, 1]."""
    x = torch.as_tensor(np.asarray(clip), dtype=torch.float32)
    return (x / 127.5 - 1.0).permute(0, 4, 1, 2, 3).contiguous()


def flow_to_tensor(clip) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(clip), dtype=torch.float32)
    return x.permute(0, 4, 1, 2, 3).contiguous()


class TwoStreamBackbone:
    """Frozen RGB and flow encoders used for per-frame feature extraction."""

    def __init__(self, rgb: nn.Module | None = None, flow: nn.Module | None = None, seed: int = 0,
                 version: str = "random-v1"):
        gen = torch.random.fork_rng()
        with gen:
            torch.manual_seed(seed)
            self.rgb = rgb if rgb is not None else VideoEncoder(3)
            self.flow = flow if flow is not None else VideoEncoder(2)
        self.rgb.eval()
        self.flow.eval()
        self.version = version

    @torch.no_grad()
    def encode(self, rgb_clips, flow_clips, batch_size: int = 8) -> np.ndarray:
        out = []
        for s in range(0, len(rgb_clips), batch_size):
            r = self.rgb(rgb_to_tensor(rgb_clips[s : s + batch_size]))
            f = self.flow(flow_to_tensor(flow_clips[s : s + batch_size]))
            if r.shape[-1] != STREAM_DIM or f.shape[-1] != STREAM_DIM:
                raise BackboneContractError(
                    f"stream encoders must emit {STREAM_DIM} features, got {r.shape[-1]} and {f.shape[-1]}"
                )
            out.append(torch.cat([r, f], dim=1).numpy())
        return np.concatenate(out)


def past_window(T: int, t: int, n: int = CLIP_LEN) -> np.ndarray:
    """Frame indices ``t-n+1 .. t``, clamped at 0 (left padding repeats frame 0)."""
    return np.arange(t - n + 1, t + 1).clip(0, T - 1)


# ---------------------------------------------------------------------------
# feature sequences


@dataclass
class FeatureSequence:
    backbone: np.ndarray  # (T, 2048)
    ft: np.ndarray  # (T, 6) normalised
    gripper: np.ndarray  # (T, 1)
    human_actions: np.ndarray | None = None
    robot_actions: np.ndarray | None = None  # annotation-level (5 classes)
    outcome: OutcomeLabel | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.backbone = np.asarray(self.backbone, dtype=np.float32)
        self.ft = np.asarray(self.ft, dtype=np.float32)
        self.gripper = np.asarray(self.gripper, dtype=np.float32).reshape(-1, 1)
        T = len(self.backbone)
        if self.backbone.ndim != 2 or self.backbone.shape[1] != BACKBONE_DIM:
            raise ShapeError(f"backbone features must be T x {BACKBONE_DIM}, got {self.backbone.shape}")
        if self.ft.shape != (T, 6) or self.gripper.shape != (T, 1):
            raise ShapeError("feature streams are not aligned to the same frames")
        for name in ("human_actions", "robot_actions"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=np.int64)
                if value.shape != (T,):
                    raise ShapeError(f"{name} has shape {value.shape}, expected ({T},)")
                setattr(self, name, value)
        if self.outcome is not None:
            self.outcome = OutcomeLabel.parse(self.outcome)

    def __len__(self) -> int:
        return len(self.backbone)

    @property
    def trial_id(self) -> str:
        return str(self.metadata.get("trial_id", ""))

    @property
    def participant_id(self) -> str:
        return str(self.metadata.get("participant_id", ""))

    @property
    def task(self) -> Task | None:
        return Task.parse(self.metadata["task"]) if "task" in self.metadata else None

    @property
    def platform(self) -> Platform | None:
        return Platform.parse(self.metadata["robot"]) if "robot" in self.metadata else None

    @property
    def robot_model(self) -> np.ndarray | None:
        return None if self.robot_actions is None else robot_to_model(self.robot_actions)

    @property
    def has_labels(self) -> bool:
        return self.human_actions is not None and self.outcome is not None

    def take(self, idx) -> "FeatureSequence":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return FeatureSequence(self.backbone[idx], self.ft[idx], self.gripper[idx], pick(self.human_actions),
                               pick(self.robot_actions), self.outcome, dict(self.metadata))

    def labels_json(self) -> dict:
        out = dict(self.metadata)
        if self.human_actions is not None:
            out["human_actions"] = [HumanAction(int(h)).label for h in self.human_actions]
        if self.robot_actions is not None:
            out["robot_actions"] = [RobotActionFull(int(r)).label for r in self.robot_actions]
        if self.outcome is not None:
            out["outcome"] = self.outcome.label
        return out


def extract_frame_features(trial: AlignedTrial, backbone: TwoStreamBackbone, stats: NormalizationStats | None = None,
                           flow=None, flow_method: str = "tvl1", window: int = CLIP_LEN,
                           batch_size: int = 8) -> FeatureSequence:
    """Per-frame backbone features from the causal ``window``-frame clip ending at each frame."""
    frames = trial.frames
    T = len(frames)
    if T == 0:
        raise EmptyTrial(f"trial {trial.trial_id!r} has no frames")
    flow = compute_optical_flow(frames, flow_method) if flow is None else np.asarray(flow, np.float32)
    feats = []
    for s in range(0, T, batch_size):
        ts = range(s, min(T, s + batch_size))
        windows = [past_window(T, t, window) for t in ts]
        feats.append(backbone.encode(np.stack([frames[w] for w in windows]),
                                     np.stack([flow[w] for w in windows]), batch_size))
    backbone_feats = np.concatenate(feats)
    if not np.isfinite(backbone_feats).all():
        raise BackboneContractError("backbone produced non-finite features")
    ft = trial.ft if stats is None else normalize_ft(trial.ft, stats)
    labels = trial.labels
    return FeatureSequence(
        backbone_feats, ft, trial.gripper,
        None if labels is None else labels.human_actions,
        None if labels is None else labels.robot_actions,
        None if labels is None else labels.outcome,
        dict(trial.metadata, backbone=backbone.version),
    )


# ---------------------------------------------------------------------------
# F-T / gripper encoder


class FtGripperEncoder(nn.Module):
    """Two length-preserving 1D conv layers (kernel 5) mapping raw sensor channels to ``out_channels``.

    Works on ``(B, C, T)`` tensors.
    """

    def __init__(self, in_channels: int = 7, out_channels: int = 64, kernel_size: int = 5, layers: int = 2):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        convs = []
        c = in_channels
        for _ in range(layers):
            conv = nn.Conv1d(c, out_channels, kernel_size, padding=kernel_size // 2)
            nn.init.zeros_(conv.bias)
            convs += [conv, nn.ReLU()]
            c = out_channels
        self.net = nn.Sequential(*convs)

    def forward(self, x):
        if x.dim() != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"expected (B, {self.in_channels}, T) input, got {tuple(x.shape)}")
        return self.net(x)


def encode_ft_gripper(encoder: FtGripperEncoder, ft, gripper) -> torch.Tensor:
    """Encode ``T x 6`` F-T and ``T x 1`` gripper arrays into ``T x d_e`` channels."""
    ft = torch.as_tensor(np.asarray(ft))
    gripper = torch.as_tensor(np.asarray(gripper)).reshape(len(ft), -1)
    x = torch.cat([ft, gripper.to(ft.dtype)], dim=1).to(next(encoder.parameters()).dtype)
    return encoder(x.T.unsqueeze(0))[0].T


# ---------------------------------------------------------------------------
# cache


def _atomic_write(path: Path, write) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cache_path(cache_dir, trial_id: str, backbone_version: str) -> Path:
    return Path(cache_dir) / backbone_version / f"{trial_id}.npz"


def save_features(seq: FeatureSequence, cache_dir, trial_id: str | None = None,
                  backbone_version: str | None = None) -> Path:
    trial_id = trial_id or seq.metadata["trial_id"]
    version = backbone_version or seq.metadata.get("backbone", "unknown")
    path = cache_path(cache_dir, trial_id, version)

    def write_npz(tmp):
        with open(tmp, "wb") as fh:
            np.savez(fh, backbone=seq.backbone, ft=seq.ft, gripper=seq.gripper)

    _atomic_write(path, write_npz)
    sidecar = path.with_suffix(".json")
    _atomic_write(sidecar, lambda tmp: Path(tmp).write_text(json.dumps(seq.labels_json())))
    return path


def load_features(path) -> FeatureSequence:
    path = Path(path)
    with np.load(path) as data:
        arrays = {k: data[k] for k in ("backbone", "ft", "gripper")}
    meta = json.loads(path.with_suffix(".json").read_text())
    human = meta.pop("human_actions", None)
    robot = meta.pop("robot_actions", None)
    outcome = meta.pop("outcome", None)
    return FeatureSequence(
        **arrays,
        human_actions=None if human is None else [HumanAction.parse(h) for h in human],
        robot_actions=None if robot is None else [RobotActionFull.parse(r) for r in robot],
        outcome=outcome,
        metadata=meta,
    )


def load_feature_dir(cache_dir) -> list[FeatureSequence]:
    return [load_features(p) for p in sorted(Path(cache_dir).glob("*.npz"))]
