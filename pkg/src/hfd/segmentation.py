"""Multi-task, multi-stage temporal convolutional networks for handover segmentation.

Variant A resamples every robot action (approach / transfer / retract) to a
fixed number of frames before segmenting; variant B keeps the original
length and adds a robot-action head. Both jointly predict per-frame human
actions and the trial outcome.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DivergenceError, MissingSegment, MissingTarget, ShapeError
from .features import BACKBONE_DIM, FeatureSequence, FtGripperEncoder, uniform_indices
from .labels import N_HUMAN, N_OUTCOME, N_ROBOT, OutcomeLabel, robot_to_model
from .metrics import dataset_frame_accuracy

log = logging.getLogger(__name__)

STREAMS = ("rgb", "flow", "ft", "gripper")
HEADS = ("cls", "seg_h", "seg_r")


@dataclass
class MstcnConfig:
    variant: str = "B"
    modalities: tuple[str, ...] = STREAMS
    heads: tuple[str, ...] = ("cls", "seg_h", "seg_r")
    stages: int = 2
    layers_per_stage: int = 10
    channels: int = 64
    encoder_channels: int = 64
    backbone_dim: int = BACKBONE_DIM
    dropout: float = 0.5
    lam: float = 0.15
    tau: float = 4.0
    segment_length: int = 100
    detach_smooth: bool = False
    lr: float = 5e-4
    epochs: int = 50
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        self.variant = self.variant.upper()
        self.modalities = tuple(m for m in STREAMS if m in set(self.modalities))
        self.heads = tuple(h for h in HEADS if h in set(self.heads))
        if self.variant not in ("A", "B"):
            raise ConfigError(f"unknown MS-TCN variant {self.variant!r}")
        if not self.modalities:
            raise ConfigError("at least one input modality is required")
        if not self.heads:
            raise ConfigError("at least one loss head is required")
        if "seg_r" in self.heads and self.variant != "B":
            raise ConfigError("the robot-action head exists only in variant B")
        if self.stages < 1:
            raise ConfigError("need at least one stage")

    @property
    def video_dims(self) -> list[slice]:
        half = self.backbone_dim // 2
        out = []
        if "rgb" in self.modalities:
            out.append(slice(0, half))
        if "flow" in self.modalities:
            out.append(slice(half, self.backbone_dim))
        return out

    @property
    def sensor_channels(self) -> int:
        return 6 * ("ft" in self.modalities) + ("gripper" in self.modalities)

    @property
    def input_dim(self) -> int:
        video = sum(s.stop - s.start for s in self.video_dims)
        return video + (self.encoder_channels if self.sensor_channels else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MstcnConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# network


class DilatedResidualLayer(nn.Module):
    def __init__(self, dilation: int, channels: int, dropout: float):
        super().__init__()
        self.conv_dilated = nn.Conv1d(channels, channels, 3, padding=dilation, dilation=dilation)
        self.conv_1x1 = nn.Conv1d(channels, channels, 1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        out = F.relu(self.conv_dilated(x))
        return x + self.dropout(self.conv_1x1(out))


class Stage(nn.Module):
    def __init__(self, in_dim: int, channels: int, layers: int, heads: dict[str, int], dropout: float):
        super().__init__()
        self.conv_in = nn.Conv1d(in_dim, channels, 1)
        self.layers = nn.ModuleList(DilatedResidualLayer(2**i, channels, dropout) for i in range(layers))
        self.heads = nn.ModuleDict({name: nn.Conv1d(channels, n, 1) for name, n in heads.items()})

    def forward(self, x):
        h = self.conv_in(x)
        for layer in self.layers:
            h = layer(h)
        return {name: head(h) for name, head in self.heads.items()}


class MSTCN(nn.Module):
    """Returns per-head logits shaped ``(S, B, C, T)``.

    Stage 1 reads the input features; every later stage reads the softmax of
    the previous stage's human-action logits. Outcome and robot heads sit on
    each stage's own trunk.
    """

    def __init__(self, config: MstcnConfig):
        super().__init__()
        self.config = config
        heads = {"human": N_HUMAN, "outcome": N_OUTCOME}
        if config.variant == "B":
            heads["robot"] = N_ROBOT
        self.encoder = (FtGripperEncoder(config.sensor_channels, config.encoder_channels)
                        if config.sensor_channels else None)
        self.stages = nn.ModuleList(
            [Stage(config.input_dim, config.channels, config.layers_per_stage, heads, config.dropout)]
            + [Stage(N_HUMAN, config.channels, config.layers_per_stage, heads, config.dropout)
               for _ in range(config.stages - 1)]
        )
        self.register_buffer("ft_mean", torch.zeros(6, dtype=torch.float64))
        self.register_buffer("ft_std", torch.ones(6, dtype=torch.float64))

    def set_ft_stats(self, stats) -> None:
        self.ft_mean.copy_(torch.as_tensor(stats.mean, dtype=torch.float64))
        self.ft_std.copy_(torch.as_tensor(stats.std, dtype=torch.float64))

    def forward(self, video, sensors=None):
        parts = []
        if video is not None:
            parts.append(video)
        if self.encoder is not None:
            if sensors is None:
                raise ShapeError("model expects sensor channels")
            parts.append(self.encoder(sensors))
        x = torch.cat(parts, dim=1) if len(parts) > 1 else parts[0]
        if x.shape[1] != self.config.input_dim:
            raise ShapeError(f"expected {self.config.input_dim} input channels, got {x.shape[1]}")
        outs = []
        for stage in self.stages:
            out = stage(x)
            outs.append(out)
            x = F.softmax(out["human"], dim=1)
        return {name: torch.stack([o[name] for o in outs]) for name in outs[0]}


def build_segmenter(config: MstcnConfig) -> MSTCN:
    torch.manual_seed(config.seed)
    return MSTCN(config)


def model_inputs(model: MSTCN, seq: FeatureSequence):
    """``(video, sensors)`` tensors shaped ``(1, D, T)`` for one feature sequence."""
    cfg = model.config
    dtype = next(model.parameters()).dtype
    video = None
    if cfg.video_dims:
        if seq.backbone.shape[1] != cfg.backbone_dim:
            raise ShapeError(f"backbone width {seq.backbone.shape[1]} != configured {cfg.backbone_dim}")
        arr = np.concatenate([seq.backbone[:, s] for s in cfg.video_dims], axis=1)
        video = torch.as_tensor(arr).to(dtype).T.unsqueeze(0)
    sensors = None
    if cfg.sensor_channels:
        cols = []
        if "ft" in cfg.modalities:
            ft = torch.as_tensor(np.asarray(seq.ft, dtype=np.float64))
            cols.append((ft - model.ft_mean) / model.ft_std)
        if "gripper" in cfg.modalities:
            cols.append(torch.as_tensor(np.asarray(seq.gripper, dtype=np.float64)).reshape(-1, 1))
        sensors = torch.cat(cols, dim=1).to(dtype).T.unsqueeze(0)
    return video, sensors


# ---------------------------------------------------------------------------
# output and losses


@dataclass
class SegmentationOutput:
    """Per-stage log-probabilities ``(S, T, C)`` for each head, plus final predictions."""

    human: torch.Tensor
    outcome: torch.Tensor
    robot: torch.Tensor | None = None

    @property
    def human_track(self) -> np.ndarray:
        return self.human[-1].argmax(dim=-1).cpu().numpy()

    @property
    def outcome_pred(self) -> OutcomeLabel:
        return OutcomeLabel(int(self.outcome[-1, -1].argmax()))

    @property
    def robot_track(self) -> np.ndarray | None:
        return None if self.robot is None else self.robot[-1].argmax(dim=-1).cpu().numpy()


def to_output(logits: dict) -> SegmentationOutput:
    """Batch-1 logits ``(S, 1, C, T)`` -> log-probabilities ``(S, T, C)``."""
    lp = {k: F.log_softmax(v[:, 0], dim=1).transpose(1, 2) for k, v in logits.items()}
    return SegmentationOutput(lp["human"], lp["outcome"], lp.get("robot"))


def mstcn_forward(model: MSTCN, seq: FeatureSequence) -> SegmentationOutput:
    return to_output(model(*model_inputs(model, seq)))


def loss_segcls(logp: torch.Tensor, target) -> torch.Tensor:
    """``-sum_s (1/T) sum_t log p[s, t, target_t]`` for log-probs shaped ``(S, T, C)``."""
    S, T, C = logp.shape
    target = torch.as_tensor(np.asarray(target), dtype=torch.long, device=logp.device).reshape(-1)
    if target.shape[0] != T:
        raise ShapeError(f"target length {target.shape[0]} != {T}")
    picked = logp.gather(2, target.view(1, T, 1).expand(S, T, 1))
    return -picked.sum() / T


def loss_smooth(logp: torch.Tensor, tau: float = 4.0, detach_prev: bool = False) -> torch.Tensor:
    """Truncated squared log-prob differences between consecutive frames.

    Per stage the sum over the ``T - 1`` frame pairs and ``C`` classes is
    divided by ``T * C``; each term is at most ``tau ** 2``.
    """
    S, T, C = logp.shape
    if T < 2:
        return logp.sum() * 0.0
    prev = logp[:, :-1].detach() if detach_prev else logp[:, :-1]
    diff = torch.clamp(torch.abs(logp[:, 1:] - prev), max=tau)
    return (diff**2).sum() / (T * C)


def loss_total(out: SegmentationOutput, targets: dict, variant: str = "B", heads=HEADS,
               lam: float = 0.15, tau: float = 4.0, detach_prev: bool = False) -> torch.Tensor:
    """Outcome loss + human segmentation loss + (variant B) robot segmentation loss.

    ``targets`` holds ``outcome`` (int), ``human`` and ``robot`` (model-facing
    3-class) per-frame tracks; only the active ``heads`` need targets.
    """
    T = out.human.shape[1]
    total = out.human.sum() * 0.0
    for head in heads:
        if head == "cls":
            if targets.get("outcome") is None:
                raise MissingTarget("outcome target required for the cls head")
            total = total + loss_segcls(out.outcome, np.full(T, int(targets["outcome"])))
        elif head == "seg_h":
            if targets.get("human") is None:
                raise MissingTarget("human-action target required for the seg_h head")
            total = total + loss_segcls(out.human, targets["human"]) + lam * loss_smooth(out.human, tau, detach_prev)
        elif head == "seg_r":
            if variant.upper() != "B" or out.robot is None:
                raise ConfigError("robot head is only available for variant B")
            if targets.get("robot") is None:
                raise MissingTarget("robot-action target required for the seg_r head")
            total = total + loss_segcls(out.robot, targets["robot"]) + lam * loss_smooth(out.robot, tau, detach_prev)
        else:
            raise ConfigError(f"unknown head {head!r}")
    return total


# ---------------------------------------------------------------------------
# resampling per robot action (variant A)


def robot_segment_lengths(robot_model_track) -> list[int]:
    track = np.asarray(robot_model_track)
    lengths = [int((track == k).sum()) for k in range(N_ROBOT)]
    for k, n in enumerate(lengths):
        if n == 0:
            raise MissingSegment(f"robot action {k} has no frames")
    if np.any(np.diff(track) < 0):
        raise ShapeError("robot track is not in canonical order")
    return lengths


def resample_indices(lengths, L: int) -> np.ndarray:
    """Original-frame indices of the ``3 * L`` resampled frames."""
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    return np.concatenate([off + uniform_indices(n, L) for off, n in zip(offsets, lengths)])


def inverse_resample_indices(lengths, L: int) -> np.ndarray:
    """For each original frame, the resampled position holding the nearest selected frame.

    Ties go to the lowest resampled position.
    """
    out = []
    for k, n in enumerate(lengths):
        sel = uniform_indices(n, L)
        j = np.arange(n)
        right = np.searchsorted(sel, j, side="left")
        left = (right - 1).clip(0)
        rc = right.clip(max=len(sel) - 1)
        take_left = (right == len(sel)) | ((right > 0) & (j - sel[left] <= sel[rc] - j))
        value = np.where(take_left, sel[left], sel[rc])
        out.append(k * L + np.searchsorted(sel, value, side="left"))
    return np.concatenate(out)


def resample_per_robot_action(seq: FeatureSequence, robot_track=None, L: int = 100):
    """Resample each model-facing robot segment to ``L`` frames.

    ``robot_track`` uses the 3-class model-facing encoding. Returns the resampled sequence and the original-frame index of every
    resampled frame. ``robot_track`` defaults to the sequence's own labels.
    """
    track = seq.robot_model if robot_track is None else np.asarray(robot_track)
    if track is None:
        raise MissingSegment("no robot track to resample by")
    lengths = robot_segment_lengths(track)
    idx = resample_indices(lengths, L)
    return seq.take(idx), idx


# ---------------------------------------------------------------------------
# prediction


@dataclass
class Prediction:
    human_track: np.ndarray
    outcome: OutcomeLabel
    robot_track: np.ndarray | None = None

    def to_json(self) -> dict:
        from .labels import HumanAction, RobotActionModel

        return {
            "human_track": [HumanAction(int(h)).label for h in self.human_track],
            "outcome": self.outcome.label,
            "robot_track": None if self.robot_track is None
            else [RobotActionModel(int(r)).label for r in self.robot_track],
        }


@torch.no_grad()
def predict(model: MSTCN, seq: FeatureSequence, robot_track=None) -> Prediction:
    """Last-stage argmax per frame; outcome from the final frame.

    Variant A predictions are mapped back to the original frames.
    """
    model.eval()
    cfg = model.config
    if cfg.variant == "A":
        track = seq.robot_model if robot_track is None else robot_to_model(robot_track)
        lengths = robot_segment_lengths(track)
        resampled = seq.take(resample_indices(lengths, cfg.segment_length))
        out = mstcn_forward(model, resampled)
        inv = inverse_resample_indices(lengths, cfg.segment_length)
        return Prediction(out.human_track[inv], out.outcome_pred, None)
    out = mstcn_forward(model, seq)
    return Prediction(out.human_track, out.outcome_pred, out.robot_track)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_outcome_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _training_example(model: MSTCN, seq: FeatureSequence):
    cfg = model.config
    if cfg.variant == "A":
        seq, _ = resample_per_robot_action(seq, None, cfg.segment_length)
    targets = {
        "outcome": None if seq.outcome is None else int(seq.outcome),
        "human": seq.human_actions,
        "robot": seq.robot_model,
    }
    return model_inputs(model, seq), targets


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    torch.use_deterministic_algorithms(True, warn_only=True)


def _val_score(model: MSTCN, val: list[FeatureSequence]) -> float:
    # without an outcome loss the outcome head is untrained; select on frame accuracy instead
    preds = [predict(model, s) for s in val]
    if "cls" in model.config.heads:
        return float(100.0 * np.mean([p.outcome == s.outcome for p, s in zip(preds, val)]))
    return dataset_frame_accuracy([p.human_track for p in preds], [s.human_actions for s in val])


def train_segmenter(model: MSTCN, train: list[FeatureSequence], val: list[FeatureSequence] | None = None,
                    epochs: int | None = None, patience: int | None = None) -> TrainHistory:
    """Adam, batch size 1, early stopping on validation outcome accuracy.

    The best-on-validation weights are restored at the end (the last ones if
    no validation set is given).
    """
    from .dataset import compute_ft_stats

    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    patience = cfg.patience if patience is None else patience
    set_determinism(cfg.seed)
    if "ft" in cfg.modalities:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.set_ft_stats(compute_ft_stats([s.ft for s in train]))
    examples = [_training_example(model, s) for s in train]
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    best_acc, best_state, since_best = -1.0, None, 0
    for epoch in range(epochs):
        model.train()
        total = 0.0
        for i in rng.permutation(len(examples)):
            (video, sensors), targets = examples[i]
            opt.zero_grad()
            loss = loss_total(to_output(model(video, sensors)), targets, cfg.variant, cfg.heads,
                              cfg.lam, cfg.tau, cfg.detach_smooth)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.detach())
        history.train_loss.append(total / max(1, len(examples)))
        if val:
            acc = _val_score(model, val)
            history.val_outcome_accuracy.append(float(acc))
            log.info(json.dumps({"epoch": epoch, "train_loss": history.train_loss[-1], "val_score": acc}))
            # ties go to the later, longer-trained weights; only a strict gain resets patience
            since_best = 0 if acc > best_acc else since_best + 1
            if acc >= best_acc:
                best_acc, best_state = acc, copy.deepcopy(model.state_dict())
                history.best_epoch = epoch
            if since_best >= patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        history.best_epoch = len(history.train_loss) - 1
    model.eval()
    return history


def save_checkpoint(model: MSTCN, path, **extra) -> None:
    from .labels import HumanAction, RobotActionModel

    torch.save({
        "kind": "mstcn",
        "config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "vocab": {"human": HumanAction.labels(), "outcome": OutcomeLabel.labels(),
                  "robot": RobotActionModel.labels()},
        **extra,
    }, path)


def load_checkpoint(path) -> MSTCN:
    ckpt = torch.load(path, weights_only=False)
    model = MSTCN(MstcnConfig.from_dict(ckpt["config"]))
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model


def receptive_field(layers: int) -> int:
    """Frames on each side that can influence a stage-1 output."""
    return 2**layers - 1 if layers else 0


def uniform_loss(n_classes: int, stages: int) -> float:
    return stages * math.log(n_classes)
