"""Clip-level outcome classifiers with late and intermediate multimodal fusion.

Four fusion topologies over the streams ``rgb``, ``flow``, ``ft`` and ``gripper``:

* ``A``: every stream has its own classifier; outputs are late-fused.
* ``B``: RGB, F-T and gripper features are concatenated into one FC head;
  its output is late-fused with the flow stream.
* ``C``: as ``B`` with the roles of RGB and flow swapped.
* ``D``: F-T and gripper features are fused (FC) with RGB and, separately,
  with flow; the two outputs are late-fused.

Late fusion is the arithmetic mean of the branch logits. With a single
modality, or with no sensor stream at all, every variant builds the same
network.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DivergenceError, ShapeError, TopologyError
from .features import CLIP_LEN, STREAM_DIM, ClipInput, VideoEncoder, flow_to_tensor, rgb_to_tensor
from .labels import N_OUTCOME, OutcomeLabel, outcome_allowed

log = logging.getLogger(__name__)

STREAMS = ("rgb", "flow", "ft", "gripper")
VIDEO = ("rgb", "flow")
SENSORS = ("ft", "gripper")
VARIANTS = ("A", "B", "C", "D")


@dataclass
class ClassifierConfig:
    variant: str = "D"
    modalities: tuple[str, ...] = STREAMS
    feature_dim: int = STREAM_DIM
    video_width: int = 16
    sensor_dim: int = 64
    clip_len: int = CLIP_LEN
    lr_head: float = 1e-2
    lr_backbone: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 50
    patience: int = 10
    plateau_patience: int = 3
    full_finetune: bool = False
    freeze_backbone: bool = False
    mask_task: bool = False
    seed: int = 0

    def __post_init__(self):
        self.variant = self.variant.upper()
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown fusion variant {self.variant!r}")
        unknown = set(self.modalities) - set(STREAMS)
        if unknown:
            raise ConfigError(f"unknown modalities {sorted(unknown)}")
        self.modalities = tuple(m for m in STREAMS if m in set(self.modalities))
        if not self.modalities:
            raise ConfigError("at least one modality is required")

    def to_dict(self) -> dict:
        return asdict(self)


def fusion_branches(variant: str, modalities) -> list[tuple[str, ...]]:
    """Streams feeding each late-fused branch; a branch with several streams has an FC fusion head."""
    mods = [m for m in STREAMS if m in set(modalities)]
    sensors = [m for m in mods if m in SENSORS]
    if len(mods) == 1 or not sensors:
        return [(m,) for m in mods]
    variant = variant.upper()
    if variant == "A":
        return [(m,) for m in mods]
    has_rgb, has_flow = "rgb" in mods, "flow" in mods
    if variant == "B":
        if not has_rgb:
            raise TopologyError("variant B fuses sensors into the RGB stream, which is missing")
        return [("rgb", *sensors)] + ([("flow",)] if has_flow else [])
    if variant == "C":
        if not has_flow:
            raise TopologyError("variant C fuses sensors into the flow stream, which is missing")
        return [("flow", *sensors)] + ([("rgb",)] if has_rgb else [])
    if variant == "D":
        if not (has_rgb and has_flow):
            raise TopologyError("variant D needs both RGB and flow streams")
        return [("rgb", *sensors), ("flow", *sensors)]
    raise ConfigError(f"unknown fusion variant {variant!r}")


class SensorEncoder(nn.Module):
    """Three 1D conv layers over time followed by global average pooling."""

    def __init__(self, in_channels: int, out_dim: int = 64, kernel_size: int = 5):
        super().__init__()
        self.out_dim = out_dim
        pad = kernel_size // 2
        self.net = nn.Sequential(
            nn.Conv1d(in_channels, out_dim, kernel_size, padding=pad), nn.ReLU(),
            nn.Conv1d(out_dim, out_dim, kernel_size, padding=pad), nn.ReLU(),
            nn.Conv1d(out_dim, out_dim, kernel_size, padding=pad), nn.ReLU(),
        )

    def forward(self, x):
        return self.net(x).mean(dim=2)


class FusionClassifier(nn.Module):
    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.config = config
        self.branches = fusion_branches(config.variant, config.modalities)
        enc = {}
        for m in config.modalities:
            if m == "rgb":
                enc[m] = VideoEncoder(3, config.feature_dim, config.video_width)
            elif m == "flow":
                enc[m] = VideoEncoder(2, config.feature_dim, config.video_width)
            else:
                enc[m] = SensorEncoder(6 if m == "ft" else 1, config.sensor_dim)
        self.encoders = nn.ModuleDict(enc)
        self.heads = nn.ModuleList(
            nn.Linear(sum(self.encoders[m].out_dim for m in branch), N_OUTCOME) for branch in self.branches
        )
        self.register_buffer("ft_mean", torch.zeros(6))
        self.register_buffer("ft_std", torch.ones(6))

    def set_ft_stats(self, stats) -> None:
        self.ft_mean.copy_(torch.as_tensor(stats.mean, dtype=self.ft_mean.dtype))
        self.ft_std.copy_(torch.as_tensor(stats.std, dtype=self.ft_std.dtype))

    def stream_features(self, batch: dict) -> dict:
        feats = {}
        for m, encoder in self.encoders.items():
            if m not in batch:
                raise ShapeError(f"batch is missing the {m!r} stream")
            x = batch[m]
            if m == "ft":
                x = (x - self.ft_mean[None, :, None]) / self.ft_std[None, :, None]
            feats[m] = encoder(x)
        return feats

    def branch_logits(self, batch: dict) -> list[torch.Tensor]:
        feats = self.stream_features(batch)
        return [head(torch.cat([feats[m] for m in branch], dim=1)) for branch, head in zip(self.branches, self.heads)]

    def forward(self, batch: dict) -> torch.Tensor:
        logits = torch.stack(self.branch_logits(batch))
        out = logits.mean(dim=0)
        if self.config.mask_task and "task_mask" in batch:
            out = out.masked_fill(~batch["task_mask"], float("-inf"))
        return out

    def backbone_parameters(self):
        for m in VIDEO:
            if m in self.encoders:
                yield from self.encoders[m].parameters()

    def head_parameters(self):
        ids = {id(p) for p in self.backbone_parameters()}
        return [p for p in self.parameters() if id(p) not in ids]


def build_classifier(variant: str = "D", modalities=STREAMS, config: ClassifierConfig | None = None,
                     **overrides) -> FusionClassifier:
    cfg = copy.deepcopy(config) if config is not None else ClassifierConfig(**overrides)
    cfg.variant = variant.upper()
    cfg.modalities = tuple(modalities)
    cfg.__post_init__()
    torch.manual_seed(cfg.seed)
    return FusionClassifier(cfg)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def collate(clips: Sequence[ClipInput], modalities=STREAMS, dtype=torch.float32) -> dict:
    n = len(clips[0].rgb_clip)
    for c in clips:
        if len(c.rgb_clip) != n:
            raise ShapeError("clips in a batch must share the temporal length")
    batch = {}
    if "rgb" in modalities:
        batch["rgb"] = rgb_to_tensor(np.stack([c.rgb_clip for c in clips])).to(dtype)
    if "flow" in modalities:
        batch["flow"] = flow_to_tensor(np.stack([c.flow_clip for c in clips])).to(dtype)
    if "ft" in modalities:
        batch["ft"] = torch.as_tensor(np.stack([c.ft_clip for c in clips]), dtype=dtype).transpose(1, 2)
    if "gripper" in modalities:
        batch["gripper"] = torch.as_tensor(np.stack([c.gripper_clip for c in clips]),
                                           dtype=dtype).reshape(len(clips), 1, -1)
    if all(c.task is not None for c in clips):
        batch["task_mask"] = torch.tensor(
            [[outcome_allowed(o, c.task) for o in OutcomeLabel] for c in clips], dtype=torch.bool)
    return batch


def forward(model: FusionClassifier, clip: ClipInput) -> torch.Tensor:
    """Outcome logits (5,) for one clip."""
    if len(clip.rgb_clip) != model.config.clip_len:
        raise ShapeError(f"clip length {len(clip.rgb_clip)} != {model.config.clip_len}")
    dtype = next(model.parameters()).dtype
    return model(collate([clip], model.config.modalities, dtype))[0]


@torch.no_grad()
def predict_outcomes(model: FusionClassifier, clips: Sequence[ClipInput], batch_size: int = 8) -> np.ndarray:
    model.eval()
    out = []
    for s in range(0, len(clips), batch_size):
        out.append(model(collate(clips[s : s + batch_size], model.config.modalities)).argmax(dim=1).numpy())
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


@dataclass
class ClassifierHistory:
    train_loss: list[float] = field(default_factory=list)
    val_outcome_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _branch_loss(model: FusionClassifier, batch: dict, labels: torch.Tensor) -> torch.Tensor:
    # mean of per-branch cross entropies: branches without shared parameters train independently
    losses = []
    for logits in model.branch_logits(batch):
        if model.config.mask_task and "task_mask" in batch:
            logits = logits.masked_fill(~batch["task_mask"], float("-inf"))
        losses.append(F.cross_entropy(logits, labels))
    return torch.stack(losses).mean()


def train_classifier(model: FusionClassifier, train: Sequence[ClipInput], val: Sequence[ClipInput] | None = None,
                     epochs: int | None = None) -> ClassifierHistory:
    """SGD with momentum; LR halved on validation plateau; early stopping on validation accuracy."""
    from .dataset import compute_ft_stats
    from .segmentation import set_determinism

    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    set_determinism(cfg.seed)
    if "ft" in cfg.modalities:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.set_ft_stats(compute_ft_stats([c.ft_clip for c in train]))

    backbone = list(model.backbone_parameters())
    if cfg.freeze_backbone:
        for p in backbone:
            p.requires_grad_(False)
        backbone = []
    elif not cfg.full_finetune:
        # fine-tune only the last conv block and projection of each video encoder
        for m in VIDEO:
            if m in model.encoders:
                for p in model.encoders[m].features[:-2].parameters():
                    p.requires_grad_(False)
        backbone = [p for p in backbone if p.requires_grad]
    groups = [{"params": [p for p in model.head_parameters() if p.requires_grad], "lr": cfg.lr_head}]
    if backbone:
        groups.append({"params": backbone, "lr": cfg.lr_backbone})
    opt = torch.optim.SGD(groups, momentum=cfg.momentum)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(opt, mode="max", factor=0.5, patience=cfg.plateau_patience)

    labels = torch.tensor([int(c.label) for c in train])
    rng = np.random.default_rng(cfg.seed)
    history = ClassifierHistory()
    best_acc, best_state, since_best = -1.0, None, 0
    for epoch in range(epochs):
        model.train()
        order = rng.permutation(len(train))
        total, n = 0.0, 0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            batch = collate([train[i] for i in idx], cfg.modalities)
            opt.zero_grad()
            loss = _branch_loss(model, batch, labels[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            n += len(idx)
        history.train_loss.append(total / max(1, n))
        if val:
            preds = predict_outcomes(model, val)
            acc = 100.0 * float(np.mean(preds == np.array([int(c.label) for c in val])))
            history.val_outcome_accuracy.append(acc)
            sched.step(acc)
            log.info(json.dumps({"epoch": epoch, "train_loss": history.train_loss[-1], "val_score": acc}))
            # ties go to the later, longer-trained weights; only a strict gain resets patience
            since_best = 0 if acc > best_acc else since_best + 1
            if acc >= best_acc:
                best_acc, best_state = acc, copy.deepcopy(model.state_dict())
                history.best_epoch = epoch
            if since_best >= cfg.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        history.best_epoch = len(history.train_loss) - 1
    model.eval()
    return history


def save_checkpoint(model: FusionClassifier, path, **extra) -> None:
    torch.save({"kind": "i3d", "config": model.config.to_dict(), "state_dict": model.state_dict(),
                "vocab": {"outcome": OutcomeLabel.labels()}, **extra}, path)


def load_checkpoint(path) -> FusionClassifier:
    ckpt = torch.load(path, weights_only=False)
    cfg = ClassifierConfig(**ckpt["config"])
    model = FusionClassifier(cfg)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model
