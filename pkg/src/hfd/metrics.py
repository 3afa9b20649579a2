"""Outcome accuracy, frame-wise accuracy, segmental F1 and multi-run aggregation.

Segmental F1 follows the usual action-segmentation definition: predicted
segments are visited in temporal order and each one is matched to the
unmatched ground-truth segment of the same label with the highest IoU. The
match is a true positive if that IoU reaches the overlap threshold, otherwise
the predicted segment is a false positive. Unmatched ground-truth segments
are false negatives. Counts are pooled over all labels (and over all trials
when scoring a dataset).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyList, EmptyTrack, LengthMismatch

THRESHOLDS = (10, 25, 50)


class Segment(NamedTuple):
    label: int
    start: int
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def frames_to_segments(track) -> list[Segment]:
    track = np.asarray(track)
    if track.ndim != 1 or len(track) == 0:
        raise EmptyTrack("cannot segment an empty track")
    change = np.flatnonzero(track[1:] != track[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [len(track) - 1]])
    return [Segment(int(track[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def segments_to_frames(segments: Sequence[Segment]) -> np.ndarray:
    return np.concatenate([np.full(s.length, s.label, dtype=np.int64) for s in segments])


def _overlap(a: Segment, b: Segment) -> tuple[int, int]:
    inter = max(0, min(a.end, b.end) - max(a.start, b.start) + 1)
    return inter, a.length + b.length - inter


def segment_counts(pred, gt, threshold: float, ignore=()) -> tuple[int, int, int]:
    """(tp, fp, fn) for one pair of tracks or segment lists."""
    pred_segs = pred if _is_segments(pred) else frames_to_segments(pred)
    gt_segs = gt if _is_segments(gt) else frames_to_segments(gt)
    if _n_frames(pred_segs) != _n_frames(gt_segs):
        raise LengthMismatch(f"prediction covers {_n_frames(pred_segs)} frames, ground truth {_n_frames(gt_segs)}")
    pred_segs = [s for s in pred_segs if s.label not in ignore]
    gt_segs = [s for s in gt_segs if s.label not in ignore]
    used = [False] * len(gt_segs)
    tp = fp = 0
    for p in pred_segs:
        best, best_inter, best_union = -1, 0, 1
        for j, g in enumerate(gt_segs):
            if used[j] or g.label != p.label:
                continue
            inter, union = _overlap(p, g)
            # inter/union > best_inter/best_union, in integers
            if best < 0 or inter * best_union > best_inter * union:
                best, best_inter, best_union = j, inter, union
        # IoU >= threshold/100 without floating point
        if best >= 0 and 100 * best_inter >= threshold * best_union:
            tp += 1
            used[best] = True
        else:
            fp += 1
    return tp, fp, len(gt_segs) - sum(used)


def _is_segments(x) -> bool:
    return isinstance(x, list) and (len(x) == 0 or isinstance(x[0], Segment))


def _n_frames(segs) -> int:
    return segs[-1].end + 1 if segs else 0


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    if tp + fp + fn == 0:
        return 100.0
    if tp == 0:
        return 0.0
    # 2PR / (P + R) reduces to 2tp / (2tp + fp + fn); one integer division keeps it correctly rounded
    return 200 * tp / (2 * tp + fp + fn)


def segmental_f1(pred, gt, threshold: float, ignore=()) -> float:
    """Segmental F1 (percent) of one predicted track against its ground truth."""
    return f1_from_counts(*segment_counts(pred, gt, threshold, ignore))


def dataset_f1(preds: Sequence, gts: Sequence, thresholds=THRESHOLDS, ignore=()) -> dict[int, float]:
    """F1 per threshold with counts pooled over every (pred, gt) pair."""
    if len(preds) != len(gts):
        raise LengthMismatch("different number of predictions and ground-truth tracks")
    out = {}
    for k in thresholds:
        totals = np.zeros(3, dtype=np.int64)
        for p, g in zip(preds, gts):
            totals += segment_counts(p, g, k, ignore)
        out[k] = f1_from_counts(*totals.tolist())
    return out


def frame_accuracy(pred, gt) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"shapes {pred.shape} and {gt.shape} differ")
    if pred.size == 0:
        raise EmptyTrack("no frames to score")
    return 100.0 * float(np.mean(pred == gt))


def outcome_accuracy(preds, gts) -> float:
    return frame_accuracy(preds, gts)


def dataset_frame_accuracy(preds: Sequence, gts: Sequence) -> float:
    """Frame accuracy over all frames of all trials."""
    if len(preds) != len(gts):
        raise LengthMismatch("different number of predictions and ground-truth tracks")
    return frame_accuracy(np.concatenate([np.asarray(p) for p in preds]),
                          np.concatenate([np.asarray(g) for g in gts]))


@dataclass
class MetricsReport:
    outcome_accuracy: float | None = None
    frame_accuracy: float | None = None
    f1_at: dict[int, float] = field(default_factory=dict)
    std: dict[str, float] | None = None
    n_runs: int = 1

    def __post_init__(self):
        self.f1_at = {int(k): float(v) for k, v in self.f1_at.items()}
        for name, value in self.values().items():
            if not 0.0 <= value <= 100.0 + 1e-9:
                raise ValueError(f"{name}={value} outside [0, 100]")
        if self.n_runs <= 1:
            self.std = None

    def values(self) -> dict[str, float]:
        out = {}
        if self.outcome_accuracy is not None:
            out["outcome_accuracy"] = float(self.outcome_accuracy)
        if self.frame_accuracy is not None:
            out["frame_accuracy"] = float(self.frame_accuracy)
        for k, v in sorted(self.f1_at.items()):
            out[f"f1@{k}"] = float(v)
        return out

    def to_json(self) -> dict:
        return {
            "outcome_accuracy": self.outcome_accuracy,
            "frame_accuracy": self.frame_accuracy,
            "f1_at": {str(k): v for k, v in self.f1_at.items()},
            "std": self.std,
            "n_runs": self.n_runs,
        }

    @classmethod
    def from_json(cls, d) -> "MetricsReport":
        return cls(d.get("outcome_accuracy"), d.get("frame_accuracy"),
                   {int(k): v for k, v in (d.get("f1_at") or {}).items()}, d.get("std"), d.get("n_runs", 1))

    def format(self, key: str) -> str:
        """``mean`` or ``mean ± std`` with one decimal, as in the result tables."""
        value = self.values().get(key)
        if value is None:
            return ""
        if self.std and key in self.std:
            return f"{value:.1f} ± {self.std[key]:.1f}"
        return f"{value:.1f}"


def aggregate_runs(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean and sample standard deviation (ddof=1) of each metric across runs."""
    if not reports:
        raise EmptyList("no reports to aggregate")
    keys = list(reports[0].values())
    table = {k: np.array([r.values()[k] for r in reports], dtype=np.float64) for k in keys}
    mean = {k: float(v.mean()) for k, v in table.items()}
    std = {k: float(v.std(ddof=1)) for k, v in table.items()} if len(reports) > 1 else None
    f1 = {int(k[3:]): v for k, v in mean.items() if k.startswith("f1@")}
    return MetricsReport(mean.get("outcome_accuracy"), mean.get("frame_accuracy"), f1, std, len(reports))
