"""Non-learned baseline: most frequent human action given the robot action and its progress."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NoLabels
from .labels import N_HUMAN, N_ROBOT, HumanAction, OutcomeLabel, RobotActionModel
from .metrics import MetricsReport, THRESHOLDS, dataset_f1, dataset_frame_accuracy

N_BINS = 10


def progress_bins(robot_track, n_bins: int = N_BINS) -> np.ndarray:
    """Decile of each frame's position within its run of equal robot actions.

    Progress of frame ``i`` in a run starting at ``s`` with length ``n`` is
    ``(i - s) / n`` in [0, 1); the bin is ``floor(n_bins * progress)`` capped
    at ``n_bins - 1``.
    """
    track = np.asarray(robot_track)
    bins = np.zeros(len(track), dtype=np.int64)
    start = 0
    for i in range(1, len(track) + 1):
        if i == len(track) or track[i] != track[start]:
            n = i - start
            pos = np.arange(n)
            bins[start:i] = np.minimum((n_bins * pos) // n, n_bins - 1)
            start = i
    return bins


def _tracks(trial):
    labels = getattr(trial, "labels", None)
    if labels is None:
        labels = getattr(trial, "annotations", None)
    if labels is not None:
        return labels.human_actions, labels.robot_model, labels.outcome
    human = getattr(trial, "human_actions", None)
    robot = getattr(trial, "robot_model", None)
    if human is None or robot is None:
        raise NoLabels(f"trial {getattr(trial, 'trial_id', '?')} has no action tracks")
    return human, robot, getattr(trial, "outcome", None)


@dataclass(frozen=True)
class CorrelationTable:
    counts: np.ndarray  # (3 robot actions, 10 bins, 7 human actions)
    fitted_on: str = ""

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_ROBOT, N_BINS, N_HUMAN) or (counts < 0).any():
            raise ValueError(f"counts must be a non-negative {N_ROBOT}x{N_BINS}x{N_HUMAN} array")
        object.__setattr__(self, "counts", counts)

    @property
    def empty_cells(self) -> list[tuple[int, int]]:
        return [tuple(rc) for rc in np.argwhere(self.counts.sum(axis=2) == 0).tolist()]

    def to_json(self) -> dict:
        return {
            "counts": self.counts.tolist(),
            "fitted_on": self.fitted_on,
            "robot_actions": RobotActionModel.labels(),
            "human_actions": HumanAction.labels(),
            "n_bins": N_BINS,
        }

    @classmethod
    def from_json(cls, d) -> "CorrelationTable":
        return cls(np.asarray(d["counts"]), d.get("fitted_on", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "CorrelationTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def fit_correlation(train_trials: Sequence, nominal_only: bool = False, fitted_on: str = "train") -> CorrelationTable:
    """Histogram of human actions per (robot action, progress bin) over all training frames."""
    counts = np.zeros((N_ROBOT, N_BINS, N_HUMAN), dtype=np.int64)
    for trial in train_trials:
        human, robot, outcome = _tracks(trial)
        if nominal_only and outcome != OutcomeLabel.SUCCESS:
            continue
        robot = np.asarray(robot)
        np.add.at(counts, (robot, progress_bins(robot), np.asarray(human)), 1)
    return CorrelationTable(counts, fitted_on)


def decision_table(table: CorrelationTable) -> np.ndarray:
    """Predicted human action per (robot action, progress bin), shape ``(3, 10)``."""
    counts = table.counts
    marginal = counts.sum(axis=1)  # (robot, human)
    overall = counts.sum(axis=(0, 1))
    # argmax returns the first maximum, i.e. the lowest action index on ties
    decision = counts.argmax(axis=2)
    empty = counts.sum(axis=2) == 0
    fallback = np.where(marginal.sum(axis=1) > 0, marginal.argmax(axis=1), overall.argmax())
    return np.where(empty, fallback[:, None], decision)


def predict_human_actions(table: CorrelationTable, robot_track) -> np.ndarray:
    """Per-frame human action prediction from a model-facing (3-class) robot track."""
    robot = np.asarray(robot_track, dtype=np.int64)
    if robot.size == 0:
        return robot.copy()
    return decision_table(table)[robot, progress_bins(robot)]


def evaluate_baseline(table: CorrelationTable, test_trials: Sequence, thresholds=THRESHOLDS) -> MetricsReport:
    """Segmental F1 and frame accuracy of the baseline on labelled trials (ground-truth robot tracks)."""
    preds, gts = [], []
    for trial in test_trials:
        human, robot, _ = _tracks(trial)
        preds.append(predict_human_actions(table, robot))
        gts.append(np.asarray(human))
    return MetricsReport(
        outcome_accuracy=None,
        frame_accuracy=dataset_frame_accuracy(preds, gts),
        f1_at=dataset_f1(preds, gts, thresholds),
    )
