"""Acceptance criteria, one test per criterion.

Each test records a PASS / FAIL / SKIP line that is printed in the terminal
summary. Criteria that need the recorded dataset read it from
``$HFD_DATA_ROOT`` and skip when it is not set.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from hfd.classifiers import build_classifier, count_parameters
from hfd.correlation import evaluate_baseline, fit_correlation
from hfd.dataset import dataset_table, load_dataset, load_split_spec, split_by_participant
from hfd.experiments import ExperimentConfig, ExperimentData, run_experiment
from hfd.features import CLIP_LEN
from hfd.labels import N_HUMAN
from hfd.metrics import dataset_frame_accuracy, segmental_f1
from hfd.segmentation import (
    MSTCN,
    MstcnConfig,
    build_segmenter,
    inverse_resample_indices,
    loss_segcls,
    loss_smooth,
    loss_total,
    predict,
    resample_indices,
    to_output,
    train_segmenter,
)
from hfd.synthetic import generate_suite, generate_trial, suite_scripts

from oracles import brute_f1, finite_difference_check, inverse_resample_oracle, resample_oracle

RESULTS: dict[int, str] = {}

DATA_ROOT = os.environ.get("HFD_DATA_ROOT")
needs_data = pytest.mark.skipif(not DATA_ROOT, reason="HFD_DATA_ROOT not set")
if not DATA_ROOT:
    # skipped tests never run, so their summary lines are filled in up front
    for _n in (5, 6, 10):
        RESULTS[_n] = "SKIP  HFD_DATA_ROOT not set (needs the recorded dataset)"

# published dataset statistics: (platform, task) -> outcome counts
TABLE2 = {
    ("HSR", "R2H"): {"success": 68, "no_approach": 50, "no_grasp": 49, "drop": 58},
    ("HSR", "H2R"): {"success": 51, "no_approach": 46, "no_release": 57, "drop": 66},
    ("KINOVA_GEN3", "R2H"): {"success": 18, "no_approach": 17, "no_grasp": 17, "drop": 20},
    ("KINOVA_GEN3", "H2R"): {"success": 19, "no_approach": 18, "no_release": 17, "drop": 18},
}
SPLIT_SIZES = (337, 101, 151)
CORRELATION_ROW = {"f1@10": 58.1, "f1@25": 48.6, "f1@50": 30.8, "frame_accuracy": 44.5}
STRETCH_TARGETS = {"mstcn-a": 71.4, "i3d-a": 64.8}


def check(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"{'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


def skip(n: int, reason: str) -> None:
    RESULTS[n] = f"SKIP  {reason}"
    pytest.skip(reason)


def test_criterion_01_metric_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        T = int(rng.integers(1, 51))
        k = int(rng.integers(1, 5))
        # blocky tracks produce realistic run structure; pure noise covers the many-short-runs case
        if rng.random() < 0.5:
            pred, gt = rng.integers(0, k, T), rng.integers(0, k, T)
        else:
            pred = np.repeat(rng.integers(0, k, T), rng.integers(1, 6, T))[:T]
            gt = np.repeat(rng.integers(0, k, T), rng.integers(1, 6, T))[:T]
        for th in (10, 25, 50):
            mismatches += segmental_f1(pred, gt, th) != brute_f1(pred, gt, th)
    elapsed = time.perf_counter() - start
    check(1, mismatches == 0 and elapsed < 10, f"metric oracle: {mismatches} mismatches, {elapsed:.2f}s")


def test_criterion_02_loss_analytics():
    errors = []
    for S, C in ((2, N_HUMAN), (1, 5), (3, 3)):
        T = 17
        logp = torch.full((S, T, C), -math.log(C), dtype=torch.float64)
        errors.append(abs(float(loss_segcls(logp, np.arange(T) % C)) - S * math.log(C)))
    const = torch.log_softmax(torch.randn(2, 1, N_HUMAN, dtype=torch.float64), -1).expand(2, 25, N_HUMAN)
    smooth_const = float(loss_smooth(const))
    # adversarial: alternating near-certain predictions, every raw difference far above tau
    a = torch.log_softmax(torch.tensor([200.0, 0.0], dtype=torch.float64), 0)
    b = torch.log_softmax(torch.tensor([0.0, 200.0], dtype=torch.float64), 0)
    adv = torch.stack([a if t % 2 else b for t in range(12)]).unsqueeze(0)
    T, C = 12, 2
    capped = 16.0 * (T - 1) * C / (T * C)
    smooth_adv = float(loss_smooth(adv, tau=4.0))
    wild = torch.log_softmax(1e3 * torch.randn(2, 30, N_HUMAN, dtype=torch.float64), -1)
    bound_ok = float(loss_smooth(wild, tau=4.0)) <= 2 * 16.0 * 29 / 30 + 1e-12
    ok = max(errors) < 1e-9 and smooth_const == 0.0 and abs(smooth_adv - capped) < 1e-12 and bound_ok
    check(2, ok, f"loss analytics: |L-S ln C| max {max(errors):.1e}, smooth(const)={smooth_const}, "
                 f"smooth(adversarial)={smooth_adv:.4f} == capped {capped:.4f}")


def test_criterion_03_gradient_check():
    start = time.perf_counter()
    T = 20
    torch.manual_seed(0)
    cfg = MstcnConfig(variant="B", backbone_dim=8, channels=8, encoder_channels=4, layers_per_stage=3,
                      dropout=0.0)
    model = MSTCN(cfg).double().eval()
    g = torch.Generator().manual_seed(1)
    video = torch.randn(1, 8, T, generator=g, dtype=torch.float64)
    sensors = torch.randn(1, 7, T, generator=g, dtype=torch.float64)
    targets = {"outcome": 2, "human": np.repeat([0, 1, 2, 3, 4], 4),
               "robot": np.repeat([0, 1, 2], [7, 6, 7])}
    err = finite_difference_check(lambda: loss_total(to_output(model(video, sensors)), targets, "B"),
                                  list(model.parameters()))
    elapsed = time.perf_counter() - start
    check(3, err < 1e-4 and elapsed < 120, f"gradient check: relative error {err:.2e}, {elapsed:.1f}s")


def test_criterion_04_overfit():
    start = time.perf_counter()
    seqs = [generate_trial(s)[1] for s in suite_scripts(3, seed=0)[:20]]
    model = build_segmenter(MstcnConfig(variant="B", modalities=("rgb", "flow", "ft", "gripper"),
                                        heads=("cls", "seg_h", "seg_r"), seed=0, epochs=30))
    history = train_segmenter(model, seqs)
    preds = [predict(model, s) for s in seqs]
    frame = dataset_frame_accuracy([p.human_track for p in preds], [s.human_actions for s in seqs])
    outcome = 100.0 * np.mean([p.outcome == s.outcome for p, s in zip(preds, seqs)])
    first = history.train_loss[:5]
    decreasing = all(b < a for a, b in zip(first, first[1:]))
    elapsed = time.perf_counter() - start
    ok = frame >= 95.0 and outcome == 100.0 and decreasing and elapsed < 900
    check(4, ok, f"overfit: frame acc {frame:.1f}%, outcome acc {outcome:.1f}%, "
                 f"first losses {[round(x, 3) for x in first]}, {elapsed:.0f}s")


@needs_data
def test_criterion_05_correlation_baseline():
    start = time.perf_counter()
    root = Path(DATA_ROOT)
    train, _, test = split_by_participant(load_dataset(root), load_split_spec(root / "split.json"))
    report = evaluate_baseline(fit_correlation(train), test).values()
    diffs = {k: report[k] - v for k, v in CORRELATION_ROW.items()}
    elapsed = time.perf_counter() - start
    ok = all(abs(d) <= 1.0 for d in diffs.values())
    check(5, ok, "correlation baseline: " + ", ".join(f"{k} {report[k]:.1f}" for k in CORRELATION_ROW)
          + f" ({elapsed:.0f}s)")


@needs_data
def test_criterion_06_dataset_integrity():
    root = Path(DATA_ROOT)
    trials = load_dataset(root)
    sizes = tuple(len(part) for part in split_by_participant(trials, load_split_spec(root / "split.json")))
    counts = dataset_table(trials)
    expected = {(p, t, o): n for (p, t), cells in TABLE2.items() for o, n in cells.items()}
    wrong = {k: (counts.get(k, 0), n) for k, n in expected.items() if counts.get(k, 0) != n}
    extra = set(counts) - set(expected)
    ok = len(trials) == 589 and sizes == SPLIT_SIZES and not wrong and not extra
    check(6, ok, f"dataset integrity: {len(trials)} trials, split {sizes}, mismatched cells {wrong or 'none'}")


def test_criterion_07_resampling():
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(100):
        lengths = [int(x) for x in rng.integers(1, 300, 3)]
        fwd = resample_indices(lengths, 100)
        inv = inverse_resample_indices(lengths, 100)
        bad += fwd.tolist() != resample_oracle(lengths, 100)
        bad += inv.tolist() != inverse_resample_oracle(lengths, 100)
        # resampled -> original -> resampled lands on a position holding the same source frame
        bad += not np.array_equal(fwd[inv[fwd]], fwd)
    check(7, bad == 0, f"resampling: {bad} failures over 100 length triples")


def test_criterion_08_determinism(tmp_path):
    generate_suite(2, tmp_path / "suite", seed=11)
    data = ExperimentData(tmp_path / "suite")
    fast = dict(epochs=3, layers=4, channels=16, seeds=(0, 1), out_dir=str(tmp_path / "r"))
    configs = [ExperimentConfig("mstcn-b", heads=("cls", "seg_h", "seg_r"), **fast),
               ExperimentConfig("i3d-d", clip_len=8, video_width=4, flow_method="farneback", **fast),
               ExperimentConfig("correlation", **fast)]
    same = []
    for cfg in configs:
        a, b = run_experiment(cfg, data), run_experiment(cfg, data)
        same.append([r.to_json() for r in a.runs] == [r.to_json() for r in b.runs]
                    and a.report.to_json() == b.report.to_json() and a.histories == b.histories)
    check(8, all(same), f"determinism: identical reruns {dict(zip([c.model for c in configs], same))}")


def test_criterion_09_parameter_counts():
    counts = {m: {v: count_parameters(build_classifier(v, [m])) for v in "ABCD"}
              for m in ("rgb", "flow", "ft", "gripper")}
    ok = all(len(set(c.values())) == 1 for c in counts.values())
    check(9, ok, "architecture sanity: " + ", ".join(f"{m} {set(c.values())}" for m, c in counts.items()))


@needs_data
def test_criterion_10_full_scale_stretch(tmp_path):
    data = ExperimentData(DATA_ROOT)
    if data.backbone_version is None:
        skip(10, "no cached backbone features; run `hfd extract-features` first")
    got = {}
    for model, mods, heads in (("mstcn-a", ("V", "FT", "G"), ("cls", "seg_h")), ("i3d-a", ("V",), ("cls",))):
        row = run_experiment(ExperimentConfig(model, mods, heads, clip_len=CLIP_LEN, out_dir=str(tmp_path)), data)
        got[model] = row.report.outcome_accuracy
    ok = all(abs(got[m] - t) <= 5.0 for m, t in STRETCH_TARGETS.items())
    check(10, ok, "full-scale stretch: " + ", ".join(f"{m} {got[m]:.1f} (target {t})"
                                                       for m, t in STRETCH_TARGETS.items()))
