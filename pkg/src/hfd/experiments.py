"""Config-driven experiment runs, result rows and table reproduction."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
import uuid
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, EmptyList, UnsupportedTable
from .labels import Platform, Task
from .metrics import MetricsReport, THRESHOLDS, aggregate_runs, dataset_f1, dataset_frame_accuracy

log = logging.getLogger(__name__)

MODELS = ("i3d-a", "i3d-b", "i3d-c", "i3d-d", "mstcn-a", "mstcn-b", "correlation")
MODALITIES = ("V", "FT", "G")
HEADS = ("cls", "seg_h", "seg_r")
STREAMS_OF = {"V": ("rgb", "flow"), "FT": ("ft",), "G": ("gripper",)}
PLATFORM_CODES = {"T": Platform.HSR, "K": Platform.KINOVA_GEN3}

# fields that do not change what is computed
_NON_IDENTITY = ("out_dir", "name")


_MODALITY_ALIASES = {"v": "V", "video": "V", "rgb": "V", "flow": "V", "ft": "FT", "f-t": "FT",
                     "force-torque": "FT", "g": "G", "gripper": "G"}


def parse_modalities(values) -> tuple[str, ...]:
    """``"rgb,flow,ft"``, ``["V", "FT"]`` ... -> modality codes; both video streams make up ``V``."""
    items = values.replace(",", " ").split() if isinstance(values, str) else list(values)
    out = []
    for item in items:
        for part in str(item).replace(",", " ").split():
            code = _MODALITY_ALIASES.get(part.lower())
            if code is None:
                raise ConfigError(f"unknown modality {part!r}")
            out.append(code)
    return tuple(m for m in MODALITIES if m in out)


def _ordered(values, universe, what):
    values = [values] if isinstance(values, str) else list(values)
    unknown = set(values) - set(universe)
    if unknown:
        raise ConfigError(f"unknown {what}: {sorted(unknown)}")
    return tuple(v for v in universe if v in set(values))


@dataclass
class ExperimentConfig:
    model: str
    modalities: tuple[str, ...] = MODALITIES
    heads: tuple[str, ...] = ("cls",)
    # 0 trains the segmentation heads only; the outcome head is then reported but not optimised
    cls_weight: float = 1.0
    train_platform: str | None = None
    test_platform: str | None = None
    task: str | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    epochs: int = 50
    patience: int = 10
    lr: float | None = None
    channels: int = 64
    layers: int = 10
    stages: int = 2
    clip_len: int = 64
    video_width: int = 16
    flow_method: str = "tvl1"
    out_dir: str = "results"
    name: str = ""

    def __post_init__(self):
        self.model = str(self.model).lower()
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS}")
        self.modalities = parse_modalities(self.modalities)
        self.heads = _ordered(self.heads, HEADS, "loss heads")
        self.seeds = tuple(int(s) for s in ([self.seeds] if isinstance(self.seeds, int) else self.seeds))
        if not self.modalities:
            raise ConfigError("modality set must be non-empty")
        if "cls" not in self.heads:
            raise ConfigError("loss-head set must contain cls")
        if "seg_r" in self.heads and self.model != "mstcn-b":
            raise ConfigError("seg_r is only available for mstcn-b")
        if self.model.startswith("i3d") and self.heads != ("cls",):
            raise ConfigError("I3D classifiers only have the outcome head")
        if self.cls_weight not in (0, 1, 0.0, 1.0):
            raise ConfigError("cls_weight must be 0 or 1")
        if self.cls_weight == 0 and not self.model.startswith("mstcn"):
            raise ConfigError("cls_weight 0 only makes sense for MS-TCN models")
        if self.cls_weight == 0 and "seg_h" not in self.heads:
            raise ConfigError("cls_weight 0 needs a segmentation head")
        for key in ("train_platform", "test_platform"):
            value = getattr(self, key)
            if value is not None:
                setattr(self, key, PLATFORM_CODES[value].value if value in PLATFORM_CODES
                        else Platform.parse(value).value)
        if self.task is not None:
            self.task = Task.parse(self.task).value
        if not self.seeds:
            raise ConfigError("need at least one seed")

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("modalities", "heads", "seeds"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_yaml())
        return path

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        d = yaml.safe_load(Path(path).read_text()) or {}
        if any(isinstance(v, dict) for v in d.values()):
            raise ConfigError("config files are flat key-value documents")
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)

    @property
    def fingerprint(self) -> str:
        identity = {k: v for k, v in self.to_dict().items() if k not in _NON_IDENTITY}
        blob = json.dumps(identity, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def streams(self) -> tuple[str, ...]:
        return tuple(s for m in self.modalities for s in STREAMS_OF[m])


# ---------------------------------------------------------------------------
# data access


class ExperimentData:
    """Trials, cached features and the participant split of one dataset root.

    ``cache_dir`` defaults to ``$HFD_CACHE_DIR`` and then ``<root>/features``;
    the backbone version is the only subdirectory of the cache when not given.
    """

    def __init__(self, root, cache_dir=None, backbone_version: str | None = None, split=None):
        from .dataset import load_split_spec, parse_split_spec

        self.root = Path(root)
        cache = cache_dir or os.environ.get("HFD_CACHE_DIR") or self.root / "features"
        self.cache_dir = Path(cache)
        if backbone_version is None:
            versions = sorted(p.name for p in self.cache_dir.glob("*") if p.is_dir()) if self.cache_dir.exists() else []
            backbone_version = versions[0] if len(versions) == 1 else None
        self.backbone_version = backbone_version
        if split is None:
            split = load_split_spec(self.root / "split.json")
        self.split = parse_split_spec(split)
        self._sequences = None
        self._trials: dict = {}
        self._clips: dict = {}

    @property
    def feature_dir(self) -> Path:
        if self.backbone_version is None:
            raise ConfigError(f"cannot tell which backbone version to use under {self.cache_dir}")
        return self.cache_dir / self.backbone_version

    def sequences(self) -> list:
        from .features import load_feature_dir

        if self._sequences is None:
            self._sequences = load_feature_dir(self.feature_dir)
            if not self._sequences:
                raise EmptyList(f"no cached features under {self.feature_dir}")
        return self._sequences

    def trial(self, trial_id: str):
        from .dataset import align_to_frames, load_trial

        if trial_id not in self._trials:
            self._trials[trial_id] = align_to_frames(load_trial(self.root / trial_id))
        return self._trials[trial_id]

    def clip(self, trial_id: str, n: int, flow_method: str):
        from .features import pairwise_flow, sample_uniform_clip

        key = (trial_id, n, flow_method)
        if key not in self._clips:
            self._clips[key] = sample_uniform_clip(self.trial(trial_id), n,
                                                   flow_fn=partial(pairwise_flow, method=flow_method))
        return self._clips[key]

    def select(self, config: ExperimentConfig):
        """Train / val / test sequences after the platform and task filters."""
        from .dataset import split_by_participant

        def keep(seq, platform):
            if config.task is not None and seq.task is not None and seq.task.value != config.task:
                return False
            return platform is None or seq.platform is None or seq.platform.value == platform

        train, val, test = split_by_participant(self.sequences(), self.split)
        train = [s for s in train if keep(s, config.train_platform)]
        val = [s for s in val if keep(s, config.train_platform)]
        test = [s for s in test if keep(s, config.test_platform)]
        if not train or not test:
            raise EmptyList(f"empty train or test split for {config.model} "
                            f"({config.train_platform}->{config.test_platform}, task {config.task})")
        return train, val, test

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.split, sort_keys=True).encode())
        for path in sorted(self.feature_dir.glob("*")):
            h.update(path.name.encode())
            h.update(path.read_bytes())
        return h.hexdigest()[:16]


def code_version() -> str:
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


# ---------------------------------------------------------------------------
# single runs


def evaluate_segmenter(model, test) -> MetricsReport:
    from .segmentation import predict

    preds = [predict(model, s) for s in test]
    human = [p.human_track for p in preds], [s.human_actions for s in test]
    return MetricsReport(
        outcome_accuracy=100.0 * float(np.mean([p.outcome == s.outcome for p, s in zip(preds, test)])),
        frame_accuracy=dataset_frame_accuracy(*human),
        f1_at=dataset_f1(*human, THRESHOLDS),
    )


def evaluate_classifier(model, clips) -> MetricsReport:
    from .classifiers import predict_outcomes

    preds = predict_outcomes(model, clips)
    return MetricsReport(outcome_accuracy=100.0 * float(np.mean(preds == np.array([int(c.label) for c in clips]))))


def run_correlation(config: ExperimentConfig, data: ExperimentData, seed: int):
    from .correlation import evaluate_baseline, fit_correlation

    train, _, test = data.select(config)
    table = fit_correlation(train)
    return evaluate_baseline(table, test), {}, None


def run_mstcn(config: ExperimentConfig, data: ExperimentData, seed: int):
    from .segmentation import MstcnConfig, build_segmenter, train_segmenter

    train, val, test = data.select(config)
    heads = config.heads if config.cls_weight else tuple(h for h in config.heads if h != "cls")
    mcfg = MstcnConfig(
        variant=config.model[-1].upper(), modalities=config.streams, heads=heads,
        stages=config.stages, layers_per_stage=config.layers, channels=config.channels,
        epochs=config.epochs, patience=config.patience, seed=seed,
        **({"lr": config.lr} if config.lr is not None else {}),
    )
    model = build_segmenter(mcfg)
    history = train_segmenter(model, train, val or None)
    return evaluate_segmenter(model, test), asdict(history), model


def run_i3d(config: ExperimentConfig, data: ExperimentData, seed: int):
    from .classifiers import ClassifierConfig, build_classifier, train_classifier

    train, val, test = data.select(config)
    clips = lambda seqs: [data.clip(s.trial_id, config.clip_len, config.flow_method) for s in seqs]
    ccfg = ClassifierConfig(
        variant=config.model[-1].upper(), modalities=config.streams, video_width=config.video_width,
        clip_len=config.clip_len, epochs=config.epochs, patience=config.patience, seed=seed,
        **({"lr_head": config.lr} if config.lr is not None else {}),
    )
    model = build_classifier(ccfg.variant, ccfg.modalities, ccfg)
    history = train_classifier(model, clips(train), clips(val) or None)
    return evaluate_classifier(model, clips(test)), asdict(history), model


RUNNERS = {"correlation": run_correlation, "mstcn-a": run_mstcn, "mstcn-b": run_mstcn}
RUNNERS.update({m: run_i3d for m in MODELS if m.startswith("i3d")})


# ---------------------------------------------------------------------------
# result rows


@dataclass
class ResultRow:
    fingerprint: str
    config: dict
    report: MetricsReport | None
    runs: list[MetricsReport] = field(default_factory=list)
    wall_clock: float = 0.0
    provenance: dict = field(default_factory=dict)
    complete: bool = True
    failures: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "config": self.config,
            "report": None if self.report is None else self.report.to_json(),
            "runs": [r.to_json() for r in self.runs],
            "wall_clock": self.wall_clock,
            "provenance": self.provenance,
            "complete": self.complete,
            "failures": self.failures,
            "histories": self.histories,
        }

    @classmethod
    def from_json(cls, d) -> "ResultRow":
        return cls(d["fingerprint"], d["config"],
                   None if d.get("report") is None else MetricsReport.from_json(d["report"]),
                   [MetricsReport.from_json(r) for r in d.get("runs", [])], d.get("wall_clock", 0.0),
                   d.get("provenance", {}), d.get("complete", True), d.get("failures", {}), d.get("histories", {}))


def save_row(row: ResultRow, out_dir) -> Path:
    """Append a row to the results store; never overwrites an existing file."""
    from .features import _atomic_write

    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    path = Path(out_dir) / "rows" / f"{row.fingerprint}_{stamp}_{uuid.uuid4().hex[:8]}.json"
    _atomic_write(path, lambda tmp: Path(tmp).write_text(json.dumps(row.to_json(), indent=1)))
    return path


def load_rows(out_dir) -> list[ResultRow]:
    return [ResultRow.from_json(json.loads(p.read_text())) for p in sorted((Path(out_dir) / "rows").glob("*.json"))]


def save_model(model, path, config: ExperimentConfig, seed: int) -> Path:
    from . import classifiers, segmentation

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    module = segmentation if isinstance(model, segmentation.MSTCN) else classifiers
    module.save_checkpoint(model, path, experiment=config.to_dict(), seed=seed)
    return path


def load_model(path):
    """``(model, experiment config)`` from a checkpoint written by :func:`save_model`."""
    import torch

    from . import classifiers, segmentation

    ckpt = torch.load(path, weights_only=False)
    module = segmentation if ckpt.get("kind") == "mstcn" else classifiers
    experiment = ckpt.get("experiment")
    return module.load_checkpoint(path), None if experiment is None else ExperimentConfig.from_dict(experiment)


def score_checkpoint(path, data: ExperimentData, split: str = "test") -> MetricsReport:
    """Evaluate a saved model on one split, applying the filters it was trained with."""
    from .segmentation import MSTCN

    model, config = load_model(path)
    if config is None:
        raise ConfigError(f"{path} was not written by an experiment run")
    parts = dict(zip(("train", "val", "test"), data.select(config)))
    if split not in parts:
        raise ConfigError(f"unknown split {split!r}")
    seqs = parts[split]
    if isinstance(model, MSTCN):
        return evaluate_segmenter(model, seqs)
    return evaluate_classifier(model, [data.clip(s.trial_id, config.clip_len, config.flow_method) for s in seqs])


def predictions_for(path, data: ExperimentData, split: str = "test") -> dict[str, dict]:
    """Per-trial prediction JSON documents from a saved model."""
    from .segmentation import MSTCN, predict

    model, config = load_model(path)
    if config is None:
        raise ConfigError(f"{path} was not written by an experiment run")
    seqs = dict(zip(("train", "val", "test"), data.select(config)))[split]
    if isinstance(model, MSTCN):
        return {s.trial_id: predict(model, s).to_json() for s in seqs}
    from .classifiers import predict_outcomes
    from .labels import OutcomeLabel

    clips = [data.clip(s.trial_id, config.clip_len, config.flow_method) for s in seqs]
    return {s.trial_id: {"outcome": OutcomeLabel(int(o)).label} for s, o in zip(seqs, predict_outcomes(model, clips))}


def score_predictions(predictions: dict[str, dict], annotations: dict) -> MetricsReport:
    """Score prediction documents (``human_track`` and/or ``outcome``) against annotation tracks."""
    from .labels import HumanAction, OutcomeLabel

    missing = set(predictions) - set(annotations)
    if missing:
        raise ConfigError(f"no annotations for {sorted(missing)}")
    ids = sorted(predictions)
    outcome = None
    if all("outcome" in predictions[i] for i in ids):
        hits = [OutcomeLabel.parse(predictions[i]["outcome"]) == annotations[i].outcome for i in ids]
        outcome = 100.0 * float(np.mean(hits))
    frame, f1 = None, {}
    if all(predictions[i].get("human_track") for i in ids):
        preds = [np.array([HumanAction.parse(h) for h in predictions[i]["human_track"]]) for i in ids]
        gts = [annotations[i].human_actions for i in ids]
        frame, f1 = dataset_frame_accuracy(preds, gts), dataset_f1(preds, gts, THRESHOLDS)
    return MetricsReport(outcome, frame, f1)


def run_experiment(config: ExperimentConfig, data: ExperimentData, persist: bool = True,
                   checkpoint_dir=None) -> ResultRow:
    """Train and evaluate once per seed, aggregate, and append the row to ``config.out_dir``."""
    runner = RUNNERS[config.model]
    start = time.perf_counter()
    runs, failures, histories, last_error = [], {}, {}, None
    for seed in config.seeds:
        try:
            report, history, model = runner(config, data, seed)
            if checkpoint_dir is not None and model is not None:
                save_model(model, Path(checkpoint_dir) / f"{config.fingerprint}_seed{seed}.pt", config, seed)
        except Exception as exc:  # recorded per seed; the row is marked incomplete
            log.warning("seed %d of %s failed: %s", seed, config.model, exc)
            failures[str(seed)] = f"{type(exc).__name__}: {exc}"
            last_error = exc
            continue
        runs.append(report)
        histories[str(seed)] = history
    row = ResultRow(
        fingerprint=config.fingerprint,
        config=config.to_dict(),
        report=aggregate_runs(runs) if runs else None,
        runs=runs,
        wall_clock=time.perf_counter() - start,
        provenance={"dataset": data.digest(), "code_version": code_version(), "seeds": list(config.seeds),
                    "backbone": data.backbone_version},
        complete=not failures,
        failures=failures,
        histories=histories,
    )
    if persist:
        save_row(row, config.out_dir)
    if not runs:
        raise last_error
    return row


# ---------------------------------------------------------------------------
# table grids


def _cfg(model, modalities, heads=("cls",), **kw) -> ExperimentConfig:
    return ExperimentConfig(model=model, modalities=modalities, heads=heads, **kw)


V, VFT, VG, VFTG = ("V",), ("V", "FT"), ("V", "G"), ("V", "FT", "G")
CH, CHS, CHSR = ("cls",), ("cls", "seg_h"), ("cls", "seg_h", "seg_r")

# (row id, model, modalities, heads); the published grid skips id 11
TABLE3 = [
    (1, "i3d-a", V, CH), (2, "i3d-a", ("FT",), CH), (3, "i3d-a", ("G",), CH),
    (4, "i3d-a", VFTG, CH), (5, "i3d-b", VFTG, CH), (6, "i3d-c", VFTG, CH), (7, "i3d-d", VFTG, CH),
    (8, "i3d-d", V, CH), (9, "i3d-d", VFT, CH), (10, "i3d-d", VG, CH), (12, "i3d-d", VFTG, CH),
    (13, "mstcn-a", V, CH), (14, "mstcn-a", V, CHS), (15, "mstcn-b", V, CH), (16, "mstcn-b", V, CHS),
    (17, "mstcn-b", V, CHSR),
    (18, "mstcn-a", VFT, CHS), (19, "mstcn-a", VG, CHS), (20, "mstcn-a", VFTG, CHS),
    (21, "mstcn-b", VFT, CHS), (22, "mstcn-b", VG, CHS), (23, "mstcn-b", VFTG, CHS), (24, "mstcn-b", VFTG, CHSR),
]

# (group, model, modalities, heads, cls_weight)
TABLE4 = [
    ("correlation", "correlation", VFTG, CH, 1.0),
    ("video", "mstcn-a", V, CHS, 1.0), ("video", "mstcn-b", V, CHSR, 1.0),
    ("video+ft+gripper", "mstcn-a", VFTG, CHS, 1.0), ("video+ft+gripper", "mstcn-b", VFTG, CHSR, 1.0),
    ("video+ft+gripper, seg_h only", "mstcn-a", VFTG, CHS, 0.0),
    ("video+ft+gripper, seg_h only", "mstcn-b", VFTG, CHS, 0.0),
]

# the generalisation tables use each model's best multimodal configuration
TRANSFER_MODELS = [("i3d-d", VFTG, CH), ("mstcn-a", VFTG, CHS), ("mstcn-b", VFTG, CHS)]
TABLE5_CELLS = [("T", "T"), ("T", "K"), ("K", "T"), ("K", "K")]
TABLE6_TASKS = ["R2H", "H2R"]


def table_configs(table_id: int, **overrides) -> list[tuple[dict, ExperimentConfig]]:
    """``(row keys, config)`` pairs in the table's row order."""
    if table_id == 3:
        return [({"ID": i, "Model": m.upper(), **{k: "x" if k in mods else "" for k in MODALITIES},
                  **{h: "x" if h in heads else "" for h in HEADS}}, _cfg(m, mods, heads, **overrides))
                for i, m, mods, heads in TABLE3]
    if table_id == 4:
        return [({"Inputs": group, "Model": m.upper() if m != "correlation" else "Correlation"},
                 _cfg(m, mods, heads, cls_weight=w, **overrides)) for group, m, mods, heads, w in TABLE4]
    if table_id == 5:
        return [({"Model": m.upper(), "Cell": f"{a}->{b}"},
                 _cfg(m, mods, heads, train_platform=a, test_platform=b, **overrides))
                for m, mods, heads in TRANSFER_MODELS for a, b in TABLE5_CELLS]
    if table_id == 6:
        return [({"Model": m.upper(), "Cell": task}, _cfg(m, mods, heads, task=task, **overrides))
                for m, mods, heads in TRANSFER_MODELS for task in TABLE6_TASKS]
    raise UnsupportedTable(f"table {table_id} is not an experiment table (choose 3, 4, 5 or 6)")


def _table_rows(table_id: int, keyed: list[tuple[dict, ResultRow | None]]) -> tuple[list[str], list[dict]]:
    fmt = lambda row, key: "" if row is None or row.report is None else row.report.format(key)
    if table_id == 3:
        header = ["ID", "Model", *MODALITIES, *HEADS, "Accuracy"]
        return header, [{**k, "Accuracy": fmt(r, "outcome_accuracy")} for k, r in keyed]
    if table_id == 4:
        header = ["Inputs", "Model", "F1@10", "F1@25", "F1@50", "Frame-wise acc"]
        return header, [{**k, "F1@10": fmt(r, "f1@10"), "F1@25": fmt(r, "f1@25"), "F1@50": fmt(r, "f1@50"),
                         "Frame-wise acc": fmt(r, "frame_accuracy")} for k, r in keyed]
    cells = [f"{a}->{b}" for a, b in TABLE5_CELLS] if table_id == 5 else TABLE6_TASKS
    out: dict[str, dict] = {}
    for k, r in keyed:
        out.setdefault(k["Model"], {"Model": k["Model"]})[k["Cell"]] = fmt(r, "outcome_accuracy")
    return ["Model", *cells], list(out.values())


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)
    return path


def reproduce_table(table_id: int, data: ExperimentData, out_dir="results", **overrides) -> Path:
    """Run every configuration of a result table and write ``table<N>.csv``.

    Identical configurations inside one table (e.g. a repeated row) are run
    once. ``overrides`` (epochs, seeds, ...) apply to every configuration.
    """
    configs = table_configs(table_id, out_dir=str(out_dir), **overrides)
    done: dict[str, ResultRow | None] = {}
    keyed = []
    for keys, config in configs:
        if config.fingerprint not in done:
            try:
                done[config.fingerprint] = run_experiment(config, data)
            except Exception as exc:
                log.error("table %d row %s failed: %s", table_id, keys, exc)
                done[config.fingerprint] = None
        keyed.append((keys, done[config.fingerprint]))
    header, rows = _table_rows(table_id, keyed)
    return write_csv(Path(out_dir) / f"table{table_id}.csv", header, rows)
