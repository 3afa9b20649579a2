"""Command line entry point: ``hfd <subcommand> ...``.

Dataset and cache locations default to ``$HFD_DATA_ROOT`` and ``$HFD_CACHE_DIR``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("hfd")


def _root(args) -> Path:
    root = args.root or os.environ.get("HFD_DATA_ROOT")
    if not root:
        raise SystemExit("no dataset root: pass --root or set HFD_DATA_ROOT")
    return Path(root)


def _cache(args, root: Path) -> Path:
    return Path(args.cache_dir or os.environ.get("HFD_CACHE_DIR") or root / "features")


def _data(args):
    from .experiments import ExperimentData

    root = _root(args)
    return ExperimentData(root, _cache(args, root), args.backbone)


def _dump(obj) -> None:
    print(json.dumps(obj, indent=1))


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    from .dataset import dataset_table, iter_trial_dirs, load_split_spec, load_trial, split_by_participant
    from .errors import HFDError
    from .experiments import write_csv

    root = _root(args)
    trials, errors = [], {}
    for path in iter_trial_dirs(root):
        try:
            trials.append(load_trial(path))
        except HFDError as exc:
            errors[path.name] = f"{type(exc).__name__}: {exc}"
    counts = dataset_table(trials)
    rows = [{"robot": p, "task": t, "outcome": o, "count": n} for (p, t, o), n in sorted(counts.items())]
    summary = {"trials": len(trials), "errors": errors}
    split_path = root / "split.json"
    if split_path.exists():
        train, val, test = split_by_participant(trials, load_split_spec(split_path))
        summary["split"] = {"train": len(train), "val": len(val), "test": len(test)}
    if args.out:
        write_csv(args.out, ["robot", "task", "outcome", "count"], rows)
    _dump({**summary, "cells": rows})
    return 1 if errors and args.strict else 0


def cmd_synth(args) -> int:
    from .synthetic import generate_suite

    info = generate_suite(args.n, args.out, seed=args.seed, n_participants=args.participants,
                          write_features=not args.no_features)
    _dump({"root": str(info.root), "trials": len(info.trial_ids), "split": info.split})
    return 0


def cmd_extract_features(args) -> int:
    from .dataset import align_to_frames, iter_trial_dirs, load_trial
    from .features import TwoStreamBackbone, cache_path, extract_frame_features, save_features

    root = _root(args)
    cache = _cache(args, root)
    backbone = TwoStreamBackbone(seed=args.seed)
    written = 0
    for path in iter_trial_dirs(root):
        if not args.overwrite and cache_path(cache, path.name, backbone.version).exists():
            continue
        seq = extract_frame_features(align_to_frames(load_trial(path)), backbone, flow_method=args.flow_method)
        save_features(seq, cache, path.name, backbone.version)
        written += 1
        log.info("features for %s", path.name)
    _dump({"cache": str(cache / backbone.version), "written": written})
    return 0


def _train_trials(args):
    from .dataset import load_dataset, load_split_spec, split_by_participant

    root = _root(args)
    return split_by_participant(load_dataset(root), load_split_spec(root / "split.json"))


def cmd_fit_baseline(args) -> int:
    from .correlation import fit_correlation

    train, _, _ = _train_trials(args)
    table = fit_correlation(train, nominal_only=args.nominal_only, fitted_on="train")
    table.save(args.out)
    _dump({"table": str(args.out), "trials": len(train), "empty_cells": table.empty_cells})
    return 0


def cmd_eval_baseline(args) -> int:
    from .correlation import CorrelationTable, evaluate_baseline

    _, _, test = _train_trials(args)
    report = evaluate_baseline(CorrelationTable.load(args.table), test)
    _dump({"trials": len(test), **report.values()})
    return 0


def _config(args):
    from .experiments import ExperimentConfig

    overrides = {"epochs": args.epochs, "out_dir": args.out_dir,
                 "seeds": None if args.seeds is None else tuple(args.seeds)}
    if args.config:
        return ExperimentConfig.load(args.config, **overrides)
    if not args.model:
        raise SystemExit("pass --config or --model")
    heads = tuple(h for item in args.heads for h in item.replace(",", " ").split())
    fields = {"model": args.model, "modalities": tuple(args.modalities), "heads": heads}
    return ExperimentConfig(**fields, **{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args) -> int:
    from .experiments import run_experiment

    config = _config(args)
    row = run_experiment(config, _data(args), checkpoint_dir=args.checkpoint_dir)
    _dump({"fingerprint": row.fingerprint, "complete": row.complete, "failures": row.failures,
           "metrics": {k: row.report.format(k) for k in row.report.values()}})
    return 0 if row.complete else 1


def cmd_score(args) -> int:
    from .dataset import iter_trial_dirs, load_trial
    from .experiments import predictions_for, score_predictions, write_csv

    if args.checkpoint:
        predictions = predictions_for(args.checkpoint, _data(args), args.split)
        if args.write_predictions:
            out = Path(args.write_predictions)
            out.mkdir(parents=True, exist_ok=True)
            for trial_id, doc in predictions.items():
                (out / f"{trial_id}.json").write_text(json.dumps(doc))
    elif args.predictions:
        predictions = {p.stem: json.loads(p.read_text()) for p in sorted(Path(args.predictions).glob("*.json"))}
    else:
        raise SystemExit("pass --checkpoint or --predictions")
    root = _root(args)
    annotations = {p.name: load_trial(p).annotations for p in iter_trial_dirs(root) if p.name in predictions}
    report = score_predictions(predictions, annotations)
    if args.csv:
        keys = list(report.values())
        write_csv(args.csv, ["trials", *keys], [{"trials": len(predictions), **{k: report.format(k) for k in keys}}])
    _dump({"trials": len(predictions), **report.values()})
    return 0


def cmd_reproduce(args) -> int:
    from .experiments import reproduce_table

    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seeds is not None:
        overrides["seeds"] = tuple(args.seeds)
    path = reproduce_table(args.table, _data(args), args.out_dir, **overrides)
    print(Path(path).read_text(), end="")
    return 0


def cmd_report(args) -> int:
    from .report import render_report

    paths = render_report(args.results, args.out or args.results)
    _dump([str(p) for p in paths])
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hfd", description="Handover failure detection experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, features=True):
        p.add_argument("--root", "--dataset", dest="root", help="dataset root (default $HFD_DATA_ROOT)")
        if features:
            p.add_argument("--cache-dir", help="feature cache (default $HFD_CACHE_DIR or <root>/features)")
            p.add_argument("--backbone", help="backbone version subdirectory of the cache")

    p = sub.add_parser("ingest", help="load and validate every trial; print per-cell counts")
    data_args(p, features=False)
    p.add_argument("--out", help="write the per-cell counts as CSV")
    p.add_argument("--strict", action="store_true", help="exit non-zero if any trial fails to load")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write a synthetic suite in the on-disk trial layout")
    p.add_argument("--n", type=int, default=10, help="trials per (task, outcome) cell")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--participants", type=int, default=6)
    p.add_argument("--no-features", action="store_true", help="skip the pseudo-backbone feature cache")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract-features", help="compute per-frame backbone features into the cache")
    p.add_argument("--root", "--dataset", dest="root", help="dataset root (default $HFD_DATA_ROOT)")
    p.add_argument("--cache-dir", "--out", dest="cache_dir", help="feature cache (default $HFD_CACHE_DIR)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flow-method", "--flow-alg", dest="flow_method", default="tvl1", choices=["tvl1", "farneback"])
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("fit-baseline", help="fit the correlation baseline on the training split")
    data_args(p, features=False)
    p.add_argument("--out", required=True)
    p.add_argument("--nominal-only", action="store_true", help="fit on successful trials only")
    p.set_defaults(func=cmd_fit_baseline)

    p = sub.add_parser("eval-baseline", help="evaluate a fitted baseline on the test split")
    data_args(p, features=False)
    p.add_argument("--table", required=True)
    p.set_defaults(func=cmd_eval_baseline)

    def run_args(p):
        p.add_argument("--epochs", type=int)
        p.add_argument("--seeds", type=int, nargs="+")
        p.add_argument("--out-dir", default=None)

    p = sub.add_parser("train", help="run one experiment configuration over its seeds")
    data_args(p)
    p.add_argument("--config", help="flat YAML experiment config")
    p.add_argument("--model", help="model id when no config file is given")
    p.add_argument("--modalities", nargs="+", default=["V", "FT", "G"], help="e.g. rgb,flow,ft,gripper or V FT G")
    p.add_argument("--heads", nargs="+", default=["cls"], help="e.g. cls,seg_h")
    p.add_argument("--checkpoint-dir")
    run_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a checkpoint or prediction JSONs against the annotations")
    data_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--predictions", help="directory of <trial_id>.json prediction documents")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--write-predictions", help="directory for the checkpoint's prediction JSONs")
    p.add_argument("--csv", help="also write the metrics as a one-row CSV")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("reproduce", help="run every configuration of a result table")
    data_args(p)
    p.add_argument("--table", type=int, required=True)
    run_args(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("report", help="summarise stored result rows as CSV and plots")
    p.add_argument("--results", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "out_dir", "unset") is None and args.command == "reproduce":
        args.out_dir = "results"
    from .errors import HFDError

    try:
        return args.func(args)
    except (HFDError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
