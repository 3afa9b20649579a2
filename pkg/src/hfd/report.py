"""CSV summaries and simple plots of stored result rows."""

from __future__ import annotations

import csv
from pathlib import Path

from .experiments import load_rows, write_csv

METRIC_KEYS = ("outcome_accuracy", "frame_accuracy", "f1@10", "f1@25", "f1@50")


def summary_rows(rows) -> list[dict]:
    out = []
    for row in rows:
        cfg = row.config
        entry = {
            "fingerprint": row.fingerprint,
            "model": cfg["model"],
            "modalities": "+".join(cfg["modalities"]),
            "heads": "+".join(cfg["heads"]),
            "train_platform": cfg.get("train_platform") or "",
            "test_platform": cfg.get("test_platform") or "",
            "task": cfg.get("task") or "",
            "n_runs": 0 if row.report is None else row.report.n_runs,
            "complete": row.complete,
        }
        for key in METRIC_KEYS:
            entry[key] = "" if row.report is None else row.report.format(key)
        out.append(entry)
    return out


def _parse_cell(text: str) -> tuple[float, float] | None:
    parts = text.replace("±", " ").split()
    try:
        return float(parts[0]), float(parts[1]) if len(parts) > 1 else 0.0
    except (IndexError, ValueError):
        return None


def plot_curves(rows, path) -> Path | None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = [(row, seed, h) for row in rows for seed, h in row.histories.items() if h.get("train_loss")]
    if not curves:
        return None
    fig, ax = plt.subplots(figsize=(7, 4))
    for row, seed, h in curves:
        ax.plot(range(1, len(h["train_loss"]) + 1), h["train_loss"], lw=1,
                label=f"{row.config['model']} {row.fingerprint[:6]} s{seed}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    if len(curves) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_table(csv_path, path) -> Path | None:
    """Bar chart of every numeric cell in a table CSV, with std as error bars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(csv_path, newline="") as fh:
        records = list(csv.DictReader(fh))
    bars = []
    for rec in records:
        label = " ".join(str(rec[k]) for k in ("ID", "Inputs", "Model") if rec.get(k))
        for key, value in rec.items():
            cell = _parse_cell(value or "")
            if cell is not None and key not in ("ID",):
                bars.append((f"{label} {key}", *cell))
    if not bars:
        return None
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(bars)), 4))
    ax.bar(range(len(bars)), [b[1] for b in bars], yerr=[b[2] for b in bars], capsize=2)
    ax.set_xticks(range(len(bars)), [b[0] for b in bars], rotation=75, ha="right", fontsize=7)
    ax.set_ylabel("%")
    ax.set_ylim(0, 100)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_report(results_dir, out_dir=None) -> list[Path]:
    results_dir = Path(results_dir)
    out_dir = Path(out_dir or results_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = load_rows(results_dir)
    written = []
    if rows:
        summary = summary_rows(rows)
        written.append(write_csv(out_dir / "results.csv", list(summary[0]), summary))
        curves = plot_curves(rows, out_dir / "curves.png")
        if curves:
            written.append(curves)
    for table in sorted(results_dir.glob("table*.csv")):
        chart = plot_table(table, out_dir / f"{table.stem}.png")
        if chart:
            written.append(chart)
    return written
