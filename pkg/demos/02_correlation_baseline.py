"""The non-learned baseline: most frequent human action per robot action and progress decile.

Run: python demos/02_correlation_baseline.py [dataset_root]
Without a dataset root a synthetic suite is generated in a temporary directory.
"""

import sys
import tempfile
from pathlib import Path

from hfd.correlation import decision_table, evaluate_baseline, fit_correlation
from hfd.dataset import load_dataset, load_split_spec, split_by_participant
from hfd.labels import HumanAction, RobotActionModel
from hfd.synthetic import generate_suite

if len(sys.argv) > 1:
    root = Path(sys.argv[1])
else:
    root = Path(tempfile.mkdtemp()) / "suite"
    generate_suite(4, root, seed=0, write_features=False)

train, _, test = split_by_participant(load_dataset(root), load_split_spec(root / "split.json"))
table = fit_correlation(train)
print(f"fitted on {len(train)} trials, {table.counts.sum()} frames; empty cells: {table.empty_cells or 'none'}")

# the decision table: one predicted human action per (robot action, decile)
decision = decision_table(table)
for r, row in zip(RobotActionModel, decision):
    print(f"{r.label:>9}: " + " ".join(f"{HumanAction(int(h)).label[:6]:>6}" for h in row))

report = evaluate_baseline(table, test)
print(f"\ntest split ({len(test)} trials):", {k: report.format(k) for k in report.values()})
