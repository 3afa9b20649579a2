"""Reproduce the segmentation table on a synthetic suite and render the report.

Run: python demos/04_reproduce_a_table.py [out_dir]
The same grid runs on recorded data with ``hfd reproduce --table 4``.
"""

import sys
import tempfile
from pathlib import Path

from hfd.experiments import ExperimentData, reproduce_table
from hfd.report import render_report
from hfd.synthetic import generate_suite

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
generate_suite(3, out / "suite", seed=0)
data = ExperimentData(out / "suite")

# fewer epochs and seeds than the full protocol keep this to a few minutes on CPU
csv_path = reproduce_table(4, data, out / "results", epochs=10, seeds=(0, 1, 2))
print(csv_path.read_text())
for path in render_report(out / "results"):
    print("wrote", path)
