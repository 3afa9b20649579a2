import warnings

import numpy as np
import pytest
import torch

from hfd.synthetic import generate_suite, generate_trial, random_script, suite_cells

torch.set_num_threads(max(1, min(4, torch.get_num_threads())))


@pytest.fixture(scope="session")
def suite_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    generate_suite(2, root, seed=7)
    return root


@pytest.fixture(scope="session")
def cell_trials():
    """One generated (aligned trial, feature sequence) pair per (task, outcome) cell."""
    out = {}
    for i, (task, outcome) in enumerate(suite_cells()):
        out[(task, outcome)] = generate_trial(random_script(task, outcome, seed=100 + i))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_degenerate():
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        yield


def pytest_terminal_summary(terminalreporter):
    import sys

    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(f"criterion {n:2d}: {results[n]}")
