"""Shared fixtures: a synthetic data root laid out like the real files.

FD003 is deliberately absent so tests can exercise the missing-subset error
paths; the first test unit of every subset is censored entirely inside the
target plateau so beta-mode exclusion handling is visible.
"""

from __future__ import annotations

import numpy as np
import pytest

from cosmo_rul import Trajectory, synthesize_fleet, write_cmapss, write_rul_file

SYNTH_SUBSETS = {"FD001": 1, "FD002": 3, "FD004": 6}

# one line per acceptance criterion, echoed after the test summary so the
# verdicts stay visible under default output capture
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def build_data_root(root, n_train: int = 9, n_test: int = 5, seed_base: int = 101) -> None:
    for i, (subset_id, n_conditions) in enumerate(SYNTH_SUBSETS.items()):
        train = synthesize_fleet(
            n_train,
            n_conditions,
            fault_onset_range=(40, 60),
            seed=seed_base + i,
            post_onset_life=(60, 90),
        )
        write_cmapss(train, root / f"train_{subset_id}.txt")

        full = synthesize_fleet(
            n_test,
            n_conditions,
            fault_onset_range=(40, 60),
            seed=seed_base + 50 + i,
            post_onset_life=(60, 90),
        )
        rng = np.random.default_rng(seed_base + 90 + i)
        truncated = []
        ruls = []
        for traj in full:
            keep = int(rng.integers(40, traj.n_cycles - 5))
            truncated.append(Trajectory(unit_id=traj.unit_id, samples=traj.samples[:keep]))
            ruls.append(traj.n_cycles - keep)
        ruls[0] = 200  # censored deep in the plateau: excluded from MAPE
        write_cmapss(truncated, root / f"test_{subset_id}.txt")
        write_rul_file(ruls, root / f"RUL_{subset_id}.txt")


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic_data_root")
    build_data_root(root)
    return root
