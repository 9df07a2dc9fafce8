"""Shared fixtures and the acceptance-summary hook."""
import re

import numpy as np
import pytest

from sivo.geometry import Pose3, exp_se3


def make_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """Random symmetric positive-definite matrix, comfortably conditioned."""
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def random_pose(rng: np.random.Generator, trans_scale: float = 2.0) -> Pose3:
    xi = np.concatenate([
        rng.uniform(-trans_scale, trans_scale, 3),
        rng.uniform(-np.pi / 2, np.pi / 2, 3),
    ])
    return exp_se3(xi)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m:
                lines.append((int(m.group(1)), m.group(2), status.upper()))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, status in sorted(lines):
        mark = "PASS" if status == "PASSED" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} [{mark}] {name}")
