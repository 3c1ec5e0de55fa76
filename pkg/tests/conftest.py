import csv
import functools

import numpy as np
import pytest

from beamkit.beamform import scenario_statistics, solve
from beamkit.channel import SystemConfig

ALL_KINDS = ["R1Corr", "R1Iid", "R1IidLB", "R2Corr", "R2Iid", "R3Corr", "R3Iid"]
ACCEPTANCE_LINES = {}


@functools.lru_cache(maxsize=None)
def solved(kind: str, **overrides):
    cfg = SystemConfig.standard(**overrides)
    stats = scenario_statistics(cfg, kind)
    return stats, solve(stats, kind, rng=np.random.default_rng(0))


@pytest.fixture
def cfg():
    return SystemConfig.standard()


def random_unit(rng, n):
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return z / np.linalg.norm(z)


def random_phases(rng, n):
    return np.exp(2j * np.pi * rng.random(n))


def read_csv(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], [[float(x) if x else None for x in r] for r in rows[1:]]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
