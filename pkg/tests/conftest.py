from functools import lru_cache

import numpy as np
import pytest

from blockbackstep.block_transform import bar_coefficients, build_transform
from blockbackstep.controller import make_control_law
from blockbackstep.kernel_solver import extract_gains, place_poles, solve_kernels
from blockbackstep.timoshenko import build_system, two_layer_benchmark


class Design:
    """Kernels, transform and control law for the two-layer beam at one grid size."""

    def __init__(self, G):
        self.cfg = two_layer_benchmark()
        self.sys, self.om = build_system(self.cfg)
        self.Phi0, self.margin = place_poles(self.sys.A, self.sys.B, -6 * np.eye(4))
        self.G = G
        self.bt = build_transform(self.sys, G)
        self.bar = bar_coefficients(self.sys, self.bt)
        self.ks = solve_kernels(self.sys, self.bar, self.bt, self.Phi0)
        self.gains = extract_gains(self.ks, self.bt)
        self.law = make_control_law(self.gains)


@lru_cache(maxsize=None)
def beam_design(G: int) -> Design:
    return Design(G)


@pytest.fixture(scope="session")
def bench():
    cfg = two_layer_benchmark()
    sys, om = build_system(cfg)
    return cfg, sys, om


@pytest.fixture(scope="session")
def design50():
    return beam_design(50)


@pytest.fixture(scope="session")
def design100():
    return beam_design(100)


ACCEPTANCE: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> str:
    """Store and print the one-line verdict for acceptance criterion ``n``."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2d}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
