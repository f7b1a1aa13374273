from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_spd(rng, m, batch=()):
    B = rng.normal(size=tuple(batch) + (m, m))
    return B @ np.swapaxes(B, -1, -2) + m * np.eye(m)


class Geom:
    """Pointwise metric batch with the attributes densities expect."""

    def __init__(self, g):
        self.g = g
        self.ginv = np.linalg.inv(g)
        self.sqrt_det = np.sqrt(np.linalg.det(g))


def smooth_field(grid, comps, n, rng, amp=0.3):
    """Sum of low Fourier modes on the grid's box; periodic on periodic axes."""
    out = np.zeros(grid.shape + (comps, n))
    X = grid.mesh()
    L = grid.lengths
    for c in range(comps):
        for a in range(n):
            val = np.ones(grid.shape)
            for i in range(grid.m):
                kk = rng.integers(1, 3)
                ph = rng.uniform(0, 2 * np.pi)
                val = val * np.sin(2 * np.pi * kk * X[i] / L[i] + ph)
            out[..., c, a] = amp * val
    return out


def wavy_metric_2d(X, Y):
    g11 = 1 + 0.2 * np.sin(X) ** 2
    g12 = 0.1 * np.cos(Y) * np.ones_like(X)
    g22 = 1 + 0.1 * np.cos(X + Y) ** 2
    return np.stack([np.stack([g11, g12], -1), np.stack([g12, g22], -1)], -2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


seeds = st.integers(0, 2**32 - 1)


@st.composite
def form_case(draw, max_n=3):
    """(m, k, n, seed) with 1 <= m <= 3, 0 <= k <= m."""
    m = draw(st.integers(1, 3))
    k = draw(st.integers(0, m))
    n = draw(st.integers(1, max_n))
    return m, k, n, draw(seeds)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
