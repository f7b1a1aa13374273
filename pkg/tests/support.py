"""Scenario builders and residuals shared by the module and acceptance tests."""

from __future__ import annotations

from math import comb

import numpy as np

from artifact.connection import (LinearConnection, adjoint_rep, boundary_trace, charge_rep,
                                 cov_divergence, cov_ext_deriv, su2, u1)
from artifact.dynamics import FieldSystem, ForceModel, initial_state, simulate
from artifact.exterior import FormField, contract, integrate, pullback_data
from artifact.grid import Face, GridConfig, build_grid
from artifact.lagrangian import Higgs, KleinGordon, matter_density, ym_density
from conftest import smooth_field, wavy_metric_2d


def slope(h, v) -> float:
    return float(np.polyfit(np.log(h), np.log(v), 1)[0])


def divergence_residual(N: int, k: int, seed: int = 0, n: int = 2) -> float:
    """``int chi.d phi + (-1)^k int div chi.phi - boundary`` on the unit square.

    The smooth fields are fixed by ``seed`` and only resampled with N.
    """
    grid, _ = build_grid(GridConfig((N, N), (1 / (N - 1),) * 2, (False, False)))
    X, Y = grid.mesh()
    rng = np.random.default_rng(seed)

    def field(comps, amp=1.0):
        out = np.zeros(grid.shape + (comps, n))
        for c in range(comps):
            for a in range(n):
                p = rng.uniform(0.5, 2.0, 4)
                out[..., c, a] = amp * np.sin(p[0] * X + p[1]) * np.cos(p[2] * Y + p[3])
        return out

    m = 2
    gamma = np.zeros(grid.shape + (m, n, n))
    for i in range(m):
        gamma[..., i, :, :] = field(n, 0.5)
    conn = LinearConnection(gamma)
    chi = field(comb(m, k + 1))
    phi = FormField(field(comb(m, k)), k, m)
    dphi = cov_ext_deriv(conn, phi, grid).data
    div = cov_divergence(conn, chi, grid, k + 1)
    total = integrate(contract(chi, dphi, m, k + 1), grid)
    total += (-1) ** k * integrate(contract(div, phi.data, m, k), grid)
    for face in grid.faces():
        tr = boundary_trace(chi, grid, face, k + 1)
        total -= integrate(contract(tr, pullback_data(phi.data, k, m, grid, face), m - 1, k), grid, face)
    return abs(total)


# ---------------------------------------------------------------- scenarios

def kg_run(frac: float, N: int = 64, mass: float = 0.05, phase: float = np.pi / 4,
           periods: float = 10.0):
    """Periodic 1D standing wave; ``phase`` splits energy between kinetic and potential."""
    L = 2 * np.pi
    grid, metric = build_grid(GridConfig((N,), (L / N,), (True,)))
    kap = np.eye(1)
    system = FieldSystem(grid, metric, matter=matter_density(kap, KleinGordon(mass, kap), dim=1))
    x, h = grid.coords(0), grid.spacing[0]
    w = np.sqrt((np.sin(h) / h) ** 2 + 2 * mass)
    st = initial_state(system, phi=(np.cos(x) * np.cos(phase))[:, None, None],
                       nu=(-w * np.cos(x) * np.sin(phase))[:, None, None])
    dt = frac * h
    steps = int(round(periods * 2 * np.pi / w / dt))
    return simulate(system, st, dt, steps)[1]


def rod_run(N: int, c: float = 0.3, T: float = 1.0, frac: float = 0.5):
    """1D rod with Neumann current ``c`` on x1+ and compatible initial data."""
    grid, metric = build_grid(GridConfig((N,), (1 / (N - 1),), (False,)))
    force = ForceModel(matter_boundary={Face(0, 1): lambda t, s: np.full((1, 1), c)})
    system = FieldSystem(grid, metric, matter=matter_density(np.eye(1), None, dim=1), force=force)
    x = grid.coords(0)
    st = initial_state(system, phi=(c * x**2 / 2)[:, None, None],
                       nu=0.1 * np.cos(np.pi * x)[:, None, None])
    dt = frac * grid.spacing[0]
    return simulate(system, st, dt, int(round(T / dt)))


def maxwell_run(N: int, T: float = 1.0, frac: float = 0.25, kv=(1, 1)):
    """u(1) plane wave on the periodic square; returns (omega/|k|, report)."""
    L = 2 * np.pi
    grid, metric = build_grid(GridConfig((N, N), (L / N,) * 2, (True, True)))
    X, Y = grid.mesh()
    k = np.array(kv, float)
    kn = np.linalg.norm(k)
    e = np.array([-k[1], k[0]]) / kn
    th = k[0] * X + k[1] * Y
    A = np.stack([e[0] * np.cos(th), e[1] * np.cos(th)], -1)[..., None]
    eps = kn * np.stack([e[0] * np.sin(th), e[1] * np.sin(th)], -1)[..., None]
    system = FieldSystem(grid, metric, gauge=ym_density(2, u1()))
    dt = frac * grid.spacing[0]
    proj = []
    mode = np.exp(-1j * th)
    norm = np.sum(np.cos(th) * mode)

    def record(n, st):
        proj.append(np.sum(st.A.data[..., 0, 0] * mode) / norm)

    _, report = simulate(system, initial_state(system, A=A, eps=eps), dt, int(round(T / dt)),
                         callback=record)
    phase = np.unwrap(np.angle(np.array(proj)))
    w = -np.polyfit(np.arange(len(phase)) * dt, phase, 1)[0]
    return w / kn, report


def su2_run(N: int, T: float = 0.5, frac: float = 0.25):
    L = 2 * np.pi
    grid, metric = build_grid(GridConfig((N, N), (L / N,) * 2, (True, True)))
    X, Y = grid.mesh()
    A = np.zeros((N, N, 2, 3))
    eps = np.zeros((N, N, 2, 3))
    A[..., 0, 0] = 0.5 * np.sin(Y)
    A[..., 1, 1] = 0.4 * np.cos(X)
    A[..., 0, 2] = 0.3 * np.sin(X + Y)
    eps[..., 1, 0] = 0.3 * np.cos(X - Y)
    eps[..., 0, 1] = 0.2 * np.sin(2 * Y)
    system = FieldSystem(grid, metric, gauge=ym_density(2, su2()))
    dt = frac * grid.spacing[0]
    return simulate(system, initial_state(system, A=A, eps=eps), dt, int(round(T / dt)))[1]


def scenario_system(name: str, rep: str = "star", seed: int = 0, N: int = 10):
    """Small bounded-by-periodic 2D (1D for the matter-only ones) system with
    every applicable current switched on, plus matching initial arguments."""
    rng = np.random.default_rng(seed)
    if name in ("klein_gordon", "higgs"):
        grid, metric = build_grid(GridConfig((N + 2,), (1.0 / (N + 1),), (False,),
                                             lambda x: (1 + 0.2 * np.sin(3 * x))[..., None, None]))
        n = 1 if name == "klein_gordon" else 2
        kap = np.eye(n)
        pot = KleinGordon(0.5, kap) if name == "klein_gordon" else Higgs(0.25, 0.5, kap)
        force = ForceModel(matter=lambda t, s: -0.1 * s.nu.data,
                           matter_boundary={Face(0, 1): lambda t, s: 0.2 * np.cos(t) * np.ones((1, n)),
                                            Face(0, 0): lambda t, s: 0.1 * np.ones((1, n))})
        system = FieldSystem(grid, metric, matter=matter_density(kap, pot, dim=1), force=force, rep=rep)
        args = dict(phi=smooth_field(grid, 1, n, rng), nu=smooth_field(grid, 1, n, rng))
        return system, args
    grid, metric = build_grid(GridConfig((N + 2, N), (0.5, 2 * np.pi / N), (False, True), wavy_metric_2d))
    alg = u1() if name == "maxwell" else su2()
    shape_b = (N, 1, alg.n)
    force = ForceModel(gauge=lambda t, s: 0.05 * np.cos(t) * np.ones(s.A.data.shape),
                       gauge_boundary={Face(0, 1): lambda t, s: 0.1 * np.sin(t) * np.ones(shape_b)})
    kw = {}
    args = dict(A=smooth_field(grid, 2, alg.n, rng), eps=smooth_field(grid, 2, alg.n, rng))
    if name == "ymh":
        kap = np.eye(3)
        kw = dict(matter=matter_density(kap, Higgs(0.2, 0.3, kap), dim=2), coupling=adjoint_rep(alg))
        force.matter = lambda t, s: 0.1 * s.phi.data
        force.matter_boundary = {Face(0, 0): lambda t, s: 0.2 * np.ones((N, 1, 3))}
        args.update(phi=smooth_field(grid, 1, 3, rng), nu=smooth_field(grid, 1, 3, rng))
    system = FieldSystem(grid, metric, gauge=ym_density(2, alg), force=force, rep=rep, **kw)
    return system, args


def charged_u1_system(N: int = 8, q: float = 0.7, rep: str = "star"):
    grid, metric = build_grid(GridConfig((N, N), (2 * np.pi / N,) * 2, (True, True), wavy_metric_2d))
    kap = np.eye(2)
    system = FieldSystem(grid, metric, matter=matter_density(kap, KleinGordon(0.3, kap), dim=2),
                         gauge=ym_density(2, u1()), coupling=charge_rep(q), rep=rep)
    return system
