"""Lagrange-Dirac time stepping for matter, gauge and coupled systems.

The state carries configuration, velocity and momentum for each active
sector.  Momenta are stored in the representation chosen by the system
("star" or "dagger"); their boundary parts are identically zero and are never
touched.  The boundary equation is enforced as a constraint on the
``zeta``-derivative at face nodes: the components with a normal leg are
overwritten so that its boundary trace equals minus the boundary force.

Both representations are assembled by separate code paths: star through the
trace and covariant divergence, dagger through ``d^{nabla*}`` of forms.  They
agree to rounding, which the tests check.

Gauge sector sign bookkeeping: ``E = -epsilon`` and the fiber metric is
``-K``, which is the identity in the built-in bases.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .connection import (GaugeConnection, LinearConnection, Representation, _ext_deriv,
                         boundary_trace_set, codifferential, cov_divergence, curvature,
                         rep_action, rep_action_adjoint)
from .exterior import (DualField, FormField, compound, contract, hodge_data, n_slots,
                       phi_inv_data, pullback_data, pullback_slots, wedge)
from .grid import Face, MetricField, RectGrid, induced_boundary_data
from .lagrangian import Density, YMDensity


class NumericalGuardError(RuntimeError):
    """A stability or finiteness guard tripped during time stepping."""


CurrentFn = Callable[[float, "PontryaginState"], np.ndarray]


# ------------------------------------------------------------------ forces

@dataclass
class ForceModel:
    """External currents in physical variables.

    ``matter``: interior current (a k-form like the matter field).
    ``matter_boundary``: per-face current in the face chart (boundary k-form).
    ``gauge``: interior current ``J`` (Lie-algebra valued 1-form).
    ``gauge_boundary``: per-face ``j`` (boundary 1-form).
    Each entry is a callable ``(t, state) -> array``.
    """

    matter: CurrentFn | None = None
    matter_boundary: dict[Face, CurrentFn] = field(default_factory=dict)
    gauge: CurrentFn | None = None
    gauge_boundary: dict[Face, CurrentFn] = field(default_factory=dict)

    def faces(self) -> set[Face]:
        return set(self.matter_boundary) | set(self.gauge_boundary)


def _raise_with(geom, x, k, fiber):
    return np.einsum("...JI,ab,...Ib->...Ja", compound(geom.ginv, k), fiber, x)


def interior_force(current: np.ndarray, fiber: np.ndarray, geom, degree: int, rep: str) -> np.ndarray:
    """``*(current^flat)`` (dagger) or its star components, ``flat`` via ``fiber``."""
    if rep == "dagger":
        low = np.einsum("ab,...b->...a", fiber, current)
        return hodge_data(low, degree, geom.ginv, geom.sqrt_det)
    return geom.sqrt_det[..., None, None] * _raise_with(geom, current, degree, fiber)


def boundary_force(current: np.ndarray, fiber: np.ndarray, bd, degree: int, rep: str) -> np.ndarray:
    """``*_d(current^flat)`` on a face, oriented by the outward normal."""
    if rep == "dagger":
        low = np.einsum("ab,...b->...a", fiber, current)
        return hodge_data(low, degree, bd.ginv, bd.sqrt_det, orientation=bd.sigma)
    return bd.sigma * bd.sqrt_det[..., None, None] * _raise_with(bd, current, degree, fiber)


# ------------------------------------------------------------------- state

@dataclass
class PontryaginState:
    t: float
    phi: FormField | None = None
    nu: FormField | None = None
    alpha: DualField | None = None
    A: FormField | None = None
    eps: FormField | None = None
    sigma: DualField | None = None

    @property
    def has_matter(self) -> bool:
        return self.phi is not None

    @property
    def has_gauge(self) -> bool:
        return self.A is not None

    @property
    def E(self) -> FormField:
        return -self.eps

    def copy(self) -> "PontryaginState":
        c = lambda x: None if x is None else x.copy()
        return PontryaginState(self.t, c(self.phi), c(self.nu), c(self.alpha), c(self.A),
                               c(self.eps), c(self.sigma))

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("phi", "nu", "A", "eps"):
            x = getattr(self, name)
            if x is not None:
                out[name] = x.data
        for name in ("alpha", "sigma"):
            x = getattr(self, name)
            if x is not None:
                out[name] = x.interior if x.rep == "star" else phi_inv_data(x.interior, x.dim, x.degree)
        return out


@dataclass
class FieldSystem:
    """Everything except the state: grid, metric, densities, coupling, forces."""

    grid: RectGrid
    metric: MetricField
    matter: Density | None = None
    gauge: YMDensity | None = None
    coupling: Representation | None = None
    connection: LinearConnection | None = None
    force: ForceModel = field(default_factory=ForceModel)
    rep: str = "star"
    cfl: float = 1.0

    def __post_init__(self):
        if self.rep not in ("star", "dagger"):
            raise ValueError(f"unknown representation {self.rep!r}")
        if self.matter is None and self.gauge is None:
            raise ValueError("at least one sector is required")
        for face in self.force.faces():
            self.grid.check_face(face)
        if self.coupling is not None:
            if self.gauge is None or self.matter is None:
                raise ValueError("a coupling needs both sectors")
            if self.coupling.rho.shape[0] != self.gauge.algebra.n:
                raise ValueError("Lie algebra mismatch between sectors")
            if self.matter.degree != 0:
                raise ValueError("gauge coupling is implemented for 0-form matter")
        self._bd = {f: induced_boundary_data(self.grid, self.metric, f) for f in self.grid.faces()}
        self._speed = None

    def boundary(self, face: Face):
        return self._bd[face]

    def with_rep(self, rep: str) -> "FieldSystem":
        return replace(self, rep=rep)

    def matter_connection(self, state: PontryaginState) -> LinearConnection | None:
        if self.coupling is not None:
            return GaugeConnection(state.A, self.gauge.algebra).matter_connection(self.coupling)
        return self.connection

    def max_speed(self) -> float:
        if self._speed is None:
            self._speed = float(np.sqrt(np.max(np.linalg.eigvalsh(self.metric.ginv))))
        return self._speed

    def check_dt(self, dt: float) -> None:
        if not dt > 0:
            raise ValueError("dt must be positive")
        limit = self.cfl * min(self.grid.spacing) / self.max_speed()
        if dt > limit * (1 + 1e-12):
            raise NumericalGuardError(
                f"dt={dt:.4g} exceeds the CFL limit {limit:.4g} "
                f"(cfl={self.cfl}, min h={min(self.grid.spacing):.4g}, c_max={self.max_speed():.4g})")


def _dual(system: FieldSystem, data: np.ndarray, degree: int) -> DualField:
    m, rep = system.grid.m, system.rep
    bslots = n_slots(m - 1, degree) if rep == "star" else n_slots(m - 1, m - 1 - degree)
    bd = {f: np.zeros(system.grid.face_shape(f) + (bslots, data.shape[-1])) for f in system.grid.faces()}
    return DualField(rep, data, degree, m, bd)


def initial_state(system: FieldSystem, phi: np.ndarray | None = None, nu: np.ndarray | None = None,
                  A: np.ndarray | None = None, eps: np.ndarray | None = None, t: float = 0.0
                  ) -> PontryaginState:
    """State with momenta set by the Legendre map."""
    m, geom = system.grid.m, system.metric
    st = PontryaginState(t)
    if system.gauge is not None:
        st.A = FormField(np.asarray(A, dtype=float), 1, m)
        st.eps = FormField(np.zeros_like(st.A.data) if eps is None else np.asarray(eps, dtype=float), 1, m)
    if system.matter is not None:
        k = system.matter.degree
        st.phi = FormField(np.asarray(phi, dtype=float), k, m)
        st.nu = FormField(np.zeros_like(st.phi.data) if nu is None else np.asarray(nu, dtype=float), k, m)
    if st.has_matter:
        zeta = matter_zeta(system, st)
        mom = system.matter.derivative("nu", system.rep, geom, st.phi.data, st.nu.data, zeta)
        st.alpha = _dual(system, mom, system.matter.degree)
    if st.has_gauge:
        B = curvature(GaugeConnection(st.A, system.gauge.algebra), system.grid).data
        mom = system.gauge.derivative("nu", system.rep, geom, st.A.data, st.eps.data, B)
        st.sigma = _dual(system, mom, 1)
    return st


# ----------------------------------------------------------------- assembly

def matter_zeta(system: FieldSystem, state: PontryaginState) -> np.ndarray:
    conn = system.matter_connection(state)
    return _ext_deriv(state.phi.data, state.phi.degree, system.grid, None if conn is None else conn.gamma)


def gauge_curvature(system: FieldSystem, state: PontryaginState) -> np.ndarray:
    return curvature(GaugeConnection(state.A, system.gauge.algebra), system.grid).data


def sector_boundary_force(system: FieldSystem, sector: str, current: np.ndarray, face: Face,
                          rep: str) -> np.ndarray:
    """``F_d`` of a boundary current.

    Matter: ``*_d(current^flat)``.  Gauge: ``-*_d^{-1}(j^flat_K)``, so that
    ``*_d iota^*(*B) = j`` holds in every dimension (equal to ``*_d j^flat_K``
    when m = 3).
    """
    m, bd = system.grid.m, system.boundary(face)
    if sector == "matter":
        return boundary_force(current, system.matter.kappa, bd, system.matter.degree, rep)
    return (-1) ** (m + 1) * boundary_force(current, system.gauge.algebra.killing, bd, 1, rep)


def boundary_targets(system: FieldSystem, state: PontryaginState, t: float, sector: str,
                     rep: str | None = None) -> dict[Face, np.ndarray]:
    """Required boundary trace of the zeta-derivative: ``-F_d`` on every face."""
    rep = rep or system.rep
    m = system.grid.m
    if sector == "matter":
        k, fns, n = system.matter.degree, system.force.matter_boundary, system.matter.n
    else:
        k, fns, n = 1, system.force.gauge_boundary, system.gauge.algebra.n
    out = {}
    for face in system.grid.faces():
        shape = system.grid.face_shape(face)
        slots = n_slots(m - 1, k) if rep == "star" else n_slots(m - 1, m - 1 - k)
        if face in fns:
            cur = np.asarray(fns[face](t, state), dtype=float)
            want = shape + (n_slots(m - 1, k), n)
            if cur.shape != want:
                raise ValueError(f"{sector} boundary current on {face.name}: shape {cur.shape}, expected {want}")
            out[face] = -sector_boundary_force(system, sector, cur, face, rep)
        else:
            out[face] = np.zeros(shape + (slots, n))
    return out


def _set_pullback(X: np.ndarray, target: np.ndarray, degree: int, grid: RectGrid, face: Face) -> np.ndarray:
    """Overwrite the tangential face components of a form so its pullback is ``target``."""
    m = grid.m
    idx = grid.face_index(face)
    sub = X[idx]
    for a, b in pullback_slots(m, degree, face.axis):
        sub[..., a, :] = target[..., b, :]
    X[idx] = sub
    return X


def apply_boundary_currents(system: FieldSystem, chi: np.ndarray, targets: dict[Face, np.ndarray],
                            degree: int, rep: str | None = None) -> np.ndarray:
    """Impose ``iota^*(dL/dzeta) = -F_d`` on a zeta-derivative of a degree-k field.

    Star: ``chi`` has upper degree k+1.  Dagger: ``chi`` is an (m-k-1)-form.
    """
    rep = rep or system.rep
    out = chi.copy()
    m = system.grid.m
    for face, target in targets.items():
        if rep == "star":
            out = boundary_trace_set(out, target, system.grid, face, degree + 1)
        else:
            out = _set_pullback(out, target, m - degree - 1, system.grid, face)
    return out


def _interior_current(fn, t, state, shape, what):
    cur = np.asarray(fn(t, state), dtype=float)
    if cur.shape != shape:
        raise ValueError(f"{what} current has shape {cur.shape}, expected {shape}")
    return cur


def matter_force(system: FieldSystem, state: PontryaginState, t: float, rep: str | None = None):
    rep = rep or system.rep
    D = system.matter
    if system.force.matter is None:
        return None
    cur = _interior_current(system.force.matter, t, state, state.phi.data.shape, "matter")
    return interior_force(cur, D.kappa, system.metric, D.degree, rep)


def gauge_force(system: FieldSystem, state: PontryaginState, t: float, rep: str | None = None):
    rep = rep or system.rep
    if system.force.gauge is None:
        return None
    cur = _interior_current(system.force.gauge, t, state, state.A.data.shape, "gauge")
    # F = -*(J^flat_K)
    return -interior_force(cur, system.gauge.algebra.killing, system.metric, 1, rep)


def _matter_chi(system, state, t, rep):
    D, geom = system.matter, system.metric
    zeta = matter_zeta(system, state)
    chi = D.derivative("zeta", rep, geom, state.phi.data, state.nu.data, zeta)
    targets = boundary_targets(system, state, t, "matter", rep)
    return apply_boundary_currents(system, chi, targets, D.degree, rep)


def assemble_matter_rhs(system: FieldSystem, state: PontryaginState, t: float | None = None,
                        rep: str | None = None) -> np.ndarray:
    """Interior momentum rate ``alpha_dot`` in the requested representation."""
    rep = rep or system.rep
    t = state.t if t is None else t
    D, geom, grid = system.matter, system.metric, system.grid
    k, m = D.degree, grid.m
    conn = system.matter_connection(state)
    chi = _matter_chi(system, state, t, rep)
    rate = D.derivative("phi", rep, geom, state.phi.data, state.nu.data, None)
    if rep == "star":
        rate = rate - (-1) ** k * cov_divergence(conn, chi, grid, k + 1)
    else:
        dual = None if conn is None else conn.dual().gamma
        rate = rate - (-1) ** k * _ext_deriv(chi, m - k - 1, grid, dual)
    F = matter_force(system, state, t, rep)
    return rate if F is None else rate + F


def cross_term(system: FieldSystem, state: PontryaginState, t: float, rep: str) -> np.ndarray:
    """``rho*_phi(dL_mat/dzeta)`` with the matter boundary constraint applied."""
    chi = _matter_chi(system, state, t, rep)
    return rep_action_adjoint(system.coupling.rho, state.phi.data[..., 0, :], chi)


def assemble_gauge_rhs(system: FieldSystem, state: PontryaginState, t: float | None = None,
                       rep: str | None = None) -> np.ndarray:
    """Interior rate of the gauge momentum ``varsigma``."""
    rep = rep or system.rep
    t = state.t if t is None else t
    D, geom, grid = system.gauge, system.metric, system.grid
    m = grid.m
    ind = GaugeConnection(state.A, D.algebra).induced()
    B = gauge_curvature(system, state)
    chi = D.derivative("zeta", rep, geom, state.A.data, state.eps.data, B)
    chi = apply_boundary_currents(system, chi, boundary_targets(system, state, t, "gauge", rep), 1, rep)
    rate = D.derivative("phi", rep, geom, state.A.data, state.eps.data, B)
    if rep == "star":
        rate = rate + cov_divergence(ind, chi, grid, 2)
    else:
        rate = rate + _ext_deriv(chi, m - 2, grid, ind.dual().gamma)
    if system.coupling is not None and state.has_matter:
        rate = rate + cross_term(system, state, t, rep)
    F = gauge_force(system, state, t, rep)
    return rate if F is None else rate + F


def rates(system: FieldSystem, state: PontryaginState, t: float) -> tuple:
    am = assemble_matter_rhs(system, state, t) if state.has_matter else None
    ag = assemble_gauge_rhs(system, state, t) if state.has_gauge else None
    return am, ag


def legendre(system: FieldSystem, state: PontryaginState) -> tuple:
    """Velocities from the stored momenta."""
    geom = system.metric
    nu = eps = None
    if state.has_matter:
        nu = system.matter.legendre_inverse(geom, state.phi.data, state.alpha.interior, system.rep,
                                            nu0=state.nu.data)
    if state.has_gauge:
        eps = system.gauge.legendre_inverse(geom, state.A.data, state.sigma.interior, system.rep)
    return nu, eps


def legendre_residual(system: FieldSystem, state: PontryaginState) -> float:
    geom, out = system.metric, 0.0
    if state.has_matter:
        zeta = matter_zeta(system, state)
        p = system.matter.derivative("nu", system.rep, geom, state.phi.data, state.nu.data, zeta)
        out = max(out, float(np.max(np.abs(p - state.alpha.interior))))
    if state.has_gauge:
        B = gauge_curvature(system, state)
        p = system.gauge.derivative("nu", system.rep, geom, state.A.data, state.eps.data, B)
        out = max(out, float(np.max(np.abs(p - state.sigma.interior))))
    return out


# ------------------------------------------------------------------ stepping

def _guard(state: PontryaginState) -> None:
    for name, arr in state.arrays().items():
        if not np.all(np.isfinite(arr)):
            raise NumericalGuardError(f"non-finite values in {name} at t={state.t:.6g}")


def _with(state, t, phi=None, nu=None, alpha=None, A=None, eps=None, sigma=None):
    new = PontryaginState(t)
    if state.has_matter:
        new.phi = state.phi._like(phi)
        new.nu = state.nu._like(nu)
        new.alpha = replace(state.alpha, interior=alpha)
    if state.has_gauge:
        new.A = state.A._like(A)
        new.eps = state.eps._like(eps)
        new.sigma = replace(state.sigma, interior=sigma)
    return new


def _leapfrog(system, state, dt):
    t0, t1 = state.t, state.t + dt
    am, ag = rates(system, state, t0)
    mid = state.copy()
    if state.has_matter:
        mid.alpha.interior = state.alpha.interior + 0.5 * dt * am
    if state.has_gauge:
        mid.sigma.interior = state.sigma.interior + 0.5 * dt * ag
    nu_h, eps_h = legendre(system, mid)
    drift = _with(state, t1,
                  phi=None if nu_h is None else state.phi.data + dt * nu_h, nu=nu_h,
                  alpha=None if nu_h is None else mid.alpha.interior,
                  A=None if eps_h is None else state.A.data + dt * eps_h, eps=eps_h,
                  sigma=None if eps_h is None else mid.sigma.interior)
    am, ag = rates(system, drift, t1)
    if state.has_matter:
        drift.alpha.interior = drift.alpha.interior + 0.5 * dt * am
    if state.has_gauge:
        drift.sigma.interior = drift.sigma.interior + 0.5 * dt * ag
    nu1, eps1 = legendre(system, drift)
    if nu1 is not None:
        drift.nu = drift.nu._like(nu1)
    if eps1 is not None:
        drift.eps = drift.eps._like(eps1)
    return drift


def _rk4(system, state, dt):
    def deriv(s):
        am, ag = rates(system, s, s.t)
        return (None if am is None else s.nu.data, am, None if ag is None else s.eps.data, ag)

    def advance(s, d, h):
        tmp = _with(s, state.t + h,
                    phi=None if d[0] is None else state.phi.data + h * d[0],
                    nu=None if d[0] is None else state.nu.data,
                    alpha=None if d[1] is None else state.alpha.interior + h * d[1],
                    A=None if d[2] is None else state.A.data + h * d[2],
                    eps=None if d[2] is None else state.eps.data,
                    sigma=None if d[3] is None else state.sigma.interior + h * d[3])
        nu, eps = legendre(system, tmp)
        if nu is not None:
            tmp.nu = tmp.nu._like(nu)
        if eps is not None:
            tmp.eps = tmp.eps._like(eps)
        return tmp

    k1 = deriv(state)
    k2 = deriv(advance(state, k1, 0.5 * dt))
    k3 = deriv(advance(state, k2, 0.5 * dt))
    k4 = deriv(advance(state, k3, dt))
    comb = tuple(None if a is None else (a + 2 * b + 2 * c + d) / 6.0 for a, b, c, d in zip(k1, k2, k3, k4))
    return advance(state, comb, dt)


def step(system: FieldSystem, state: PontryaginState, dt: float, scheme: str = "leapfrog") -> PontryaginState:
    """Advance by ``dt``.  Leapfrog is kick-drift-kick; rk4 is the generic fallback.

    In leapfrog the closing kick sees the half-step velocity, so
    velocity-dependent currents stay explicit.
    """
    system.check_dt(dt)
    if scheme == "leapfrog":
        new = _leapfrog(system, state, dt)
    elif scheme == "rk4":
        new = _rk4(system, state, dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; use 'leapfrog' or 'rk4'")
    _guard(new)
    return new


# --------------------------------------------------------------- diagnostics

def _wedge_top(a, p, b, q, m):
    return wedge(a, p, b, q, m)[..., 0]


@dataclass
class Snapshot:
    """Instantaneous diagnostics of one state."""

    t: float
    energy: dict[str, float]
    power_interior: dict[str, float]
    power_boundary: dict[str, dict[str, float]]
    interaction: dict[str, float]
    charge: float
    bianchi: float
    energy_field: np.ndarray = field(repr=False)
    flux_field: np.ndarray = field(repr=False)
    power_field: np.ndarray = field(repr=False)
    rho: np.ndarray | None = field(default=None, repr=False)
    rho_source: np.ndarray | None = field(default=None, repr=False)
    B: np.ndarray | None = field(default=None, repr=False)
    dAE: np.ndarray | None = field(default=None, repr=False)

    @property
    def total_energy(self) -> float:
        return sum(self.energy.values())

    @property
    def total_power(self) -> float:
        return sum(self.power_interior.values()) + sum(
            v for faces in self.power_boundary.values() for v in faces.values())


def snapshot(system: FieldSystem, state: PontryaginState) -> Snapshot:
    grid, geom, m = system.grid, system.metric, system.grid.m
    t = state.t
    energy, p_int, p_bd, inter = {}, {}, {}, {}
    e_field = np.zeros(grid.shape)
    s_field = np.zeros(grid.shape + (m, 1))
    p_field = np.zeros(grid.shape)
    charge = bianchi = 0.0 if state.has_gauge else math.nan
    rho = rho_src = B = dAE = None
    sectors = []
    if state.has_matter:
        sectors.append(("matter", system.matter, state.phi.data, state.nu.data,
                        matter_zeta(system, state), matter_force(system, state, t, "dagger"),
                        system.force.matter_boundary))
    if state.has_gauge:
        B = gauge_curvature(system, state)
        F = gauge_force(system, state, t, "dagger")
        sectors.append(("gauge", system.gauge, state.A.data, state.eps.data, B, F,
                        system.force.gauge_boundary))
    for name, D, q, v, z, F, bfns in sectors:
        k = D.degree
        e = D.energy(geom, q, v, z)
        e_field += e
        energy[name] = float(np.sum(grid.weights * e))
        # flux with the boundary constraint applied, as in the assembled equations
        X = D.derivative("zeta", "dagger", geom, q, v, z)
        X = apply_boundary_currents(system, X, boundary_targets(system, state, t, name, "dagger"), k, "dagger")
        s_field += wedge(v, k, X, m - k - 1, m)[..., None]
        pw = _wedge_top(v, k, F, m - k, m) if F is not None else np.zeros(grid.shape)
        p_field += pw
        p_int[name] = float(np.sum(grid.weights * pw))
        faces = {}
        for face, fn in bfns.items():
            bd = system.boundary(face)
            Fd = sector_boundary_force(system, name, np.asarray(fn(t, state), dtype=float), face, "dagger")
            vb = pullback_data(v, k, m, grid, face)
            val = _wedge_top(vb, k, Fd, m - 1 - k, m - 1)
            faces[face.name] = float(face.sigma * np.sum(bd.weights * val))
        p_bd[name] = faces
    if system.coupling is not None and state.has_matter and state.has_gauge:
        X = _matter_chi(system, state, t, "dagger")
        phi0 = state.phi.data[..., 0, :]
        g_pow = _wedge_top(state.eps.data, 1, rep_action_adjoint(system.coupling.rho, phi0, X), m - 1, m)
        m_pow = -_wedge_top(rep_action(system.coupling.rho, phi0, state.eps.data), 1, X, m - 1, m)
        inter = {"gauge": float(np.sum(grid.weights * g_pow)), "matter": float(np.sum(grid.weights * m_pow))}
    if state.has_gauge:
        ind = GaugeConnection(state.A, system.gauge.algebra).induced()
        E = state.E
        rho = codifferential(ind, E, geom, grid).data
        total = (rho[..., 0, :] * (grid.weights * geom.sqrt_det)[..., None]).reshape(-1, rho.shape[-1]).sum(axis=0)
        charge = float(np.linalg.norm(total))
        J = np.zeros_like(E.data) if system.force.gauge is None else \
            np.asarray(system.force.gauge(t, state), dtype=float)
        if system.coupling is not None and state.has_matter:
            C = cross_term(system, state, t, "dagger")
            J = J + (-1) ** (m - 1) * hodge_data(C, m - 1, geom.ginv, geom.sqrt_det)
        rho_src = codifferential(ind, FormField(J, 1, m), geom, grid).data
        dAE = _ext_deriv(E.data, 1, grid, ind.gamma)
        if m >= 3:
            dB = _ext_deriv(B, 2, grid, ind.gamma)
            bianchi = float(np.sqrt(np.sum(grid.weights[..., None, None] * dB ** 2)))
    return Snapshot(t, energy, p_int, p_bd, inter, charge, bianchi, e_field, s_field, p_field,
                    rho, rho_src, B, dAE)


def _l2(grid: RectGrid, f: np.ndarray) -> float:
    w = grid.weights.reshape(grid.shape + (1,) * (f.ndim - grid.m))
    return float(np.sqrt(np.sum(w * f ** 2)))


@dataclass
class BalanceReport:
    """Time series of energy, power and residuals at the sampled steps."""

    t: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    energy_by_sector: dict[str, list[float]] = field(default_factory=dict)
    power_interior: list[float] = field(default_factory=list)
    power_boundary: dict[str, list[float]] = field(default_factory=dict)
    balance_residual: list[float] = field(default_factory=list)
    sector_residual: dict[str, list[float]] = field(default_factory=dict)
    interaction: dict[str, list[float]] = field(default_factory=dict)
    poynting_residual: list[float] = field(default_factory=list)
    charge: list[float] = field(default_factory=list)
    charge_residual: list[float] = field(default_factory=list)
    bianchi: list[float] = field(default_factory=list)
    bianchi_dynamic: list[float] = field(default_factory=list)
    legendre: list[float] = field(default_factory=list)
    initial_boundary_residual: float = 0.0

    def max_abs(self, name: str) -> float:
        """Largest finite magnitude of a series; NaN if it has none."""
        vals = [v for v in getattr(self, name) if not math.isnan(v)]
        return max((abs(v) for v in vals), default=math.nan)

    def relative_drift(self) -> float:
        e0 = self.energy[0]
        return max(abs(e - e0) for e in self.energy) / abs(e0)

    def columns(self) -> list[str]:
        cols = ["t", "energy"] + [f"energy_{s}" for s in self.energy_by_sector]
        cols += ["power_interior"] + [f"power_boundary_{f}" for f in self.power_boundary]
        cols += ["balance_residual"] + [f"balance_residual_{s}" for s in self.sector_residual]
        cols += [f"interaction_{s}" for s in self.interaction]
        cols += ["poynting_residual", "charge", "charge_residual", "bianchi", "bianchi_dynamic", "legendre"]
        return cols

    def rows(self) -> list[list[float]]:
        out = []
        for i in range(len(self.t)):
            row = [self.t[i], self.energy[i]] + [v[i] for v in self.energy_by_sector.values()]
            row += [self.power_interior[i]] + [v[i] for v in self.power_boundary.values()]
            row += [self.balance_residual[i]] + [v[i] for v in self.sector_residual.values()]
            row += [v[i] for v in self.interaction.values()]
            row += [self.poynting_residual[i], self.charge[i], self.charge_residual[i],
                    self.bianchi[i], self.bianchi_dynamic[i], self.legendre[i]]
            out.append(row)
        return out


def _initial_boundary_residual(system: FieldSystem, state: PontryaginState) -> float:
    """Mismatch between the unconstrained trace and the prescribed boundary data."""
    geom, m, worst = system.metric, system.grid.m, 0.0
    sectors = []
    if state.has_matter:
        sectors.append(("matter", system.matter, state.phi.data, state.nu.data, matter_zeta(system, state)))
    if state.has_gauge:
        sectors.append(("gauge", system.gauge, state.A.data, state.eps.data, gauge_curvature(system, state)))
    for name, D, q, v, z in sectors:
        X = D.derivative("zeta", "dagger", geom, q, v, z)
        for face, target in boundary_targets(system, state, state.t, name, "dagger").items():
            pb = pullback_data(X, m - D.degree - 1, m, system.grid, face)
            worst = max(worst, float(np.max(np.abs(pb - target), initial=0.0)))
    return worst


class BalanceRecorder:
    """Streaming energy-balance bookkeeping over consecutive equal steps.

    Residuals at a step use centered differences, so each sample is finalized
    once the following state arrives; the last sample keeps NaN residuals.
    """

    def __init__(self, system: FieldSystem, dt: float, sample_every: int = 1):
        self.system, self.dt, self.every = system, dt, max(1, int(sample_every))
        self.report = BalanceReport()
        self._window: deque[tuple[int, Snapshot]] = deque(maxlen=3)
        self._count = 0
        self._rows: dict[int, int] = {}

    def push(self, state: PontryaginState) -> None:
        idx = self._count
        self._count += 1
        snap = snapshot(self.system, state)
        if idx == 0:
            self.report.initial_boundary_residual = _initial_boundary_residual(self.system, state)
        if idx % self.every == 0:
            self._append(idx, snap, legendre_residual(self.system, state))
        self._window.append((idx, snap))
        if len(self._window) == 3 and self._window[1][0] in self._rows:
            self._finalize(*self._window)

    def _append(self, idx: int, s: Snapshot, leg: float) -> None:
        r = self.report
        self._rows[idx] = len(r.t)
        r.t.append(s.t)
        r.energy.append(s.total_energy)
        for name, v in s.energy.items():
            r.energy_by_sector.setdefault(name, []).append(v)
        r.power_interior.append(sum(s.power_interior.values()))
        for sector, faces in s.power_boundary.items():
            for face, v in faces.items():
                r.power_boundary.setdefault(f"{sector}_{face}", []).append(v)
        for name, v in s.interaction.items():
            r.interaction.setdefault(name, []).append(v)
        for name in s.energy:
            r.sector_residual.setdefault(name, []).append(math.nan)
        r.balance_residual.append(math.nan)
        r.poynting_residual.append(math.nan)
        r.charge.append(s.charge)
        r.charge_residual.append(math.nan)
        r.bianchi.append(s.bianchi)
        r.bianchi_dynamic.append(math.nan)
        r.legendre.append(leg)

    def _finalize(self, prev, cur, nxt) -> None:
        (_, a), (idx, s), (_, b) = prev, cur, nxt
        r, grid, m = self.report, self.system.grid, self.system.grid.m
        row = self._rows[idx]
        h2 = 2.0 * self.dt
        r.balance_residual[row] = (b.total_energy - a.total_energy) / h2 - s.total_power
        for name in s.energy:
            own = s.power_interior[name] + sum(s.power_boundary[name].values()) + s.interaction.get(name, 0.0)
            r.sector_residual[name][row] = (b.energy[name] - a.energy[name]) / h2 - own
        dS = _ext_deriv(s.flux_field, m - 1, grid, None)[..., 0, 0]
        local = (b.energy_field - a.energy_field) / h2 + dS - s.power_field
        r.poynting_residual[row] = _l2(grid, local)
        if s.rho is not None:
            r.charge_residual[row] = _l2(grid, (b.rho - a.rho) / h2 + s.rho_source)
            r.bianchi_dynamic[row] = _l2(grid, (b.B - a.B) / h2 + s.dAE)


def simulate(system: FieldSystem, state: PontryaginState, dt: float, steps: int,
             scheme: str = "leapfrog", sample_every: int = 1,
             callback: Callable[[int, PontryaginState], None] | None = None
             ) -> tuple[PontryaginState, BalanceReport]:
    """Run ``steps`` steps and return the final state with its balance report."""
    system.check_dt(dt)
    rec = BalanceRecorder(system, dt, sample_every)
    rec.push(state)
    if callback is not None:
        callback(0, state)
    for n in range(1, steps + 1):
        state = step(system, state, dt, scheme)
        rec.push(state)
        if callback is not None:
            callback(n, state)
    return state, rec.report


def energy_balance(system: FieldSystem, history: Sequence[PontryaginState], dt: float) -> BalanceReport:
    """Balance report of a stored trajectory with uniform step ``dt``."""
    if len(history) < 3:
        raise ValueError("energy balance needs at least 3 stored states")
    rec = BalanceRecorder(system, dt)
    for s in history:
        rec.push(s)
    return rec.report


def charge_diagnostics(system: FieldSystem, state: PontryaginState) -> tuple[np.ndarray, float]:
    """Charge density ``rho = delta^A E`` and the norm of its integral."""
    if not state.has_gauge:
        raise ValueError("charge needs a gauge sector")
    s = snapshot(system, state)
    return s.rho, s.charge


def bianchi_residual(system: FieldSystem, state: PontryaginState) -> float:
    """L2 norm of ``d^A B_A`` (zero by construction for m = 2)."""
    return snapshot(system, state).bianchi


# ---------------------------------------------------------- variational checks

def _discrete_action(system: FieldSystem, state: PontryaginState) -> float:
    geom, grid, total = system.metric, system.grid, 0.0
    if state.has_matter:
        z = matter_zeta(system, state)
        total += float(np.sum(grid.weights * system.matter.evaluate(geom, state.phi.data, state.nu.data, z)))
    if state.has_gauge:
        B = gauge_curvature(system, state)
        total += float(np.sum(grid.weights * system.gauge.evaluate(geom, state.A.data, state.eps.data, B)))
    return total


def rhs_gradient_check(system: FieldSystem, state: PontryaginState, step_size: float = 1e-6,
                       margin: int = 0) -> float:
    """Max relative gap between the assembled interior rates (force removed,
    star, times the quadrature weight) and central differences of the
    discrete action in every configuration degree of freedom.

    ``margin`` skips nodes that close to a bounded face.
    """
    sys0 = replace(system, force=ForceModel(), rep="star")
    grid = system.grid
    keep = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.m):
        if not grid.periodic[ax] and margin:
            sl = [slice(None)] * grid.m
            sl[ax] = np.r_[0:margin, grid.shape[ax] - margin:grid.shape[ax]]
            keep[tuple(sl)] = False
    worst, scale = 0.0, 0.0
    for name in ("phi", "A"):
        field_ = getattr(state, name)
        if field_ is None:
            continue
        rate = assemble_matter_rhs(sys0, state) if name == "phi" else assemble_gauge_rhs(sys0, state)
        want = grid.weights[..., None, None] * rate
        got = np.zeros_like(want)
        for idx in np.ndindex(*field_.data.shape):
            if not keep[idx[:grid.m]]:
                continue
            vals = []
            for sgn in (1, -1):
                s = state.copy()
                getattr(s, name).data[idx] += sgn * step_size
                vals.append(_discrete_action(sys0, s))
            got[idx] = (vals[0] - vals[1]) / (2 * step_size)
        mask = np.broadcast_to(keep[..., None, None], want.shape)
        worst = max(worst, float(np.max(np.abs(got - want)[mask])))
        scale = max(scale, float(np.max(np.abs(want)[mask])))
    return worst / scale if scale else worst


def action_gradient_check(system: FieldSystem, trajectory: Sequence[PontryaginState], dt: float,
                          step_size: float = 1e-6) -> float:
    """Space-time version: ``d/dq_n`` of ``sum_n dt L_d`` plus the force pairing,
    against the discrete Euler-Lagrange residual of the implemented equations.

    The discrete Lagrangian is ``dt * (T((q1 - q0)/dt) - (U(q0) + U(q1))/2)``,
    whose stationarity is exactly the kick-drift-kick update.  Endpoints are
    held fixed; returns the max deviation relative to the gradient scale.
    """
    if len(trajectory) < 3:
        raise ValueError("trajectory needs at least 3 states")
    sys0 = replace(system, rep="star")
    grid, geom = system.grid, system.metric
    names = [n for n in ("phi", "A") if getattr(trajectory[0], n) is not None]

    def with_velocity(s, vel):
        out = s.copy()
        if "phi" in vel:
            out.nu = out.nu._like(vel["phi"])
        if "A" in vel:
            out.eps = out.eps._like(vel["A"])
        return out

    def potential(s):
        zero = with_velocity(s, {n: np.zeros_like(getattr(s, n).data) for n in names})
        return -_discrete_action(sys0, zero)

    def kinetic(s, vel):
        tot = 0.0
        if "phi" in vel:
            tot += 0.5 * float(np.sum(grid.weights * contract(
                sys0.matter.d_nu(geom, s.phi.data, vel["phi"], None), vel["phi"], grid.m, s.phi.degree)))
        if "A" in vel:
            tot += 0.5 * float(np.sum(grid.weights * contract(
                sys0.gauge.d_nu(geom, s.A.data, vel["A"], None), vel["A"], grid.m, 1)))
        return tot

    def vel(a, b):
        return {n: (getattr(b, n).data - getattr(a, n).data) / dt for n in names}

    def forcing(s):
        tot = 0.0
        if "phi" in names and system.force.matter is not None:
            tot += float(np.sum(grid.weights * contract(matter_force(sys0, s, s.t, "star"),
                                                       s.phi.data, grid.m, s.phi.degree)))
        if "A" in names and system.force.gauge is not None:
            tot += float(np.sum(grid.weights * contract(gauge_force(sys0, s, s.t, "star"), s.A.data, grid.m, 1)))
        return tot

    def total(traj):
        S = 0.0
        for a, b in zip(traj[:-1], traj[1:]):
            S += dt * (kinetic(a, vel(a, b)) - 0.5 * (potential(a) + potential(b)))
        return S + dt * sum(forcing(s) for s in traj[1:-1])

    traj = [s.copy() for s in trajectory]
    worst, scale = 0.0, 0.0
    for n in range(1, len(traj) - 1):
        a, s, b = traj[n - 1], traj[n], traj[n + 1]
        for name in names:
            v_minus, v_plus = vel(a, s)[name], vel(s, b)[name]
            if name == "phi":
                d_nu = sys0.matter.d_nu
                p_minus = d_nu(geom, s.phi.data, v_minus, None)
                p_plus = d_nu(geom, s.phi.data, v_plus, None)
                rate = assemble_matter_rhs(sys0, s)
            else:
                d_nu = sys0.gauge.d_nu
                p_minus = d_nu(geom, s.A.data, v_minus, None)
                p_plus = d_nu(geom, s.A.data, v_plus, None)
                rate = assemble_gauge_rhs(sys0, s)
            want = dt * grid.weights[..., None, None] * (rate - (p_plus - p_minus) / dt)
            got = np.zeros_like(want)
            base = getattr(s, name).data
            for idx in np.ndindex(*base.shape):
                vals = []
                for sgn in (1, -1):
                    base[idx] += sgn * step_size
                    vals.append(total(traj))
                    base[idx] -= sgn * step_size
                got[idx] = (vals[0] - vals[1]) / (2 * step_size)
            worst = max(worst, float(np.max(np.abs(got - want))))
            scale = max(scale, float(np.max(np.abs(want))))
    return worst / scale if scale else worst


__all__ = [
    "NumericalGuardError", "ForceModel", "PontryaginState", "FieldSystem", "initial_state",
    "interior_force", "boundary_force", "sector_boundary_force", "boundary_targets", "apply_boundary_currents",
    "matter_zeta", "gauge_curvature", "assemble_matter_rhs", "assemble_gauge_rhs", "cross_term",
    "rates", "legendre", "legendre_residual", "step", "Snapshot", "snapshot", "BalanceReport",
    "BalanceRecorder", "simulate", "energy_balance", "charge_diagnostics", "bianchi_residual",
    "rhs_gradient_check", "action_gradient_check",
]
