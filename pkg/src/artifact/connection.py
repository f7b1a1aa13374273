"""Linear and gauge connections and the covariant calculus built on them.

Connection coefficients are stored as ``gamma[..., i, a, b] = Gamma^a_{i,b}`` so
that ``(nabla_i xi)^a = d_i xi^a + Gamma^a_{i,b} xi^b``.  The dual connection on
the dual fiber has coefficients ``-Gamma^b_{i,a}``, i.e. the negated transpose.

Trace tensors (the image of :func:`trace`) have shape
``nodes + (C(m, k), m, n)``; entry ``[I, j]`` multiplies
``d_I (x) d_{(j)} x (x) B^a`` where ``d_{(j)} x = i_{d_j} d^m x``.

Codifferential sign table, ``delta = (-1)^{m(k+1)+1} * d *`` on k-forms:

    m\\k   1    2    3
    1     -
    2     -    -
    3     -    +    -

which gives ``-*d*`` on 1-forms for every m and ``(-1)^{m+1} *d*`` on 2-forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np

from .exterior import (FormField, hodge_data, merge_sign, multi_indices,
                       slot, trace_sign)
from .grid import Face, MetricField, RectGrid, partial_derivative


@dataclass(frozen=True)
class LinearConnection:
    gamma: np.ndarray  # (..., m, n, n), broadcastable against the node shape

    @property
    def m(self) -> int:
        return self.gamma.shape[-3]

    @property
    def n(self) -> int:
        return self.gamma.shape[-1]

    def dual(self) -> "LinearConnection":
        return LinearConnection(-np.swapaxes(self.gamma, -1, -2))

    @classmethod
    def flat(cls, m: int, n: int) -> "LinearConnection":
        return cls(np.zeros((m, n, n)))


def _ext_deriv(data: np.ndarray, k: int, grid: RectGrid, gamma: np.ndarray | None) -> np.ndarray:
    m = grid.m
    out = np.zeros(data.shape[:-2] + (comb(m, k + 1), data.shape[-1]))
    for i in range(m):
        cov = partial_derivative(data, i, grid)
        if gamma is not None:
            cov = cov + np.einsum("...ab,...Ib->...Ia", gamma[..., i, :, :], data)
        for ii, I in enumerate(multi_indices(m, k)):
            s, K = merge_sign((i,), I)
            if s:
                out[..., slot(m, K), :] += s * cov[..., ii, :]
    return out


def cov_ext_deriv(conn: LinearConnection | None, phi: FormField, grid: RectGrid) -> FormField:
    """``d^nabla phi``; ``conn=None`` gives the flat exterior derivative."""
    if phi.degree >= phi.dim:
        raise ValueError("cannot differentiate a top-degree form")
    gamma = None if conn is None else conn.gamma
    return FormField(_ext_deriv(phi.data, phi.degree, grid, gamma), phi.degree + 1, phi.dim)


def dual_cov_ext_deriv(conn: LinearConnection | None, eta: FormField, grid: RectGrid) -> FormField:
    """``d^{nabla*}`` on dual-fiber forms."""
    return cov_ext_deriv(None if conn is None else conn.dual(), eta, grid)


def trace(chi: np.ndarray, m: int, upper: int) -> np.ndarray:
    """Trace of a star tensor of upper degree ``upper = k + 1``."""
    if upper < 1:
        raise ValueError("trace needs upper degree at least 1")
    k = upper - 1
    out = np.zeros(chi.shape[:-2] + (comb(m, k), m, chi.shape[-1]))
    for jj, J in enumerate(multi_indices(m, upper)):
        for r in range(upper):
            Jr = J[:r] + J[r + 1:]
            out[..., slot(m, Jr), J[r], :] += trace_sign(J, r, m) * chi[..., jj, :]
    return out


def dual_deriv_trace(conn: LinearConnection | None, T: np.ndarray, grid: RectGrid) -> np.ndarray:
    """``d^{nabla*}`` applied to the (m-1)-form part of a trace tensor.

    Returns star components of upper degree k.  The graded sign ``(-1)^k``
    from passing the k-vector part is applied by :func:`cov_divergence`.
    """
    m = grid.m
    nI = T.shape[-3]
    dual = None if conn is None else conn.dual().gamma
    out = np.zeros(T.shape[:-3] + (nI, T.shape[-1]))
    for j in range(m):
        comp = T[..., :, j, :]
        term = partial_derivative(comp, j, grid)
        if dual is not None:
            term = term + np.einsum("...ab,...Ib->...Ia", dual[..., j, :, :], comp)
        out += term
    return out


def cov_divergence(conn: LinearConnection | None, chi: np.ndarray, grid: RectGrid,
                   upper: int) -> np.ndarray:
    """``div^{nabla*} chi = d^{nabla*}(tr chi)``, star components of degree upper-1."""
    k = upper - 1
    return (-1) ** k * dual_deriv_trace(conn, trace(chi, grid.m, upper), grid)


def boundary_trace(chi: np.ndarray, grid: RectGrid, face: Face, upper: int) -> np.ndarray:
    """``iota^*(tr chi)`` as a star tensor in the face chart (degree upper-1)."""
    grid.check_face(face)
    m, p, k = grid.m, face.axis, upper - 1
    vals = grid.restrict(chi, face)
    s_p = merge_sign((p,), tuple(i for i in range(m) if i != p))[0]
    out = np.zeros(vals.shape[:-2] + (comb(m - 1, k), vals.shape[-1]))
    for jj, J in enumerate(multi_indices(m, upper)):
        if p not in J:
            continue
        r = J.index(p)
        rest = tuple(i if i < p else i - 1 for i in J if i != p)
        out[..., slot(m - 1, rest), :] += trace_sign(J, r, m) * s_p * vals[..., jj, :]
    return out


def boundary_trace_set(chi: np.ndarray, target: np.ndarray, grid: RectGrid, face: Face,
                       upper: int) -> np.ndarray:
    """Copy of ``chi`` whose face components with a normal leg make
    ``boundary_trace`` equal ``target``; tangential components are kept."""
    m, p = grid.m, face.axis
    out = chi.copy()
    s_p = merge_sign((p,), tuple(i for i in range(m) if i != p))[0]
    idx = grid.face_index(face)
    for jj, J in enumerate(multi_indices(m, upper)):
        if p not in J:
            continue
        r = J.index(p)
        rest = tuple(i if i < p else i - 1 for i in J if i != p)
        sub = out[idx]
        sub[..., jj, :] = trace_sign(J, r, m) * s_p * target[..., slot(m - 1, rest), :]
        out[idx] = sub
    return out


def codifferential(conn: LinearConnection | None, omega: FormField, metric: MetricField,
                   grid: RectGrid) -> FormField:
    """``delta^nabla = (-1)^{m(k+1)+1} * d^nabla *`` on k-forms, k >= 1."""
    m, k = omega.dim, omega.degree
    if k < 1:
        raise ValueError("codifferential of a 0-form is undefined")
    star = hodge_data(omega.data, k, metric.ginv, metric.sqrt_det)
    gamma = None if conn is None else conn.gamma
    d = _ext_deriv(star, m - k, grid, gamma)
    out = hodge_data(d, m - k + 1, metric.ginv, metric.sqrt_det)
    return FormField((-1) ** (m * (k + 1) + 1) * out, k - 1, m)


# ------------------------------------------------------------ Lie algebras

@dataclass(frozen=True)
class LieAlgebra:
    """Structure constants ``f[a, b, c] = f^a_{bc}`` in a K-orthonormal basis."""

    name: str
    f: np.ndarray

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @cached_property
    def killing(self) -> np.ndarray:
        """Invariant form, normalized to ``-identity`` in the working basis."""
        return -np.eye(self.n)

    @property
    def abelian(self) -> bool:
        return not np.any(self.f)

    def bracket(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("abc,...b,...c->...a", self.f, x, y)

    def residuals(self) -> dict[str, float]:
        f = self.f
        jac = (np.einsum("abd,dce->abce", f, f) + np.einsum("acd,deb->abce", f, f)
               + np.einsum("aed,dbc->abce", f, f))
        return {
            "antisymmetry": float(np.max(np.abs(f + np.swapaxes(f, 1, 2)), initial=0.0)),
            "jacobi": float(np.max(np.abs(jac), initial=0.0)),
            "invariance": float(np.max(np.abs(f + np.transpose(f, (2, 1, 0))), initial=0.0)),
        }

    def validate(self, tol: float = 1e-12) -> None:
        bad = {k: v for k, v in self.residuals().items() if v > tol}
        if bad:
            raise ValueError(f"structure constants of {self.name} fail: {bad}")


def u1() -> LieAlgebra:
    return LieAlgebra("u1", np.zeros((1, 1, 1)))


def su2() -> LieAlgebra:
    eps = np.zeros((3, 3, 3))
    for (a, b, c), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1,
                         (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}.items():
        eps[a, b, c] = s
    return LieAlgebra("su2", eps)


def lie_algebra(name: str) -> LieAlgebra:
    table = {"u1": u1, "su2": su2}
    if name not in table:
        raise ValueError(f"unknown Lie algebra {name!r}; built-ins are {sorted(table)}")
    return table[name]()


@dataclass(frozen=True)
class Representation:
    """Matrices ``rho[c, p, q] = (rho_c)^p_q`` on a fiber with invariant metric kappa."""

    rho: np.ndarray
    kappa: np.ndarray

    @property
    def p(self) -> int:
        return self.rho.shape[-1]

    def residuals(self, algebra: LieAlgebra) -> dict[str, float]:
        r = self.rho
        comm = np.einsum("bpr,crq->bcpq", r, r) - np.einsum("crp,bpq->bcrq", r, r)
        want = np.einsum("abc,apq->bcpq", algebra.f, r)
        inv = np.einsum("rp,crq->cpq", self.kappa, r)
        return {
            "homomorphism": float(np.max(np.abs(comm - want), initial=0.0)),
            "kappa_invariance": float(np.max(np.abs(inv + np.swapaxes(inv, 1, 2)), initial=0.0)),
        }


def adjoint_rep(algebra: LieAlgebra) -> Representation:
    return Representation(np.transpose(algebra.f, (1, 0, 2)).copy(), -algebra.killing)


def charge_rep(q: float) -> Representation:
    """u(1) acting on R^2 by rotation with charge q."""
    return Representation(q * np.array([[[0.0, -1.0], [1.0, 0.0]]]), np.eye(2))


def rep_action(rho: np.ndarray, phi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``rho_phi(xi)^p = rho[c,p,q] xi^c phi^q``; xi carries base slots."""
    return np.einsum("cpq,...Ic,...q->...Ip", rho, xi, phi)


def rep_action_adjoint(rho: np.ndarray, phi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`rep_action`: ``(rho*_phi eta)_c = eta_p rho[c,p,q] phi^q``."""
    return np.einsum("cpq,...Ip,...q->...Ic", rho, eta, phi)


@dataclass
class GaugeConnection:
    A: FormField
    algebra: LieAlgebra

    def induced(self) -> LinearConnection:
        """Adjoint-bundle connection ``Gamma^a_{i,b} = f^a_{cb} A^c_i``."""
        return LinearConnection(np.einsum("acb,...ic->...iab", self.algebra.f, self.A.data))

    def matter_connection(self, rep: Representation) -> LinearConnection:
        return LinearConnection(np.einsum("cpq,...ic->...ipq", rep.rho, self.A.data))


def curvature(A: GaugeConnection, grid: RectGrid, literal: bool = False) -> FormField:
    """``B_A = dA + 1/2 [A ^ A]``.

    ``literal=True`` returns ``d^{nabla(A)} A`` with the induced coefficients,
    which counts the quadratic term twice; it is kept only for comparison.
    """
    m = A.A.dim
    if m < 2:
        raise ValueError("curvature needs m >= 2")
    data = A.A.data
    out = _ext_deriv(data, 1, grid, None)
    factor = 2.0 if literal else 1.0
    for kk, (i, j) in enumerate(multi_indices(m, 2)):
        out[..., kk, :] += factor * A.algebra.bracket(data[..., i, :], data[..., j, :])
    return FormField(out, 2, m)


def metric_compat_residual(conn: LinearConnection, kappa: np.ndarray, x: np.ndarray,
                           y: np.ndarray) -> float:
    """Algebraic part of metric compatibility: kappa(G x, y) + kappa(x, G y)."""
    gx = np.einsum("...iab,...b->...ia", conn.gamma, x)
    gy = np.einsum("...iab,...b->...ia", conn.gamma, y)
    r = np.einsum("ab,...ia,...b->...i", kappa, gx, y) + np.einsum("ab,...a,...ib->...i", kappa, x, gy)
    return float(np.max(np.abs(r)))


__all__ = [
    "LinearConnection", "cov_ext_deriv", "dual_cov_ext_deriv", "trace", "dual_deriv_trace",
    "cov_divergence", "boundary_trace", "boundary_trace_set", "codifferential", "LieAlgebra",
    "u1", "su2", "lie_algebra", "Representation", "adjoint_rep", "charge_rep", "rep_action",
    "rep_action_adjoint", "GaugeConnection", "curvature", "metric_compat_residual",
]
