"""Lagrangian densities with analytic fiber derivatives in both dual pictures.

A density is evaluated pointwise on node arrays.  ``geom`` is anything with
``g``, ``ginv`` and ``sqrt_det`` attributes (a :class:`MetricField`, or a batch of
random metrics in tests).  Values are coefficients of ``d^m x``.

Star derivatives are upper-index arrays (coefficients of ``d^m x``); dagger
derivatives are complementary-degree forms.  The base class turns star into
dagger with ``Phi_E``; the quadratic densities below also carry the closed
forms with the Hodge star, and the two routes are compared in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .connection import LieAlgebra, Representation, rep_action, rep_action_adjoint
from .exterior import compound, contract, hodge_data, phi_data, phi_inv_data, wedge


# ---------------------------------------------------------------- potentials

class Potential:
    """Fiber potential ``V``; ``grad`` is ``dV/dphi`` as a dual-fiber vector."""

    def value(self, phi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, phi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_kappa(self, phi: np.ndarray, kappa: np.ndarray) -> np.ndarray:
        return np.einsum("ab,...b->...a", np.linalg.inv(kappa), self.grad(phi))


@dataclass
class ZeroPotential(Potential):
    def value(self, phi):
        return np.zeros(phi.shape[:-1])

    def grad(self, phi):
        return np.zeros_like(phi)


@dataclass
class KleinGordon(Potential):
    """``V = mass * kappa(phi, phi)``, so that ``grad_kappa V = 2 mass phi``."""

    mass: float
    kappa: np.ndarray

    def value(self, phi):
        return self.mass * np.einsum("...a,ab,...b->...", phi, self.kappa, phi)

    def grad(self, phi):
        return 2.0 * self.mass * np.einsum("ab,...b->...a", self.kappa, phi)


@dataclass
class Higgs(Potential):
    """``V = lam * s**2 - mu_h * s`` with ``s = kappa(phi, phi)``."""

    lam: float
    mu_h: float
    kappa: np.ndarray

    def value(self, phi):
        s = np.einsum("...a,ab,...b->...", phi, self.kappa, phi)
        return self.lam * s ** 2 - self.mu_h * s

    def grad(self, phi):
        s = np.einsum("...a,ab,...b->...", phi, self.kappa, phi)
        return (4.0 * self.lam * s - 2.0 * self.mu_h)[..., None] * np.einsum("ab,...b->...a", self.kappa, phi)


# ------------------------------------------------------------------ densities

class Density:
    """Pointwise density ``L(phi, nu, zeta)`` for a ``degree``-form field.

    Subclasses must implement :meth:`evaluate`.  Without analytic overrides
    the fiber derivatives fall back to central differences (slow path).
    """

    degree: int = 0
    dim: int = 1
    fd_step: float = 1e-6
    analytic: bool = False

    def evaluate(self, geom, phi, nu, zeta) -> np.ndarray:
        raise NotImplementedError

    def _fd(self, geom, args, which):
        base = list(args)
        x = base[which]
        out = np.zeros_like(x)
        for idx in np.ndindex(*x.shape[-2:]):
            h = self.fd_step * np.maximum(1.0, np.abs(x[(...,) + idx]))
            up, dn = [a.copy() for a in base], [a.copy() for a in base]
            up[which][(...,) + idx] += h
            dn[which][(...,) + idx] -= h
            out[(...,) + idx] = (self.evaluate(geom, *up) - self.evaluate(geom, *dn)) / (2 * h)
        return out

    # star picture
    def d_phi(self, geom, phi, nu, zeta):
        return self._fd(geom, (phi, nu, zeta), 0)

    def d_nu(self, geom, phi, nu, zeta):
        return self._fd(geom, (phi, nu, zeta), 1)

    def d_zeta(self, geom, phi, nu, zeta):
        return self._fd(geom, (phi, nu, zeta), 2)

    # dagger picture
    def dd_phi(self, geom, phi, nu, zeta):
        return phi_data(self.d_phi(geom, phi, nu, zeta), self.dim, self.degree)

    def dd_nu(self, geom, phi, nu, zeta):
        return phi_data(self.d_nu(geom, phi, nu, zeta), self.dim, self.degree)

    def dd_zeta(self, geom, phi, nu, zeta):
        return phi_data(self.d_zeta(geom, phi, nu, zeta), self.dim, self.degree + 1)

    def derivative(self, which: str, rep: str, geom, phi, nu, zeta):
        name = ("d_" if rep == "star" else "dd_") + which
        return getattr(self, name)(geom, phi, nu, zeta)

    def legendre_inverse(self, geom, phi, alpha, rep: str = "star", nu0=None, tol=1e-13):
        """Velocity with ``dL/dnu = alpha`` by Newton iteration (slow path)."""
        m, k = self.dim, self.degree
        target = alpha if rep == "star" else phi_inv_data(alpha, m, k)
        nu = np.zeros_like(phi) if nu0 is None else nu0.copy()
        zeta = np.zeros(phi.shape[:-2] + (_slots(m, k + 1), phi.shape[-1]))
        size = phi.shape[-2] * phi.shape[-1]
        for _ in range(50):
            res = self.d_nu(geom, phi, nu, zeta) - target
            if np.max(np.abs(res), initial=0.0) < tol:
                break
            jac = np.zeros(phi.shape[:-2] + (size, size))
            for col, idx in enumerate(np.ndindex(*phi.shape[-2:])):
                e = np.zeros_like(nu)
                e[(...,) + idx] = self.fd_step
                col_val = (self.d_nu(geom, phi, nu + e, zeta) - self.d_nu(geom, phi, nu - e, zeta)) / (2 * self.fd_step)
                jac[..., :, col] = col_val.reshape(phi.shape[:-2] + (size,))
            step = np.linalg.solve(jac, res.reshape(phi.shape[:-2] + (size, 1)))[..., 0]
            nu = nu - step.reshape(nu.shape)
        return nu

    def energy(self, geom, phi, nu, zeta, rep: str = "star") -> np.ndarray:
        """Energy density ``dL/dnu . nu - L``."""
        if rep == "star":
            p = contract(self.d_nu(geom, phi, nu, zeta), nu, self.dim, self.degree)
        else:
            p = wedge(nu, self.degree, self.dd_nu(geom, phi, nu, zeta),
                      self.dim - self.degree, self.dim)[..., 0]
        return p - self.evaluate(geom, phi, nu, zeta)

    def flux(self, geom, phi, nu, zeta, rep: str = "star") -> np.ndarray:
        """Star: vector density ``dL/dzeta . nu``.  Dagger: (m-1)-form ``nu ^ dL/dzeta``."""
        m, k = self.dim, self.degree
        if rep == "star":
            return contract(self.d_zeta(geom, phi, nu, zeta), nu, m, k, k + 1)
        return wedge(nu, k, self.dd_zeta(geom, phi, nu, zeta), m - k - 1, m)


_slots = comb


class QuadraticDensity(Density):
    """``(1/2 G(nu, nu) - 1/2 G(zeta, zeta) - V(phi)) mu_g``.

    ``G`` pairs forms with the metric on multi-indices (minors of ``g^{-1}``)
    and the fiber metric ``kappa``.
    """

    analytic = True

    def __init__(self, dim: int, degree: int, kappa: np.ndarray, potential: Potential | None = None):
        self.dim, self.degree = dim, degree
        self.kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
        self.potential = potential if potential is not None else ZeroPotential()
        if degree > 0 and not isinstance(self.potential, ZeroPotential):
            raise ValueError("built-in potentials act on 0-forms only")

    @property
    def n(self) -> int:
        return self.kappa.shape[0]

    def _raise(self, geom, x, k):
        return np.einsum("...JI,ab,...Ib->...Ja", compound(geom.ginv, k), self.kappa, x)

    def evaluate(self, geom, phi, nu, zeta):
        m, k = self.dim, self.degree
        kin = np.einsum("...Ia,...Ia->...", nu, self._raise(geom, nu, k))
        pot = np.einsum("...Ia,...Ia->...", zeta, self._raise(geom, zeta, k + 1)) if k < m else 0.0
        V = self.potential.value(phi[..., 0, :]) if k == 0 else 0.0
        return geom.sqrt_det * (0.5 * kin - 0.5 * pot - V)

    def d_phi(self, geom, phi, nu, zeta):
        if self.degree == 0:
            return -geom.sqrt_det[..., None, None] * self.potential.grad(phi[..., 0, :])[..., None, :]
        return np.zeros_like(phi)

    def d_nu(self, geom, phi, nu, zeta):
        return geom.sqrt_det[..., None, None] * self._raise(geom, nu, self.degree)

    def d_zeta(self, geom, phi, nu, zeta):
        return -geom.sqrt_det[..., None, None] * self._raise(geom, zeta, self.degree + 1)

    def _lower_fiber(self, x):
        return np.einsum("ab,...b->...a", self.kappa, x)

    def dd_phi(self, geom, phi, nu, zeta):
        if self.degree == 0:
            grad = self.potential.grad(phi[..., 0, :])[..., None, :]
            return -hodge_data(grad, 0, geom.ginv, geom.sqrt_det)
        return np.zeros(phi.shape[:-2] + (_slots(self.dim, self.dim - self.degree), phi.shape[-1]))

    def dd_nu(self, geom, phi, nu, zeta):
        return hodge_data(self._lower_fiber(nu), self.degree, geom.ginv, geom.sqrt_det)

    def dd_zeta(self, geom, phi, nu, zeta):
        return -hodge_data(self._lower_fiber(zeta), self.degree + 1, geom.ginv, geom.sqrt_det)

    def legendre_inverse(self, geom, phi, alpha, rep: str = "star", nu0=None, tol=None):
        m, k = self.dim, self.degree
        kinv = np.linalg.inv(self.kappa)
        if rep == "star":
            low = np.einsum("...JI,...Ia->...Ja", compound(geom.g, k), alpha)
            return np.einsum("ab,...b->...a", kinv, low) / geom.sqrt_det[..., None, None]
        # dd_nu = *(kappa nu) and ** = (-1)^{k(m-k)} on k-forms
        back = hodge_data(alpha, m - k, geom.ginv, geom.sqrt_det)
        return (-1) ** (k * (m - k)) * np.einsum("ab,...b->...a", kinv, back)


def matter_density(kappa: np.ndarray, potential: Potential | None = None, dim: int = 1,
                   degree: int = 0) -> QuadraticDensity:
    """Matter-field density on ``degree``-forms (0 for the built-in scenarios)."""
    kap = np.atleast_2d(np.asarray(kappa, dtype=float))
    if np.linalg.eigvalsh(kap)[0] <= 0:
        raise ValueError("built-in matter densities need a positive-definite fiber metric")
    return QuadraticDensity(dim, degree, kap, potential)


class YMDensity(QuadraticDensity):
    """Yang-Mills density on connection 1-forms, fiber metric ``-K``.

    In a K-orthonormal basis ``-K`` is the identity, so ``d_nu`` is the
    velocity ``epsilon`` raised with ``g`` and times ``sqrt|g|``; with
    ``E = -epsilon`` that is the ``-E^sharp (x) mu_g`` of the gauge equations.
    """

    def __init__(self, dim: int, algebra: LieAlgebra):
        if dim < 2:
            raise ValueError("Yang-Mills needs m >= 2")
        self.algebra = algebra
        super().__init__(dim, 1, -algebra.killing)

    def d_phi(self, geom, A, eps, B):
        return np.zeros_like(A)

    def dd_phi(self, geom, A, eps, B):
        return np.zeros(A.shape[:-2] + (_slots(self.dim, self.dim - 1), A.shape[-1]))


def ym_density(dim: int, algebra: LieAlgebra) -> YMDensity:
    return YMDensity(dim, algebra)


@dataclass
class YMHDensity:
    """Sum of a gauge and a matter density coupled through ``zeta = d^A phi``."""

    ym: YMDensity
    mat: QuadraticDensity
    rep: Representation
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.rep.rho.shape[0] != self.ym.algebra.n:
            raise ValueError("representation and Lie algebra dimensions differ")
        if self.rep.p != self.mat.n:
            raise ValueError("representation and matter fiber dimensions differ")

    def evaluate(self, geom, A, eps, B, phi, nu, zeta):
        return self.ym.evaluate(geom, A, eps, B) + self.mat.evaluate(geom, phi, nu, zeta)

    def cross_term(self, geom, phi, nu, zeta, rep: str = "star") -> np.ndarray:
        """``rho*_phi(dL_mat/dzeta)``: star upper-1 array or dagger (m-1)-form."""
        chi = self.mat.derivative("zeta", rep, geom, phi, nu, zeta)
        return rep_action_adjoint(self.rep.rho, phi[..., 0, :], chi)

    def interaction_powers(self, geom, eps, phi, nu, zeta) -> tuple[np.ndarray, np.ndarray]:
        """Gauge ``eps ^ rho*_phi(X)`` and matter ``-rho_phi(eps) ^ X`` densities,
        ``X = dL_mat/dzeta`` in the dagger picture."""
        m = self.mat.dim
        X = self.mat.dd_zeta(geom, phi, nu, zeta)
        gauge = wedge(eps, 1, rep_action_adjoint(self.rep.rho, phi[..., 0, :], X), m - 1, m)[..., 0]
        matter = -wedge(rep_action(self.rep.rho, phi[..., 0, :], eps), 1, X, m - 1, m)[..., 0]
        return gauge, matter


def ymh_density(ym: YMDensity, mat: QuadraticDensity, rep: Representation) -> YMHDensity:
    return YMHDensity(ym, mat, rep)
