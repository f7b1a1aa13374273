"""Bundle-valued forms on a grid and the two restricted-dual representations.

Storage conventions
-------------------
A k-form with values in an n-dimensional fiber is an array of shape
``nodes + (C(m, k), n)``; slot ``I`` follows :func:`multi_indices` (sorted,
0-based).  The "star" dual of a k-form holds upper-index components
``chi^J_a`` multiplying ``d^m x`` (the coordinate volume, not ``mu_g``), with
the same layout.  The "dagger" dual is an ``(m - k)``-form with dual-fiber
values.

Every sign comes from :func:`merge_sign`.  The interior product of the volume
is ``d_J x = i_{d_J} d^m x = merge_sign(J, J^c) dx^{J^c}``, so ``dx^J ^ d_J x =
d^m x``.  The vector-valued contraction of ``d_J`` (|J| = k+1) with ``dx^{J_r}``
is ``s(J, r) d_{j_r}`` where ``s`` is defined by
``dx^{J_r} ^ d_J x = s(J, r) d_{(j_r)} x``; see :func:`trace_sign`.

Densities on the interior are plain node arrays of ``d^m x`` coefficients.
On a face they are coefficients of ``d^{m-1} y`` in the face chart, and the
face orientation ``sigma`` is applied at integration time.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np

from .grid import Face, MetricField, RectGrid, induced_boundary_data

# A top-degree density: node array of coefficients of d^m x (or d^{m-1} y on a face).
TopFormDensity = np.ndarray


@lru_cache(maxsize=None)
def multi_indices(m: int, k: int) -> tuple[tuple[int, ...], ...]:
    if not 0 <= k <= m:
        return ()
    return tuple(combinations(range(m), k))


@lru_cache(maxsize=None)
def slot(m: int, idx: tuple[int, ...]) -> int:
    return multi_indices(m, len(idx)).index(tuple(idx))


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def merge_sign(I: tuple[int, ...], J: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    """``dx^I ^ dx^J = sign * dx^K`` with ``K`` sorted."""
    return perm_sign(I + J), tuple(sorted(I + J))


@lru_cache(maxsize=None)
def complement(I: tuple[int, ...], m: int) -> tuple[int, ...]:
    return tuple(i for i in range(m) if i not in I)


@lru_cache(maxsize=None)
def trace_sign(J: tuple[int, ...], r: int, m: int) -> int:
    """``s(J, r)`` with ``dx^{J_r} ^ d_J x = s d_{(j_r)} x`` (r is 0-based)."""
    Jr = J[:r] + J[r + 1:]
    jr = (J[r],)
    s1, _ = merge_sign(J, complement(J, m))
    s2, _ = merge_sign(Jr, complement(J, m))
    s3, _ = merge_sign(jr, complement(jr, m))
    return s1 * s2 * s3


def n_slots(m: int, k: int) -> int:
    return comb(m, k)


@dataclass
class FormField:
    """Fiber-valued k-form: ``data`` has shape ``nodes + (C(dim, degree), n)``."""

    data: np.ndarray
    degree: int
    dim: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if not 0 <= self.degree <= self.dim:
            raise ValueError(f"degree {self.degree} outside 0..{self.dim}")
        if self.data.ndim < 2 or self.data.shape[-2] != comb(self.dim, self.degree):
            raise ValueError(
                f"a {self.degree}-form in {self.dim}D needs {comb(self.dim, self.degree)} "
                f"multi-index slots, got array of shape {self.data.shape}")

    @classmethod
    def zeros(cls, nodes: tuple[int, ...], degree: int, dim: int, n: int) -> "FormField":
        return cls(np.zeros(tuple(nodes) + (comb(dim, degree), n)), degree, dim)

    @property
    def n(self) -> int:
        return self.data.shape[-1]

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.data.shape[:-2]

    def component(self, idx, a: int = 0) -> np.ndarray:
        return self.data[..., slot(self.dim, tuple(idx)), a]

    def copy(self) -> "FormField":
        return FormField(self.data.copy(), self.degree, self.dim)

    def _like(self, data) -> "FormField":
        return FormField(data, self.degree, self.dim)

    def __add__(self, other: "FormField") -> "FormField":
        return self._like(self.data + other.data)

    def __sub__(self, other: "FormField") -> "FormField":
        return self._like(self.data - other.data)

    def __mul__(self, c: float) -> "FormField":
        return self._like(self.data * c)

    __rmul__ = __mul__

    def __neg__(self) -> "FormField":
        return self._like(-self.data)


@dataclass
class DualField:
    """Element ``(alpha, alpha_d)`` of a restricted dual of ``Omega^degree``.

    ``rep`` is ``"star"`` or ``"dagger"``.  ``boundary`` maps faces to arrays
    in the face chart: star parts have ``C(m-1, k)`` upper slots, dagger parts
    are ``(m-1-k)``-forms.
    """

    rep: str
    interior: np.ndarray
    degree: int
    dim: int
    boundary: dict[Face, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.rep not in ("star", "dagger"):
            raise ValueError(f"unknown representation {self.rep!r}")
        m, k = self.dim, self.degree
        want = comb(m, k) if self.rep == "star" else comb(m, m - k)
        if self.interior.shape[-2] != want:
            raise ValueError(f"{self.rep} interior part needs {want} slots")
        if k == m and self.boundary:
            raise ValueError("a top-degree dual has no boundary part")
        bwant = comb(m - 1, k) if self.rep == "star" else comb(m - 1, max(m - 1 - k, 0))
        for face, arr in self.boundary.items():
            if arr.shape[-2] != bwant:
                raise ValueError(f"{self.rep} boundary part on {face.name} needs {bwant} slots")

    @property
    def n(self) -> int:
        return self.interior.shape[-1]

    def copy(self) -> "DualField":
        return DualField(self.rep, self.interior.copy(), self.degree, self.dim,
                         {f: a.copy() for f, a in self.boundary.items()})


# ---------------------------------------------------------------- contractions

def contract(chi: np.ndarray, phi: np.ndarray, m: int, k: int,
             upper: int | None = None) -> np.ndarray:
    """Pointwise ``chi . phi`` for a k-form ``phi``.

    ``chi`` has upper degree ``upper``: k gives the full contraction (scalar
    density), k + 1 a vector density with a trailing axis of length m.
    Fibers are contracted.
    """
    upper = k if upper is None else upper
    if upper == k:
        return np.einsum("...Ia,...Ia->...", chi, phi)
    if upper != k + 1 or upper > m:
        raise ValueError("upper degree must equal k or k + 1")
    out = np.zeros(np.broadcast_shapes(chi.shape[:-2], phi.shape[:-2]) + (m,))
    for jj, J in enumerate(multi_indices(m, k + 1)):
        for r in range(k + 1):
            Jr = J[:r] + J[r + 1:]
            out[..., J[r]] += trace_sign(J, r, m) * np.einsum(
                "...a,...a->...", chi[..., jj, :], phi[..., slot(m, Jr), :])
    return out


def contract_pair(chi: np.ndarray, phi: FormField, upper: int | None = None) -> np.ndarray:
    """``chi . phi`` with shape checks; see :func:`contract`."""
    m, k = phi.dim, phi.degree
    upper = k if upper is None else upper
    if upper not in (k, k + 1) or upper > m:
        raise ValueError("upper degree must equal k or k + 1")
    if chi.shape[-2] != comb(m, upper):
        raise ValueError(f"expected {comb(m, upper)} upper slots, got {chi.shape[-2]}")
    if chi.shape[-1] != phi.n:
        raise ValueError("fiber dimensions differ")
    return contract(chi, phi.data, m, k, upper)


@lru_cache(maxsize=None)
def _wedge_table(m: int, p: int, q: int):
    table = []
    for i, I in enumerate(multi_indices(m, p)):
        for j, J in enumerate(multi_indices(m, q)):
            s, K = merge_sign(I, J)
            if s:
                table.append((i, j, slot(m, K), s))
    return tuple(table)


def wedge(a: np.ndarray, p: int, b: np.ndarray, q: int, m: int,
          fiber: str = "contract") -> np.ndarray:
    """Wedge of a p-form and a q-form.

    ``fiber="contract"`` pairs the fiber slots (result has no fiber axis);
    ``"left"`` treats ``b`` as scalar (its fiber axis of length 1) and keeps
    the fiber of ``a``.
    """
    if p + q > m:
        raise ValueError(f"degree {p}+{q} exceeds {m}")
    nodes = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    if fiber == "contract":
        out = np.zeros(nodes + (comb(m, p + q),))
        for i, j, K, s in _wedge_table(m, p, q):
            out[..., K] += s * np.einsum("...a,...a->...", a[..., i, :], b[..., j, :])
    else:
        out = np.zeros(nodes + (comb(m, p + q), a.shape[-1]))
        for i, j, K, s in _wedge_table(m, p, q):
            out[..., K, :] += s * a[..., i, :] * b[..., j, :]
    return out


def wedge_pair(phi: FormField, beta: np.ndarray, dim: int | None = None) -> np.ndarray:
    """``phi ^ beta`` with fiber pairing; degrees must sum to the dimension."""
    m = phi.dim if dim is None else dim
    q = m - phi.degree
    if beta.shape[-2] != comb(m, q) or phi.data.shape[-2] != comb(m, phi.degree):
        raise ValueError("degrees do not sum to the top degree")
    return wedge(phi.data, phi.degree, beta, q, m)[..., 0]


# ------------------------------------------------------------ metric algebra

def compound(mat: np.ndarray, k: int) -> np.ndarray:
    """k-th compound matrix: minors ``det(mat[I, J])`` over sorted multi-indices."""
    m = mat.shape[-1]
    idx = multi_indices(m, k)
    out = np.empty(mat.shape[:-2] + (len(idx), len(idx)))
    if k == 0:
        out[...] = 1.0
        return out
    if k == 1:
        return mat.copy()
    for a, I in enumerate(idx):
        for b, J in enumerate(idx):
            sub = mat[..., list(I), :][..., :, list(J)]
            out[..., a, b] = np.linalg.det(sub)
    return out


@lru_cache(maxsize=None)
def _hodge_table(m: int, k: int):
    """For each J (degree k): (slot of J^c, sign(J, J^c))."""
    return tuple((slot(m, complement(J, m)), merge_sign(J, complement(J, m))[0])
                 for J in multi_indices(m, k))


def hodge_data(omega: np.ndarray, k: int, ginv: np.ndarray, sqrt_det: np.ndarray,
               orientation: int = 1) -> np.ndarray:
    """Hodge star on component arrays with ``alpha ^ *beta = g(alpha, beta) mu``."""
    m = ginv.shape[-1]
    raised = np.einsum("...JI,...Ia->...Ja", compound(ginv, k), omega)
    out = np.zeros(raised.shape[:-2] + (comb(m, m - k), omega.shape[-1]))
    for jj, (c, s) in enumerate(_hodge_table(m, k)):
        out[..., c, :] = s * raised[..., jj, :]
    return orientation * sqrt_det[..., None, None] * out


def hodge_star(omega: FormField, metric: MetricField, where: str = "interior",
               grid: RectGrid | None = None, face: Face | None = None) -> FormField:
    """Hodge dual on the interior, or on a face (``omega`` in the face chart)."""
    if where == "interior":
        out = hodge_data(omega.data, omega.degree, metric.ginv, metric.sqrt_det)
        return FormField(out, omega.dim - omega.degree, omega.dim)
    if where != "boundary" or grid is None or face is None:
        raise ValueError("boundary Hodge star needs grid and face")
    bd = induced_boundary_data(grid, metric, face)
    out = hodge_data(omega.data, omega.degree, bd.ginv, bd.sqrt_det, bd.sigma)
    return FormField(out, omega.dim - omega.degree, omega.dim)


def sharp_data(omega: np.ndarray, k: int, ginv: np.ndarray) -> np.ndarray:
    return np.einsum("...JI,...Ia->...Ja", compound(ginv, k), omega)


def flat_data(v: np.ndarray, k: int, g: np.ndarray) -> np.ndarray:
    return np.einsum("...JI,...Ia->...Ja", compound(g, k), v)


def musical(sigma: np.ndarray, k: int, direction: str, which: str = "both",
            metric: MetricField | None = None, kappa: np.ndarray | None = None) -> np.ndarray:
    """Raise (``sharp``) or lower (``flat``) base and/or fiber indices."""
    if direction not in ("sharp", "flat") or which not in ("base", "fiber", "both"):
        raise ValueError("direction is sharp|flat and which is base|fiber|both")
    out = sigma
    if which in ("base", "both"):
        mat = metric.ginv if direction == "sharp" else metric.g
        out = np.einsum("...JI,...Ia->...Ja", compound(mat, k), out)
    if which in ("fiber", "both"):
        kap = np.linalg.inv(kappa) if direction == "sharp" else kappa
        out = np.einsum("ab,...b->...a", kap, out)
    return out


# ----------------------------------------------------------------- Phi_E

def phi_data(chi: np.ndarray, m: int, k: int) -> np.ndarray:
    """Star components (upper degree k) to the dual (m-k)-form."""
    out = np.zeros(chi.shape[:-2] + (comb(m, m - k), chi.shape[-1]))
    for jj, (c, s) in enumerate(_hodge_table(m, k)):
        out[..., c, :] = s * chi[..., jj, :]
    return out


def phi_inv_data(alpha: np.ndarray, m: int, k: int) -> np.ndarray:
    out = np.zeros(alpha.shape[:-2] + (comb(m, k), alpha.shape[-1]))
    for jj, (c, s) in enumerate(_hodge_table(m, k)):
        out[..., jj, :] = s * alpha[..., c, :]
    return out


def phi_inv_metric(alpha: np.ndarray, m: int, k: int, ginv: np.ndarray,
                   sqrt_det: np.ndarray) -> np.ndarray:
    """Metric route to the inverse: ``(-1)^{k(m-k)} (*alpha)^sharp (x) mu_g``."""
    star = hodge_data(alpha, m - k, ginv, sqrt_det)
    return (-1) ** (k * (m - k)) * sharp_data(star, k, ginv) * sqrt_det[..., None, None]


def phi_iso(dual: DualField) -> DualField:
    if dual.rep != "star":
        raise ValueError("phi_iso expects a star element")
    m, k = dual.dim, dual.degree
    return DualField("dagger", phi_data(dual.interior, m, k), k, m,
                     {f: phi_data(a, m - 1, k) for f, a in dual.boundary.items()})


def phi_iso_inv(dual: DualField) -> DualField:
    if dual.rep != "dagger":
        raise ValueError("phi_iso_inv expects a dagger element")
    m, k = dual.dim, dual.degree
    return DualField("star", phi_inv_data(dual.interior, m, k), k, m,
                     {f: phi_inv_data(a, m - 1, k) for f, a in dual.boundary.items()})


# ------------------------------------------------------- boundary, quadrature

@lru_cache(maxsize=None)
def pullback_slots(m: int, k: int, axis: int) -> tuple[tuple[int, int], ...]:
    """(ambient slot, face slot) pairs of multi-indices avoiding ``axis``."""
    pairs = []
    for I in multi_indices(m, k):
        if axis in I:
            continue
        J = tuple(i if i < axis else i - 1 for i in I)
        pairs.append((slot(m, I), slot(m - 1, J)))
    return tuple(pairs)


def pullback_data(data: np.ndarray, k: int, m: int, grid: RectGrid, face: Face) -> np.ndarray:
    vals = grid.restrict(data, face)
    out = np.zeros(vals.shape[:-2] + (comb(m - 1, k), vals.shape[-1]))
    for a, b in pullback_slots(m, k, face.axis):
        out[..., b, :] = vals[..., a, :]
    return out


def boundary_pullback(omega: FormField, grid: RectGrid, face: Face) -> FormField:
    """Pull back to a face: drop multi-indices containing the normal axis."""
    grid.check_face(face)
    if omega.degree > omega.dim - 1:
        raise ValueError("an m-form has no nonzero pullback to a face")
    return FormField(pullback_data(omega.data, omega.degree, omega.dim, grid, face),
                     omega.degree, omega.dim - 1)


def integrate(rho: np.ndarray, grid: RectGrid, face: Face | None = None) -> float:
    """Trapezoid integral of a density on the interior or on one face."""
    if face is None:
        return float(np.sum(grid.weights * rho))
    grid.check_face(face)
    return float(face.sigma * np.sum(grid.face_weights(face) * rho))


def pairing(dual: DualField, phi: FormField, grid: RectGrid) -> float:
    m, k = phi.dim, phi.degree
    if dual.degree != k or dual.dim != m:
        raise ValueError("dual and form degrees differ")
    if dual.n != phi.n:
        raise ValueError("fiber dimensions differ")
    total = 0.0
    if dual.rep == "star":
        total += integrate(contract(dual.interior, phi.data, m, k), grid)
        for face, a in dual.boundary.items():
            if k <= m - 1:
                pb = pullback_data(phi.data, k, m, grid, face)
                total += integrate(contract(a, pb, m - 1, k), grid, face)
    else:
        total += integrate(wedge(phi.data, k, dual.interior, m - k, m)[..., 0], grid)
        for face, a in dual.boundary.items():
            if k <= m - 1:
                pb = pullback_data(phi.data, k, m, grid, face)
                total += integrate(wedge(pb, k, a, m - 1 - k, m - 1)[..., 0], grid, face)
    return total


# ------------------------------------------------------------------- dumps

def dump_field(form: FormField, path: str | Path | None = None) -> str:
    """CSV dump: '#' header lines then one row per node in row-major order."""
    m, k, n = form.dim, form.degree, form.n
    cols = [f"{''.join(str(i + 1) for i in I) or '0'}_{a + 1}"
            for I in multi_indices(m, k) for a in range(n)]
    buf = io.StringIO()
    buf.write(f"# m={m} k={k} n={n} N={','.join(str(s) for s in form.nodes)}\n")
    buf.write("# ordering: nodes row-major (last axis fastest); columns multiindex_fiber, "
              "multi-indices sorted and 1-based\n")
    buf.write(",".join(cols) + "\n")
    np.savetxt(buf, form.data.reshape(-1, len(cols)), delimiter=",", fmt="%.17g")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_field(text_or_path: str | Path) -> FormField:
    text = str(text_or_path)
    if "\n" not in text:
        text = Path(text).read_text()
    lines = text.splitlines()
    head = dict(kv.split("=") for kv in lines[0][1:].split())
    m, k, n = int(head["m"]), int(head["k"]), int(head["n"])
    nodes = tuple(int(s) for s in head["N"].split(","))
    data = np.loadtxt(io.StringIO("\n".join(lines[3:])), delimiter=",", ndmin=2)
    return FormField(data.reshape(nodes + (comb(m, k), n)), k, m)
