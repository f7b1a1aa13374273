"""Rectangular grids with boundary faces, node-sampled metrics and FD stencils.

Nodes sit at ``x_i = j * h_i``.  A periodic axis with ``N`` nodes has length
``N h`` and wraps; a bounded axis has length ``(N - 1) h`` and carries two
boundary faces, one at ``x_i = 0`` and one at ``x_i = L_i``.

Orientation of a face follows the outward normal: the induced volume form is
``iota^*(i_n mu_g)``, which in the face chart ``dy`` (the remaining coordinates
in increasing order) equals ``sigma * sqrt|g_d| dy`` with
``sigma = outward * (-1)**axis`` (0-based axis).  With that choice
``int_M d omega = sum_faces int_face iota^* omega`` holds for every face.
In one dimension the boundary is two points and the "integral" of a 0-form
is ``+f(L) - f(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np


class GridError(ValueError):
    """Invalid grid or metric description."""


@dataclass(frozen=True)
class Face:
    """Boundary face normal to ``axis`` (0-based); ``side`` 0 is x=0, 1 is x=L."""

    axis: int
    side: int

    @property
    def outward(self) -> int:
        return 1 if self.side == 1 else -1

    @property
    def sigma(self) -> int:
        """Orientation of the face chart relative to the induced volume form."""
        return self.outward * (-1) ** self.axis

    @property
    def name(self) -> str:
        return f"x{self.axis + 1}{'+' if self.side else '-'}"

    @classmethod
    def parse(cls, name: str) -> "Face":
        name = name.strip()
        if len(name) < 3 or name[0] != "x" or name[-1] not in "+-":
            raise GridError(f"bad face name {name!r}; expected e.g. 'x1-' or 'x2+'")
        try:
            axis = int(name[1:-1]) - 1
        except ValueError as exc:
            raise GridError(f"bad face name {name!r}") from exc
        return cls(axis, 1 if name[-1] == "+" else 0)


@dataclass(frozen=True)
class RectGrid:
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        m = len(self.shape)
        if not 1 <= m <= 3:
            raise GridError(f"dimension must be 1..3, got {m}")
        if len(self.spacing) != m or len(self.periodic) != m:
            raise GridError("shape, spacing and periodic must have equal length")
        for i, (n, h) in enumerate(zip(self.shape, self.spacing)):
            if n < 3:
                raise GridError(f"axis {i + 1}: need at least 3 nodes, got {n}")
            if not h > 0:
                raise GridError(f"axis {i + 1}: spacing must be positive, got {h}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))

    @classmethod
    def from_lengths(cls, shape: Sequence[int], lengths: Sequence[float],
                     periodic: Sequence[bool]) -> "RectGrid":
        spacing = [L / n if p else L / (n - 1) for n, L, p in zip(shape, lengths, periodic)]
        return cls(tuple(shape), tuple(spacing), tuple(periodic))

    @property
    def m(self) -> int:
        return len(self.shape)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * h if p else (n - 1) * h
                     for n, h, p in zip(self.shape, self.spacing, self.periodic))

    def coords(self, axis: int) -> np.ndarray:
        return np.arange(self.shape[axis]) * self.spacing[axis]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.coords(i) for i in range(self.m)], indexing="ij")

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights including the cell volume."""
        w = np.ones(())
        for i in range(self.m):
            wi = np.full(self.shape[i], self.spacing[i])
            if not self.periodic[i]:
                wi[0] *= 0.5
                wi[-1] *= 0.5
            w = np.multiply.outer(w, wi)
        return w

    def faces(self) -> list[Face]:
        return [Face(i, s) for i in range(self.m) if not self.periodic[i] for s in (0, 1)]

    def check_face(self, face: Face) -> None:
        if not 0 <= face.axis < self.m:
            raise GridError(f"face {face.name} outside a {self.m}-dimensional grid")
        if self.periodic[face.axis]:
            raise GridError(f"face {face.name} lies on a periodic axis")

    def face_index(self, face: Face) -> tuple:
        idx = [slice(None)] * self.m
        idx[face.axis] = -1 if face.side else 0
        return tuple(idx)

    def face_shape(self, face: Face) -> tuple[int, ...]:
        return tuple(n for i, n in enumerate(self.shape) if i != face.axis)

    def face_weights(self, face: Face) -> np.ndarray:
        w = np.ones(())
        for i in range(self.m):
            if i == face.axis:
                continue
            wi = np.full(self.shape[i], self.spacing[i])
            if not self.periodic[i]:
                wi[0] *= 0.5
                wi[-1] *= 0.5
            w = np.multiply.outer(w, wi)
        return w

    def restrict(self, arr: np.ndarray, face: Face) -> np.ndarray:
        """Values of a node array on the face nodes (trailing axes kept)."""
        return arr[self.face_index(face)]


@dataclass(frozen=True)
class MetricField:
    """Node-sampled Riemannian metric with cached inverse and volume factor."""

    g: np.ndarray
    ginv: np.ndarray = field(repr=False)
    sqrt_det: np.ndarray = field(repr=False)

    @classmethod
    def from_array(cls, g: np.ndarray) -> "MetricField":
        g = np.asarray(g, dtype=float)
        if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-14):
            raise GridError("metric is not symmetric")
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        eig = np.linalg.eigvalsh(g)
        bad = np.argwhere(eig[..., 0] <= 0)
        if bad.size:
            raise GridError(f"metric is not positive definite at node {tuple(int(i) for i in bad[0])}")
        return cls(g, np.linalg.inv(g), np.sqrt(np.linalg.det(g)))

    @property
    def m(self) -> int:
        return self.g.shape[-1]


@dataclass(frozen=True)
class FiberMetric:
    kappa: np.ndarray

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.kappa, dtype=float))
        if k.shape[0] != k.shape[1] or not np.allclose(k, k.T, rtol=0, atol=1e-14):
            raise GridError("fiber metric must be a symmetric square matrix")
        object.__setattr__(self, "kappa", k)

    @classmethod
    def identity(cls, n: int) -> "FiberMetric":
        return cls(np.eye(n))

    @property
    def n(self) -> int:
        return self.kappa.shape[0]

    @cached_property
    def inv(self) -> np.ndarray:
        return np.linalg.inv(self.kappa)

    @property
    def positive(self) -> bool:
        return bool(np.linalg.eigvalsh(self.kappa)[0] > 0)


MetricSpec = Union[np.ndarray, Callable[..., np.ndarray], None]


@dataclass
class GridConfig:
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    periodic: tuple[bool, ...]
    metric: MetricSpec = None


def build_grid(config: GridConfig) -> tuple[RectGrid, MetricField]:
    """Grid plus metric sampled at the nodes.

    ``config.metric`` is ``None`` (Euclidean), a constant ``m x m`` matrix, or a
    callable of the coordinate arrays returning ``shape + (m, m)``.
    """
    grid = RectGrid(tuple(config.shape), tuple(config.spacing), tuple(config.periodic))
    m = grid.m
    spec = config.metric
    if spec is None:
        g = np.broadcast_to(np.eye(m), grid.shape + (m, m)).copy()
    elif callable(spec):
        g = np.asarray(spec(*grid.mesh()), dtype=float)
        if g.shape != grid.shape + (m, m):
            raise GridError(f"metric callable returned shape {g.shape}")
    else:
        g0 = np.asarray(spec, dtype=float)
        if g0.shape != (m, m):
            raise GridError(f"constant metric must be {m}x{m}, got {g0.shape}")
        g = np.broadcast_to(g0, grid.shape + (m, m)).copy()
    return grid, MetricField.from_array(g)


def partial_derivative(f: np.ndarray, axis: int, grid: RectGrid) -> np.ndarray:
    """Second-order FD derivative along ``axis`` of a node array.

    Leading axes of ``f`` are the grid axes; trailing axes are carried along.
    Periodic axes wrap; bounded axes use second-order one-sided end stencils.
    """
    if not 0 <= axis < grid.m:
        raise GridError(f"axis {axis} out of range for m={grid.m}")
    h = grid.spacing[axis]
    if grid.periodic[axis]:
        f = np.asarray(f)
        out = np.empty_like(f, dtype=float)
        idx = lambda s: (slice(None),) * axis + (s,)
        out[idx(slice(1, -1))] = f[idx(slice(2, None))] - f[idx(slice(None, -2))]
        out[idx(0)] = f[idx(1)] - f[idx(-1)]
        out[idx(-1)] = f[idx(0)] - f[idx(-2)]
        return out / (2.0 * h)
    return np.gradient(f, h, axis=axis, edge_order=2)


@dataclass(frozen=True)
class BoundaryData:
    face: Face
    shape: tuple[int, ...]
    g: np.ndarray          # induced metric, face_shape + (m-1, m-1)
    sqrt_det: np.ndarray   # sqrt|g_d|, face_shape
    normal: np.ndarray     # unit outward normal n^i, face_shape + (m,)
    weights: np.ndarray

    @property
    def sigma(self) -> int:
        return self.face.sigma

    @property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g) if self.g.shape[-1] else self.g


def induced_boundary_data(grid: RectGrid, metric: MetricField, face: Face) -> BoundaryData:
    grid.check_face(face)
    p = face.axis
    keep = [i for i in range(grid.m) if i != p]
    g = grid.restrict(metric.g, face)
    gd = g[..., keep, :][..., :, keep]
    sq = np.sqrt(np.linalg.det(gd)) if keep else np.ones(gd.shape[:-2])
    ginv = grid.restrict(metric.ginv, face)
    normal = face.outward * ginv[..., :, p] / np.sqrt(ginv[..., p, p])[..., None]
    return BoundaryData(face, grid.face_shape(face), gd, sq, normal, grid.face_weights(face))
