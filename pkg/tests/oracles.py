"""Dense-tensor reference implementations, independent of the package's sign tables.

A k-form is expanded to a fully antisymmetric array ``T[i1, ..., ik]`` with
``omega = sum_{I sorted} omega_I dx^I``; permutation signs come from
determinants of permutation matrices.
"""

from __future__ import annotations

from itertools import combinations, permutations
from math import factorial

import numpy as np


def parity(p) -> int:
    p = list(p)
    if len(set(p)) != len(p):
        return 0
    p = list(np.argsort(np.argsort(p)))
    return int(round(np.linalg.det(np.eye(len(p))[p])))


def levi_civita(m: int) -> np.ndarray:
    eps = np.zeros((m,) * m)
    for p in permutations(range(m)):
        eps[p] = parity(p)
    return eps


def to_dense(comp: np.ndarray, m: int, k: int) -> np.ndarray:
    """Sorted-slot components (C(m,k),) to an antisymmetric (m,)*k array."""
    T = np.zeros((m,) * k)
    for s, I in enumerate(combinations(range(m), k)):
        for p in permutations(range(k)):
            T[tuple(I[i] for i in p)] = parity(p) * comp[s]
    return T


def from_dense(T: np.ndarray, m: int, k: int) -> np.ndarray:
    return np.array([T[I] for I in combinations(range(m), k)]) if k else np.array([T])


def dense_wedge(a: np.ndarray, p: int, b: np.ndarray, q: int, m: int) -> np.ndarray:
    A, B = to_dense(a, m, p), to_dense(b, m, q)
    prod = np.multiply.outer(A, B)
    out = np.zeros((m,) * (p + q))
    for perm in permutations(range(p + q)):
        out += parity(perm) * np.transpose(prod, perm)
    out /= factorial(p) * factorial(q)
    return from_dense(out, m, p + q)


def dense_hodge(omega: np.ndarray, k: int, g: np.ndarray) -> np.ndarray:
    """``(*w)_{J} = sqrt|g| / k! w^{I} eps_{I J}`` with indices raised by g."""
    m = g.shape[0]
    ginv = np.linalg.inv(g)
    W = to_dense(omega, m, k)
    for ax in range(k):
        W = np.moveaxis(np.tensordot(ginv, W, axes=([1], [ax])), 0, ax)
    eps = levi_civita(m)
    out = np.tensordot(W, eps, axes=(list(range(k)), list(range(k)))) if k else W * eps
    out = out * np.sqrt(np.linalg.det(g)) / factorial(k)
    return from_dense(out, m, m - k)


def dense_phi(chi: np.ndarray, k: int, m: int) -> np.ndarray:
    """``chi^J i_{d_J} d^m x`` with vectors inserted into the leading slots."""
    X = to_dense(chi, m, k) / factorial(k)
    eps = levi_civita(m)
    out = np.tensordot(X, eps, axes=(list(range(k)), list(range(k)))) if k else X * eps
    return from_dense(out, m, m - k)


def dense_interior_volume(j: int, m: int) -> np.ndarray:
    """Components of ``i_{d_j} d^m x``."""
    e = np.zeros(m)
    e[j] = 1.0
    return from_dense(np.tensordot(e, levi_civita(m), axes=([0], [0])), m, m - 1)


def dense_inner(a: np.ndarray, b: np.ndarray, k: int, g: np.ndarray) -> float:
    m = g.shape[0]
    ginv = np.linalg.inv(g)
    A = to_dense(a, m, k)
    for ax in range(k):
        A = np.moveaxis(np.tensordot(ginv, A, axes=([1], [ax])), 0, ax)
    return float(np.sum(A * to_dense(b, m, k)) / factorial(k))
