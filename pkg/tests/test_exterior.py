from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact.exterior import (DualField, FormField, boundary_pullback, contract, contract_pair,
                               dump_field, hodge_data, hodge_star, integrate, load_field,
                               merge_sign, multi_indices, musical, pairing, phi_data,
                               phi_inv_data, phi_inv_metric, phi_iso, phi_iso_inv, slot, wedge,
                               wedge_pair)
from artifact.grid import Face, GridConfig, MetricField, RectGrid, build_grid
from conftest import Geom, form_case, random_spd, seeds
from oracles import (dense_hodge, dense_inner, dense_interior_volume, dense_phi, dense_wedge,
                     parity)


def unit(m, k, idx, n=1, a=0):
    out = np.zeros((comb(m, k), n))
    out[slot(m, idx), a] = 1.0
    return out


# ------------------------------------------------------------ multi-indices

@pytest.mark.parametrize("m", [1, 2, 3])
def test_multi_indices_sorted_and_counted(m):
    for k in range(m + 1):
        idx = multi_indices(m, k)
        assert len(idx) == comb(m, k)
        assert all(list(I) == sorted(I) for I in idx)
        assert [slot(m, I) for I in idx] == list(range(len(idx)))


@given(st.integers(1, 3).flatmap(lambda m: st.tuples(
    st.just(m), st.sampled_from([I for k in range(m + 1) for I in combinations(range(m), k)]),
    st.sampled_from([I for k in range(m + 1) for I in combinations(range(m), k)]))))
def test_merge_sign_graded_symmetry(case):
    _, I, J = case
    s_ij, K = merge_sign(I, J)
    s_ji, K2 = merge_sign(J, I)
    assert K == K2
    assert s_ij == (-1) ** (len(I) * len(J)) * s_ji
    assert s_ij == parity(I + J)


# ----------------------------------------------------------- contractions

def test_contract_dual_basis():
    chi = unit(2, 1, (0,))
    phi = unit(2, 1, (0,))
    assert contract(chi, phi, 2, 1) == 1.0


def test_contract_vector_valued_example():
    chi = unit(2, 2, (0, 1))
    phi = unit(2, 1, (0,))
    assert np.allclose(contract(chi, phi, 2, 1, upper=2), [0.0, -1.0])


def test_contract_zero_form():
    chi = np.random.default_rng(0).normal(size=(3, 3, 2))
    assert np.all(contract(chi, np.zeros((3, 3, 2)), 3, 1) == 0)


def test_contract_pair_rejects_bad_degree():
    phi = FormField(np.zeros((4, 2, 1)), 1, 2)
    with pytest.raises(ValueError):
        contract_pair(np.zeros((4, 1, 1)), phi, upper=0)


@given(form_case())
def test_contract_upper_k_plus_one_against_oracle(case):
    m, k, n, seed = case
    if k == m:
        return
    rng = np.random.default_rng(seed)
    chi = rng.normal(size=(comb(m, k + 1), n))
    phi = rng.normal(size=(comb(m, k), n))
    got = contract(chi, phi, m, k, upper=k + 1)
    # oracle: (chi . phi) is the vector density v with v^j d_(j)x = phi ^ Phi(chi)
    want_form = sum(dense_wedge(phi[:, a], k, dense_phi(chi[:, a], k + 1, m), m - k - 1, m)
                    for a in range(n))
    got_form = sum(got[j] * dense_interior_volume(j, m) for j in range(m))
    assert np.allclose(got_form, want_form, atol=1e-12)


# ------------------------------------------------------------------ wedge

def test_wedge_examples():
    a = unit(2, 1, (0,))
    b = unit(2, 1, (1,))
    assert wedge(a, 1, b, 1, 2)[0] == 1.0
    assert wedge(b, 1, a, 1, 2)[0] == -1.0


def test_wedge_pair_degree_mismatch():
    phi = FormField(np.zeros((2, 1)), 1, 2)
    with pytest.raises(ValueError):
        wedge_pair(phi, np.zeros((1, 1)))


@given(st.integers(1, 3).flatmap(lambda m: st.tuples(
    st.just(m), st.integers(0, m), st.integers(0, m), seeds)))
def test_wedge_against_dense_oracle(case):
    m, p, q, seed = case
    if p + q > m:
        return
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(comb(m, p), 1))
    b = rng.normal(size=(comb(m, q), 1))
    assert np.allclose(wedge(a, p, b, q, m), dense_wedge(a[:, 0], p, b[:, 0], q, m), atol=1e-12)


@given(form_case())
def test_wedge_with_phi_equals_contraction(case):
    m, k, n, seed = case
    rng = np.random.default_rng(seed)
    chi = rng.normal(size=(5, comb(m, k), n))
    phi = FormField(rng.normal(size=(5, comb(m, k), n)), k, m)
    lhs = wedge_pair(phi, phi_data(chi, m, k))
    assert np.allclose(lhs, contract_pair(chi, phi), atol=1e-12)


# ------------------------------------------------------------------ hodge

def test_hodge_of_one_is_volume():
    g = random_spd(np.random.default_rng(1), 2, (3,))
    geom = Geom(g)
    out = hodge_data(np.ones((3, 1, 1)), 0, geom.ginv, geom.sqrt_det)
    assert np.allclose(out[:, 0, 0], geom.sqrt_det)


def test_hodge_dx1_in_3d():
    out = hodge_data(unit(3, 1, (0,))[None], 1, np.eye(3)[None], np.ones(1))
    assert np.allclose(out[0], unit(3, 2, (1, 2)))


@given(form_case())
def test_hodge_against_dense_oracle(case):
    m, k, _, seed = case
    rng = np.random.default_rng(seed)
    g = random_spd(rng, m)
    geom = Geom(g)
    w = rng.normal(size=(comb(m, k), 1))
    got = hodge_data(w[None], k, geom.ginv[None], np.atleast_1d(geom.sqrt_det))[0, :, 0]
    assert np.allclose(got, dense_hodge(w[:, 0], k, g), atol=1e-12)


@given(form_case())
def test_hodge_involution_sign(case):
    m, k, n, seed = case
    rng = np.random.default_rng(seed)
    geom = Geom(random_spd(rng, m, (4,)))
    w = rng.normal(size=(4, comb(m, k), n))
    ss = hodge_data(hodge_data(w, k, geom.ginv, geom.sqrt_det), m - k, geom.ginv, geom.sqrt_det)
    assert np.allclose(ss, (-1) ** (k * (m - k)) * w, atol=1e-12)


@given(form_case())
def test_wedge_star_is_inner_product(case):
    m, k, _, seed = case
    rng = np.random.default_rng(seed)
    g = random_spd(rng, m)
    geom = Geom(g[None])
    a = rng.normal(size=(1, comb(m, k), 1))
    b = rng.normal(size=(1, comb(m, k), 1))
    lhs = wedge(a, k, hodge_data(b, k, geom.ginv, geom.sqrt_det), m - k, m)[0, 0]
    assert np.isclose(lhs, dense_inner(a[0, :, 0], b[0, :, 0], k, g) * geom.sqrt_det[0])


def test_boundary_hodge_uses_face_orientation():
    grid, metric = build_grid(GridConfig((4, 4), (1.0, 1.0), (False, True)))
    face = Face(0, 0)
    w = FormField(np.ones((4, 1, 1)), 0, 1)
    out = hodge_star(w, metric, "boundary", grid, face)
    assert np.allclose(out.data, face.sigma)


# ---------------------------------------------------------------- musical

def test_musical_euclidean_identity():
    metric = MetricField.from_array(np.eye(2)[None])
    s = unit(2, 1, (0,))[None]
    assert np.allclose(musical(s, 1, "sharp", metric=metric, kappa=np.eye(1)), s)


def test_musical_scaled_metric():
    metric = MetricField.from_array(np.array([[[4.0]]]))
    assert np.allclose(musical(np.ones((1, 1, 1)), 1, "sharp", "base", metric=metric), 0.25)


@given(form_case(), st.sampled_from(["base", "fiber", "both"]))
def test_flat_sharp_inverse(case, which):
    m, k, n, seed = case
    rng = np.random.default_rng(seed)
    metric = MetricField.from_array(random_spd(rng, m, (3,)))
    kappa = random_spd(rng, n)
    s = rng.normal(size=(3, comb(m, k), n))
    up = musical(s, k, "sharp", which, metric, kappa)
    assert np.allclose(musical(up, k, "flat", which, metric, kappa), s, atol=1e-12)


def test_musical_rejects_unknown_direction():
    with pytest.raises(ValueError):
        musical(np.zeros((1, 1, 1)), 0, "up")


# -------------------------------------------------------------------- Phi

def test_phi_example():
    assert np.allclose(phi_data(unit(2, 1, (0,))[None], 2, 1)[0], unit(2, 1, (1,)))


@given(form_case())
def test_phi_against_dense_oracle(case):
    m, k, _, seed = case
    chi = np.random.default_rng(seed).normal(size=(comb(m, k), 1))
    assert np.allclose(phi_data(chi[None], m, k)[0, :, 0], dense_phi(chi[:, 0], k, m), atol=1e-12)


@given(form_case())
def test_phi_round_trip_and_metric_route(case):
    m, k, n, seed = case
    rng = np.random.default_rng(seed)
    geom = Geom(random_spd(rng, m, (3,)))
    chi = rng.normal(size=(3, comb(m, k), n))
    alpha = phi_data(chi, m, k)
    assert np.allclose(phi_inv_data(alpha, m, k), chi, atol=1e-12)
    assert np.allclose(phi_inv_metric(alpha, m, k, geom.ginv, geom.sqrt_det), chi, atol=1e-12)


@given(form_case())
def test_phi_is_linear(case):
    m, k, n, seed = case
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 3, comb(m, k), n))
    c = rng.normal()
    assert np.allclose(phi_data(a + c * b, m, k), phi_data(a, m, k) + c * phi_data(b, m, k))


def test_phi_iso_rejects_wrong_rep():
    d = DualField("dagger", np.zeros((3, 1, 1)), 1, 1)
    with pytest.raises(ValueError):
        phi_iso(d)
    with pytest.raises(ValueError):
        phi_iso_inv(phi_iso_inv(d))


def test_dual_field_validation():
    with pytest.raises(ValueError):
        DualField("other", np.zeros((3, 1, 1)), 0, 1)
    with pytest.raises(ValueError):
        DualField("star", np.zeros((3, 2, 1)), 0, 2)


def test_form_field_slot_check():
    with pytest.raises(ValueError):
        FormField(np.zeros((3, 2, 1)), 2, 2)


# --------------------------------------------------------------- boundary

def test_pullback_kills_normal_leg():
    grid = RectGrid((4, 4), (1.0, 1.0), (True, False))
    w = FormField(np.zeros((4, 4, 2, 1)), 1, 2)
    w.data[..., 1, 0] = 1.0
    assert np.all(boundary_pullback(w, grid, Face(1, 0)).data == 0)


def test_pullback_mixed_form():
    grid = RectGrid((4, 5), (1.0, 1.0), (False, False))
    X, Y = grid.mesh()
    w = FormField(np.stack([np.sin(X + Y), np.cos(X)], -1)[..., None], 1, 2)
    pb = boundary_pullback(w, grid, Face(1, 0))
    assert np.allclose(pb.data[:, 0, 0], np.sin(X[:, 0]))


def test_pullback_of_top_form_rejected():
    grid = RectGrid((4, 4), (1.0, 1.0), (False, False))
    with pytest.raises(ValueError):
        boundary_pullback(FormField(np.zeros((4, 4, 1, 1)), 2, 2), grid, Face(0, 0))


# ------------------------------------------------------------- quadrature

def test_integrate_unit_square():
    grid = RectGrid.from_lengths((9, 9), (1.0, 1.0), (False, False))
    assert abs(integrate(np.ones(grid.shape), grid) - 1.0) < 1e-12


def test_integrate_periodic_sin_squared():
    grid = RectGrid.from_lengths((32,), (1.0,), (True,))
    x = grid.coords(0)
    assert abs(integrate(np.sin(2 * np.pi * x) ** 2, grid) - 0.5) < 1e-10


def random_dual(rng, grid, m, k, n):
    bd = {f: rng.normal(size=grid.face_shape(f) + (comb(m - 1, k), n)) for f in grid.faces()}
    return DualField("star", rng.normal(size=grid.shape + (comb(m, k), n)), k, m, bd)


@given(st.integers(1, 3).flatmap(lambda m: st.tuples(st.just(m), st.integers(0, m - 1), seeds)))
def test_pairing_star_equals_dagger(case):
    m, k, seed = case
    rng = np.random.default_rng(seed)
    grid = RectGrid((4,) * m, (0.5,) * m, tuple(rng.random(m) < 0.5))
    dual = random_dual(rng, grid, m, k, 2)
    phi = FormField(rng.normal(size=grid.shape + (comb(m, k), 2)), k, m)
    assert np.isclose(pairing(dual, phi, grid), pairing(phi_iso(dual), phi, grid), rtol=1e-12)


def test_pairing_zero_and_boundary_only():
    rng = np.random.default_rng(3)
    grid = RectGrid((4, 5), (0.5, 0.5), (False, True))
    phi = FormField(rng.normal(size=grid.shape + (2, 1)), 1, 2)
    dual = random_dual(rng, grid, 2, 1, 1)
    dual.interior[...] = 0
    want = sum(integrate(contract(a, grid.restrict(phi.data, f)[..., 1:2, :], 1, 1), grid, f)
               for f, a in dual.boundary.items())
    assert np.isclose(pairing(dual, phi, grid), want)
    dual.interior[...] = 1.0
    assert pairing(DualField("star", 0 * dual.interior, 1, 2), phi, grid) == 0.0


def test_pairing_interior_ignores_face_values():
    rng = np.random.default_rng(4)
    grid = RectGrid((4, 5), (0.5, 0.5), (False, True))
    dual = random_dual(rng, grid, 2, 0, 1)
    phi = FormField(rng.normal(size=grid.shape + (1, 1)), 0, 2)
    inner = DualField("star", dual.interior, 0, 2)
    before = pairing(inner, phi, grid)
    for f in dual.boundary:
        dual.boundary[f] = dual.boundary[f] * 7
    assert pairing(inner, phi, grid) == before


@given(seeds, st.floats(-3, 3))
def test_pairing_bilinear(seed, c):
    rng = np.random.default_rng(seed)
    grid = RectGrid((4, 4), (0.5, 0.5), (False, False))
    dual = random_dual(rng, grid, 2, 1, 2)
    phi = FormField(rng.normal(size=grid.shape + (2, 2)), 1, 2)
    scaled = DualField("star", c * dual.interior, 1, 2, {f: c * a for f, a in dual.boundary.items()})
    assert np.isclose(pairing(scaled, phi, grid), c * pairing(dual, phi, grid), atol=1e-12)
    assert np.isclose(pairing(dual, phi * c, grid), c * pairing(dual, phi, grid), atol=1e-12)


def test_pairing_rejects_mismatch():
    grid = RectGrid((4,), (1.0,), (True,))
    with pytest.raises(ValueError):
        pairing(DualField("star", np.zeros((4, 1, 1)), 0, 1), FormField(np.zeros((4, 1, 1)), 1, 1), grid)


# ------------------------------------------------------------------ dumps

def test_dump_load_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    w = FormField(rng.normal(size=(3, 4, 2, 3)), 1, 2)
    path = tmp_path / "w.csv"
    text = dump_field(w, path)
    assert text.startswith("# m=2 k=1 n=3 N=3,4")
    back = load_field(path)
    assert back.degree == 1 and np.array_equal(back.data, w.data)
