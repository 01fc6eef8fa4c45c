import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import cvec, random_ff, random_grid, random_hermitian, random_normal
from renormsb.dressing import (SIGMA_X, SIGMA_Z, GramFactorizationError, SpinError, SpinSpace,
                               build_dressed_space, coherent_transport_bound, dressing_operator,
                               normalized_dressed_inner, renorm_inner, representation_divergence,
                               spin_boson_map, spin_matrix)
from renormsb.fock import build_basis, exp_annihilate, exponential_vector
from renormsb.modes import (FormFactor, ModeGrid, Regularity, dressed_factor, pairing, subcritical_family,
                            weighted_norm_sq, ww_family)


def one_mode(gamma, N, spin=None):
    grid = ModeGrid([1.0], [1.0])
    spin = spin or SpinSpace.trivial(0.0, 1.0)
    return build_dressed_space(spin, build_basis(1, N), grid, FormFactor([gamma]))


def test_spin_presets_and_literals():
    assert np.array_equal(spin_matrix("sigma_x"), SIGMA_X)
    assert np.array_equal(spin_matrix("σ_z"), SIGMA_Z)
    assert np.array_equal(spin_matrix([[[0, 0], [0, -1]], [[0, 1], [0, 0]]]), [[0, -1j], [1j, 0]])
    with pytest.raises(SpinError):
        spin_matrix("sigma_w")


def test_spin_space_validation():
    with pytest.raises(SpinError):
        SpinSpace(np.array([[0, 1], [0, 0]]), SIGMA_X)          # A not Hermitian
    with pytest.raises(SpinError):
        SpinSpace(SIGMA_Z, np.array([[0, 1], [0, 0]]))          # B not normal
    with pytest.raises(SpinError):
        SpinSpace(SIGMA_Z, np.eye(3))


def test_dressing_trivial_cases():
    grid = ModeGrid([1.0, 2.0], [1.0, 0.5])
    b = build_basis(2, 3)
    g = FormFactor([0.4, -0.2j])
    D0 = dressing_operator(SpinSpace(SIGMA_Z, np.zeros((2, 2))), b, grid, g)
    assert np.array_equal(D0.toarray(), np.eye(2 * b.size))
    D1 = dressing_operator(SpinSpace.trivial(0.0, 1.0), b, grid, g)
    assert np.allclose(D1.toarray(), exp_annihilate(g, grid, b).toarray(), atol=0)


def test_sigma_x_blocks_alternate():
    # N = 1: D = 1 (x) 1 + sigma_x (x) a(g)
    grid = ModeGrid([1.0], [1.0])
    b = build_basis(1, 1)
    D = dressing_operator(SpinSpace(SIGMA_Z, SIGMA_X), b, grid, FormFactor([0.7])).toarray()
    a = np.array([[0, 0.7], [0, 0]])
    assert np.allclose(D, np.kron(np.eye(2), np.eye(2)) + np.kron(SIGMA_X, a), atol=0)


def test_one_mode_renormalized_inner_products():
    ds = one_mode(0.3, 4)
    e0, e1 = ds.basis.ket((0,)), ds.basis.ket((1,))
    assert renorm_inner(e0, e1, ds) == pytest.approx(0.3, abs=1e-15)
    assert renorm_inner(e1, e1, ds) == pytest.approx(1.09, abs=1e-15)
    assert renorm_inner(e0, e0, ds) == 1.0


def test_zero_dressing_is_free_inner_product(rng):
    ds = build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_X), build_basis(2, 3), random_grid(rng, 2),
                             FormFactor([0.0, 0.0]))
    x, y = cvec(rng, ds.dim), cvec(rng, ds.dim)
    assert renorm_inner(x, y, ds) == pytest.approx(np.vdot(x, y), rel=1e-15)
    assert np.array_equal(ds.G, np.eye(ds.dim))


@given(st.integers(0, 2**31 - 1))
def test_vacuum_norm_is_one_and_gram_positive(seed):
    rng = np.random.default_rng(seed)
    M, s = 2, 2
    grid = random_grid(rng, M)
    spin = SpinSpace(random_hermitian(rng, s), random_normal(rng, s))
    ds = build_dressed_space(spin, build_basis(M, 3), grid, random_ff(rng, M, 1.5))
    for k in range(s):
        vac = ds.embed(np.eye(s)[k], ds.basis.vacuum)
        assert renorm_inner(vac, vac, ds) == pytest.approx(1.0, abs=1e-14)
    assert ds.factorization == "cholesky" and ds.condition >= 1.0
    L = ds.metric_factor()
    assert np.allclose(L @ L.conj().T, ds.G, atol=1e-12 * np.abs(ds.G).max())


def test_gram_failure_is_refused():
    ds = one_mode(0.3, 2)
    broken = type(ds)(ds.spin, ds.basis, ds.grid, ds.g, ds.D, ds.G, None, "failed", math.inf, ds.key)
    with pytest.raises(GramFactorizationError):
        broken.metric_factor()
    F, dropped = ds.eigen_factor()
    assert dropped == 0 and np.allclose(F @ F.conj().T, ds.G)


def test_normalized_dressed_inner_matches_renorm_inner():
    ds = one_mode(0.3, 12)
    e1 = ds.basis.ket((1,))
    val, err = normalized_dressed_inner(e1, e1, ds)
    assert abs(val - 1.09) < 1e-8 and err < 1e-8
    assert abs(val - renorm_inner(e1, e1, ds)) <= err + 1e-15
    vac = ds.basis.vacuum
    val, err = normalized_dressed_inner(vac, vac, ds)
    assert abs(val - 1.0) <= 1e-10


def test_normalized_dressed_inner_requires_scalar_bb():
    spin = SpinSpace(SIGMA_Z, np.diag([1.0, 2.0]))
    ds = build_dressed_space(spin, build_basis(1, 3), ModeGrid([1.0], [1.0]), FormFactor([0.2]))
    x = np.ones(ds.dim)
    with pytest.raises(SpinError):
        normalized_dressed_inner(x, x, ds)


def test_normalized_dressed_inner_ratio_stable_along_family():
    # the unnormalized vacuum norm e^{||g_n||^2} explodes; the ratio stays at 1 and the
    # renormalized product of a fixed window vector stays put
    fam = ww_family(lam=0.5, resolution=20)
    idx = fam.grid.window(0.5, 0.6)
    spin = SpinSpace(SIGMA_Z, SIGMA_X)
    vals, denoms = [], []
    for n in fam.cutoff_values:
        vr, sub = fam.generator(n).restrict(fam.grid, idx)
        g = dressed_factor(vr, sub)
        ds = build_dressed_space(spin, build_basis(sub.size, 10), sub, g)
        x = ds.embed([1, 0], ds.basis.ket((1,) + (0,) * (sub.size - 1)))
        val, err = normalized_dressed_inner(x, x, ds)
        vals.append(val)
        denoms.append(weighted_norm_sq(g, sub))
        assert abs(val - renorm_inner(x, x, ds)) <= err + 1e-13
    assert np.all(np.diff(denoms) > 0) and denoms[-1] > 20
    assert max(abs(v - vals[0]) for v in vals) < 1e-12


def test_spin_boson_map_group_laws(rng):
    M, s = 2, 2
    grid = random_grid(rng, M)
    b = build_basis(M, 4)
    spin = SpinSpace(random_hermitian(rng, s), random_normal(rng, s))
    g1, g2, g3 = (random_ff(rng, M) for _ in range(3))
    U = lambda a, c: spin_boson_map(a, c, spin, b, grid).toarray()
    eye = np.eye(s * b.size)
    assert np.array_equal(U(g1, g1), eye)
    assert np.abs(U(g2, g3) @ U(g1, g2) - U(g1, g3)).max() < 1e-13 * max(1, np.abs(U(g1, g3)).max())
    assert np.abs(U(g2, g1) @ U(g1, g2) - eye).max() < 1e-13


def test_spin_boson_map_is_isometric(rng):
    M, s = 2, 2
    grid = random_grid(rng, M)
    b = build_basis(M, 4)
    spin = SpinSpace(random_hermitian(rng, s), random_normal(rng, s))
    g1, g2 = random_ff(rng, M), random_ff(rng, M)
    d1, d2 = build_dressed_space(spin, b, grid, g1), build_dressed_space(spin, b, grid, g2)
    u = spin_boson_map(g1, g2, spin, b, grid)
    for _ in range(5):
        x, y = cvec(rng, d1.dim), cvec(rng, d1.dim)
        assert renorm_inner(u @ x, u @ y, d2) == pytest.approx(renorm_inner(x, y, d1), rel=1e-12)


def test_coherent_transport(rng):
    grid = random_grid(rng, 2)
    b = build_basis(2, 10)
    spin = SpinSpace(SIGMA_Z, SIGMA_X)
    g, gp, f = random_ff(rng, 2, 0.5), random_ff(rng, 2, 0.5), random_ff(rng, 2, 0.5)
    z = pairing(g - gp, f, grid)
    psi = np.array([0.6, 0.8j])
    lhs = spin_boson_map(g, gp, spin, b, grid) @ np.kron(psi, exponential_vector(f, grid, b))
    w, V = np.linalg.eigh(SIGMA_X)
    rot = (V * np.exp(z * w)) @ V.conj().T
    rhs = np.kron(rot @ psi, exponential_vector(f, grid, b))
    bound = coherent_transport_bound(z, f, grid, b, 1.0)
    assert np.linalg.norm(lhs - rhs) <= bound + 1e-14
    assert bound < 1e-6


def test_representation_divergence_ww():
    fam = ww_family(lam=1.0, resolution=40)
    rep = representation_divergence(fam)
    i, j = fam.cutoff_values.index(10.0), fam.cutoff_values.index(100.0)
    expected = 4 * math.pi * math.log(10.0)
    assert rep.distance_sq[i, j] == pytest.approx(expected, rel=1e-3)
    assert rep.overlap[i, j] == pytest.approx(math.exp(-0.5 * expected), rel=2e-2)
    assert rep.overlap[i, j] < 1e-6 and rep.monotone
    assert np.all(np.diag(rep.overlap) == 1.0)


def test_representation_divergence_subcritical_stays_bounded():
    rep = representation_divergence(subcritical_family(lam=0.2, ir_cut=0.5, exponent=-1.5))
    assert rep.overlap.min() > 0.5


def test_singular_dressing_space_is_built_from_amplitudes():
    grid = ModeGrid([1.0], [1.0])
    g = FormFactor([-1.0], Regularity.SINGULAR)
    ds = build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_X), build_basis(1, 2), grid, g)
    assert ds.factorization == "cholesky"
    assert ds.key != build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_X), build_basis(1, 2), grid,
                                         g.with_regularity(Regularity.REGULAR)).key
