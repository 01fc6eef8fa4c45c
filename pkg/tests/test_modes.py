import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from renormsb.modes import (FormFactor, GridError, ModeGrid, Regularity, dressed_factor, pairing,
                            power_family, radial_grid, subcritical_family, weighted_norm_sq, ww_family)


def test_single_mode_self_energy_norm():
    grid = ModeGrid([2.0], [1.0])
    assert weighted_norm_sq(FormFactor([1.0]), grid, -0.5) == pytest.approx(0.5, abs=1e-15)


def test_zero_form_factor_has_zero_norm():
    grid = ModeGrid([0.5, 1.0, 3.0], [1.0, 2.0, 0.1])
    for s in (-1.0, -0.5, 0.0, 0.5):
        assert weighted_norm_sq(FormFactor(np.zeros(3)), grid, s) == 0.0


def test_radial_quadrature_converges_to_log_integral():
    target = 4 * math.pi * math.log(100.0)
    errors = []
    for res in (10, 40, 160):
        grid = radial_grid(0.1, 10.0, res, d=3)
        v = FormFactor(grid.radius ** -0.5)
        errors.append(abs(weighted_norm_sq(v, grid, -1.0) - target))
    assert errors[-1] / target < 1e-4
    assert errors[0] > errors[1] > errors[2]


def test_dressed_factor_single_mode_and_zero():
    grid = ModeGrid([2.0], [1.0])
    assert dressed_factor(FormFactor([1.0]), grid).amplitudes[0] == -0.5
    assert np.all(dressed_factor(FormFactor([0.0]), grid).amplitudes == 0)


def test_ww_dressed_factor_is_minus_r_to_minus_three_halves():
    fam = ww_family(lam=1.0, resolution=10)
    g = fam.limit_dressed()
    r = fam.grid.radius
    assert np.allclose(g.amplitudes, -r ** -1.5, rtol=1e-14)
    assert g.regularity is Regularity.SINGULAR


def test_pairing_single_mode_and_zero():
    grid = ModeGrid([1.0], [1.0])
    assert pairing(FormFactor([-0.5]), FormFactor([2.0]), grid) == pytest.approx(-1.0)
    assert pairing(FormFactor([-0.5]), FormFactor([0.0]), grid) == 0


def test_pairing_ww_window_quadrature():
    grid = radial_grid(0.1, 10.0, 200, d=3, breakpoints=(1.0, 2.0))
    r = grid.radius
    g = FormFactor(-r ** -1.5)
    f = FormFactor(((r > 1) & (r < 2)).astype(float))
    exact = -(8 * math.pi / 3) * (2 ** 1.5 - 1)
    assert exact == pytest.approx(-15.31, abs=1e-2)
    assert pairing(g, f, grid).real == pytest.approx(exact, rel=1e-5)


def test_pairing_is_antilinear_in_first_slot():
    grid = ModeGrid([1.0, 2.0], [0.5, 1.5])
    g, f = FormFactor([1 + 1j, 0.3]), FormFactor([0.2, -1j])
    assert pairing(g.scaled(1j), f, grid) == pytest.approx(-1j * pairing(g, f, grid))


def test_ww_norms_match_closed_forms():
    lam = 0.7
    fam = ww_family(lam=lam, resolution=40)
    for n in fam.cutoff_values:
        v = fam.generator(n)
        assert weighted_norm_sq(v, fam.grid, -0.5) == pytest.approx(4 * math.pi * lam ** 2 * (n - 0.1), rel=1e-12)
        assert weighted_norm_sq(v, fam.grid, -1.0) == pytest.approx(
            4 * math.pi * lam ** 2 * math.log(n / 0.1), rel=1e-3)
    assert fam.supercritical and fam.monotone_divergence()


def test_pairing_constant_beyond_support():
    fam = ww_family(resolution=20)
    f = FormFactor((fam.grid.radius < 0.8).astype(float))
    vals = [pairing(fam.dressed_stage(n), f, fam.grid) for n in fam.cutoff_values]
    assert all(v == vals[0] for v in vals)


def test_singular_norm_is_infinite_and_guarded():
    grid = ModeGrid([1.0], [1.0])
    g = FormFactor([1.0], Regularity.SINGULAR)
    assert weighted_norm_sq(g, grid) == math.inf
    with pytest.raises(ValueError):
        weighted_norm_sq(g, grid, -0.5)


@pytest.mark.parametrize("omega,weight", [([0.0], [1.0]), ([-1.0], [1.0]), ([1.0], [-0.1]), ([1.0], [1.0, 2.0])])
def test_grid_validation(omega, weight):
    with pytest.raises(GridError):
        ModeGrid(omega, weight)


def test_family_validation():
    with pytest.raises(GridError):
        ww_family(d=2)
    with pytest.raises(GridError):
        ww_family(ir_cut=0.0)
    with pytest.raises(GridError):
        ww_family(uv_cuts=(3, 1))
    with pytest.raises(GridError):
        subcritical_family(exponent=-0.5)


def test_subcritical_limit_is_regular_and_distinct():
    fam = subcritical_family(lam=0.2, ir_cut=0.5, exponent=-1.5)
    assert fam.limit_regularity is Regularity.REGULAR and not fam.supercritical
    last = weighted_norm_sq(fam.dressed_stage(fam.cutoff_values[-1]), fam.grid)
    assert last < weighted_norm_sq(fam.limit_dressed(), fam.grid) < 1.1 * last


def test_restrict_keeps_total_norm():
    fam = ww_family(lam=0.5, resolution=20)
    v = fam.generator(10.0)
    idx = fam.grid.window(0.5, 0.6)
    vr, sub = v.restrict(fam.grid, idx)
    assert sub.size == idx.size and vr.exterior is not None
    for s in (0.0, -0.5, -1.0):
        assert weighted_norm_sq(vr, sub, s) == pytest.approx(weighted_norm_sq(v, fam.grid, s), rel=1e-13)
    lim, _ = fam.limit.restrict(fam.grid, idx)
    assert lim.exterior is None and not lim.is_regular


def test_sum_with_singular_is_singular():
    a = FormFactor([1.0])
    b = FormFactor([1.0], Regularity.SINGULAR)
    assert not (a + b).is_regular and (a - a).is_regular


def test_power_family_regularity_rule():
    assert power_family(-1.5, 1.0, 0.1, (1, 10)).limit_regularity is Regularity.REGULAR
    assert power_family(-0.5, 1.0, 0.1, (1, 10)).limit_regularity is Regularity.SINGULAR


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6), st.floats(-1.0, 0.5))
def test_norm_is_nonnegative_and_quadratic(amps, s):
    grid = ModeGrid(np.linspace(0.5, 2.0, len(amps)), np.ones(len(amps)))
    v = FormFactor(amps)
    base = weighted_norm_sq(v, grid, s)
    assert base >= 0
    assert weighted_norm_sq(v.scaled(2.0), grid, s) == pytest.approx(4 * base, rel=1e-12, abs=1e-300)


def test_grid_digest_is_stable():
    a = ModeGrid([1.0, 2.0], [1.0, 1.0])
    b = ModeGrid([1.0, 2.0], [1.0, 1.0])
    c = ModeGrid([1.0, 2.5], [1.0, 1.0])
    assert a.digest() == b.digest() != c.digest()
