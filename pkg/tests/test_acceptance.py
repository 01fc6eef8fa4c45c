"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run directly (``python tests/test_acceptance.py``) for the summary alone.
"""
import math
import time

import numpy as np
import pytest

from renormsb.dressing import SIGMA_X, SIGMA_Z, SpinSpace, build_dressed_space
from renormsb.experiments import ExperimentConfig, run_convergence, run_verify
from renormsb.fock import build_basis, second_quantize
from renormsb.hamiltonian import (dressed_regular_form, field_form, regular_hamiltonian, renorm_hamiltonian_form,
                                  solve_gevp)
from renormsb.modes import FormFactor, ModeGrid, Regularity, dressed_factor, weighted_norm_sq
from renormsb.spin_form import renorm_spin_form

WW_CONFIG = {
    "family": {"kind": "ww", "dimension": 3, "ir_cut": 0.1, "uv_cuts": [1, 3, 10, 30, 100], "lambda": 0.5,
               "resolution": 40},
    "spin": {"A": "sigma_z", "B": "sigma_x"},
    "truncation": {"N": [14, 16]},
    "probes": {"window": [0.5, 0.6], "grade": 2, "random": 2},
}


def report(capsys, label: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


@pytest.fixture(scope="module")
def ww_flow():
    t0 = time.perf_counter()
    flow = run_convergence(ExperimentConfig.from_dict(WW_CONFIG))
    return flow, time.perf_counter() - t0


def criterion_1(capsys=None):
    t0 = time.perf_counter()
    grid = ModeGrid([2.0], [1.0])
    v = FormFactor([1.0])
    spin = SpinSpace.trivial(0.0, 1.0)
    hmin = regular_hamiltonian(spin, v, grid, build_basis(1, 12)).eigenvalues()[0]
    ds = build_dressed_space(spin, build_basis(1, 2), grid, dressed_factor(v, grid))
    fmin = solve_gevp(dressed_regular_form(ds, v, 12), ds).eigenvalues[0]
    dt = time.perf_counter() - t0
    ok = abs(hmin + 0.5) <= 1e-8 and abs(fmin) <= 1e-8 and dt < 1.0
    return report(capsys, "1 van Hove oracle", ok,
                  f"min H_reg = {hmin:.3e} (target -0.5), min dressed form = {fmin:.3e}, {dt:.3f}s")


def criterion_2(capsys=None):
    rng = np.random.default_rng(2024)
    worst, slowest = 0.0, 0.0
    for M, N in ((1, 6), (2, 4), (3, 3)):
        t0 = time.perf_counter()
        grid = ModeGrid(rng.uniform(0.4, 2.0, M), rng.uniform(0.3, 1.5, M))
        Q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        B = (Q * (rng.standard_normal(2) + 1j * rng.standard_normal(2))) @ Q.conj().T
        amp = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        amp *= 1.5 / math.sqrt(weighted_norm_sq(FormFactor(amp), grid))
        ds = build_dressed_space(SpinSpace(np.zeros((2, 2)), B), build_basis(M, N), grid, FormFactor(amp))
        w = solve_gevp(field_form(ds), ds).eigenvalues
        ref = np.sort(np.tile(second_quantize(grid, ds.basis).diagonal().real, 2))
        worst = max(worst, float(np.abs(w - ref).max() / max(1.0, ref.max())))
        slowest = max(slowest, time.perf_counter() - t0)
    ok = worst <= 1e-10 and slowest < 10
    return report(capsys, "2 representation-moved spectrum", ok,
                  f"max relative deviation {worst:.2e} over (1,6),(2,4),(3,3); slowest case {slowest:.2f}s")


def criterion_3(capsys=None):
    grid = ModeGrid([1.0], [1.0])
    ds = build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_X), build_basis(1, 2), grid,
                             FormFactor([-1.0], Regularity.SINGULAR))
    qa = renorm_spin_form(ds).matrix
    w = solve_gevp(renorm_hamiltonian_form(ds), ds).eigenvalues
    err = float(np.abs(w - [0, 0, 1, 1, 2, 2]).max())
    ok = bool(np.all(qa == 0)) and err <= 1e-12
    return report(capsys, "3 standard spin-boson", ok,
                  f"max|Q_A| = {np.abs(qa).max():.1e}, spectrum {np.round(w, 12).tolist()}, error {err:.1e}")


def criterion_4(capsys=None):
    grid = ModeGrid([1.0], [1.0])
    ds = build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_Z), build_basis(1, 1), grid, FormFactor([0.6]))
    w = solve_gevp(renorm_hamiltonian_form(ds), ds).eigenvalues
    err = float(np.abs(w - [-1, 0, 1, 2]).max())
    return report(capsys, "4 energy-preserving", err <= 1e-10, f"spectrum {np.round(w, 10).tolist()}, error {err:.1e}")


def _identity_case(grid, v, spin, Ns):
    ds = build_dressed_space(spin, build_basis(grid.size, 1), grid, dressed_factor(v, grid))
    Q = renorm_hamiltonian_form(ds).matrix
    out = {}
    for N in Ns:
        F = dressed_regular_form(ds, v, N)
        out[N] = (float(np.abs(F.matrix - Q).max()), float(F.tail.max()))
    return out


def criterion_5(capsys=None):
    Ns = (4, 6, 8, 12, 14)
    cases = {
        "single mode v=0.3": (ModeGrid([1.0], [1.0]), FormFactor([0.3]), SpinSpace(SIGMA_Z, SIGMA_X)),
        "two modes": (ModeGrid([0.8, 1.6], [1.0, 0.5]), FormFactor([0.25, -0.3 + 0.2j]),
                      SpinSpace(SIGMA_Z + 0.4 * SIGMA_X, SIGMA_X + 0.3j * np.eye(2))),
    }
    ok, parts = True, []
    for name, (grid, v, spin) in cases.items():
        assert math.sqrt(weighted_norm_sq(dressed_factor(v, grid), grid)) <= 0.5
        r = _identity_case(grid, v, spin, Ns)
        res12, res14 = r[12][0], r[14][0]
        bound_ratio = r[14][1] / r[12][1]
        low_ratio = max(r[6][0] / r[4][0], r[8][0] / r[6][0])
        within = all(res <= bound + 1e-14 for res, bound in r.values())
        ok &= res12 < 1e-8 and bound_ratio <= 0.5 and low_ratio <= 0.5 and within
        parts.append(f"{name}: residual(12)={res12:.1e}, residual(14)={res14:.1e}, "
                     f"bound ratio 14/12={bound_ratio:.1e}, residual ratio above roundoff={low_ratio:.1e}")
    return report(capsys, "5 dressed regular = renormalized form", ok, "; ".join(parts))


def criterion_6_convergence(flow, seconds, capsys=None):
    stages = [r for r in flow.rows if r["stage"] >= 0]
    deltas = [r["renorm_delta"] for r in stages[1:]]
    decreasing = all(b < a for a, b in zip(deltas[:-1], deltas[1:]))
    final_rel = deltas[-1] / stages[-1]["element_scale"]
    se = np.array([r["self_energy_magnitude"] for r in stages])
    cuts = np.array([r["cutoff"] for r in stages])
    slope = np.polyfit(cuts, se, 1)[0]
    linear = np.allclose(se, 4 * math.pi * 0.25 * (cuts - 0.1), rtol=1e-12) and np.all(np.diff(se) > 0)
    ok = decreasing and final_rel < 1e-3 and linear and seconds < 120
    return report(capsys, "6a cutoff flow converges, self-energy diverges", ok,
                  f"deltas {[f'{d:.1e}' for d in deltas]}, final/scale {final_rel:.1e}, "
                  f"self-energy slope {slope:.4f} (4 pi lambda^2 = {math.pi:.4f}), {seconds:.1f}s")


def criterion_6_overlap(flow, capsys=None):
    stages = [r for r in flow.rows if r["stage"] >= 0]
    overlaps = {c: min(r[c] for r in stages)
                for c in ("vacuum_overlap_free", "vacuum_overlap_first", "vacuum_overlap_prev")}
    best = min(overlaps.values())
    return report(capsys, "6b vacuum overlap below 1e-6", best < 1e-6,
                  ", ".join(f"min {k} = {v:.2e}" for k, v in overlaps.items()))


def criterion_7(capsys=None):
    rep = run_verify(0)
    failed = [c["name"] for c in rep["checks"] if not c["passed"]]
    ok = rep["passed"] and rep["seconds"] < 180
    return report(capsys, "7 invariant suite", ok,
                  f"{len(rep['checks'])} checks, failed {failed or 'none'}, {rep['seconds']:.2f}s")


def test_criterion_1_van_hove(capsys):
    assert criterion_1(capsys)


def test_criterion_2_representation_moved_spectrum(capsys):
    assert criterion_2(capsys)


def test_criterion_3_standard_spin_boson(capsys):
    assert criterion_3(capsys)


def test_criterion_4_energy_preserving(capsys):
    assert criterion_4(capsys)


def test_criterion_5_form_identity(capsys):
    assert criterion_5(capsys)


def test_criterion_6_flow_convergence(ww_flow, capsys):
    assert criterion_6_convergence(*ww_flow, capsys)


def test_criterion_6_vacuum_overlap(ww_flow, capsys):
    assert criterion_6_overlap(ww_flow[0], capsys)


def test_criterion_7_invariant_suite(capsys):
    assert criterion_7(capsys)


if __name__ == "__main__":
    t0 = time.perf_counter()
    flow = run_convergence(ExperimentConfig.from_dict(WW_CONFIG))
    dt = time.perf_counter() - t0
    results = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(),
               criterion_6_convergence(flow, dt), criterion_6_overlap(flow), criterion_7()]
    print(f"{sum(results)}/{len(results)} criteria passed")
