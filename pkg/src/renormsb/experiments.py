"""Config-driven experiments: cutoff sweeps, divergence demos, worked examples, invariant suite."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .dressing import (SIGMA_X, SIGMA_Z, SpinError, SpinSpace, build_dressed_space, renorm_inner,
                       spin_boson_map)
from .fock import (DEFAULT_MAX_STATES, annihilate, build_basis, check_relative_bounds, create,
                   exp_annihilate, exponential_vector, second_quantize)
from .forms import MetricMismatchError
from .hamiltonian import (TruncationError, dressed_regular_form, field_form, regular_hamiltonian,
                          renorm_hamiltonian_form, solve_gevp)
from .modes import (FormFactor, GridError, ModeGrid, Regularity, dressed_factor, pairing, power_family,
                    subcritical_family, weighted_norm_sq, ww_family)
from .spin_form import (ChiKernel, chi, dressed_observable, noncomm_measure, renorm_spin_form,
                        spectral_decompose, spin_norm_bound)


class ConfigError(ValueError):
    """The experiment configuration is malformed."""


DEFAULTS = {
    "name": "experiment",
    "family": {"kind": "ww", "dimension": 3, "ir_cut": 0.1, "uv_cuts": [1, 3, 10, 30, 100],
               "lambda": 0.5, "resolution": 40, "dispersion": "massless"},
    "spin": {"A": "sigma_z", "B": "sigma_x"},
    "truncation": {"N": [14, 16]},
    "probes": {"window": [0.5, 0.6], "grade": 2, "random": 2},
    "tolerances": {"tail": 1e-8, "cluster": 1e-10, "gevp": 1e-9},
    "dressed_regular": "auto",
    "max_basis": DEFAULT_MAX_STATES,
    "seed": 0,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("the config must be a JSON object")
        unknown = set(data) - set(DEFAULTS) - {"output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(_merge(DEFAULTS, data))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def override(self, **kw) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if kw.get("seed") is not None:
            raw["seed"] = int(kw["seed"])
        if kw.get("tol") is not None:
            raw["tolerances"]["tail"] = float(kw["tol"])
        if kw.get("max_basis") is not None:
            raw["max_basis"] = int(kw["max_basis"])
        cfg = ExperimentConfig(raw)
        cfg.validate()
        return cfg

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def family_spec(self) -> dict:
        return self.raw["family"]

    @property
    def truncations(self) -> list[int]:
        return [int(n) for n in self.raw["truncation"]["N"]]

    @property
    def probe_grade(self) -> int:
        return int(self.raw["probes"]["grade"])

    @property
    def window(self) -> tuple[float, float]:
        lo, hi = self.raw["probes"]["window"]
        return float(lo), float(hi)

    def spin(self) -> SpinSpace:
        try:
            return SpinSpace.from_spec(self.raw["spin"]["A"], self.raw["spin"]["B"])
        except SpinError as exc:
            raise ConfigError(str(exc)) from exc

    def family(self):
        f = self.family_spec
        kind = f.get("kind", "ww")
        try:
            if kind == "ww":
                return ww_family(int(f.get("dimension", 3)), float(f["ir_cut"]), f["uv_cuts"],
                                 float(f["lambda"]), int(f["resolution"]), f.get("dispersion", "massless"))
            if kind == "subcritical":
                return subcritical_family(float(f["lambda"]), float(f["ir_cut"]), f["uv_cuts"],
                                          int(f["resolution"]), float(f.get("exponent", -2.0)),
                                          f.get("r_max"))
            if kind == "custom":
                fam = power_family(float(f["exponent"]), float(f["lambda"]), float(f["ir_cut"]),
                                   f["uv_cuts"], int(f["resolution"]), int(f.get("dimension", 3)),
                                   f.get("dispersion", "massless"), f.get("r_max"), "custom")
                if "limit" in f:
                    from dataclasses import replace
                    fam = replace(fam, limit_regularity=Regularity(f["limit"]))
                return fam
        except (GridError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad family spec: {exc}") from exc
        raise ConfigError(f"unknown family kind {kind!r}")

    def validate(self):
        r = self.raw
        if r.get("dressed_regular") not in ("auto", "require", "off"):
            raise ConfigError("dressed_regular must be one of auto, require, off")
        Ns = r["truncation"].get("N")
        if not isinstance(Ns, list) or not Ns or any(int(b) <= int(a) for a, b in zip(Ns[:-1], Ns[1:])):
            raise ConfigError("truncation.N must be a non-empty ascending list")
        if self.probe_grade < 0 or self.truncations[0] < self.probe_grade:
            raise ConfigError("every truncation N must be at least the probe grade")
        lo, hi = self.window
        if not 0 < lo <= hi:
            raise ConfigError("probe window must satisfy 0 < lo <= hi")
        fam = self.family()
        if hi >= min(fam.cutoff_values):
            raise ConfigError("the probe window must lie strictly inside the smallest UV cutoff")
        if fam.grid.window(lo, hi).size == 0:
            raise ConfigError("the probe window contains no grid modes")
        self.spin()


# ---------------------------------------------------------------- flow stages

@dataclass(frozen=True, eq=False)
class StageResult:
    row: dict
    probes: np.ndarray          # Q_n on the probe space
    dressed: np.ndarray | None  # F_n on the probe space
    tail: np.ndarray | None
    random_values: list


def _probe_space(cfg: ExperimentConfig, fam, v: FormFactor, regularity=None):
    idx = fam.grid.window(*cfg.window)
    vr, sub = v.restrict(fam.grid, idx)
    gr = dressed_factor(vr, sub, regularity)
    basis = build_basis(len(idx), cfg.probe_grade, int(cfg.raw["max_basis"]))
    return vr, gr, sub, basis


def _random_probes(cfg: ExperimentConfig, dim: int) -> np.ndarray:
    rng = np.random.default_rng(int(cfg.raw["seed"]))
    k = int(cfg.raw["probes"].get("random", 0))
    return rng.standard_normal((k, dim)) + 1j * rng.standard_normal((k, dim))


def compute_stage(cfg: ExperimentConfig, stage: int) -> StageResult:
    """One cutoff stage (stage = -1 is the cutoff-free limit)."""
    fam = cfg.family()
    spin = cfg.spin()
    is_limit = stage < 0
    n = math.inf if is_limit else fam.cutoff_values[stage]
    v = fam.limit if is_limit else fam.generator(n)
    vr, gr, sub, basis = _probe_space(cfg, fam, v, fam.limit_regularity if is_limit else None)
    ds = build_dressed_space(spin, basis, sub, gr)
    Q = renorm_hamiltonian_form(ds)
    ground = float(solve_gevp(Q, ds, k=1).eigenvalues[0])
    decomp = spectral_decompose(spin.B, float(cfg.raw["tolerances"]["cluster"]))
    regular_v = v.is_regular
    if regular_v:
        se = weighted_norm_sq(v, fam.grid, -0.5)
        wf = weighted_norm_sq(v, fam.grid, -1.0)
        kern = ChiKernel(Regularity.REGULAR, wf)
    else:
        se = wf = math.inf
        kern = ChiKernel(Regularity.SINGULAR)
    lams = decomp.eigenvalues
    off = [abs(chi(kern, lams[i], lams[j], i, j)) for i in range(len(lams)) for j in range(len(lams)) if i != j]
    row = {"stage": stage, "cutoff": n, "self_energy_magnitude": se, "self_energy": -se,
           "wavefunction_norm_sq": wf,
           "log_dressed_vacuum_norm_sq": float(np.linalg.norm(spin.B, 2) ** 2) * wf,
           "vacuum_overlap_free": math.exp(-0.5 * wf),
           "offdiag_chi": max(off) if off else 0.0,
           "element_scale": float(np.abs(Q.matrix).max()),
           "renorm_ground_energy": ground, "gram_condition": ds.condition,
           "dressed_regular_reported": 0, "identity_residual": math.nan, "identity_tail_bound": math.nan,
           "work_N": cfg.truncations[-1], "required_N": -1}
    F = tail = None
    mode = cfg.raw["dressed_regular"]
    if mode != "off" and regular_v:
        tol = float(cfg.raw["tolerances"]["tail"])
        try:
            residuals = []
            for N in cfg.truncations:
                Fq = dressed_regular_form(ds, vr, N, tol=tol if N == cfg.truncations[-1] else None,
                                          max_states=int(cfg.raw["max_basis"]))
                residuals.append(float(np.abs(Fq.matrix - Q.matrix).max()))
            F, tail = Fq.matrix, Fq.tail
            row.update(dressed_regular_reported=1, identity_residual=residuals[-1],
                       identity_tail_bound=float(tail.max()), work_N=cfg.truncations[-1])
            row["identity_residual_by_N"] = residuals
        except TruncationError as exc:
            if mode == "require":
                raise
            row.update(required_N=exc.required_N if exc.required_N is not None else -1)
    probes = _random_probes(cfg, ds.dim)
    rand_vals = [complex(np.vdot(p, Q.matrix @ p)) for p in probes]
    return StageResult(row, Q.matrix, F, tail, rand_vals)


@dataclass(frozen=True, eq=False)
class FlowReport:
    rows: list
    probe_rows: list
    meta: dict = field(default_factory=dict)

    def column(self, name: str, include_limit: bool = False) -> np.ndarray:
        return np.array([r[name] for r in self.rows if include_limit or r["stage"] >= 0], dtype=float)

    def write(self, out_dir, prefix: str = "flow") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [io.write_csv(out / f"{prefix}.csv", self.rows, io.FLOW_COLUMNS),
                 io.write_csv(out / f"{prefix}_probes.csv", self.probe_rows, io.PROBE_COLUMNS),
                 io.write_json(out / f"{prefix}_report.json", self.meta)]
        return paths


def _run_stages(cfg: ExperimentConfig, workers: int) -> list[StageResult]:
    stages = list(range(len(cfg.family().cutoff_values))) + [-1]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(compute_stage, [cfg] * len(stages), stages))
    return [compute_stage(cfg, s) for s in stages]


def run_convergence(cfg: ExperimentConfig, workers: int = 1) -> FlowReport:
    """Sweep the cutoff and compare dressed regular, stage-renormalized and limit forms."""
    t0 = time.perf_counter()
    fam = cfg.family()
    results = _run_stages(cfg, workers)
    limit = results[-1]
    stages = results[:-1]
    gs = [fam.dressed_stage(n) for n in fam.cutoff_values]
    rows, probe_rows = [], []
    prev = None
    flags = []
    tol = float(cfg.raw["tolerances"]["tail"])
    for k, res in enumerate(stages):
        row = dict(res.row)
        row["vacuum_overlap_prev"] = (1.0 if k == 0 else
                                      math.exp(-0.5 * weighted_norm_sq(gs[k] - gs[k - 1], fam.grid, 0.0)))
        row["vacuum_overlap_first"] = math.exp(-0.5 * weighted_norm_sq(gs[k] - gs[0], fam.grid, 0.0))
        row["renorm_delta"] = math.nan if prev is None else float(np.abs(res.probes - prev).max())
        row["limit_distance"] = float(np.abs(res.probes - limit.probes).max())
        if res.dressed is not None and row["identity_residual"] > row["identity_tail_bound"] + tol:
            flags.append(f"stage {k}: form identity residual {row['identity_residual']:.2e} exceeds its bound")
        prev = res.probes
        rows.append(row)
    lrow = dict(limit.row)
    lrow.update(vacuum_overlap_prev=math.nan, vacuum_overlap_first=math.nan, renorm_delta=math.nan,
                limit_distance=0.0)
    rows.append(lrow)
    for res in stages + [limit]:
        n = res.probes.shape[0]
        for a in range(n):
            for b in range(n):
                q, lq = res.probes[a, b], limit.probes[a, b]
                f = res.dressed[a, b] if res.dressed is not None else complex(math.nan, math.nan)
                t = res.tail[a, b] if res.tail is not None else math.nan
                probe_rows.append({"stage": res.row["stage"], "cutoff": res.row["cutoff"], "row": a, "col": b,
                                   "renorm_re": q.real, "renorm_im": q.imag, "limit_re": lq.real,
                                   "limit_im": lq.imag, "dressed_re": f.real, "dressed_im": f.imag,
                                   "tail_bound": t})
    deltas = [r["renorm_delta"] for r in rows[1:-1]]
    non_monotone = [i + 2 for i in range(len(deltas) - 1) if deltas[i + 1] > deltas[i]]
    meta = {"config": cfg.raw, "config_hash": cfg.digest(), "family": fam.name,
            "limit_regularity": fam.limit_regularity.value, "supercritical": fam.supercritical,
            "monotone_divergence": fam.monotone_divergence() if fam.profile.lam != 0 else True,
            "non_monotone_delta_stages": non_monotone, "flags": flags,
            "random_probe_values": {str(r.row["stage"]): r.random_values for r in results},
            "identity_residual_by_N": {str(r.row["stage"]): r.row.get("identity_residual_by_N") for r in results},
            "seconds": time.perf_counter() - t0}
    for r in rows:
        r.pop("identity_residual_by_N", None)
    return FlowReport(rows, probe_rows, meta)


TRIVIALITY_COLUMNS = {k: io.FLOW_COLUMNS[k] for k in (
    "stage", "cutoff", "self_energy", "wavefunction_norm_sq", "log_dressed_vacuum_norm_sq",
    "vacuum_overlap_free", "vacuum_overlap_first", "vacuum_overlap_prev", "element_scale",
    "renorm_ground_energy", "renorm_delta")}
TRIVIALITY_COLUMNS["renorm_vacuum_element"] = (float, "energy", "Q_n(vacuum x e_0, vacuum x e_0)")


@dataclass(frozen=True, eq=False)
class TrivialityReport:
    rows: list
    meta: dict

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return [io.write_csv(out / "triviality.csv", self.rows, TRIVIALITY_COLUMNS),
                io.write_json(out / "triviality_report.json", self.meta)]


def run_triviality_demo(cfg: ExperimentConfig, workers: int = 1) -> TrivialityReport:
    """Divergent bare quantities next to stable renormalized ones, per cutoff stage."""
    fam = cfg.family()
    if not fam.supercritical:
        raise ConfigError("the triviality demonstration needs a supercritical family")
    cfg_nodr = ExperimentConfig(_merge(cfg.raw, {"dressed_regular": "off"}))
    flow = run_convergence(cfg_nodr, workers)
    rows = []
    for r in (r for r in flow.rows if r["stage"] >= 0):
        q00 = next(pr for pr in flow.probe_rows if pr["stage"] == r["stage"] and pr["row"] == 0 and pr["col"] == 0)
        row = {k: r[k] for k in TRIVIALITY_COLUMNS if k in r}
        row["renorm_vacuum_element"] = q00["renorm_re"]
        rows.append(row)
    meta = {"config_hash": cfg.digest(), "divergent": ["self_energy", "log_dressed_vacuum_norm_sq"],
            "stable": ["renorm_ground_energy", "renorm_vacuum_element"], "flow_meta": flow.meta}
    return TrivialityReport(rows, meta)


# ---------------------------------------------------------------- worked examples

def _check(name: str, value: float, threshold: float, passed: bool | None = None, **detail) -> dict:
    ok = bool(value <= threshold) if passed is None else bool(passed)
    return {"name": name, "passed": ok, "value": float(value), "threshold": float(threshold), **detail}


def standard_model_check(N: int = 2, omega: float = 1.0) -> dict:
    grid = ModeGrid([omega], [1.0])
    g = FormFactor([-1.0], Regularity.SINGULAR)
    ds = build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_X), build_basis(1, N), grid, g)
    qa = renorm_spin_form(ds)
    w = solve_gevp(renorm_hamiltonian_form(ds), ds).eigenvalues
    expected = np.sort(np.repeat(omega * np.arange(N + 1), 2))
    return {"spin_form_max": float(np.abs(qa.matrix).max()), "spectrum": w.tolist(),
            "spectrum_error": float(np.abs(w - expected).max())}


def energy_preserving_check(N: int = 1, omega: float = 1.0, gamma: float = -0.7) -> dict:
    grid = ModeGrid([omega], [1.0])
    ds = build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_Z), build_basis(1, N), grid, FormFactor([gamma]))
    w = solve_gevp(renorm_hamiltonian_form(ds), ds).eigenvalues
    expected = np.sort(np.add.outer([-1.0, 1.0], omega * np.arange(N + 1)).ravel())
    return {"spectrum": w.tolist(), "spectrum_error": float(np.abs(w - expected).max())}


def van_hove_check(N: int = 12, omega: float = 2.0, v: float = 1.0, probe_grade: int = 2) -> dict:
    grid = ModeGrid([omega], [1.0])
    vf = FormFactor([v])
    spin = SpinSpace.trivial(0.0, 1.0)
    H = regular_hamiltonian(spin, vf, grid, build_basis(1, N))
    hmin = float(H.eigenvalues()[0])
    ds = build_dressed_space(spin, build_basis(1, probe_grade), grid, dressed_factor(vf, grid))
    F = dressed_regular_form(ds, vf, N)
    res = solve_gevp(F, ds)
    qsb = solve_gevp(renorm_hamiltonian_form(ds), ds)
    return {"regular_min": hmin, "exact_min": -weighted_norm_sq(vf, grid, -0.5),
            "dressed_min": float(res.eigenvalues[0]), "tail_bound": float(F.tail.max()),
            "renorm_min": float(qsb.eigenvalues[0]),
            "ground_vector_is_vacuum": bool(np.allclose(np.abs(qsb.eigenvectors[:, 0]) /
                                                        np.abs(qsb.eigenvectors[0, 0]),
                                                        np.eye(ds.dim)[0], atol=1e-10))}


def two_block_check(seed: int = 0, M: int = 2, N: int = 3) -> dict:
    """Compare Q_W(psi x Psi) with its closed form on the two sigma_x eigenblocks.

    Each eigenvector e_+- of sigma_x contributes |<e_+-, psi>|^2 times the field
    energy of exp(-+a(v/omega)) Psi.
    """
    rng = np.random.default_rng(seed)
    grid = ModeGrid(rng.uniform(0.5, 2.0, M), rng.uniform(0.5, 1.5, M))
    v = FormFactor(rng.standard_normal(M) * 0.6)
    g = dressed_factor(v, grid).with_regularity(Regularity.SINGULAR)
    basis = build_basis(M, N)
    ds = build_dressed_space(SpinSpace(SIGMA_Z, SIGMA_X), basis, grid, g)
    qw = field_form(ds)
    root = np.sqrt(second_quantize(grid, basis).diagonal().real)
    u_over_omega = FormFactor(v.amplitudes / grid.omega)
    Em = exp_annihilate(u_over_omega.scaled(-1.0), grid, basis)   # e^{-a(v/omega)}
    Ep = exp_annihilate(u_over_omega, grid, basis)                # e^{+a(v/omega)}
    e_plus = np.array([1, 1]) / math.sqrt(2)
    e_minus = np.array([1, -1]) / math.sqrt(2)
    err = 0.0
    for _ in range(5):
        psi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        Psi = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
        theta = np.kron(psi, Psi)
        lhs = qw(theta, theta).real
        rhs = (abs(np.vdot(e_plus, psi)) ** 2 * np.linalg.norm(root * (Em @ Psi)) ** 2
               + abs(np.vdot(e_minus, psi)) ** 2 * np.linalg.norm(root * (Ep @ Psi)) ** 2)
        err = max(err, abs(lhs - rhs) / max(abs(rhs), 1.0))
    return {"relative_error": err}


def run_examples() -> dict:
    std = standard_model_check()
    ep = energy_preserving_check()
    vh = van_hove_check()
    tb = two_block_check()
    checks = [
        _check("standard_model_spin_form_zero", std["spin_form_max"], 0.0),
        _check("standard_model_spectrum", std["spectrum_error"], 1e-12, spectrum=std["spectrum"]),
        _check("energy_preserving_spectrum", ep["spectrum_error"], 1e-10, spectrum=ep["spectrum"]),
        _check("van_hove_regular_min", abs(vh["regular_min"] - vh["exact_min"]), 1e-8),
        _check("van_hove_dressed_min", abs(vh["dressed_min"]), 1e-8),
        _check("van_hove_renormalized_ground", abs(vh["renorm_min"]), 1e-12,
               passed=abs(vh["renorm_min"]) <= 1e-12 and vh["ground_vector_is_vacuum"]),
        _check("two_block_field_form", tb["relative_error"], 1e-12),
    ]
    return {"passed": all(c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------- invariant suite

def _random_grid(rng, M):
    return ModeGrid(rng.uniform(0.3, 2.5, M), rng.uniform(0.2, 1.5, M))


def _random_ff(rng, M, scale=1.0, regularity=Regularity.REGULAR):
    return FormFactor(scale * (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / math.sqrt(2 * M),
                      regularity)


def _random_normal(rng, s, scale=1.0):
    Q, _ = np.linalg.qr(rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s)))
    lam = scale * (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / math.sqrt(2)
    return (Q * lam) @ Q.conj().T


def _random_hermitian(rng, s):
    X = rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
    return 0.5 * (X + X.conj().T)


def _ccr(rng) -> dict:
    M, N = 3, 5
    grid = _random_grid(rng, M)
    basis = build_basis(M, N)
    worst = 0.0
    low = basis.prefix(N - 1)
    for _ in range(5):
        f, g = _random_ff(rng, M), _random_ff(rng, M)
        C = (annihilate(f, grid, basis) @ create(g, grid, basis)
             - create(g, grid, basis) @ annihilate(f, grid, basis)).toarray()
        R = C[:low, :low] - pairing(f, g, grid) * np.eye(low)
        scale = math.sqrt(weighted_norm_sq(f, grid) * weighted_norm_sq(g, grid))
        worst = max(worst, np.abs(R).max() / scale)
    return _check("ccr_residual", worst, 1e-13)


def _group_laws(rng) -> list[dict]:
    M, N, s = 2, 4, 2
    grid = _random_grid(rng, M)
    basis = build_basis(M, N)
    spin = SpinSpace(_random_hermitian(rng, s), _random_normal(rng, s))
    g1, g2, g3 = (_random_ff(rng, M) for _ in range(3))
    U = lambda a, b: spin_boson_map(a, b, spin, basis, grid).toarray()
    I = np.eye(s * basis.size)
    ident = np.abs(U(g1, g1) - I).max()
    comp = np.abs(U(g2, g3) @ U(g1, g2) - U(g1, g3)).max() / max(np.abs(U(g1, g3)).max(), 1.0)
    inv = np.abs(U(g2, g1) @ U(g1, g2) - I).max()
    d1 = build_dressed_space(spin, basis, grid, g1)
    d2 = build_dressed_space(spin, basis, grid, g2)
    iso = 0.0
    for _ in range(10):
        th = rng.standard_normal(d1.dim) + 1j * rng.standard_normal(d1.dim)
        xi = rng.standard_normal(d1.dim) + 1j * rng.standard_normal(d1.dim)
        u = U(g1, g2)
        diff = abs(renorm_inner(u @ th, u @ xi, d2) - renorm_inner(th, xi, d1))
        iso = max(iso, diff / (np.linalg.norm(d1.D @ th) * np.linalg.norm(d1.D @ xi)))
    return [_check("group_identity", ident, 1e-13), _check("group_composition", comp, 1e-13),
            _check("group_inverse", inv, 1e-13), _check("map_isometry", iso, 1e-12)]


def _chi_limit() -> dict:
    fam = ww_family(3, 0.1, (1, 3, 10, 30, 100), 1.0, 20)
    vals = []
    for n in fam.cutoff_values:
        k = ChiKernel(Regularity.REGULAR, weighted_norm_sq(fam.dressed_stage(n), fam.grid))
        vals.append(abs(chi(k, 1.0, -1.0)))
    sing = ChiKernel(Regularity.SINGULAR)
    diag_ok = all(chi(ChiKernel(Regularity.REGULAR, weighted_norm_sq(fam.dressed_stage(n), fam.grid)),
                      lam, lam, 0, 0) == 1 for n in fam.cutoff_values for lam in (1.0, -1.0))
    ok = (all(b < a for a, b in zip(vals[:-1], vals[1:])) and vals[-1] <= 1e-12 and diag_ok
          and chi(sing, 1.0, -1.0, 0, 1) == 0 and chi(sing, 1.0, 1.0, 0, 0) == 1)
    return _check("chi_regular_to_singular", vals[-1], 1e-12, passed=ok, offdiag_along_family=vals)


def _gram(rng) -> dict:
    M, N, s = 2, 4, 2
    grid = _random_grid(rng, M)
    spin = SpinSpace(_random_hermitian(rng, s), _random_normal(rng, s))
    ds = build_dressed_space(spin, build_basis(M, N), grid, _random_ff(rng, M, 1.5))
    ok = ds.chol is not None
    resid = np.abs(ds.chol @ ds.chol.conj().T - ds.G).max() / np.abs(ds.G).max() if ok else math.inf
    return _check("gram_cholesky", resid, 1e-12, passed=ok and resid <= 1e-12,
                  condition_number=ds.condition)


def _relative_bounds(rng) -> dict:
    M, N = 2, 5
    grid = _random_grid(rng, M)
    basis = build_basis(M, N)
    worst = math.inf
    ok = True
    for _ in range(100):
        f = _random_ff(rng, M, 2.0)
        psi = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
        rep = check_relative_bounds(f, psi, grid, basis)
        ok &= rep.holds
        worst = min(worst, rep.annihilation_slack, rep.creation_slack)
    return _check("relative_bounds", -worst, 0.0, passed=ok and worst >= 0, min_slack=worst)


def _semibounded(rng) -> dict:
    M, N, s = 2, 3, 2
    worst = math.inf
    for _ in range(5):
        grid = _random_grid(rng, M)
        A = _random_hermitian(rng, s)
        spin = SpinSpace(A, _random_normal(rng, s))
        ds = build_dressed_space(spin, build_basis(M, N), grid, _random_ff(rng, M, 1.0))
        low = solve_gevp(renorm_hamiltonian_form(ds), ds, k=1).eigenvalues[0]
        worst = min(worst, low + spin_norm_bound(A))
    return _check("semibounded", -worst, 1e-9, min_margin=worst)


def _representation_moved(rng) -> dict:
    worst = 0.0
    for M, N in ((1, 6), (2, 4), (3, 3)):
        grid = _random_grid(rng, M)
        spin = SpinSpace(np.zeros((2, 2)), _random_normal(rng, 2))
        ds = build_dressed_space(spin, build_basis(M, N), grid, _random_ff(rng, M, 1.5))
        w = solve_gevp(field_form(ds), ds).eigenvalues
        ref = np.sort(np.tile(ds.basis.states @ grid.omega, 2))
        worst = max(worst, np.abs(w - ref).max() / max(1.0, ref.max()))
    return _check("field_spectrum_unchanged", worst, 1e-10)


def _form_identity_escalation(rng) -> list[dict]:
    grid = ModeGrid([1.0, 1.7], [1.0, 0.6])
    v = FormFactor([0.3, -0.2 + 0.1j])
    spin = SpinSpace(SIGMA_Z + 0.2 * SIGMA_X, SIGMA_X)
    ds = build_dressed_space(spin, build_basis(2, 1), grid, dressed_factor(v, grid))
    Q = renorm_hamiltonian_form(ds)
    out = {}
    for N in (4, 6, 12, 14):
        F = dressed_regular_form(ds, v, N)
        out[N] = (float(np.abs(F.matrix - Q.matrix).max()), float(F.tail.max()))
    within = all(r <= t + 1e-14 for r, t in out.values())
    return [_check("form_identity_N12", out[12][0], 1e-8, passed=out[12][0] < 1e-8 and within),
            _check("form_identity_bound_ratio", out[14][1] / out[12][1], 0.5),
            _check("identity_residual_ratio_N4", out[6][0] / out[4][0], 0.5)]


def _spin_form_invariants(rng) -> list[dict]:
    M, N, s = 2, 3, 3
    grid = _random_grid(rng, M)
    A = _random_hermitian(rng, s)
    spin = SpinSpace(A, _random_normal(rng, s))
    ds = build_dressed_space(spin, build_basis(M, N), grid, _random_ff(rng, M, 1.0))
    qa = renorm_spin_form(ds)
    herm = np.abs(qa.matrix - qa.matrix.conj().T).max() / np.linalg.norm(A, 2)
    w = solve_gevp(qa, ds).eigenvalues
    bound = spin_norm_bound(A)
    decomp = spectral_decompose(spin.B)
    mass = 0.0
    for _ in range(10):
        psi = rng.standard_normal(s) + 1j * rng.standard_normal(s)
        phi = rng.standard_normal(s) + 1j * rng.standard_normal(s)
        m = noncomm_measure(A, decomp, psi, phi)
        mass = max(mass, abs(m.total_mass() - np.vdot(psi, A @ phi)))
    Bh = _random_hermitian(rng, s)
    dsh = build_dressed_space(SpinSpace(Bh, Bh), build_basis(M, N), grid, _random_ff(rng, M, 1.0))
    ep = np.abs(renorm_spin_form(dsh).matrix - dressed_observable(Bh, dsh)).max()
    return [_check("spin_form_hermitian", herm, 1e-12),
            _check("spin_form_bounded", max(abs(w[0]), abs(w[-1])) - bound, 0.0,
                   sharper_bound_norm_A=float(np.linalg.norm(A, 2)), extreme=[float(w[0]), float(w[-1])]),
            _check("measure_total_mass", mass, 1e-13),
            _check("energy_preserving_observable", ep, 1e-12 * max(1.0, np.abs(dressed_observable(Bh, dsh)).max()))]


def _metric_guard(rng, inject: bool) -> dict:
    grid = ModeGrid([1.0], [1.0])
    spin = SpinSpace(SIGMA_Z, SIGMA_X)
    b = build_basis(1, 2)
    d1 = build_dressed_space(spin, b, grid, FormFactor([0.3]))
    d2 = build_dressed_space(spin, b, grid, FormFactor([0.4]))
    q = field_form(d1)
    if inject:
        solve_gevp(q, d2)   # deliberately mismatched: raises MetricMismatchError
    try:
        q + field_form(d2)
    except MetricMismatchError:
        return _check("metric_guard", 0.0, 0.0, passed=True)
    return _check("metric_guard", 1.0, 0.0, passed=False)


def _exp_properties(rng) -> list[dict]:
    M, N = 3, 4
    grid = _random_grid(rng, M)
    basis = build_basis(M, N)
    g, h = _random_ff(rng, M, 1.5), _random_ff(rng, M, 1.5)
    X = annihilate(g, grid, basis)
    P = X.toarray()
    nil = np.abs(np.linalg.matrix_power(P, N + 1)).max()
    E = exp_annihilate(g, grid, basis) @ exp_annihilate(h, grid, basis)
    add = np.abs((E - exp_annihilate(g + h, grid, basis)).toarray()).max() / max(np.abs(E.toarray()).max(), 1)
    f = _random_ff(rng, M, 0.5)
    eps = exponential_vector(f, grid, basis)
    low = basis.prefix(N - 1)
    eig = (X @ eps - pairing(g, f, grid) * eps)[:low]
    return [_check("nilpotency", nil, 0.0), _check("exp_additivity", add, 1e-13),
            _check("exponential_vector_eigen", float(np.abs(eig).max()) / np.abs(eps).max(), 1e-13)]


def run_verify(seed: int = 0, inject_fault: str | None = None) -> dict:
    """Run every invariant check with a fixed seed; JSON-ready detail per invariant."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    checks = [_ccr(rng)]
    checks += _exp_properties(rng)
    checks += _group_laws(rng)
    checks.append(_chi_limit())
    checks.append(_gram(rng))
    checks.append(_relative_bounds(rng))
    checks.append(_semibounded(rng))
    checks.append(_representation_moved(rng))
    checks += _form_identity_escalation(rng)
    checks += _spin_form_invariants(rng)
    checks.append(_metric_guard(rng, inject_fault == "metric"))
    return {"passed": all(c["passed"] for c in checks), "seed": seed, "checks": checks,
            "seconds": time.perf_counter() - t0}
