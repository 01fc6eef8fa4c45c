"""Renormalized spin-boson forms, the regular Hamiltonian and generalized eigensolvers.

    Q_W  = D^* (Id (x) dGamma(omega)) D          renormalized field form
    Q_SB = Q_W + Q_A                             full renormalized form
    H    = A (x) 1 + 1 (x) dGamma + B^*(x)a(v) + B(x)a^+(v)

The dressed regular form conjugates H plus the counterterm B^*B ||omega^-1/2 v||^2
with K = exp(-B^*B ||g||^2 / 2) exp(B (x) a^+(g)), g = -v/omega.  It leaves
the truncation, so it is computed in a larger working basis and carries an
element-wise truncation bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gammaln

from .dressing import DressedSpace, InconsistentSpaceError, spin_fock_exp
from .fock import (DEFAULT_MAX_STATES, FockBasis, RegularityError, annihilate, build_basis, create,
                   creation_loss, nilpotent_exp, second_quantize)
from .forms import MetricMismatchError, QuadraticForm
from .modes import FormFactor, ModeGrid, dressed_factor, weighted_norm_sq
from .spin_form import renorm_spin_form, spectral_decompose
from .dressing import SpinSpace

TERM_NAMES = ("spin", "field", "annihilation", "creation", "counterterm")


class TruncationError(RuntimeError):
    """The creation-side truncation bound exceeds the requested tolerance."""

    def __init__(self, message: str, required_N: int | None):
        super().__init__(message)
        self.required_N = required_N


def _eye(n: int) -> sp.csr_matrix:
    return sp.identity(n, dtype=complex, format="csr")


def field_form(dressed: DressedSpace) -> QuadraticForm:
    """Q_W = D^* (Id (x) dGamma(omega)) D."""
    H0 = sp.kron(_eye(dressed.spin.dim), second_quantize(dressed.grid, dressed.basis), format="csr")
    D = dressed.D
    return QuadraticForm((D.conj().T @ (H0 @ D)).toarray(), dressed.key, "W")


def renorm_hamiltonian_form(dressed: DressedSpace, A=None) -> QuadraticForm:
    """Q_SB = Q_W + Q_A in the metric of ``dressed``."""
    qa = renorm_spin_form(dressed, A)
    qw = field_form(dressed)
    out = qw + qa
    return QuadraticForm(out.matrix, out.metric_key, "SB", terms={"W": qw.matrix, "A": qa.matrix},
                         meta={"A": qa.meta})


@dataclass(frozen=True, eq=False)
class RegularHamiltonian:
    matrix: sp.csr_matrix
    spin: SpinSpace
    v: FormFactor
    grid: ModeGrid
    basis: FockBasis

    def truncation_loss(self, theta: np.ndarray) -> float:
        """Norm of the part of (B (x) a^+(v)) Theta pushed above the top grade."""
        n = self.basis.size
        B = self.spin.B
        blocks = np.asarray(theta, complex).reshape(self.spin.dim, n)
        total = 0.0
        for s in range(self.spin.dim):
            # spin row s of (B (x) a^+) Theta carries sum_t B[s,t] Theta_t
            mixed = B[s] @ blocks
            total += creation_loss(self.v, mixed, self.grid, self.basis) ** 2
        return math.sqrt(total)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix.toarray())


def regular_hamiltonian(spin: SpinSpace, v: FormFactor, grid: ModeGrid, basis: FockBasis) -> RegularHamiltonian:
    """A (x) 1 + 1 (x) dGamma(omega) + B^* (x) a(v) + B (x) a^+(v) in free coordinates."""
    if not v.is_regular:
        raise RegularityError("the regular Hamiltonian needs a Regular form factor")
    if not math.isfinite(weighted_norm_sq(v, grid, -0.5)):
        raise RegularityError("v must have a finite omega^-1/2 norm")
    if v.exterior is not None:
        raise ValueError("the regular Hamiltonian is assembled only on complete grids")
    s = spin.dim
    Is = sp.csr_matrix(np.eye(s, dtype=complex))
    H = (sp.kron(sp.csr_matrix(spin.A), _eye(basis.size))
         + sp.kron(Is, second_quantize(grid, basis))
         + sp.kron(sp.csr_matrix(spin.B.conj().T), annihilate(v, grid, basis))
         + sp.kron(sp.csr_matrix(spin.B), create(v, grid, basis)))
    return RegularHamiltonian(H.tocsr(), spin, v, grid, basis)


def _hermitian_exp(H: np.ndarray, t: float) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (V * np.exp(t * w)) @ V.conj().T


@dataclass(frozen=True)
class _ExteriorData:
    norm_sq: float       # ||g_E||^2
    field: float         # <g_E, omega g_E>
    cross: complex       # <v_E, g_E>


def _exterior_data(v: FormFactor, g: FormFactor) -> _ExteriorData:
    if g.exterior is None:
        return _ExteriorData(0.0, 0.0, 0j)
    return _ExteriorData(g.exterior.inner(g.exterior, 0.0).real,
                         g.exterior.inner(g.exterior, 0.5).real,
                         v.exterior.inner(g.exterior, 0.0))


def _probe_columns(spin_dim: int, work: FockBasis, n_probe: int) -> np.ndarray:
    return np.concatenate([s * work.size + np.arange(n_probe) for s in range(spin_dim)])


def _terms_plain(spin, v, g, grid, work, cols, c_counter):
    s = spin.dim
    B = spin.B
    Bs = B.conj().T
    gn = weighted_norm_sq(g, grid, 0.0)
    K = spin_fock_exp(B, create(g, grid, work), work.max_total)
    pref = sp.kron(sp.csr_matrix(_hermitian_exp(Bs @ B, -0.5 * gn)), _eye(work.size), format="csr")
    Y = (pref @ K)[:, cols].toarray()
    I = _eye(work.size)
    ops = {
        "spin": sp.kron(sp.csr_matrix(spin.A), I),
        "field": sp.kron(sp.csr_matrix(np.eye(s, dtype=complex)), second_quantize(grid, work)),
        "annihilation": sp.kron(sp.csr_matrix(Bs), annihilate(v, grid, work)),
        "creation": sp.kron(sp.csr_matrix(B), create(v, grid, work)),
        "counterterm": c_counter * sp.kron(sp.csr_matrix(Bs @ B), I),
    }
    return {k: Y.conj().T @ (op @ Y) for k, op in ops.items()}


def _terms_exterior(spin, v, g, grid, work, cols, c_counter, ext: _ExteriorData):
    """Exterior modes enter through coherent-state scalars; interior modes are truncated."""
    s = spin.dim
    B = spin.B
    Bs = B.conj().T
    decomp = spectral_decompose(B)
    gI = weighted_norm_sq(g, grid, 0.0, include_exterior=False)
    Xc = create(g, grid, work)
    I = _eye(work.size)
    Is = sp.csr_matrix(np.eye(s, dtype=complex))
    ops = {
        "spin": sp.kron(sp.csr_matrix(spin.A), I),
        "field": sp.kron(Is, second_quantize(grid, work)),
        "annihilation": sp.kron(sp.csr_matrix(Bs), annihilate(v, grid, work)),
        "creation": sp.kron(sp.csr_matrix(B), create(v, grid, work)),
        "counterterm": c_counter * sp.kron(sp.csr_matrix(Bs @ B), I),
    }
    spin_only = {"identity": sp.kron(Is, I), "Bs": sp.kron(sp.csr_matrix(Bs), I),
                 "B": sp.kron(sp.csr_matrix(B), I)}
    T = []
    for lam, P in zip(decomp.eigenvalues, decomp.projectors):
        E = nilpotent_exp(lam * Xc, work.max_total)
        sigma = math.exp(-0.5 * abs(lam) ** 2 * gI)
        T.append(sigma * sp.kron(sp.csr_matrix(P), E, format="csr")[:, cols].toarray())
    terms = {k: 0 for k in TERM_NAMES}
    lams = decomp.eigenvalues
    for i, Ti in enumerate(T):
        for j, Tj in enumerate(T):
            li, lj = lams[i], lams[j]
            chi_e = np.exp((np.conj(li) * lj - 0.5 * (abs(li) ** 2 + abs(lj) ** 2)) * ext.norm_sq)
            if chi_e == 0:
                continue
            sand = {k: Ti.conj().T @ (op @ Tj) for k, op in ops.items()}
            base = {k: Ti.conj().T @ (op @ Tj) for k, op in spin_only.items()}
            sand["field"] = sand["field"] + np.conj(li) * lj * ext.field * base["identity"]
            sand["annihilation"] = sand["annihilation"] + lj * ext.cross * base["Bs"]
            sand["creation"] = sand["creation"] + np.conj(li) * np.conj(ext.cross) * base["B"]
            for k in TERM_NAMES:
                terms[k] = terms[k] + chi_e * sand[k]
    return terms


def dressed_tail_matrix(spin: SpinSpace, probe: FockBasis, grid: ModeGrid, v: FormFactor, g: FormFactor,
                        work_N: int, c_counter: float) -> np.ndarray:
    """Element-wise bound on |F_exact - F_truncated| for probe basis vectors.

    Components of the dressed probes above grade ``work_N`` are bounded grade by
    grade from ||a^+(g)^k Psi_q|| <= ||g||^k sqrt((q+k)!/q!) ||Psi_q||; the
    Hamiltonian couples grade n only to n and n +- 1, with block norms bounded
    by ||A|| + n omega_max + scalar terms and ||B|| ||v|| sqrt(n+1).
    """
    decomp = spectral_decompose(spin.B)
    lams = decomp.eigenvalues
    gI = weighted_norm_sq(g, grid, 0.0, include_exterior=False)
    vI = math.sqrt(weighted_norm_sq(v, grid, 0.0, include_exterior=False))
    ext = _exterior_data(v, g)
    nA = float(np.linalg.norm(spin.A, 2))
    nB = float(np.linalg.norm(spin.B, 2))
    wmax = float(grid.omega.max())
    x = float(np.max(np.abs(lams))) * math.sqrt(gI)
    L = work_N + 60 + int(4 * x * x)
    grades = probe.grades
    n = np.arange(L + 1)
    # t[i, a, n]: bound on the grade-n part of the cluster-i dressed probe a
    spin_dim = spin.dim
    probes_q = np.tile(grades, spin_dim)
    probes_s = np.repeat(np.arange(spin_dim), probe.size)
    t = np.zeros((len(lams), probes_q.size, L + 1))
    for i, (lam, P) in enumerate(zip(lams, decomp.projectors)):
        y = abs(lam) * math.sqrt(gI)
        sigma = math.exp(-0.5 * abs(lam) ** 2 * gI)
        weight = np.sqrt(np.clip(np.real(np.diag(P)), 0, None))[probes_s]
        k = n[None, :] - probes_q[:, None]
        ok = k >= 0
        kk = np.where(ok, k, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logy = math.log(y) if y > 0 else -np.inf
            logt = (np.where(kk > 0, kk * logy, 0.0)
                    + 0.5 * (gammaln(n[None, :] + 1.0) - gammaln(probes_q[:, None] + 1.0))
                    - gammaln(kk + 1.0))
        vals = np.where(ok, np.exp(np.minimum(logt, 700)), 0.0)
        t[i] = sigma * weight[:, None] * vals
    out = np.zeros((probes_q.size, probes_q.size))
    dropped = (np.maximum(n[:, None], n[None, :]) > work_N)
    band = np.abs(n[:, None] - n[None, :]) <= 1
    off = np.sqrt(np.maximum(n[:, None], n[None, :]).astype(float)) * nB * vI
    for i, li in enumerate(lams):
        for j, lj in enumerate(lams):
            chi_e = abs(np.exp((np.conj(li) * lj - 0.5 * (abs(li) ** 2 + abs(lj) ** 2)) * ext.norm_sq))
            diag = (nA + n * wmax + c_counter * nB ** 2 + abs(li * lj) * ext.field
                    + nB * (abs(li) + abs(lj)) * abs(ext.cross))
            H = np.where(n[:, None] == n[None, :], np.diag(diag), off) * band * dropped
            out += chi_e * (t[i] @ H @ t[j].T)
    return out


def required_truncation(spin, probe, grid, v, g, c_counter, tol: float, start: int, cap: int = 400) -> int | None:
    for N in range(start, cap + 1):
        if dressed_tail_matrix(spin, probe, grid, v, g, N, c_counter).max() <= tol:
            return N
    return None


def dressed_regular_form(dressed: DressedSpace, v: FormFactor, work_N: int, A=None,
                         tol: float | None = None, max_states: int = DEFAULT_MAX_STATES) -> QuadraticForm:
    """F(Theta, Xi) = <K Theta, (H + B^*B ||omega^-1/2 v||^2) K Xi> on the probe space of ``dressed``.

    ``dressed`` must be built for g = -v/omega; its basis defines the probe
    space (all states up to its particle cutoff).  The five terms are kept
    separately in ``terms``; ``tail`` holds the element-wise truncation bound.
    """
    if not v.is_regular:
        raise RegularityError("the dressed regular form needs a Regular v")
    spin = dressed.spin if A is None else SpinSpace(A, dressed.spin.B)
    grid = dressed.grid
    g = dressed_factor(v, grid)
    if not dressed.g.is_regular or not np.allclose(g.amplitudes, dressed.g.amplitudes, rtol=1e-12, atol=0):
        raise InconsistentSpaceError("the dressed space must be built for g = -v/omega")
    if (v.exterior is None) != (dressed.g.exterior is None):
        raise InconsistentSpaceError("v and the dressed space disagree about exterior modes")
    probe = dressed.basis
    if work_N < probe.max_total:
        raise ValueError("the working truncation must contain the probe space")
    c_counter = weighted_norm_sq(v, grid, -0.5)
    tail = dressed_tail_matrix(spin, probe, grid, v, g, work_N, c_counter)
    if tol is not None and tail.max() > tol:
        need = required_truncation(spin, probe, grid, v, g, c_counter, tol, work_N + 1)
        raise TruncationError(f"truncation bound {tail.max():.3e} exceeds {tol:.1e} at N={work_N}; "
                              f"N={need} is required", need)
    work = build_basis(probe.mode_count, work_N, max_states)
    cols = _probe_columns(spin.dim, work, probe.size)
    if v.exterior is None:
        terms = _terms_plain(spin, v, g, grid, work, cols, c_counter)
    else:
        terms = _terms_exterior(spin, v, g, grid, work, cols, c_counter, _exterior_data(v, g))
    total = sum(terms[k] for k in TERM_NAMES)
    return QuadraticForm(total, dressed.key, "dressed_regular", terms=terms, tail=tail,
                         meta={"work_N": work_N, "counterterm": c_counter})


@dataclass(frozen=True, eq=False)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = field(repr=False)
    residuals: np.ndarray
    condition: float
    multiplicities: list
    mode: str

    def as_dict(self) -> dict:
        return {"eigenvalues": self.eigenvalues.tolist(), "residuals": self.residuals.tolist(),
                "condition_number": self.condition, "multiplicities": self.multiplicities,
                "mode": self.mode}


def _multiplicities(w: np.ndarray) -> list:
    if w.size == 0:
        return []
    spread = max(float(w[-1] - w[0]), 1.0)
    out, count = [], 1
    for a, b in zip(w[:-1], w[1:]):
        if b - a <= 1e-9 * spread:
            count += 1
        else:
            out.append(count)
            count = 1
    out.append(count)
    return out


def solve_gevp(Q: QuadraticForm, dressed: DressedSpace, k: int | None = None, mode: str = "auto",
               tol: float = 1e-9) -> SpectralResult:
    """Solve Q x = lambda G x with the metric of ``dressed`` (Cholesky reduction or Lanczos)."""
    Q.check_metric(dressed.key)
    n = Q.dim
    if n != dressed.dim:
        raise MetricMismatchError("form and metric dimensions differ")
    if mode == "auto":
        mode = "dense" if n <= 4000 else "iterative"
    G = dressed.G
    M = 0.5 * (Q.matrix + Q.matrix.conj().T)
    if mode == "dense":
        L = dressed.metric_factor()
        C = sla.solve_triangular(L, sla.solve_triangular(L, M, lower=True).conj().T, lower=True).conj().T
        w, Y = np.linalg.eigh(0.5 * (C + C.conj().T))
        X = sla.solve_triangular(L.conj().T, Y, lower=False)
        if k is not None:
            w, X = w[:k], X[:, :k]
    elif mode == "iterative":
        dressed.metric_factor()
        kk = k or 6
        w, X = spla.eigsh(sp.csr_matrix(M), k=kk, M=sp.csr_matrix(G), which="SA", tol=tol * 1e-3)
        order = np.argsort(w)
        w, X = w[order], X[:, order]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    nq = float(np.linalg.norm(M, 2)) if n <= 4000 else float(spla.norm(sp.csr_matrix(M)))
    ng = float(np.linalg.norm(G, 2)) if n <= 4000 else float(spla.norm(sp.csr_matrix(G)))
    R = M @ X - (G @ X) * w[None, :]
    res = np.linalg.norm(R, axis=0) / ((nq + np.abs(w) * ng) * np.linalg.norm(X, axis=0))
    return SpectralResult(w, X, res, dressed.condition, _multiplicities(w), mode)


def semibounded_report(Q: QuadraticForm, dressed: DressedSpace, A) -> dict:
    res = solve_gevp(Q, dressed, k=1)
    bound = -2.0 * float(np.linalg.norm(np.asarray(A, complex), 2))
    return {"min_eigenvalue": float(res.eigenvalues[0]), "bound": bound,
            "holds": bool(res.eigenvalues[0] >= bound - 1e-9 * max(1.0, abs(bound)))}
