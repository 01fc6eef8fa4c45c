"""Truncated bosonic Fock space over a mode grid.

States are occupation multi-indices with total particle number at most N,
ordered by grade and then lexicographically (highest occupation of mode 0
first), with the vacuum at index 0.  Mode j of the grid is realized by the
normalized cell function e_j / sqrt(w_j), so a function f contributes the
coefficient sqrt(w_j) f_j to mode j and

    a(f) = sum_j sqrt(w_j) conj(f_j) b_j,    a^+(f) = sum_j sqrt(w_j) f_j b_j^+,

with b_j the standard ladder operators.  This makes a^+(f) the exact adjoint
of a(f) and gives [a(f), a^+(g)] = <f, g> below the top grade.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .modes import FormFactor, ModeGrid, weighted_norm_sq

DEFAULT_MAX_STATES = 200_000


class BasisTooLarge(RuntimeError):
    """The requested truncation exceeds the configured basis-size cap."""


class RegularityError(ValueError):
    """An operation that needs a square-summable function received a Singular one."""


def basis_size(M: int, N: int) -> int:
    return math.comb(M + N, M)


def _compositions(n: int, m: int):
    """All m-tuples of nonnegative ints summing to n, in descending lexicographic order."""
    if m == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, m - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class FockBasis:
    mode_count: int
    max_total: int
    states: np.ndarray
    index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.states.shape[0])

    @cached_property
    def grades(self) -> np.ndarray:
        return self.states.sum(axis=1)

    def grade_slice(self, n: int) -> slice:
        """Graded ordering makes each particle-number sector a contiguous block."""
        lo = basis_size(self.mode_count, n - 1) if n > 0 else 0
        return slice(lo, basis_size(self.mode_count, n))

    def prefix(self, p: int) -> int:
        """Number of states of grade <= p (they are the first ones)."""
        return basis_size(self.mode_count, min(p, self.max_total))

    def index_of(self, occupation) -> int:
        return self.index[tuple(int(x) for x in occupation)]

    def ket(self, occupation) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[self.index_of(occupation)] = 1.0
        return v

    @property
    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[0] = 1.0
        return v

    @cached_property
    def _lowering(self) -> list:
        mats = []
        for j in range(self.mode_count):
            cols = np.flatnonzero(self.states[:, j] > 0)
            rows = np.empty_like(cols)
            for k, c in enumerate(cols):
                occ = list(self.states[c])
                occ[j] -= 1
                rows[k] = self.index[tuple(occ)]
            vals = np.sqrt(self.states[cols, j].astype(float))
            m = sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))
            mats.append(m)
        return mats

    def mode_lowering(self, j: int) -> sp.csr_matrix:
        """Standard ladder operator b_j (real, grade lowering by one)."""
        return self._lowering[j]

    def descriptor(self) -> dict:
        return {"mode_count": self.mode_count, "max_total": self.max_total, "size": self.size,
                "ordering": "graded, then descending lexicographic"}


def build_basis(M: int, N: int, max_states: int = DEFAULT_MAX_STATES) -> FockBasis:
    if M < 1 or N < 0:
        raise ValueError("need M >= 1 modes and N >= 0 particles")
    size = basis_size(M, N)
    if size > max_states:
        raise BasisTooLarge(f"basis for M={M}, N={N} has {size} states (cap {max_states})")
    states = [c for n in range(N + 1) for c in _compositions(n, M)]
    arr = np.array(states, dtype=np.int64).reshape(size, M)
    arr.setflags(write=False)
    return FockBasis(M, N, arr, {s: i for i, s in enumerate(states)})


def _coefficients(f, grid: ModeGrid, basis: FockBasis) -> np.ndarray:
    amp = f.amplitudes if isinstance(f, FormFactor) else np.asarray(f, dtype=complex).reshape(-1)
    if amp.size != grid.size or grid.size != basis.mode_count:
        raise ValueError(f"function on {amp.size} modes, grid {grid.size}, basis {basis.mode_count}")
    return np.sqrt(grid.weight) * amp


def _sum_modes(coeffs: np.ndarray, basis: FockBasis, adjoint: bool) -> sp.csr_matrix:
    out = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for j, c in enumerate(coeffs):
        if c != 0:
            b = basis.mode_lowering(j)
            out = out + c * (b.T if adjoint else b)
    return out.tocsr()


def annihilate(f, grid: ModeGrid, basis: FockBasis) -> sp.csr_matrix:
    """a(f): lowers n_j with factor sqrt(n_j), antilinear in f.  Singular f is fine."""
    return _sum_modes(np.conj(_coefficients(f, grid, basis)), basis, adjoint=False)


def create(f, grid: ModeGrid, basis: FockBasis) -> sp.csr_matrix:
    """a^+(f) truncated: states of the top grade are mapped to zero."""
    if isinstance(f, FormFactor) and not f.is_regular:
        raise RegularityError("a^+(g) requires a square-summable g; got a Singular form factor")
    return _sum_modes(_coefficients(f, grid, basis), basis, adjoint=True)


def creation_loss(f, psi: np.ndarray, grid: ModeGrid, basis: FockBasis) -> float:
    """Norm of the part of a^+(f) psi that leaves the truncation.

    Uses ||a^+(f) x||^2 = ||a(f) x||^2 + ||f||^2 ||x||^2 for the top-grade part x.
    """
    top = np.zeros_like(psi)
    sl = basis.grade_slice(basis.max_total)
    top[sl] = psi[sl]
    a = annihilate(f, grid, basis) @ top
    nf = weighted_norm_sq(f, grid, 0.0) if isinstance(f, FormFactor) else float(np.sum(grid.weight * np.abs(f) ** 2))
    return float(np.sqrt(np.vdot(a, a).real + nf * np.vdot(top, top).real))


def second_quantize(omega, basis: FockBasis) -> sp.csr_matrix:
    """dGamma(omega): diagonal with entries sum_j n_j omega_j."""
    om = omega.omega if isinstance(omega, ModeGrid) else np.asarray(omega, float)
    if om.size != basis.mode_count:
        raise ValueError("one energy per mode is required")
    return sp.diags(basis.states @ om).astype(complex).tocsr()


def number_op(basis: FockBasis) -> sp.csr_matrix:
    return sp.diags(basis.grades.astype(float)).astype(complex).tocsr()


def nilpotent_exp(X: sp.spmatrix, max_power: int) -> sp.csr_matrix:
    """sum_{k<=max_power} X^k / k! for a nilpotent X with X^(max_power+1) = 0."""
    n = X.shape[0]
    result = sp.identity(n, dtype=complex, format="csr")
    term = sp.identity(n, dtype=complex, format="csr")
    for k in range(1, max_power + 1):
        term = (term @ X) / k
        term.eliminate_zeros()
        if term.nnz == 0:
            break
        result = result + term
    return result.tocsr()


def exp_annihilate(g, grid: ModeGrid, basis: FockBasis) -> sp.csr_matrix:
    """Exact e^{a(g)}; the series stops at k = N because a(g) lowers the grade."""
    return nilpotent_exp(annihilate(g, grid, basis), basis.max_total)


def exp_create(g, grid: ModeGrid, basis: FockBasis) -> sp.csr_matrix:
    """Truncated e^{a^+(g)} (grades above N are dropped; see :func:`tail_bound`)."""
    return nilpotent_exp(create(g, grid, basis), basis.max_total)


def grade_norms(psi: np.ndarray, basis: FockBasis) -> np.ndarray:
    """||Psi_n|| for n = 0..N."""
    return np.array([np.linalg.norm(psi[basis.grade_slice(n)]) for n in range(basis.max_total + 1)])


def top_grade(psi: np.ndarray, basis: FockBasis, tol: float = 0.0) -> int:
    """Highest grade carrying weight above ``tol`` (-1 for the zero vector)."""
    nz = np.flatnonzero(grade_norms(psi, basis) > tol)
    return int(nz[-1]) if nz.size else -1


def series_tail(x: float, grade: int, start: int, spin_factor: float = 1.0, terms: int = 400) -> float:
    """sum_{k>=start} (s x)^k sqrt(binom(k+grade, grade) / k!), summed in log space."""
    y = spin_factor * x
    if y == 0:
        return 0.0
    total = 0.0
    k = max(start, 0)
    for _ in range(terms):
        logt = k * math.log(y) + 0.5 * (gammaln(k + grade + 1) - gammaln(grade + 1) - 2 * gammaln(k + 1))
        t = math.exp(logt) if logt > -745 else 0.0
        total += t
        if k > y * y + grade and t < 1e-18 * max(total, 1e-300):
            break
        k += 1
    return total


def tail_bound(g_norm: float, psi: np.ndarray, basis: FockBasis, spin_factor: float = 1.0) -> float:
    """Bound on ||e^{a^+(g)} Psi - truncated e^{a^+(g)} Psi|| for ||g|| = g_norm.

    Grade-q content of Psi contributes ||Psi_q|| sum_{k > N-q} (s||g||)^k sqrt(binom(k+q,q)/k!),
    from ||a^+(g)^k Psi_q|| <= ||g||^k sqrt((q+k)!/q!) ||Psi_q||; ``spin_factor`` s bounds
    the spin matrix accompanying each creation operator.  Decreasing in N.
    """
    norms = grade_norms(psi, basis)
    return float(sum(nq * series_tail(g_norm, q, basis.max_total - q + 1, spin_factor)
                     for q, nq in enumerate(norms) if nq > 0))


def exponential_vector(f, grid: ModeGrid, basis: FockBasis) -> np.ndarray:
    """Truncated exponential vector: coefficient prod_j c_j^{n_j}/sqrt(n_j!) with c = sqrt(w) f."""
    if isinstance(f, FormFactor) and not f.is_regular:
        raise RegularityError("exponential vectors need a square-summable function")
    c = _coefficients(f, grid, basis)
    n = basis.states
    logfact = gammaln(n + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        powers = np.where(n > 0, c[None, :] ** n, 1.0)
    return np.prod(powers, axis=1) * np.exp(-0.5 * logfact.sum(axis=1))


@dataclass(frozen=True)
class RelativeBoundReport:
    holds: bool
    annihilation_lhs: float
    annihilation_rhs: float
    creation_lhs: float
    creation_rhs: float

    @property
    def annihilation_slack(self) -> float:
        return self.annihilation_rhs - self.annihilation_lhs

    @property
    def creation_slack(self) -> float:
        return self.creation_rhs - self.creation_lhs


def check_relative_bounds(f: FormFactor, psi: np.ndarray, grid: ModeGrid, basis: FockBasis,
                          rtol: float = 1e-12) -> RelativeBoundReport:
    """Check ||a(f)Psi|| <= ||omega^-1/2 f|| ||dGamma^1/2 Psi|| and the a^+ bound with + ||f|| ||Psi||."""
    half = math.sqrt(weighted_norm_sq(f, grid, -0.5))
    full = math.sqrt(weighted_norm_sq(f, grid, 0.0))
    energies = basis.states @ grid.omega
    field_norm = math.sqrt(float(np.sum(energies * np.abs(psi) ** 2)))
    a_lhs = float(np.linalg.norm(annihilate(f, grid, basis) @ psi))
    c_lhs = float(np.linalg.norm(create(f, grid, basis) @ psi))
    a_rhs = half * field_norm
    c_rhs = half * field_norm + full * float(np.linalg.norm(psi))
    slack = rtol * max(a_rhs, c_rhs, 1e-300)
    return RelativeBoundReport(bool(a_lhs <= a_rhs + slack and c_lhs <= c_rhs + slack),
                               a_lhs, a_rhs, c_lhs, c_rhs)
