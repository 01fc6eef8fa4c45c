"""Spin (x) Fock coordinates with the renormalized metric.

Vectors are kept in the undressed product basis (spin index major, Fock index
minor).  The dressing D = exp(B^* (x) a(g)) is an exact finite sum on the
truncation, and every renormalized inner product is the free product of
dressed vectors, <Theta, Xi>_{g,B} = (D Theta)^* (D Xi).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fock import FockBasis, annihilate, create, grade_norms, series_tail
from .modes import CutoffFamily, FormFactor, ModeGrid, weighted_norm_sq

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PRESETS = {"sigma_x": SIGMA_X, "sigma_y": SIGMA_Y, "sigma_z": SIGMA_Z,
           "identity": np.eye(2, dtype=complex), "zero": np.zeros((2, 2), dtype=complex)}


class SpinError(ValueError):
    """Spin matrices violate Hermiticity or normality."""


class GramFactorizationError(np.linalg.LinAlgError):
    """The Gram matrix could not be Cholesky factored."""


class InconsistentSpaceError(ValueError):
    """An operation received a dressed space built for different (g, B)."""


def spin_matrix(spec) -> np.ndarray:
    """A matrix literal (nested lists, complex allowed as [re, im] pairs) or a preset name."""
    if isinstance(spec, str):
        try:
            return PRESETS[spec.lower().replace("σ_", "sigma_")].copy()
        except KeyError:
            raise SpinError(f"unknown spin preset {spec!r}") from None
    arr = np.asarray(spec)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        arr = arr[..., 0] + 1j * arr[..., 1]
    arr = np.atleast_2d(np.asarray(arr, dtype=complex))
    if arr.shape[0] != arr.shape[1]:
        raise SpinError("spin matrices must be square")
    return arr


@dataclass(frozen=True, eq=False)
class SpinSpace:
    A: np.ndarray
    B: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex)).copy()
        B = np.atleast_2d(np.asarray(self.B, dtype=complex)).copy()
        if A.shape != B.shape or A.shape[0] != A.shape[1]:
            raise SpinError("A and B must be square matrices of equal size")
        scale = max(np.linalg.norm(A, 2), 1.0)
        if np.linalg.norm(A - A.conj().T) > self.tol * scale:
            raise SpinError("A must be Hermitian")
        nb = np.linalg.norm(B, 2)
        if np.linalg.norm(B @ B.conj().T - B.conj().T @ B) > self.tol * max(nb * nb, 1e-300):
            raise SpinError("B must be normal (B B^* = B^* B)")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def dim(self) -> int:
        return int(self.A.shape[0])

    @classmethod
    def trivial(cls, a: complex = 0.0, b: complex = 1.0) -> "SpinSpace":
        return cls(np.array([[a]]), np.array([[b]]))

    @classmethod
    def from_spec(cls, A, B) -> "SpinSpace":
        return cls(spin_matrix(A), spin_matrix(B))


def dressing_operator(spin: SpinSpace, basis: FockBasis, grid: ModeGrid, g: FormFactor) -> sp.csr_matrix:
    """D = sum_k (B^*)^k (x) a(g)^k / k!, exact on the truncation."""
    return spin_fock_exp(spin.B.conj().T, annihilate(g, grid, basis), basis.max_total)


def _space_key(spin: SpinSpace, basis: FockBasis, grid: ModeGrid, g: FormFactor) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(spin.B).tobytes())
    h.update(f"{basis.mode_count}:{basis.max_total}:{grid.digest()}:{g.regularity.value}".encode())
    h.update(np.ascontiguousarray(g.amplitudes).tobytes())
    if g.exterior is not None:
        h.update(np.ascontiguousarray(g.exterior.amplitudes).tobytes())
    return h.hexdigest()[:16]


def _factor(G: np.ndarray):
    try:
        return sla.cholesky(G, lower=True), "cholesky"
    except np.linalg.LinAlgError:
        return None, "failed"


@dataclass(frozen=True, eq=False)
class DressedSpace:
    spin: SpinSpace
    basis: FockBasis
    grid: ModeGrid
    g: FormFactor
    D: sp.csr_matrix = field(repr=False)
    G: np.ndarray = field(repr=False)
    chol: np.ndarray | None = field(repr=False)
    factorization: str
    condition: float
    key: str

    @property
    def dim(self) -> int:
        return self.spin.dim * self.basis.size

    def metric_factor(self) -> np.ndarray:
        """Lower Cholesky factor of G; refuses (with the condition number) if it failed."""
        if self.chol is None:
            raise GramFactorizationError(
                f"Gram matrix is not numerically positive definite (condition {self.condition:.3e}); "
                "no regularization is applied")
        return self.chol

    def eigen_factor(self, rel_threshold: float = 1e-12) -> tuple[np.ndarray, int]:
        """Fallback factor F with F F^* = G on the eigenvalues above rel_threshold * ||G||.

        Returns the factor and the number of discarded directions.
        """
        w, V = np.linalg.eigh(self.G)
        keep = w > rel_threshold * max(w.max(), 1e-300)
        return V[:, keep] * np.sqrt(w[keep]), int((~keep).sum())

    def product_index(self, spin_index: int, fock_index: int) -> int:
        return spin_index * self.basis.size + fock_index

    def embed(self, psi: np.ndarray, Psi: np.ndarray) -> np.ndarray:
        """Product vector psi (x) Psi in coordinates."""
        return np.kron(np.asarray(psi, complex), np.asarray(Psi, complex))

    def gram_report(self) -> dict:
        return {"key": self.key, "dim": self.dim, "factorization": self.factorization,
                "condition_number": self.condition, "spin_dim": self.spin.dim,
                "basis": self.basis.descriptor(), "grid": self.grid.descriptor(),
                "regularity": self.g.regularity.value}


def build_dressed_space(spin: SpinSpace, basis: FockBasis, grid: ModeGrid, g: FormFactor) -> DressedSpace:
    if g.size != grid.size or grid.size != basis.mode_count:
        raise InconsistentSpaceError("g, grid and basis disagree on the number of modes")
    D = dressing_operator(spin, basis, grid, g)
    Dd = D.toarray()
    G = Dd.conj().T @ Dd
    G = 0.5 * (G + G.conj().T)
    chol, how = _factor(G)
    w = np.linalg.eigvalsh(G)
    cond = float(w[-1] / w[0]) if w[0] > 0 else math.inf
    return DressedSpace(spin, basis, grid, g, D, G, chol, how, cond, _space_key(spin, basis, grid, g))


def _check_vec(x, dressed: DressedSpace) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape[0] != dressed.dim:
        raise ValueError(f"vector of length {x.shape[0]} in a space of dimension {dressed.dim}")
    return x


def renorm_inner(theta, xi, dressed: DressedSpace) -> complex:
    """<Theta, Xi>_{g,B} = (D Theta)^* (D Xi)."""
    a = dressed.D @ _check_vec(theta, dressed)
    b = dressed.D @ _check_vec(xi, dressed)
    return complex(np.vdot(a, b))


def gram(dressed: DressedSpace) -> np.ndarray:
    return dressed.G


def normalized_dressed_inner(theta, xi, dressed: DressedSpace) -> tuple[complex, float]:
    """<e^{B(x)a^+(g)}Theta, e^{B(x)a^+(g)}Xi> / e^{c||g||^2} for B^*B = c Id.

    Returns the value and a bound on the truncation error of the numerator
    (divided by the same denominator).
    """
    spin, g = dressed.spin, dressed.g
    BB = spin.B.conj().T @ spin.B
    c = BB[0, 0].real
    if np.linalg.norm(BB - c * np.eye(spin.dim)) > 1e-12 * max(1.0, abs(c)):
        raise SpinError("B^*B is not a multiple of the identity; use the operator-normalized "
                        "dressing exp(-B^*B||g||^2/2) exp(B (x) a^+(g)) instead")
    if not g.is_regular:
        raise ValueError("the dressed vectors exist only for a Regular g")
    K = spin_fock_exp(spin.B, create(g, dressed.grid, dressed.basis), dressed.basis.max_total)
    a = K @ _check_vec(theta, dressed)
    b = K @ _check_vec(xi, dressed)
    # exterior modes stay in their vacuum; with B^*B = c their coherent factor
    # contributes exactly e^{c||g_E||^2} and cancels against the denominator
    gn = weighted_norm_sq(g, dressed.grid, 0.0, include_exterior=False)
    denom = math.exp(c * gn)
    s = float(np.linalg.norm(spin.B, 2))
    ta = _vector_tail(theta, dressed, math.sqrt(gn), s)
    tb = _vector_tail(xi, dressed, math.sqrt(gn), s)
    err = ta * np.linalg.norm(b) + tb * np.linalg.norm(a) + ta * tb
    return complex(np.vdot(a, b)) / denom, float(err / denom)


def _vector_tail(x, dressed: DressedSpace, g_norm: float, spin_factor: float) -> float:
    n = dressed.basis.size
    total = 0.0
    for s in range(dressed.spin.dim):
        norms = grade_norms(np.asarray(x)[s * n:(s + 1) * n], dressed.basis)
        total += sum(nq * series_tail(g_norm, q, dressed.basis.max_total - q + 1, spin_factor)
                     for q, nq in enumerate(norms) if nq > 0)
    return total


def spin_fock_exp(S: np.ndarray, X: sp.spmatrix, max_power: int) -> sp.csr_matrix:
    """sum_{k<=max_power} S^k (x) X^k / k! for nilpotent X."""
    n = S.shape[0] * X.shape[0]
    result = sp.identity(n, dtype=complex, format="csr")
    spin_pow = np.eye(S.shape[0], dtype=complex)
    fock_pow = sp.identity(X.shape[0], dtype=complex, format="csr")
    for k in range(1, max_power + 1):
        spin_pow = spin_pow @ S / k
        fock_pow = (fock_pow @ X).tocsr()
        fock_pow.eliminate_zeros()
        if fock_pow.nnz == 0 or not np.any(spin_pow):
            break
        result = result + sp.kron(spin_pow, fock_pow, format="csr")
    return result.tocsr()


def spin_boson_map(g: FormFactor, g_prime: FormFactor, spin: SpinSpace, basis: FockBasis,
                   grid: ModeGrid) -> sp.csr_matrix:
    """U_{g,g',B} = exp(B^* (x) a(g - g')), a map from the (g,B) space to the (g',B) space."""
    return dressing_operator(spin, basis, grid, g - g_prime)


def coherent_transport_bound(z: complex, f: FormFactor, grid: ModeGrid, basis: FockBasis,
                             spin_norm: float) -> float:
    """Error bound for U (psi (x) eps(f)) = (e^{z B^*} psi) (x) eps(f) in the truncation, z = <g-g', f>.

    Grade m of eps(f) picks up sum_{k<=N-m} (zB^*)^k/k! instead of the full exponential.
    """
    fn = math.sqrt(weighted_norm_sq(f, grid, 0.0))
    y = spin_norm * abs(z)
    total = 0.0
    for m in range(basis.max_total + 1):
        eps_m = fn ** m / math.sqrt(math.factorial(m))
        tail = sum(y ** k / math.factorial(k) for k in range(basis.max_total - m + 1, basis.max_total - m + 80))
        total += eps_m * tail
    return total


@dataclass(frozen=True)
class DivergenceReport:
    cutoffs: tuple
    distance_sq: np.ndarray       # ||g_n - g_m||^2 for all stage pairs
    overlap: np.ndarray           # e^{-||g_n - g_m||^2 / 2}
    norm_sq: np.ndarray           # ||g_n||^2
    free_overlap: np.ndarray      # e^{-||g_n||^2 / 2}, overlap of the dressed vacuum with the free one
    monotone: bool

    def as_dict(self) -> dict:
        return {"cutoffs": list(self.cutoffs), "distance_sq": self.distance_sq.tolist(),
                "overlap": self.overlap.tolist(), "norm_sq": self.norm_sq.tolist(),
                "free_overlap": self.free_overlap.tolist(), "monotone": self.monotone}


def representation_divergence(family: CutoffFamily, cutoffs=None) -> DivergenceReport:
    """Diagnose how far apart the dressed vacua of different cutoff stages are."""
    cuts = tuple(family.cutoff_values if cutoffs is None else cutoffs)
    gs = [family.dressed_stage(n) for n in cuts]
    k = len(gs)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            dist[i, j] = weighted_norm_sq(gs[i] - gs[j], family.grid, 0.0)
    norms = np.array([weighted_norm_sq(g, family.grid, 0.0) for g in gs])
    monotone = bool(np.all(np.diff(dist[0]) >= 0)) if k > 1 else True
    return DivergenceReport(cuts, dist, np.exp(-0.5 * dist), norms, np.exp(-0.5 * norms), monotone)
