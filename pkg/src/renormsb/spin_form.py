"""Spectral calculus of the coupling matrix B and the renormalized spin form.

For a normal B with distinct eigenvalues lambda_i and spectral projectors P_i,
the renormalized spin form is the finite double sum

    sum_ij chi(lambda_i, lambda_j) (P_i A P_j) (x) [e^{conj(lambda_j) a(g)}^* e^{conj(lambda_i) a(g)}]

where chi is the Gaussian kernel for a square-summable g and the diagonal
indicator (by cluster index) for a Singular one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .dressing import DressedSpace, InconsistentSpaceError, SpinError
from .fock import annihilate, nilpotent_exp
from .forms import QuadraticForm
from .modes import FormFactor, ModeGrid, Regularity, weighted_norm_sq

DEFAULT_CLUSTER_TOL = 1e-10
# spin blocks P_i A P_j below this multiple of eps*||A|| are at the accuracy of the
# projectors themselves and are treated as structurally zero
BLOCK_ROUNDOFF = 16.0


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray      # one representative per cluster
    projectors: tuple            # Hermitian idempotents, same order
    cluster_tol: float

    @property
    def count(self) -> int:
        return len(self.projectors)

    def function(self, f) -> np.ndarray:
        """f(B) = sum_i f(lambda_i) P_i."""
        return sum(f(lam) * P for lam, P in zip(self.eigenvalues, self.projectors))


def spectral_decompose(B: np.ndarray, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> SpectralDecomposition:
    """Cluster the spectrum of a normal B at tolerance cluster_tol * ||B||."""
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    nb = float(np.linalg.norm(B, 2))
    if np.linalg.norm(B @ B.conj().T - B.conj().T @ B) > 1e-12 * max(nb * nb, 1e-300):
        raise SpinError("spectral decomposition needs a normal B")
    if np.allclose(B, B.conj().T, rtol=0, atol=1e-14 * max(nb, 1.0)):
        w, V = np.linalg.eigh(0.5 * (B + B.conj().T))
        w = w.astype(complex)
    else:
        # the complex Schur form of a normal matrix is diagonal with unitary vectors
        T, V = sla.schur(B, output="complex")
        w = np.diag(T).copy()
    tol = cluster_tol * max(nb, 1e-300)
    order = np.lexsort((w.imag, w.real))
    clusters: list[list[int]] = []
    for k in order:
        for c in clusters:
            if abs(w[k] - w[c[0]]) <= tol:
                c.append(k)
                break
        else:
            clusters.append([k])
    eigs, projs = [], []
    for c in clusters:
        Vc = V[:, c]
        P = Vc @ Vc.conj().T
        eigs.append(complex(np.mean(w[c])))
        projs.append(0.5 * (P + P.conj().T))
    return SpectralDecomposition(np.array(eigs), tuple(projs), cluster_tol)


@dataclass(frozen=True)
class ChiKernel:
    regime: Regularity
    norm_sq: float | None = None

    @classmethod
    def from_form_factor(cls, g: FormFactor, grid: ModeGrid) -> "ChiKernel":
        if g.is_regular:
            return cls(Regularity.REGULAR, weighted_norm_sq(g, grid, 0.0))
        return cls(Regularity.SINGULAR, None)


def chi(kernel: ChiKernel, lam: complex, mu: complex, i: int | None = None, j: int | None = None) -> complex:
    """The kernel exp((conj(lam) mu - (|lam|^2+|mu|^2)/2) ||g||^2), or the cluster indicator.

    In the Singular regime the cluster indices ``i`` and ``j`` decide equality.
    """
    if kernel.regime is Regularity.SINGULAR:
        if i is None or j is None:
            raise ValueError("the Singular kernel compares cluster indices; pass i and j")
        return 1.0 + 0j if i == j else 0j
    if i is not None and i == j:
        return 1.0 + 0j
    expo = (np.conj(lam) * mu - 0.5 * (abs(lam) ** 2 + abs(mu) ** 2)) * kernel.norm_sq
    return complex(np.exp(expo))


def chi_matrix(kernel: ChiKernel, decomp: SpectralDecomposition) -> np.ndarray:
    lam = decomp.eigenvalues
    return np.array([[chi(kernel, lam[i], lam[j], i, j) for j in range(len(lam))] for i in range(len(lam))])


@dataclass(frozen=True)
class NoncommMeasure:
    m: np.ndarray
    eigenvalues: np.ndarray

    def total_mass(self) -> complex:
        return complex(self.m.sum())

    def integrate(self, f, h) -> complex:
        """sum_ij conj(f(lambda_i)) h(lambda_j) m_ij."""
        fl = np.array([f(x) for x in self.eigenvalues])
        hl = np.array([h(x) for x in self.eigenvalues])
        return complex(np.conj(fl) @ self.m @ hl)


def noncomm_measure(A: np.ndarray, decomp: SpectralDecomposition, psi, phi) -> NoncommMeasure:
    """m_ij = <P_i psi, A P_j phi>."""
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    P = decomp.projectors
    m = np.array([[np.vdot(Pi @ psi, A @ (Pj @ phi)) for Pj in P] for Pi in P])
    return NoncommMeasure(m, decomp.eigenvalues)


def _cluster_exponentials(dressed: DressedSpace, decomp: SpectralDecomposition) -> list:
    X = annihilate(dressed.g, dressed.grid, dressed.basis)
    return [nilpotent_exp(np.conj(lam) * X, dressed.basis.max_total) for lam in decomp.eigenvalues]


def _check_space(dressed: DressedSpace, B):
    if B is not None and not np.allclose(np.asarray(B, complex), dressed.spin.B, rtol=0, atol=1e-14):
        raise InconsistentSpaceError("B differs from the matrix the dressed space was built with")


@dataclass(frozen=True, eq=False)
class SpinFormResult:
    matrix: np.ndarray
    decomposition: SpectralDecomposition
    kernel: ChiKernel
    contributions: dict          # (i, j) -> {"chi": ..., "spin_block_norm": ..., "norm": ...}

    def breakdown(self) -> list[dict]:
        out = []
        for (i, j), c in sorted(self.contributions.items()):
            out.append({"i": i, "j": j, "lambda_i": [self.decomposition.eigenvalues[i].real,
                                                     self.decomposition.eigenvalues[i].imag],
                        "lambda_j": [self.decomposition.eigenvalues[j].real,
                                     self.decomposition.eigenvalues[j].imag], **c})
        return out


def spin_form_matrix(dressed: DressedSpace, A=None, B=None,
                     cluster_tol: float = DEFAULT_CLUSTER_TOL) -> SpinFormResult:
    """Assemble the renormalized spin form on the full coordinate space."""
    _check_space(dressed, B)
    A = dressed.spin.A if A is None else np.asarray(A, dtype=complex)
    decomp = spectral_decompose(dressed.spin.B, cluster_tol)
    kernel = ChiKernel.from_form_factor(dressed.g, dressed.grid)
    X = _cluster_exponentials(dressed, decomp)
    n = dressed.dim
    total = np.zeros((n, n), dtype=complex)
    parts = {}
    floor = BLOCK_ROUNDOFF * np.finfo(float).eps * max(float(np.linalg.norm(A, 2)), 1e-300)
    for i, Pi in enumerate(decomp.projectors):
        for j, Pj in enumerate(decomp.projectors):
            c = chi(kernel, decomp.eigenvalues[i], decomp.eigenvalues[j], i, j)
            block = Pi @ A @ Pj
            bn = float(np.linalg.norm(block))
            parts[(i, j)] = {"chi": [c.real, c.imag], "spin_block_norm": bn,
                             "roundoff_block": bool(0 < bn <= floor)}
            if c == 0 or bn <= floor:
                parts[(i, j)]["norm"] = 0.0
                continue
            fock = (X[j].conj().T @ X[i]).toarray()
            term = c * np.kron(block, fock)
            parts[(i, j)]["norm"] = float(np.linalg.norm(term))
            total += term
    return SpinFormResult(total, decomp, kernel, parts)


def renorm_spin_form(dressed: DressedSpace, A=None, B=None,
                     cluster_tol: float = DEFAULT_CLUSTER_TOL) -> QuadraticForm:
    """The renormalized spin form Q_A as a form in the metric of ``dressed``."""
    res = spin_form_matrix(dressed, A, B, cluster_tol)
    return QuadraticForm(res.matrix, dressed.key, "A",
                         meta={"clusters": res.decomposition.count,
                               "kernel": res.kernel.regime.value,
                               "breakdown": res.breakdown()})


def dressed_observable(T, dressed: DressedSpace) -> np.ndarray:
    """Form matrix D^* (T (x) Id) D of the transported spin observable."""
    T = np.asarray(T, dtype=complex)
    D = dressed.D
    op = sp.kron(T, sp.identity(dressed.basis.size, dtype=complex, format="csr"), format="csr")
    return (D.conj().T @ (op @ D)).toarray()


def dressed_observable_cluster_sum(T, dressed: DressedSpace,
                                   cluster_tol: float = DEFAULT_CLUSTER_TOL) -> np.ndarray:
    """The same form assembled as sum_ij (P_i T P_j) (x) E_i^* E_j with E_i = e^{conj(lambda_i) a(g)}."""
    T = np.asarray(T, dtype=complex)
    decomp = spectral_decompose(dressed.spin.B, cluster_tol)
    X = _cluster_exponentials(dressed, decomp)
    total = np.zeros((dressed.dim, dressed.dim), dtype=complex)
    for i, Pi in enumerate(decomp.projectors):
        for j, Pj in enumerate(decomp.projectors):
            block = Pi @ T @ Pj
            if np.any(block):
                total += np.kron(block, (X[i].conj().T @ X[j]).toarray())
    return total


def spin_norm_bound(A) -> float:
    """The operator-norm constant 2||A|| bounding the renormalized spin form."""
    return 2.0 * float(np.linalg.norm(np.asarray(A, complex), 2))


def off_diagonal_decay(norm_sq: float, lam: complex = 1.0, mu: complex = -1.0) -> float:
    """|chi(lam, mu)| at ||g||^2 = norm_sq; e^{-2||g||^2} for lam = -mu = 1."""
    return abs(chi(ChiKernel(Regularity.REGULAR, norm_sq), lam, mu))
