"""
Lowest eigenpairs of sparse symmetric operators.

``lowest_k`` runs implicitly restarted Lanczos (ARPACK) in shift-invert mode
with the shift placed one unit below a spectral lower bound (the operator's
own ``lower_bound`` when it carries one, else Gershgorin), so that
A - sigma*I is positive definite and the wanted eigenvalues become the
dominant ones of its inverse. The Ritz vectors are then passed through one
Rayleigh-Ritz step and their residuals are measured explicitly.
``dense_lowest_k`` is the full-decomposition cross-check for small problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import DimensionError, NonConvergenceError

DENSE_MAX = 4000
CLUSTER_TOL = 1e-12
DEFAULT_SEED = 20240917


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    iterations: int
    bc: Optional[str] = None
    seed: Optional[int] = None
    eigenvectors: Optional[np.ndarray] = None
    grid: Any = None
    clusters: list = field(default_factory=list)

    def __len__(self):
        return len(self.eigenvalues)


def _matrix(A):
    return A.matrix if hasattr(A, "matrix") else A


def gershgorin_bounds(M) -> tuple[float, float]:
    M = sp.csr_matrix(M)
    d = M.diagonal()
    off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - off)), float(np.max(d + off))


def _clusters(vals: np.ndarray) -> list:
    groups, start = [], 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[i - 1] > CLUSTER_TOL:
            if i - start > 1:
                groups.append(list(range(start, i)))
            start = i
    return groups


def _residuals(M, vals, vecs):
    R = M @ vecs - vecs * vals
    return np.linalg.norm(R, axis=0) / np.linalg.norm(vecs, axis=0)


def _rayleigh_ritz(M, V):
    Q, _ = np.linalg.qr(V)
    H = Q.T @ (M @ Q)
    H = 0.5 * (H + H.T)
    w, Z = np.linalg.eigh(H)
    return w, Q @ Z


def _finish(M, vals, vecs, A, seed, iterations, keep_vectors):
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    res = _residuals(M, vals, vecs)
    return SpectralResult(
        eigenvalues=vals,
        residual_norms=res,
        iterations=iterations,
        bc=getattr(A, "bc", None),
        seed=seed,
        eigenvectors=vecs if keep_vectors else None,
        grid=getattr(A, "grid", None),
        clusters=_clusters(vals),
    )


def lowest_k(A, k: int, tol: float = 1e-6, max_iter: int = 5000, seed: int = DEFAULT_SEED,
             vectors: bool = True, ncv: Optional[int] = None) -> SpectralResult:
    """
    ``k`` lowest eigenpairs of a sparse symmetric operator.

    ``A`` is a :class:`~softguide.operator2d.SparseSymmetricOperator` or any
    scipy sparse matrix. ``tol`` bounds the absolute residual
    ||A psi - eps psi|| / ||psi|| of every returned pair; the starting vector
    is drawn from ``numpy.random.default_rng(seed)``.
    """
    M = sp.csc_matrix(_matrix(A))
    n = M.shape[0]
    if k < 1 or k >= n:
        raise DimensionError(f"need 1 <= k < dimension, got k={k}, dimension={n}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo = getattr(A, "lower_bound", None)
    if lo is None:
        lo, _ = gershgorin_bounds(M)
    sigma = lo - 1.0
    v0 = np.random.default_rng(seed).standard_normal(n)
    if ncv is None:
        ncv = min(n - 1, max(2 * k + 1, k + 32))
    lu = splu(sp.csc_matrix(M - sigma * sp.identity(n, format="csc")))
    applications = [0]

    def _apply_inverse(x):
        applications[0] += 1
        return lu.solve(np.asarray(x, dtype=float).ravel())

    op_inv = LinearOperator((n, n), matvec=_apply_inverse, dtype=float)
    try:
        vals, vecs = eigsh(M, k=k, sigma=sigma, which="LM", v0=v0, ncv=ncv, maxiter=max_iter,
                           tol=0.0, OPinv=op_inv)
    except ArpackNoConvergence as exc:
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        res = _residuals(M, vals, vecs) if len(vals) else np.array([])
        raise NonConvergenceError(
            f"ARPACK converged {len(vals)} of {k} eigenpairs in {max_iter} restarts", res
        ) from exc
    vals, vecs = _rayleigh_ritz(M, vecs)
    out = _finish(M, vals, vecs, A, seed, applications[0], vectors)
    if np.any(out.residual_norms > tol):
        raise NonConvergenceError(
            f"residuals {out.residual_norms.max():.3g} exceed tol {tol:.3g}", out.residual_norms
        )
    return out


def dense_lowest_k(A, k: int, vectors: bool = True) -> SpectralResult:
    """Full symmetric decomposition; the oracle for problems up to 4000 unknowns."""
    M = _matrix(A)
    n = M.shape[0]
    if n > DENSE_MAX:
        raise DimensionError(f"dense path capped at {DENSE_MAX}, got {n}")
    if not 1 <= k <= n:
        raise DimensionError(f"need 1 <= k <= dimension, got k={k}, dimension={n}")
    D = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    vals, vecs = sla.eigh(D, subset_by_index=[0, k - 1])
    return _finish(sp.csr_matrix(D), vals, vecs, A, None, 1, vectors)
