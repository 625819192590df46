"""Dense linear-algebra helpers shared by the linear and kernel learners."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """Relative thresholds used when deciding what counts as zero.

    rank_tol : a singular/eigen value below ``rank_tol * largest`` is zero.
    collapse_tol : post-hoc threshold for checking that training classes
        collapsed to a point after projection.
    """
    rank_tol: float = 1e-10
    collapse_tol: float = 1e-6

    def __post_init__(self):
        if not (self.rank_tol > 0 and self.collapse_tol > 0):
            raise ValueError("tolerances must be strictly positive")


DEFAULT_TOL = Tolerances()


def orthonormal_basis(M, tol=DEFAULT_TOL):
    """Orthonormal basis of the column space of ``M`` (d x m).

    Right-looking modified Gram-Schmidt: once a column is accepted as a new
    basis vector its component is removed from every remaining column.
    Each accepted vector is re-orthogonalized once against the basis built
    so far before normalization. A column whose residual norm falls below
    ``rank_tol`` times the largest input column norm is dropped, so the
    number of returned columns is the numerical rank of ``M``.
    """
    A = np.array(M, dtype=np.float64, copy=True)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite values")
    d, m = A.shape
    norms = np.linalg.norm(A, axis=0) if m else np.zeros(0)
    scale = norms.max() if m else 0.0
    Q = np.empty((d, min(d, m)))
    r = 0
    if scale == 0.0:
        return Q[:, :0]
    cutoff = tol.rank_tol * scale
    for k in range(m):
        v = A[:, k]
        if r:
            # second pass restores orthogonality lost to cancellation
            v = v - Q[:, :r] @ (Q[:, :r].T @ v)
        nv = np.linalg.norm(v)
        if nv <= cutoff:
            continue
        q = v / nv
        Q[:, r] = q
        r += 1
        if k + 1 < m:
            A[:, k + 1:] -= np.outer(q, q @ A[:, k + 1:])
        if r == d:
            break
    return Q[:, :r].copy()


def sym_eig(S, sym_tol=1e-12):
    """Eigendecomposition of a real symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors as orthonormal columns. Raises ``ValueError`` when ``S`` is
    asymmetric beyond ``sym_tol`` relative to its largest entry.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix contains non-finite values")
    scale = np.abs(S).max() if S.size else 0.0
    asym = np.abs(S - S.T).max() if S.size else 0.0
    if asym > sym_tol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return vals, vecs


def center_columns(X):
    """Subtract the column average; returns ``(centered, mean)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("need a d x N matrix with N >= 1")
    mean = X.mean(axis=1)
    return X - mean[:, None], mean


def fix_signs(vecs):
    """Flip each column so that its largest-magnitude entry is positive."""
    vecs = np.array(vecs, copy=True)
    if vecs.size == 0:
        return vecs
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs
