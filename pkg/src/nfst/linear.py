"""Linear null Foley-Sammon transform.

The learned directions span the part of the null space of the within-class
scatter that lies inside the span of the centered training data. Every
training class collapses to a single point along them while distinct class
means stay apart, so the Fisher ratio along each direction is unbounded.
"""
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import read_fmat, write_fmat
from .errors import FormatError, NoNullSpace
from .numeric import DEFAULT_TOL, center_columns, fix_signs, orthonormal_basis, sym_eig


@dataclass(frozen=True)
class ScatterPair:
    """Within-class and total scatter (both d x d, scaled by 1/N)."""
    within: np.ndarray
    total: np.ndarray

    @property
    def between(self):
        return self.total - self.within


def class_centered(X, labels):
    """Subtract from every column the mean of its class."""
    labels = np.asarray(labels)
    C = labels.max() + 1 if labels.size else 0
    counts = np.bincount(labels, minlength=C)
    sums = np.zeros((X.shape[0], C))
    np.add.at(sums.T, labels, X.T)
    return X - (sums / counts)[:, labels]


def scatter_matrices(fs):
    if fs.n < 2:
        raise ValueError("scatter matrices need at least 2 samples")
    X = fs.features
    Xw = class_centered(X, fs.class_index)
    Xt, _ = center_columns(X)
    n = fs.n
    return ScatterPair(Xw @ Xw.T / n, Xt @ Xt.T / n)


def fisher_criterion(w, scatter, tol=DEFAULT_TOL):
    """Fisher ratio w'S_b w / w'S_w w; ``math.inf`` for a null direction.

    A direction along which both quadratic forms vanish carries no
    discriminative information; it scores 0 and triggers a warning.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    ww = float(w @ w)
    if ww == 0.0:
        raise ValueError("direction must be nonzero")
    num = float(w @ scatter.between @ w)
    den = float(w @ scatter.within @ w)
    sw_norm = np.linalg.norm(scatter.within, 2)
    st_norm = np.linalg.norm(scatter.total, 2)
    num_zero = num <= tol.rank_tol * st_norm * ww
    den_zero = den <= tol.rank_tol * sw_norm * ww
    if den_zero and num_zero:
        warnings.warn("degenerate direction: no between- or within-class scatter", RuntimeWarning)
        return 0.0
    if den_zero:
        return math.inf
    return num / den


@dataclass(frozen=True, eq=False)
class LinearNullModel:
    W: np.ndarray
    train_mean: np.ndarray
    class_count: int
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.W.shape[0]


def null_directions(G, n_dirs, tol):
    """Eigenvectors of the C-1 smallest eigenvalues of a PSD Gram matrix.

    Returns ``(vectors, eigenvalues, threshold)``; raises ``NoNullSpace``
    when fewer than ``n_dirs`` eigenvalues sit below ``rank_tol * max``.
    """
    vals, vecs = sym_eig(G)
    lam_max = max(vals[-1], 0.0) if vals.size else 0.0
    thresh = tol.rank_tol * lam_max
    found = int(np.sum(vals <= thresh))
    if found < n_dirs:
        raise NoNullSpace(found, n_dirs,
                          f"only {found} eigenvalues below {thresh:.3g} "
                          f"(rank_tol={tol.rank_tol:g} x max {lam_max:.3g}); need {n_dirs}. "
                          "Feature dimension may be too small for the sample count "
                          "or identities may duplicate each other.")
    return fix_signs(vecs[:, :n_dirs]), vals, thresh


def _check_separation(Y, labels, C, tol):
    """Warn about directions along which the class means coincide."""
    means = np.zeros((Y.shape[0], C))
    np.add.at(means.T, labels, Y.T)
    means /= np.bincount(labels, minlength=C)
    spread = means.var(axis=1)
    scale = max(float(np.abs(Y).max()) ** 2, np.finfo(float).tiny) if Y.size else 1.0
    failing = np.flatnonzero(spread <= tol.collapse_tol ** 2 * scale)
    if failing.size:
        warnings.warn(f"null directions {failing.tolist()} have no between-class scatter "
                      "(identities may share identical features)", RuntimeWarning)
    return failing


def collapse_residual(Y, labels, C):
    """Largest within-class spread of projections relative to mean class gap."""
    means = np.zeros((Y.shape[0], C))
    np.add.at(means.T, labels, Y.T)
    means /= np.bincount(labels, minlength=C)
    within = np.linalg.norm(Y - means[:, labels], axis=0).max() if Y.size else 0.0
    diffs = means[:, :, None] - means[:, None, :]
    gaps = np.sqrt((diffs ** 2).sum(axis=0))[np.triu_indices(C, 1)]
    gap = gaps.mean() if gaps.size else 0.0
    return float(within / gap) if gap > 0 else math.inf


def train_linear_nfst(fs, tol=DEFAULT_TOL):
    C = fs.num_classes
    if C < 2 or fs.n < C:
        raise ValueError(f"need N >= C >= 2 (got N={fs.n}, C={C})")
    X = fs.features
    Xt, mu = center_columns(X)
    U = orthonormal_basis(Xt, tol)
    # U'S_wU without ever forming the d x d scatter
    B = U.T @ class_centered(X, fs.class_index)
    G = B @ B.T / fs.n
    beta, vals, thresh = null_directions(G, C - 1, tol)
    W = U @ beta
    Y = W.T @ Xt
    _check_separation(Y, fs.class_index, C, tol)
    diag = {"eigenvalues": vals, "threshold": thresh, "basis_rank": U.shape[1],
            "collapse_residual": collapse_residual(Y, fs.class_index, C)}
    return LinearNullModel(W, mu, C, diag)


def project_linear(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != model.dim:
        raise ValueError(f"features have dimension {X.shape[0]}, model expects {model.dim}")
    return model.W.T @ (X - model.train_mean[:, None])


# --- serialization ----------------------------------------------------------

def read_meta(path):
    meta = {}
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}: malformed metadata line {i}: {line!r}")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def write_meta(path, items):
    with open(path, "w") as fh:
        for k, v in items:
            fh.write(f"{k}={v}\n")


def save_linear_model(model, dirpath):
    os.makedirs(dirpath, exist_ok=True)
    write_fmat(os.path.join(dirpath, "W.fmat"), model.W)
    write_fmat(os.path.join(dirpath, "mean.fmat"), model.train_mean)
    write_meta(os.path.join(dirpath, "meta.txt"),
               [("kind", "linear"), ("classes", model.class_count), ("dim", model.dim)])


def load_linear_model(dirpath, meta=None):
    meta = meta or read_meta(os.path.join(dirpath, "meta.txt"))
    W = read_fmat(os.path.join(dirpath, "W.fmat"))
    mu = read_fmat(os.path.join(dirpath, "mean.fmat"))
    C = int(meta["classes"])
    if W.shape != (int(meta["dim"]), C - 1) or mu.shape != (W.shape[0], 1):
        raise FormatError(f"{dirpath}: model arrays do not match metadata")
    return LinearNullModel(W, mu[:, 0], C)
