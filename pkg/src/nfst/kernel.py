"""Kernelized null Foley-Sammon transform.

Training works entirely on the N x N kernel matrix. Kernel PCA of the
doubly centered kernel provides coefficients for an orthonormal basis of the
centered data in feature space; the within-class scatter expressed in that
basis is then decomposed and its null eigenvectors give the C-1 directions.
Each direction is stored as an N-vector of coefficients over the training
samples.
"""
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .dataset import read_fmat, write_fmat
from .errors import DegenerateKernel, FormatError
from .linear import _check_separation, collapse_residual, null_directions, read_meta, write_meta
from .numeric import DEFAULT_TOL, sym_eig

KERNELS = ("rbf", "linear")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind and width; ``width=None`` means automatic (rbf only)."""
    kind: str = "rbf"
    width: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if self.width is not None and not self.width > 0:
            raise ValueError("kernel width must be positive")

    def resolve(self, X):
        """Return a spec with the automatic width filled in from ``X``."""
        if self.kind == "rbf" and self.width is None:
            return KernelSpec("rbf", rbf_width_auto(X))
        return self


def rbf_width_auto(X):
    """Mean Euclidean distance over all unordered pairs of columns."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] < 2:
        raise ValueError("automatic width needs at least 2 samples")
    sigma = float(pdist(X.T).mean())
    if not sigma > 0:
        raise DegenerateKernel("all samples are identical; automatic RBF width is 0")
    return sigma


def kernel_matrix(X, Y, spec):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} vs {Y.shape[0]}")
    if spec.kind == "linear":
        return X.T @ Y
    if spec.width is None:
        raise ValueError("rbf kernel width must be resolved before use")
    if not spec.width > 0:
        raise DegenerateKernel("rbf width must be positive")
    sq = cdist(X.T, Y.T, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.width ** 2))


@dataclass(frozen=True, eq=False)
class KernelNullModel:
    train_features: np.ndarray
    spec: KernelSpec
    coef: np.ndarray
    train_kernel_col_means: np.ndarray
    train_kernel_grand_mean: float
    class_count: int
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.train_features.shape[0]


def _class_mean_matrix(labels, C):
    """The N x N class-averaging operator: 1/N_c on same-class pairs."""
    onehot = np.zeros((labels.size, C))
    onehot[np.arange(labels.size), labels] = 1.0
    return (onehot / onehot.sum(axis=0)) @ onehot.T


def train_kernel_nfst(fs, spec=KernelSpec(), tol=DEFAULT_TOL):
    C = fs.num_classes
    N = fs.n
    if C < 2 or N < C:
        raise ValueError(f"need N >= C >= 2 (got N={N}, C={C})")
    X = fs.features
    spec = spec.resolve(X)
    K = kernel_matrix(X, X, spec)
    K = 0.5 * (K + K.T)

    col_means = K.mean(axis=0)
    grand = float(col_means.mean())
    Kc = K - col_means[None, :] - col_means[:, None] + grand
    evals, evecs = sym_eig(0.5 * (Kc + Kc.T))
    lam_max = evals[-1]
    if not lam_max > 0:
        raise DegenerateKernel("centered kernel matrix has numerical rank 0")
    keep = evals > tol.rank_tol * lam_max
    # orthonormal feature-space basis: Phi (I-M) V E^{-1/2}
    A = evecs[:, keep] / np.sqrt(evals[keep])
    A -= A.mean(axis=0)

    L = _class_mean_matrix(fs.class_index, C)
    H = A.T @ (K - K @ L)
    beta, vals, thresh = null_directions(H @ H.T, C - 1, tol)
    coef = A @ beta

    model = KernelNullModel(X, spec, coef, col_means, grand, C)
    Y = coef.T @ Kc
    _check_separation(Y, fs.class_index, C, tol)
    model.diagnostics.update({
        "eigenvalues": vals, "threshold": thresh, "basis_rank": int(keep.sum()),
        "kpca_eigenvalues": evals, "train_projection": Y,
        "collapse_residual": collapse_residual(Y, fs.class_index, C)})
    return model


def project_kernel(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != model.dim:
        raise ValueError(f"features have dimension {X.shape[0]}, model expects {model.dim}")
    Kx = kernel_matrix(model.train_features, X, model.spec)
    # test-time analogue of (I-M) K (I-M)
    Kx = (Kx - model.train_kernel_col_means[:, None]
          - Kx.mean(axis=0)[None, :] + model.train_kernel_grand_mean)
    return model.coef.T @ Kx


# --- serialization ----------------------------------------------------------

def save_kernel_model(model, dirpath):
    os.makedirs(dirpath, exist_ok=True)
    write_fmat(os.path.join(dirpath, "train_features.fmat"), model.train_features)
    write_fmat(os.path.join(dirpath, "coef.fmat"), model.coef)
    write_fmat(os.path.join(dirpath, "col_means.fmat"), model.train_kernel_col_means)
    sigma = repr(float(model.spec.width)) if model.spec.width is not None else "none"
    write_meta(os.path.join(dirpath, "meta.txt"),
               [("kind", "kernel"), ("kernel", model.spec.kind), ("sigma", sigma),
                ("classes", model.class_count), ("dim", model.dim),
                ("grand_mean", repr(float(model.train_kernel_grand_mean)))])


def load_kernel_model(dirpath, meta=None):
    meta = meta or read_meta(os.path.join(dirpath, "meta.txt"))
    X = read_fmat(os.path.join(dirpath, "train_features.fmat"))
    coef = read_fmat(os.path.join(dirpath, "coef.fmat"))
    cm = read_fmat(os.path.join(dirpath, "col_means.fmat"))[:, 0]
    C = int(meta["classes"])
    if coef.shape != (X.shape[1], C - 1) or cm.shape != (X.shape[1],):
        raise FormatError(f"{dirpath}: model arrays do not match metadata")
    width = None if meta.get("sigma", "none") == "none" else float(meta["sigma"])
    spec = KernelSpec(meta["kernel"], width)
    return KernelNullModel(X, spec, coef, cm, float(meta["grand_mean"]), C)
