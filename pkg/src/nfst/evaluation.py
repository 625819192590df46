"""Cross-view matching metrics: distances, CMC, mAP, pooling and fusion.

Gallery entries with equal distance keep their gallery order (stable sort),
so every ranking here is deterministic.
"""
import io
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import _atomic_write
from .errors import ProtocolError

DEFAULT_RANKS = (1, 5, 10, 20)


def distance_matrix(probe, gallery):
    """Squared Euclidean distances between probe and gallery columns."""
    P = np.asarray(probe, dtype=np.float64)
    G = np.asarray(gallery, dtype=np.float64)
    if P.ndim != 2 or G.ndim != 2 or P.shape[0] != G.shape[0]:
        raise ValueError(f"dimension mismatch: probe {P.shape} vs gallery {G.shape}")
    diff = P[:, :, None] - G[:, None, :] if P.size * G.shape[1] <= 2 ** 22 else None
    if diff is not None:
        return np.einsum("kij,kij->ij", diff, diff)
    D = (P * P).sum(0)[:, None] + (G * G).sum(0)[None, :] - 2.0 * P.T @ G
    return np.maximum(D, 0.0)


def _match_table(dist, probe_ids, gallery_ids):
    dist = np.asarray(dist, dtype=np.float64)
    probe_ids = np.asarray(probe_ids).astype(str)
    gallery_ids = np.asarray(gallery_ids).astype(str)
    if dist.shape != (probe_ids.size, gallery_ids.size):
        raise ValueError(f"distance matrix {dist.shape} does not match "
                         f"{probe_ids.size} probes x {gallery_ids.size} gallery entries")
    order = np.argsort(dist, axis=1, kind="stable")
    matches = gallery_ids[order] == probe_ids[:, None]
    missing = np.flatnonzero(~matches.any(axis=1))
    if missing.size:
        raise ProtocolError(f"probe id {probe_ids[missing[0]]!r} (probe {missing[0]}) "
                            "has no match in the gallery")
    return matches


def cmc(dist, probe_ids, gallery_ids):
    """Cumulative match curve; entry r-1 is the rank-r accuracy."""
    matches = _match_table(dist, probe_ids, gallery_ids)
    first = matches.argmax(axis=1)
    hits = np.bincount(first, minlength=matches.shape[1])
    return np.cumsum(hits) / matches.shape[0]


def average_precision(match_row):
    pos = np.flatnonzero(match_row) + 1
    return float(np.mean(np.arange(1, pos.size + 1) / pos))


def map_score(dist, probe_ids, gallery_ids):
    matches = _match_table(dist, probe_ids, gallery_ids)
    return float(np.mean([average_precision(row) for row in matches]))


@dataclass
class EvalReport:
    cmc: np.ndarray
    map: float
    ranks_reported: tuple = DEFAULT_RANKS

    def at(self, rank):
        return float(self.cmc[min(rank, len(self.cmc)) - 1])

    def summary(self):
        parts = [f"rank-{r}: {100 * self.at(r):.2f}%" for r in self.ranks_reported]
        parts.append(f"mAP: {100 * self.map:.2f}%")
        return "  ".join(parts)

    def to_csv(self):
        out = io.StringIO()
        out.write("rank,accuracy\n")
        for r, acc in enumerate(self.cmc, start=1):
            out.write(f"{r},{float(acc)!r}\n")
        out.write(f"mAP,{float(self.map)!r}\n")
        return out.getvalue()

    def write(self, path):
        _atomic_write(path, self.to_csv(), mode="w")


def evaluate(dist, probe_ids, gallery_ids, ranks=DEFAULT_RANKS):
    return EvalReport(cmc(dist, probe_ids, gallery_ids),
                      map_score(dist, probe_ids, gallery_ids), tuple(ranks))


def multi_query_pool(features, query_group_ids):
    """Average the columns of each query group; groups in first-appearance order.

    Returns ``(pooled, group_ids)``.
    """
    X = np.asarray(features, dtype=np.float64)
    groups = list(query_group_ids)
    if X.ndim != 2 or X.shape[1] != len(groups) or not groups:
        raise ValueError("need a d x n matrix with n >= 1 group labels")
    lookup = {}
    idx = np.array([lookup.setdefault(g, len(lookup)) for g in groups])
    sums = np.zeros((X.shape[0], len(lookup)))
    np.add.at(sums.T, idx, X.T)
    return sums / np.bincount(idx), list(lookup)


def _row_zscore(D, name):
    mean = D.mean(axis=1, keepdims=True)
    std = D.std(axis=1, keepdims=True)
    flat = np.ptp(D, axis=1) == 0
    if flat.any():
        warnings.warn(f"{name}: rows {np.flatnonzero(flat).tolist()} have zero variance; "
                      "they contribute nothing to the fused score", RuntimeWarning)
    std[flat] = 1.0
    Z = (D - mean) / std
    Z[flat] = 0.0
    return Z


def fuse_scores(dist_a, dist_b):
    """Sum of per-probe z-scored distance matrices."""
    A = np.asarray(dist_a, dtype=np.float64)
    B = np.asarray(dist_b, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 2:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return _row_zscore(A, "first matrix") + _row_zscore(B, "second matrix")
