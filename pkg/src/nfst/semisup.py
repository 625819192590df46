"""Self-training with cross-view nearest-neighbour pseudo-classes.

Starting from a model trained on labeled identities only, unlabeled samples
are projected, linked to their nearest neighbours in other camera views,
and the most confident neighbourhoods become extra training classes. The
model is retrained on labeled plus pseudo classes until the mean
neighbour distance stops decreasing.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dataset import FeatureSet, concat
from .errors import ProtocolError
from .evaluation import distance_matrix
from .kernel import KernelSpec, project_kernel, train_kernel_nfst
from .numeric import DEFAULT_TOL

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SemiConfig:
    k: int = 3
    f: float = 0.40
    heat_width: Optional[float] = None
    max_iters: int = 20
    kernel: KernelSpec = field(default_factory=KernelSpec)
    rel_tol: float = 1e-4
    overlap: str = "skip"
    distance: str = "relative"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.f <= 1:
            raise ValueError("f must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.heat_width is not None and not self.heat_width > 0:
            raise ValueError("heat_width must be positive")
        if self.overlap not in ("skip", "merge"):
            raise ValueError("overlap must be 'skip' or 'merge'")
        if self.distance not in ("relative", "raw"):
            raise ValueError("distance must be 'relative' or 'raw'")


@dataclass
class CrossViewGraph:
    """Directed k-NN graph whose edges always join different cameras.

    ``neighbors[i]`` / ``distances[i]`` / ``weights[i]`` hold the outgoing
    edges of vertex i, nearest first. Distances are Euclidean. ``scale`` is
    the root mean squared distance over all vertex pairs.
    """
    camera_ids: tuple
    neighbors: List[np.ndarray]
    distances: List[np.ndarray]
    weights: List[np.ndarray]
    heat_width: float
    scale: float = 1.0

    @property
    def n(self):
        return len(self.neighbors)

    def edges(self):
        for i, (nb, dist, w) in enumerate(zip(self.neighbors, self.distances, self.weights)):
            for j, dj, wj in zip(nb, dist, w):
                yield i, int(j), float(dj), float(wj)

    def mean_distance(self, relative=False):
        """Mean edge length, optionally divided by ``scale``.

        The relative form is comparable across projections of different
        dimension, which is what the self-training loop needs: each retrain
        adds pseudo-classes and therefore null directions, and raw distances
        grow with the number of directions.
        """
        all_d = np.concatenate(self.distances) if self.distances else np.zeros(0)
        if not all_d.size:
            return math.nan
        mean = float(all_d.mean())
        return mean / self.scale if relative else mean

    def weight_matrix(self):
        A = np.zeros((self.n, self.n))
        for i, j, _, w in self.edges():
            A[i, j] = w
        return A


def build_cross_view_knn(Yu, camera_ids, cfg=SemiConfig()):
    Yu = np.asarray(Yu, dtype=np.float64)
    cams = np.asarray([str(c) for c in camera_ids])
    n = Yu.shape[1]
    if cams.size != n:
        raise ValueError(f"{cams.size} camera labels for {n} samples")
    if np.unique(cams).size < 2:
        raise ProtocolError("unlabeled data must span at least 2 cameras")
    sq = distance_matrix(Yu, Yu)
    mean_sq = float(sq[np.triu_indices(n, 1)].mean())
    scale = math.sqrt(mean_sq) if mean_sq > 0 else 1.0
    width = cfg.heat_width
    if width is None:
        width = mean_sq if mean_sq > 0 else 1.0
    neighbors, distances, weights = [], [], []
    for i in range(n):
        cand = np.flatnonzero(cams != cams[i])
        order = cand[np.argsort(sq[i, cand], kind="stable")][:cfg.k]
        neighbors.append(order)
        distances.append(np.sqrt(sq[i, order]))
        weights.append(np.exp(-sq[i, order] / width))
    return CrossViewGraph(tuple(cams), neighbors, distances, weights, width, scale)


@dataclass
class PseudoClasses:
    """Kept neighbourhoods: ``groups[m]`` is (anchor, its neighbours...)."""
    groups: List[np.ndarray]
    scores: np.ndarray

    def __len__(self):
        return len(self.groups)


def make_pseudo_classes(graph, f):
    """Keep the ``floor(f * n)`` neighbourhoods with smallest mean edge distance.

    Ties go to the lower vertex index. A sample may belong to several groups.
    """
    score = np.array([d.mean() if d.size else math.inf for d in graph.distances])
    n_keep = int(math.floor(f * graph.n + 1e-9))
    if n_keep == 0:
        warnings.warn(f"f={f} keeps no neighbourhood out of {graph.n}", RuntimeWarning)
    kept = np.argsort(score, kind="stable")[:n_keep]
    kept = kept[np.isfinite(score[kept])]
    groups = [np.concatenate(([i], graph.neighbors[i])).astype(np.intp) for i in kept]
    return PseudoClasses(groups, score[kept])


def disjoint_groups(groups, how="skip"):
    """Remove sample sharing between pseudo-classes.

    A sample placed in two classes forces both to the same projected point,
    which removes a null direction and makes exact training impossible.
    ``"skip"`` drops any group that touches an already kept one (groups are
    in confidence order); ``"merge"`` joins overlapping groups.
    """
    if how == "skip":
        used, out = set(), []
        for g in groups:
            members = set(g.tolist())
            if members & used:
                continue
            used |= members
            out.append(g)
        return out
    parent = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for g in groups:
        root = find(int(g[0]))
        for m in g[1:]:
            parent[find(int(m))] = root
    merged = {}
    for g in groups:
        for m in g:
            merged.setdefault(find(int(m)), []).append(int(m))
    return [np.array(sorted(set(v)), dtype=np.intp) for v in merged.values()]


def pseudo_fragment(unlabeled, groups, reserved_ids, tag=0):
    """FeatureSet holding the grouped unlabeled samples under fresh identities."""
    reserved = set(reserved_ids)
    idx, pids = [], []
    for m, g in enumerate(groups):
        pid = f"pseudo{tag}_{m}"
        while pid in reserved:
            pid = "_" + pid
        idx.extend(g.tolist())
        pids.extend([pid] * len(g))
    frag = unlabeled.subset(idx)
    return FeatureSet(frag.features, frag.sample_ids, pids, frag.camera_ids)


def train_semi_supervised(labeled, unlabeled, cfg=SemiConfig(), tol=DEFAULT_TOL):
    """Iterative self-training; returns the model with the lowest mean k-NN distance.

    With ``cfg.distance == "relative"`` (default) the stopping statistic is
    the mean k-NN distance divided by the RMS pairwise distance of the
    projected unlabeled set; ``"raw"`` uses the plain mean.

    The per-iteration record ``(iter, mean_knn_dist, num_pseudo_classes)`` of
    every accepted iteration is stored in ``model.diagnostics["history"]``.
    """
    model = train_kernel_nfst(labeled, cfg.kernel, tol)
    history = []
    model.diagnostics["history"] = history
    if unlabeled is None or unlabeled.n == 0:
        return model
    reserved = set(labeled.person_ids) | set(unlabeled.person_ids)
    best, best_dist = model, None
    for t in range(cfg.max_iters + 1):
        Yu = project_kernel(model, unlabeled.features)
        graph = build_cross_view_knn(Yu, unlabeled.camera_ids, cfg)
        dist = graph.mean_distance(relative=cfg.distance == "relative")
        if best_dist is not None and not dist < best_dist * (1.0 - cfg.rel_tol):
            log.info("iteration %d: mean k-NN distance %.6g did not decrease; stopping", t, dist)
            break
        pcs = make_pseudo_classes(graph, cfg.f)
        groups = disjoint_groups(pcs.groups, cfg.overlap)
        best, best_dist = model, dist
        history.append((t, dist, len(groups)))
        log.info("iteration %d: mean k-NN distance %.6g, %d pseudo-classes", t, dist, len(groups))
        if t == cfg.max_iters:
            break
        train = labeled
        if groups:
            train = concat(labeled, pseudo_fragment(unlabeled, groups, reserved, tag=t + 1))
        model = train_kernel_nfst(train, cfg.kernel, tol)
    best.diagnostics["history"] = history
    return best
