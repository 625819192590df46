"""Labeled cross-view feature sets: container, file formats, splits, synthesis.

Features are stored one column per sample (d x N). Two on-disk feature
formats are supported:

* FMAT: ``b"FMAT"`` + version byte ``0x01``, then u32 LE rows, u32 LE
  columns, then rows*columns float64 LE values in column-major order.
* CSV: a ``d,N`` header row followed by N rows of d values, one per sample.

Labels live in a separate CSV with header ``sample_id,person_id,camera_id``.
"""
import csv
import io
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError

FMAT_MAGIC = b"FMAT"
FMAT_VERSION = 1
_FMAT_HEADER = struct.Struct("<4sBII")
LABELS_HEADER = ["sample_id", "person_id", "camera_id"]


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Feature matrix (d x N) with per-sample id, identity and camera labels.

    Identity labels are opaque strings; ``classes`` lists them in
    first-appearance order and ``class_index`` maps every sample to its
    dense class number in that order.
    """
    features: np.ndarray
    sample_ids: tuple
    person_ids: tuple
    camera_ids: tuple
    classes: tuple = field(init=False)
    class_index: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise FormatError(f"features must be a d x N matrix with d >= 1, got shape {X.shape}")
        n = X.shape[1]
        for name in ("sample_ids", "person_ids", "camera_ids"):
            vals = tuple(str(v) for v in getattr(self, name))
            if len(vals) != n:
                raise FormatError(f"{name} has {len(vals)} entries but features have N={n}")
            object.__setattr__(self, name, vals)
        bad = np.argwhere(~np.isfinite(X))
        if len(bad):
            i, j = bad[0]
            raise FormatError(f"non-finite value at ({i},{j})")
        if len(set(self.sample_ids)) != n:
            seen = set()
            for j, s in enumerate(self.sample_ids):
                if s in seen:
                    raise FormatError(f"duplicate sample_id {s!r} at row {j}")
                seen.add(s)
        object.__setattr__(self, "features", _frozen(X))
        lookup = {}
        for p in self.person_ids:
            lookup.setdefault(p, len(lookup))
        object.__setattr__(self, "classes", tuple(lookup))
        object.__setattr__(self, "class_index",
                           _frozen(np.array([lookup[p] for p in self.person_ids], dtype=np.intp)))

    @property
    def d(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]

    @property
    def num_classes(self):
        return len(self.classes)

    def class_sizes(self):
        return np.bincount(self.class_index, minlength=self.num_classes)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return FeatureSet(self.features[:, idx],
                          [self.sample_ids[i] for i in idx],
                          [self.person_ids[i] for i in idx],
                          [self.camera_ids[i] for i in idx])

    def with_features(self, features):
        return FeatureSet(features, self.sample_ids, self.person_ids, self.camera_ids)

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and self.sample_ids == other.sample_ids
                and self.person_ids == other.person_ids
                and self.camera_ids == other.camera_ids)

    __hash__ = None


def concat(*sets):
    """Concatenate feature sets sample-wise (all must share d)."""
    sets = [s for s in sets if s is not None]
    dims = {s.d for s in sets}
    if len(dims) != 1:
        raise FormatError(f"cannot concatenate feature sets of dimensions {sorted(dims)}")
    return FeatureSet(np.hstack([s.features for s in sets]),
                      sum((s.sample_ids for s in sets), ()),
                      sum((s.person_ids for s in sets), ()),
                      sum((s.camera_ids for s in sets), ()))


# --- file formats -----------------------------------------------------------

def _atomic_write(path, data, mode="wb"):
    path = os.fspath(path)
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_fmat(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("FMAT stores 2-D matrices")
    rows, cols = M.shape
    payload = np.asfortranarray(M).astype("<f8").tobytes(order="F")
    return _FMAT_HEADER.pack(FMAT_MAGIC, FMAT_VERSION, rows, cols) + payload


def decode_fmat(buf, source="<bytes>"):
    if len(buf) < _FMAT_HEADER.size:
        raise FormatError(f"{source}: truncated header ({len(buf)} bytes) at offset 0")
    magic, version, rows, cols = _FMAT_HEADER.unpack_from(buf, 0)
    if magic != FMAT_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at offset 0")
    if version != FMAT_VERSION:
        raise FormatError(f"{source}: unsupported version {version} at offset 4")
    expected = rows * cols * 8
    got = len(buf) - _FMAT_HEADER.size
    if got != expected:
        raise FormatError(f"{source}: header declares {rows}x{cols} ({expected} bytes) "
                          f"but payload at offset {_FMAT_HEADER.size} has {got} bytes")
    M = np.frombuffer(buf, dtype="<f8", offset=_FMAT_HEADER.size, count=rows * cols)
    return M.reshape((rows, cols), order="F").astype(np.float64)


def write_fmat(path, M):
    _atomic_write(path, encode_fmat(M))


def read_fmat(path):
    with open(path, "rb") as fh:
        return decode_fmat(fh.read(), source=os.fspath(path))


def _check_finite(M, source):
    bad = np.argwhere(~np.isfinite(M))
    if len(bad):
        i, j = bad[0]
        raise FormatError(f"{source}: non-finite value at ({i},{j})")


def write_features_csv(path, M):
    M = np.asarray(M, dtype=np.float64)
    d, n = M.shape
    out = io.StringIO()
    out.write(f"{d},{n}\n")
    for j in range(n):
        out.write(",".join(repr(float(v)) for v in M[:, j]))
        out.write("\n")
    _atomic_write(path, out.getvalue(), mode="w")


def read_features_csv(path):
    source = os.fspath(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{source}: empty file, missing 'd,N' header at row 0")
    try:
        d, n = (int(v) for v in rows[0])
    except ValueError:
        raise FormatError(f"{source}: malformed header {rows[0]!r} at row 0") from None
    if d < 1 or n < 0:
        raise FormatError(f"{source}: malformed header {rows[0]!r} at row 0")
    body = [r for r in rows[1:] if r]
    if len(body) != n:
        raise FormatError(f"{source}: header declares N={n} but found {len(body)} data rows")
    M = np.empty((d, n))
    for j, r in enumerate(body):
        if len(r) != d:
            raise FormatError(f"{source}: row {j + 1} has {len(r)} values, expected d={d}")
        try:
            M[:, j] = [float(v) for v in r]
        except ValueError:
            raise FormatError(f"{source}: unparsable value in row {j + 1}") from None
    return M


def read_matrix(path):
    """Read an FMAT or CSV matrix, sniffing the format from the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == FMAT_MAGIC:
        M = read_fmat(path)
    else:
        M = read_features_csv(path)
    _check_finite(M, os.fspath(path))
    return M


def write_matrix(path, M):
    """Write FMAT unless the path ends in ``.csv``."""
    if os.fspath(path).lower().endswith(".csv"):
        write_features_csv(path, M)
    else:
        write_fmat(path, M)


def read_labels(path):
    source = os.fspath(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != LABELS_HEADER:
        got = rows[0] if rows else None
        raise FormatError(f"{source}: expected header {','.join(LABELS_HEADER)} at row 0, got {got!r}")
    out = []
    for i, r in enumerate(rows[1:], start=1):
        if not r:
            continue
        if len(r) != 3:
            raise FormatError(f"{source}: row {i} has {len(r)} fields, expected 3")
        out.append(tuple(c.strip() for c in r))
    return out


def write_labels(path, fs):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LABELS_HEADER)
    w.writerows(zip(fs.sample_ids, fs.person_ids, fs.camera_ids))
    _atomic_write(path, out.getvalue(), mode="w")


def load_featureset(features_path, labels_path):
    """Load and validate a feature file (FMAT or CSV) plus its labels CSV."""
    M = read_matrix(features_path)
    labels = read_labels(labels_path)
    if len(labels) != M.shape[1]:
        raise FormatError(f"{os.fspath(labels_path)}: {len(labels)} label rows but "
                          f"{os.fspath(features_path)} has N={M.shape[1]} samples")
    seen = {}
    for i, (sid, _, _) in enumerate(labels, start=1):
        if sid in seen:
            raise FormatError(f"{os.fspath(labels_path)}: duplicate sample_id {sid!r} "
                              f"at row {i} (first at row {seen[sid]})")
        seen[sid] = i
    cols = list(zip(*labels)) if labels else ([], [], [])
    return FeatureSet(M, *cols)


def save_featureset(fs, features_path, labels_path):
    write_matrix(features_path, fs.features)
    write_labels(labels_path, fs)


# --- splitting --------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """How to divide identities between training and test.

    mode is ``"fraction"`` (random whole identities, ``train_fraction`` of
    them to training) or ``"explicit"`` (``train_ids`` / ``test_ids``).
    """
    mode: str = "fraction"
    train_fraction: float = 0.5
    train_ids: Optional[Sequence[str]] = None
    test_ids: Optional[Sequence[str]] = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("fraction", "explicit"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "fraction" and not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must lie in (0, 1]")
        if self.mode == "explicit":
            if self.train_ids is None:
                raise ValueError("explicit split needs train_ids")
            if self.test_ids is not None and set(self.train_ids) & set(self.test_ids):
                raise ValueError("explicit train and test id lists overlap")


def split_train_test(fs, spec):
    """Partition ``fs`` by identity into ``(train, test)`` feature sets."""
    ids = fs.classes
    if spec.mode == "fraction":
        n_train = int(math.floor(spec.train_fraction * len(ids) + 1e-9))
        if n_train == 0:
            raise ValueError(f"train_fraction {spec.train_fraction} selects 0 of {len(ids)} identities")
        perm = np.random.default_rng(spec.seed).permutation(len(ids))
        train_ids = {ids[i] for i in perm[:n_train]}
    else:
        train_ids = set(spec.train_ids)
        unknown = train_ids - set(ids)
        if spec.test_ids is not None:
            unknown |= set(spec.test_ids) - set(ids)
            missing = set(ids) - train_ids - set(spec.test_ids)
            if missing:
                raise ValueError(f"identities in neither list: {sorted(missing)[:5]}")
        if unknown:
            raise ValueError(f"unknown identities in split lists: {sorted(unknown)[:5]}")
        if not train_ids:
            raise ValueError("explicit split selects 0 training identities")
    mask = np.array([p in train_ids for p in fs.person_ids], dtype=bool)
    return fs.subset(np.flatnonzero(mask)), fs.subset(np.flatnonzero(~mask))


# --- synthetic data ---------------------------------------------------------

def synth_generate(C, views, d, samples_per_id_per_view=1, view_shift_scale=1.0,
                   noise_sigma=0.1, seed=0):
    """Synthetic cross-view identities.

    Every identity gets a standard-normal prototype; every view gets a fixed
    offset vector (standard normal times ``view_shift_scale``) added to all
    of its samples; each sample adds isotropic Gaussian noise of standard
    deviation ``noise_sigma``. Samples are ordered identity-major, then by
    view, then by repetition.
    """
    if C < 2 or views < 2 or d < 2 or samples_per_id_per_view < 1:
        raise ValueError("need C >= 2, views >= 2, d >= 2 and at least one sample per view")
    if view_shift_scale < 0 or noise_sigma < 0:
        raise ValueError("scales must be non-negative")
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((d, C))
    shifts = view_shift_scale * rng.standard_normal((d, views))
    s = samples_per_id_per_view
    n = C * views * s
    noise = noise_sigma * rng.standard_normal((d, n))
    cols, sids, pids, cams = [], [], [], []
    j = 0
    for c in range(C):
        for v in range(views):
            for _ in range(s):
                cols.append(protos[:, c] + shifts[:, v])
                sids.append(f"s{j:06d}")
                pids.append(f"id{c:04d}")
                cams.append(f"cam{v}")
                j += 1
    X = np.column_stack(cols) + noise
    return FeatureSet(X, sids, pids, cams)
