import numpy as np
import pytest

from nfst import FeatureSet, cmc, distance_matrix, project


def cross_view(fs, probe_cam="cam0"):
    """Split a feature set into (probe, gallery) by camera."""
    is_probe = np.array([c == probe_cam for c in fs.camera_ids])
    return fs.subset(np.flatnonzero(is_probe)), fs.subset(np.flatnonzero(~is_probe))


def rank1(model, fs):
    probe, gallery = cross_view(fs)
    if model is None:
        D = distance_matrix(probe.features, gallery.features)
    else:
        D = distance_matrix(project(model, probe.features), project(model, gallery.features))
    return cmc(D, probe.person_ids, gallery.person_ids)[0]


def by_identity(fs, lo, hi):
    """Samples whose identity index (first-appearance order) lies in [lo, hi)."""
    return fs.subset(np.flatnonzero((fs.class_index >= lo) & (fs.class_index < hi)))


def make_fs(X, labels, cams=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    cams = cams if cams is not None else ["cam0"] * n
    return FeatureSet(X, [f"s{i}" for i in range(n)], [str(l) for l in labels], cams)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
