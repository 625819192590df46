import json

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from nfst import (distance_matrix, evaluate, load_featureset, load_model, multi_query_pool, project,
                  save_featureset, synth_generate)
from nfst.cli import main
from nfst.dataset import read_fmat, write_fmat, write_labels

from conftest import by_identity, cross_view


def _write(fs, tmp_path, name):
    f, l = tmp_path / f"{name}.fmat", tmp_path / f"{name}.csv"
    save_featureset(fs, f, l)
    return str(f), str(l)


@pytest.fixture
def synth_files(tmp_path):
    fs = synth_generate(20, 2, 60, 1, 10.0, 0.0, seed=0)
    train, test = by_identity(fs, 0, 10), by_identity(fs, 10, 20)
    probe, gallery = cross_view(test)
    return {"train": _write(train, tmp_path, "train"), "probe": _write(probe, tmp_path, "probe"),
            "gallery": _write(gallery, tmp_path, "gallery"), "train_fs": train}


def _eval_args(files, model, *extra):
    return ["eval", "--model", model,
            "--probe-features", files["probe"][0], "--probe-labels", files["probe"][1],
            "--gallery-features", files["gallery"][0], "--gallery-labels", files["gallery"][1], *extra]


def test_config_echo_first_line(synth_files, tmp_path, capsys):
    assert main(["train", *synth_files["train"], "--model", str(tmp_path / "m")]) == 0
    first = capsys.readouterr().err.splitlines()[0]
    assert first.startswith("INFO config: ")
    assert json.loads(first[len("INFO config: "):])["command"] == "train"


def test_train_linear(synth_files, tmp_path, capsys):
    assert main(["train", *synth_files["train"], "--model", str(tmp_path / "m"), "--kernel", "none"]) == 0
    model = load_model(tmp_path / "m")
    assert model.W.shape == (60, 9)
    err = capsys.readouterr().err
    residual = float(err.split("collapse residual ")[1].split()[0])
    assert residual < 1e-6
    assert "C=10 classes, N=20 samples, d=60" in err


def test_train_rbf_logs_sigma(synth_files, tmp_path, capsys):
    assert main(["train", *synth_files["train"], "--model", str(tmp_path / "m"),
                 "--kernel", "rbf", "--sigma", "auto"]) == 0
    err = capsys.readouterr().err
    logged = float(err.split("rbf sigma = ")[1].split()[0])
    expected = pdist(synth_files["train_fs"].features.T).mean()
    assert logged == pytest.approx(expected, rel=1e-5)


def test_train_tiny_tol_fails(tmp_path, capsys):
    fs = synth_generate(10, 2, 40, 1, 1.0, 0.3, seed=1)
    files = _write(fs, tmp_path, "noisy")
    assert main(["train", *files, "--model", str(tmp_path / "m"), "--kernel", "none", "--tol", "1e-30"]) == 2
    assert "training failed" in capsys.readouterr().err


def test_train_deterministic_bytes(synth_files, tmp_path):
    for name in ("a", "b"):
        assert main(["train", *synth_files["train"], "--model", str(tmp_path / name)]) == 0
    for f in ("coef.fmat", "col_means.fmat", "train_features.fmat", "meta.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_eval_noise_free_rank1(synth_files, tmp_path, capsys):
    main(["train", *synth_files["train"], "--model", str(tmp_path / "m")])
    out = tmp_path / "report.csv"
    assert main(_eval_args(synth_files, str(tmp_path / "m"), "--out", str(out))) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "rank,accuracy" and lines[1] == "1,1.0"
    assert lines[-1].startswith("mAP,")
    assert "rank-1: 100.00%" in capsys.readouterr().out


def test_eval_multi_query(tmp_path, capsys):
    fs = synth_generate(12, 2, 50, 3, 10.0, 0.1, seed=2)
    main(["train", *_write(by_identity(fs, 0, 6), tmp_path, "train"), "--model", str(tmp_path / "m")])
    probe, gallery = cross_view(by_identity(fs, 6, 12))
    files = {"probe": _write(probe, tmp_path, "probe"), "gallery": _write(gallery, tmp_path, "gallery")}
    out = tmp_path / "r.csv"
    assert main(_eval_args(files, str(tmp_path / "m"), "--multi-query", "--out", str(out))) == 0
    assert "pooled 18 probe samples into 6 queries" in capsys.readouterr().err
    model = load_model(tmp_path / "m")
    pooled, keys = multi_query_pool(probe.features, list(zip(probe.person_ids, probe.camera_ids)))
    D = distance_matrix(project(model, pooled), project(model, gallery.features))
    expected = evaluate(D, [k[0] for k in keys], gallery.person_ids)
    assert out.read_text() == expected.to_csv()


def test_eval_missing_match(synth_files, tmp_path, capsys):
    main(["train", *synth_files["train"], "--model", str(tmp_path / "m")])
    probe = load_featureset(*synth_files["probe"])
    odd = probe.subset([0]).__class__(probe.features[:, :1], ["zz"], ["ghost"], ["cam0"])
    files = dict(synth_files, probe=_write(odd, tmp_path, "odd"))
    assert main(_eval_args(files, str(tmp_path / "m"))) == 2
    assert "'ghost'" in capsys.readouterr().err


def test_semisup_defaults_and_diag(tmp_path, capsys):
    fs = synth_generate(30, 2, 80, 1, 10.0, 0.0, seed=3)
    lab = _write(by_identity(fs, 0, 10), tmp_path, "lab")
    unl = _write(by_identity(fs, 10, 20), tmp_path, "unl")
    diag = tmp_path / "diag.csv"
    assert main(["semisup", *lab, *unl, "--model", str(tmp_path / "m"), "--diag", str(diag)]) == 0
    err = capsys.readouterr().err
    assert "k=3 f=0.40" in err
    rows = diag.read_text().splitlines()
    assert rows[0] == "iter,mean_knn_dist,num_pseudo_classes"
    n_acc = int(err.split(" accepted iterations")[0].rsplit(" ", 1)[1])
    assert len(rows) == n_acc + 1


def test_semisup_variant_flags(tmp_path, capsys):
    fs = synth_generate(30, 2, 80, 1, 10.0, 0.0, seed=3)
    lab = _write(by_identity(fs, 0, 10), tmp_path, "lab")
    unl = _write(by_identity(fs, 10, 20), tmp_path, "unl")
    args = ["semisup", *lab, *unl, "--model", str(tmp_path / "m"),
            "--overlap", "merge", "--knn-distance", "raw"]
    assert main(args) == 0
    assert "overlap=merge distance=raw" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main(args[:-1] + ["bogus"])
    assert e.value.code == 1


def test_semisup_empty_unlabeled_same_bytes(synth_files, tmp_path):
    fs = synth_files["train_fs"]
    empty = _write(fs.subset([]), tmp_path, "empty")
    assert main(["train", *synth_files["train"], "--model", str(tmp_path / "a")]) == 0
    diag = tmp_path / "d.csv"
    assert main(["semisup", *synth_files["train"], *empty, "--model", str(tmp_path / "b"),
                 "--diag", str(diag)]) == 0
    for f in ("coef.fmat", "col_means.fmat", "train_features.fmat", "meta.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert diag.read_text().splitlines() == ["iter,mean_knn_dist,num_pseudo_classes"]


def test_fuse_then_eval(synth_files, tmp_path):
    main(["train", *synth_files["train"], "--model", str(tmp_path / "m")])
    dist = tmp_path / "d.fmat"
    main(_eval_args(synth_files, str(tmp_path / "m"), "--dist-out", str(dist), "--out", str(tmp_path / "r1.csv")))
    assert main(["fuse", str(dist), str(dist), "--out", str(tmp_path / "f.fmat")]) == 0
    assert main(["eval", "--dist", str(tmp_path / "f.fmat"), "--probe-labels", synth_files["probe"][1],
                 "--gallery-labels", synth_files["gallery"][1], "--out", str(tmp_path / "r2.csv")]) == 0
    r1 = (tmp_path / "r1.csv").read_text().splitlines()
    r2 = (tmp_path / "r2.csv").read_text().splitlines()
    assert r1[:-1] == r2[:-1]


def test_fuse_hand_and_mismatch(tmp_path):
    write_fmat(tmp_path / "a.fmat", np.array([[1.0, 2.0, 9.0]]))
    write_fmat(tmp_path / "b.fmat", np.array([[2.0, 1.9, 2.1]]))
    assert main(["fuse", str(tmp_path / "a.fmat"), str(tmp_path / "b.fmat"), "--out", str(tmp_path / "f.fmat")]) == 0
    F = read_fmat(tmp_path / "f.fmat")
    za = (np.array([1.0, 2.0, 9.0]) - 4.0) / np.sqrt(38 / 3)
    zb = np.array([0.0, -0.1, 0.1]) / np.sqrt(0.02 / 3)
    np.testing.assert_allclose(F[0], za + zb, rtol=1e-10)
    write_fmat(tmp_path / "c.fmat", np.zeros((2, 3)))
    assert main(["fuse", str(tmp_path / "a.fmat"), str(tmp_path / "c.fmat"), "--out", str(tmp_path / "g.fmat")]) == 2


def test_project(synth_files, tmp_path):
    main(["train", *synth_files["train"], "--model", str(tmp_path / "m"), "--kernel", "none"])
    assert main(["project", "--model", str(tmp_path / "m"), "--features", synth_files["probe"][0],
                 "--out", str(tmp_path / "y.fmat")]) == 0
    assert read_fmat(tmp_path / "y.fmat").shape == (9, 10)


def test_synth_command(tmp_path):
    f, l = tmp_path / "f.csv", tmp_path / "l.csv"
    assert main(["synth", "--classes", "5", "--dim", "7", "--features", str(f), "--labels", str(l)]) == 0
    fs = load_featureset(f, l)
    assert (fs.d, fs.n, fs.num_classes) == (7, 10, 5)


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["train"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    assert main(["train", str(tmp_path / "nope.fmat"), str(tmp_path / "nope.csv"),
                 "--model", str(tmp_path / "m")]) == 1


def test_malformed_input_is_domain_error(tmp_path):
    (tmp_path / "f.csv").write_text("2,2\n1,2\n")
    write_labels(tmp_path / "l.csv", synth_generate(2, 2, 2, 1, 1.0, 0.1).subset([0, 1]))
    assert main(["train", str(tmp_path / "f.csv"), str(tmp_path / "l.csv"), "--model", str(tmp_path / "m")]) == 2
