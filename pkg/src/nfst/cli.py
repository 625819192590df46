"""Command-line interface.

Exit codes: 0 success, 1 usage error (bad flags, missing input files),
2 domain error (training failure, malformed data, protocol violation).
"""
import argparse
import io
import json
import logging
import os
import sys

import numpy as np

from . import dataset as ds
from .errors import NFSTError, NoNullSpace
from .evaluation import DEFAULT_RANKS, distance_matrix, evaluate, fuse_scores, multi_query_pool
from .kernel import KernelSpec, train_kernel_nfst
from .linear import train_linear_nfst
from .models import load_model, project, save_model
from .numeric import Tolerances
from .semisup import SemiConfig, train_semi_supervised

log = logging.getLogger("nfst")

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sigma(value):
    if value == "auto":
        return None
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a positive number, got {value!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("sigma must be positive")
    return v


def _positive(value):
    v = float(value)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _need_files(*paths):
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise UsageError(f"input not found: {p}")


def _need_out_dir(*paths):
    for p in paths:
        if p is None:
            continue
        parent = os.path.dirname(os.path.abspath(p))
        if not os.path.isdir(parent):
            raise UsageError(f"output directory does not exist: {parent}")


def _tol(args):
    return Tolerances(rank_tol=args.tol, collapse_tol=args.collapse_tol)


def _kernel_spec(kind, sigma):
    if kind == "linear" and sigma is not None:
        log.warning("--sigma is ignored for the linear kernel")
        sigma = None
    return KernelSpec(kind, sigma)


def _log_training(model, fs):
    diag = model.diagnostics
    vals = np.asarray(diag["eigenvalues"])
    m = fs.num_classes - 1
    tail = ", ".join(f"{v:.3e}" for v in vals[max(0, m - 2):m + 2])
    log.info("trained on C=%d classes, N=%d samples, d=%d", fs.num_classes, fs.n, fs.d)
    log.info("basis rank %d; eigenvalue spectrum tail around index %d: [%s]; threshold %.3e",
             diag["basis_rank"], m, tail, diag["threshold"])
    log.info("collapse residual %.3e", diag["collapse_residual"])


# --- subcommands -------------------------------------------------------------

def cmd_synth(args):
    _need_out_dir(args.features, args.labels)
    fs = ds.synth_generate(args.classes, args.views, args.dim, args.samples_per_view,
                           args.view_shift, args.noise, args.seed)
    ds.save_featureset(fs, args.features, args.labels)
    log.info("wrote %d samples of %d identities (d=%d)", fs.n, fs.num_classes, fs.d)


def cmd_train(args):
    _need_files(args.features, args.labels)
    _need_out_dir(args.model)
    fs = ds.load_featureset(args.features, args.labels)
    tol = _tol(args)
    if args.kernel == "none":
        model = train_linear_nfst(fs, tol)
    else:
        spec = _kernel_spec(args.kernel, args.sigma)
        model = train_kernel_nfst(fs, spec, tol)
        if args.kernel == "rbf":
            how = "auto, mean pairwise distance" if args.sigma is None else "explicit"
            log.info("rbf sigma = %.6g (%s)", model.spec.width, how)
    _log_training(model, fs)
    save_model(model, args.model)
    log.info("model written to %s", args.model)


def cmd_project(args):
    _need_files(args.model, args.features)
    _need_out_dir(args.out)
    model = load_model(args.model)
    X = ds.read_matrix(args.features)
    ds.write_matrix(args.out, project(model, X))


def _probe_gallery(args):
    probe = ds.load_featureset(args.probe_features, args.probe_labels)
    gallery = ds.load_featureset(args.gallery_features, args.gallery_labels)
    return probe, gallery


def cmd_eval(args):
    if (args.model is None) == (args.dist is None):
        raise UsageError("give exactly one of --model or --dist")
    _need_files(args.model, args.dist, args.probe_labels, args.gallery_labels)
    _need_out_dir(args.out, args.dist_out)
    if args.dist is not None:
        if args.multi_query:
            raise UsageError("--multi-query needs --model (pooling happens in feature space)")
        probe_ids = [r[1] for r in ds.read_labels(args.probe_labels)]
        gallery_ids = [r[1] for r in ds.read_labels(args.gallery_labels)]
        D = ds.read_matrix(args.dist)
    else:
        _need_files(args.probe_features, args.gallery_features)
        if args.probe_features is None or args.gallery_features is None:
            raise UsageError("--model needs --probe-features and --gallery-features")
        model = load_model(args.model)
        probe, gallery = _probe_gallery(args)
        P = probe.features
        probe_ids = list(probe.person_ids)
        if args.multi_query:
            # pooled in feature space, then projected
            groups = list(zip(probe.person_ids, probe.camera_ids))
            P, keys = multi_query_pool(P, groups)
            probe_ids = [k[0] for k in keys]
            log.info("pooled %d probe samples into %d queries", probe.n, len(keys))
        D = distance_matrix(project(model, P), project(model, gallery.features))
        gallery_ids = list(gallery.person_ids)
        if args.dist_out:
            ds.write_matrix(args.dist_out, D)
    report = evaluate(D, probe_ids, gallery_ids, args.ranks)
    print(report.summary())
    if args.out:
        report.write(args.out)


def cmd_semisup(args):
    _need_files(args.labeled_features, args.labeled_labels,
                args.unlabeled_features, args.unlabeled_labels)
    _need_out_dir(args.model, args.diag)
    labeled = ds.load_featureset(args.labeled_features, args.labeled_labels)
    unlabeled = ds.load_featureset(args.unlabeled_features, args.unlabeled_labels)
    cfg = SemiConfig(k=args.k, f=args.f, max_iters=args.max_iters,
                     kernel=_kernel_spec(args.kernel, args.sigma), heat_width=args.heat_width,
                     overlap=args.overlap, distance=args.knn_distance)
    log.info("semi-supervised: k=%d f=%.2f max_iters=%d kernel=%s overlap=%s distance=%s",
             cfg.k, cfg.f, cfg.max_iters, cfg.kernel.kind, cfg.overlap, cfg.distance)
    model = train_semi_supervised(labeled, unlabeled, cfg, _tol(args))
    history = model.diagnostics["history"]
    log.info("%d accepted iterations", len(history))
    save_model(model, args.model)
    if args.diag:
        out = io.StringIO()
        out.write("iter,mean_knn_dist,num_pseudo_classes\n")
        for t, dist, n in history:
            out.write(f"{t},{dist!r},{n}\n")
        ds._atomic_write(args.diag, out.getvalue(), mode="w")


def cmd_fuse(args):
    _need_files(args.dist_a, args.dist_b)
    _need_out_dir(args.out)
    A = ds.read_matrix(args.dist_a)
    B = ds.read_matrix(args.dist_b)
    ds.write_matrix(args.out, fuse_scores(A, B))


# --- parser ------------------------------------------------------------------

def _add_tol(p):
    p.add_argument("--tol", type=_positive, default=Tolerances.rank_tol,
                   help="relative rank tolerance (default %(default)g)")
    p.add_argument("--collapse-tol", type=_positive, default=Tolerances.collapse_tol)


def build_parser():
    parser = _Parser(prog="nfst", description="Discriminative null-space learning for re-identification")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic cross-view dataset")
    p.add_argument("--classes", type=int, default=50)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--dim", type=int, default=200)
    p.add_argument("--samples-per-view", type=int, default=1)
    p.add_argument("--view-shift", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a linear or kernel null-space model")
    p.add_argument("features")
    p.add_argument("labels")
    p.add_argument("--model", required=True, help="output model directory")
    p.add_argument("--kernel", choices=["rbf", "linear", "none"], default="rbf")
    p.add_argument("--sigma", type=_sigma, default=None, help="'auto' or a positive width")
    _add_tol(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("project", help="project features through a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("eval", help="CMC / mAP of probe-vs-gallery matching")
    p.add_argument("--model")
    p.add_argument("--dist", help="precomputed probe x gallery distance matrix")
    p.add_argument("--probe-features")
    p.add_argument("--probe-labels", required=True)
    p.add_argument("--gallery-features")
    p.add_argument("--gallery-labels", required=True)
    p.add_argument("--multi-query", action="store_true")
    p.add_argument("--ranks", type=int, nargs="+", default=list(DEFAULT_RANKS))
    p.add_argument("--out", help="report CSV")
    p.add_argument("--dist-out", help="write the distance matrix (FMAT)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("semisup", help="semi-supervised self-training")
    p.add_argument("labeled_features")
    p.add_argument("labeled_labels")
    p.add_argument("unlabeled_features")
    p.add_argument("unlabeled_labels")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--f", type=float, default=0.40)
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--kernel", choices=["rbf", "linear"], default="rbf")
    p.add_argument("--sigma", type=_sigma, default=None)
    p.add_argument("--heat-width", type=_positive, default=None)
    p.add_argument("--overlap", choices=["skip", "merge"], default="skip",
                   help="how pseudo-classes sharing a sample are resolved")
    p.add_argument("--knn-distance", choices=["relative", "raw"], default="relative",
                   help="stopping statistic: mean k-NN distance relative to RMS pairwise distance, or raw")
    p.add_argument("--model", required=True)
    p.add_argument("--diag", help="per-iteration diagnostics CSV")
    _add_tol(p)
    p.set_defaults(func=cmd_semisup)

    p = sub.add_parser("fuse", help="score-level fusion of two distance matrices")
    p.add_argument("dist_a")
    p.add_argument("dist_b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    echo = {k: v for k, v in vars(args).items() if k != "func"}
    log.info("config: %s", json.dumps(echo, sort_keys=True, default=str))
    try:
        args.func(args)
    except UsageError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except NoNullSpace as e:
        log.error("training failed: %s", e)
        return EXIT_DOMAIN
    except (NFSTError, ValueError) as e:
        log.error("%s", e)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
