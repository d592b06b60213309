"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import verify_equivalence
from .data import generate_synthetic, load_dataset, save_checkpoint, save_dataset
from .errors import DataError, HGraphormerError, NumericError
from .hypergraph import from_edge_list, laplacian
from .model import ModelConfig
from .training import (
    cross_validate,
    evaluate,
    make_folds,
    make_label_rate_splits,
    sweep,
    train_one_fold,
    write_sweep_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("hgraphormer")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _model_args(p):
    d = ModelConfig()
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--layers", type=int, default=d.num_layers)
    p.add_argument("--heads", type=int, default=d.num_heads)
    p.add_argument("--d-h", type=int, default=d.d_h)
    p.add_argument("--d-k", type=int, default=d.d_k)
    p.add_argument("--d-q", type=int, default=None, help="value width (defaults to --d-k)")
    p.add_argument("--dropout", type=float, default=d.dropout_p)
    p.add_argument("--no-residual", action="store_true")
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--float32", action="store_true", help="single precision")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--label-rate", type=float, default=None,
                   help="train on this stratified fraction instead of k-fold 90/10")


def _config(args) -> ModelConfig:
    return ModelConfig(
        gamma=args.gamma,
        num_layers=args.layers,
        num_heads=args.heads,
        d_h=args.d_h,
        d_k=args.d_k,
        d_q=args.d_q if args.d_q is not None else args.d_k,
        dropout_p=args.dropout,
        use_residual=not args.no_residual,
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        seed=args.seed,
        dtype="float32" if args.float32 else "float64",
    )


def _echo(command, settings):
    print("# config " + json.dumps({"command": command, **settings}, sort_keys=True, default=str))
    sys.stdout.flush()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hgraphormer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train on one split and report test accuracy")
    _model_args(p)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--checkpoint", help="write trained parameters here")

    p = sub.add_parser("cv", help="k-fold cross-validation report")
    _model_args(p)
    p.add_argument("--out", help="CSV report path")
    p.add_argument("--json", help="JSON report path")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("sweep", help="cross-validate over a grid of one hyperparameter")
    _model_args(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated; 'a,b,...,z' expands an arithmetic grid")
    p.add_argument("--out", help="CSV path (value,mean,std)")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("verify-equivalence", help="two-stage vs one-stage numerical check")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--max-nodes", type=int, default=12)
    p.add_argument("--max-edges", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("laplacian", help="dense hypergraph Laplacian as CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--edges", help="edges file (needs --num-nodes)")
    p.add_argument("--num-nodes", type=int)
    p.add_argument("--out", help="CSV path; stdout if omitted")

    p = sub.add_parser("synth", help="write a synthetic community dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--num-nodes", type=int, default=60)
    p.add_argument("--num-classes", type=int, default=3)
    p.add_argument("--edges-per-class", type=int, default=20)
    p.add_argument("--edge-size", type=int, default=4)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest-check", help="load a dataset and print its statistics")
    p.add_argument("--manifest", required=True)
    return parser


def parse_values(text: str) -> list:
    """``"0,0.1,...,1.0"`` expands to the arithmetic grid it implies."""
    parts = [s.strip() for s in text.split(",") if s.strip()]
    if "..." in parts:
        i = parts.index("...")
        if i < 2 or i != len(parts) - 2:
            raise UsageError("'...' needs two leading values and one final value")
        a, b, end = float(parts[i - 2]), float(parts[i - 1]), float(parts[i + 1])
        step = b - a
        if step <= 0:
            raise UsageError("grid step must be positive")
        count = int(round((end - a) / step)) + 1
        head = parts[: i - 2]
        decimals = max(len(p.split(".")[1]) if "." in p else 0 for p in (parts[i - 2], parts[i - 1], parts[i + 1]))
        grid = [round(a + j * step, decimals) for j in range(count)]
        if decimals == 0:
            grid = [int(g) for g in grid]
        return head + [str(g) for g in grid]
    return parts


def _cmd_train(args):
    cfg = _config(args)
    ds = load_dataset(args.manifest)
    cfg = cfg.replace(feature_dim=ds.feature_dim, num_classes=ds.num_classes)
    _echo("train", {**cfg.to_dict(), "manifest": args.manifest, "fold": args.fold,
                    "folds": args.folds, "label_rate": args.label_rate})
    if args.label_rate is None:
        splits = make_folds(ds.labels, args.folds, cfg.seed)
    else:
        splits = make_label_rate_splits(ds.labels, args.label_rate, args.folds, cfg.seed)
    if not 0 <= args.fold < len(splits):
        raise UsageError(f"--fold must be in [0, {len(splits)})")
    split = splits[args.fold]
    L = laplacian(ds.hypergraph, cfg.np_dtype)
    params, result = train_one_fold(ds, split, cfg, L)
    acc = evaluate(params, ds, split.test_mask, cfg, L)
    print(f"fold {split.fold_index}: final loss {result.loss_trace[-1]:.6f} "
          f"test accuracy {acc:.4f} ({result.seconds:.1f}s)")
    if args.checkpoint:
        save_checkpoint(params, args.checkpoint, cfg.to_dict())
    return EXIT_OK


def _cmd_cv(args):
    cfg = _config(args)
    ds = load_dataset(args.manifest)
    cfg = cfg.replace(feature_dim=ds.feature_dim, num_classes=ds.num_classes)
    _echo("cv", {**cfg.to_dict(), "manifest": args.manifest, "folds": args.folds,
                 "label_rate": args.label_rate, "jobs": args.jobs})
    report = cross_validate(ds, cfg, k=args.folds, label_rate=args.label_rate, n_jobs=args.jobs)
    for f in report.folds:
        status = f"{f.accuracy:.4f}" if f.accuracy is not None else f"FAILED ({f.error})"
        print(f"fold {f.fold_index}: {status}")
    print(f"mean {report.mean:.4f} std {report.std:.4f} ({report.seconds:.1f}s)")
    if args.out:
        report.write_csv(args.out)
    if args.json:
        report.write_json(args.json)
    if report.failed_folds and not report.fold_accuracies:
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_sweep(args):
    cfg = _config(args)
    ds = load_dataset(args.manifest)
    cfg = cfg.replace(feature_dim=ds.feature_dim, num_classes=ds.num_classes)
    values = parse_values(args.values)
    _echo("sweep", {**cfg.to_dict(), "manifest": args.manifest, "param": args.param,
                    "values": values, "folds": args.folds, "label_rate": args.label_rate})
    rows = sweep(ds, cfg, args.param, values, k=args.folds, label_rate=args.label_rate, n_jobs=args.jobs)
    print("value,mean,std")
    for r in rows:
        print(f"{r.value},{r.mean:.6f},{r.std:.6f}")
    if args.out:
        write_sweep_csv(rows, args.out)
    return EXIT_OK


def _cmd_verify(args):
    _echo("verify-equivalence", vars(args))
    report = verify_equivalence(args.trials, args.max_nodes, args.seed, args.max_edges)
    report.tol = args.tol
    print(f"hypersage max deviation {report.hypersage_max_dev:.3e}")
    print(f"unigcn max deviation {report.unigcn_max_dev:.3e}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def _cmd_laplacian(args):
    _echo("laplacian", vars(args))
    if args.manifest:
        hg = load_dataset(args.manifest).hypergraph
    else:
        if args.num_nodes is None:
            raise UsageError("--edges needs --num-nodes")
        from .data import read_edges

        hg = from_edge_list(read_edges(args.edges, args.num_nodes), args.num_nodes)
    L = laplacian(hg)
    np.savetxt(args.out if args.out else sys.stdout, L, fmt="%.17g", delimiter=",")
    return EXIT_OK


def _cmd_synth(args):
    _echo("synth", vars(args))
    ds = generate_synthetic(args.num_nodes, args.num_classes, args.edges_per_class,
                            args.edge_size, args.noise, args.seed)
    path = save_dataset(ds, args.out_dir)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_ingest_check(args):
    _echo("ingest-check", vars(args))
    ds = load_dataset(args.manifest)
    for key, value in ds.stats().items():
        print(f"{key}: {value}")
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "cv": _cmd_cv,
    "sweep": _cmd_sweep,
    "verify-equivalence": _cmd_verify,
    "laplacian": _cmd_laplacian,
    "synth": _cmd_synth,
    "ingest-check": _cmd_ingest_check,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    command = None
    try:
        args = parser.parse_args(argv)
        command = args.command
        if command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error [{command}]: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error [{command}]: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HGraphormerError as exc:
        print(f"error [{command}]: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
