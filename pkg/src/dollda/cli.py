"""Command-line entry point.

Exit codes: 0 success, 1 every benchmark task failed, 2 configuration or
usage error, 3 data error, 4 numerical failure.  Diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .classify import accuracy
from .config import SolverConfig
from .data import DaDataset, load_labels, load_matrix, save_labels, save_matrix
from .errors import ConfigError, DataError, NumericalError
from .harness import run_suite
from .pipeline import FitResult, fit
from .synthetic import make_synthetic

EXIT_OK, EXIT_ALL_FAILED, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3, 4

log = logging.getLogger("dollda")


def _init_labels(value: str):
    """``nn`` or ``random:SEED`` -> (init_labels, seed or None)."""
    if value in ("nn", "nearest_neighbor"):
        return "nearest_neighbor", None
    if value.startswith("random"):
        _, _, seed = value.partition(":")
        try:
            return "random", int(seed) if seed else None
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"expected 'nn' or 'random:SEED', got {value!r}")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver overrides (take precedence over --config)")
    g.add_argument("--config", type=Path, help="JSON file with SolverConfig fields")
    g.add_argument("--variant")
    g.add_argument("--k", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--iters", type=int, help="outer iterations")
    g.add_argument("--kernel", choices=["none", "linear", "rbf"])
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--init-labels", type=_init_labels, metavar="{nn,random:SEED}")
    g.add_argument("--normalize", choices=["none", "zscore", "zscore-unit"])


def _overrides(args) -> dict:
    out = {}
    for flag, field in (("variant", "variant"), ("k", "k"), ("alpha", "alpha"), ("beta", "beta"),
                        ("iters", "outer_iters"), ("kernel", "kernel"), ("bandwidth", "bandwidth")):
        value = getattr(args, flag, None)
        if value is not None:
            out[field] = value
    if getattr(args, "normalize", None) is not None:
        out["normalize"] = args.normalize.replace("-", "_")
    if getattr(args, "init_labels", None) is not None:
        mode, seed = args.init_labels
        out["init_labels"] = mode
        if seed is not None:
            out["seed"] = seed
    return out


def _build_config(args) -> SolverConfig:
    base = {}
    if args.config is not None:
        try:
            base = json.loads(args.config.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError(f"config {args.config} must be a JSON object")
    return SolverConfig.from_dict({**base, **_overrides(args)})


def cmd_fit(args) -> int:
    config = _build_config(args)
    xs = load_matrix(args.source_x)
    ys = load_labels(args.source_y)
    xt = load_matrix(args.target_x)
    dataset = DaDataset.from_domains(xs, ys, xt)
    result = fit(dataset, config)
    result.save(args.out)
    save_labels(result.target_labels, Path(args.out) / "target_labels.txt")
    print(f"iterations: {result.iterations_run}")
    print(f"final objective: {result.objective_trace[-1]!r}")
    # truth is read only after fitting has finished
    if args.truth_y is not None:
        truth = load_labels(args.truth_y)
        print(f"accuracy: {accuracy(result.target_labels, truth):.6f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    result = FitResult.load(args.model)
    x = load_matrix(args.target_x)
    labels = result.predict(x)
    if args.out is not None:
        save_labels(labels, args.out)
    else:
        sys.stdout.write("".join(f"{int(v)}\n" for v in labels))
    if args.truth_y is not None:
        print(f"accuracy: {accuracy(labels, load_labels(args.truth_y)):.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if not Path(args.manifest).is_file():
        raise ConfigError(f"manifest not found: {args.manifest}")
    reports, summary = run_suite(args.manifest, out_dir=args.out, jobs=args.jobs,
                                 emit_convergence=args.emit_convergence, overrides=_overrides(args))
    print(f"{'task':<32} {'variant':<10} {'accuracy':>9}")
    for r in reports:
        acc = "FAILED" if r.status != "ok" else ("-" if r.accuracy is None else f"{r.accuracy:.4f}")
        print(f"{r.task_name:<32} {r.variant:<10} {acc:>9}")
    for variant, mean in summary["mean_accuracy_by_variant"].items():
        print(f"{'mean':<32} {variant:<10} {mean:>9.4f}")
    for r in reports:
        if r.status != "ok":
            print(f"task {r.task_name} failed: {r.error}", file=sys.stderr)
    if reports and summary["failed"] == len(reports):
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_synth(args) -> int:
    dataset, truth = make_synthetic(seed=args.seed, n_per_class=args.n_per_class,
                                    class_count=args.classes, dim=args.dim,
                                    rotation_degrees=args.rotation, noise_sigma=args.noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "fbin" if args.format == "fbin" else "csv"
    save_matrix(dataset.x_source, out / f"source_x.{ext}")
    save_labels(dataset.source_labels, out / "source_y.txt")
    save_matrix(dataset.x_target, out / f"target_x.{ext}")
    save_labels(truth, out / "target_truth.txt")
    print(f"wrote {dataset.n_source} source and {dataset.n_target} target samples to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dollda", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model on source/target features")
    p.add_argument("--source-x", type=Path, required=True)
    p.add_argument("--source-y", type=Path, required=True)
    p.add_argument("--target-x", type=Path, required=True)
    p.add_argument("--truth-y", type=Path, help="target truth labels, used only to report accuracy")
    p.add_argument("--out", type=Path, required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="label new target samples with a saved model")
    p.add_argument("--model", type=Path, required=True, help="directory written by 'fit'")
    p.add_argument("--target-x", type=Path, required=True)
    p.add_argument("--truth-y", type=Path)
    p.add_argument("--out", type=Path, help="label file (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="run a manifest of tasks")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-convergence", action="store_true",
                   help="write per-iteration accuracy CSVs")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_benchmark, config=None)

    p = sub.add_parser("synth", help="write a synthetic rotated-Gaussian task")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rotation", type=float, default=30.0, help="degrees")
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--format", choices=["fbin", "csv"], default="fbin")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
