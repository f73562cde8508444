"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import container, datagen
from .harness import (KINDS, ConfigError, ExperimentConfig, NumericalFailure, describe,
                      evaluate_encoder, export_results, parse_axis, run_rbf_noise_cases, sweep,
                      train)
from .harness.metrics import csv_text
from .harness.runner import RBF_CASES, save_generated, sweep_rows

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bipde", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the dataset of an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one experiment and export its results")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="run a saved model on a generated dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset.bin written by 'generate'")
    p.add_argument("--subset", choices=("all", "train", "test", "ood"), default="all")
    p.add_argument("--out", help="write per-sample predictions to this CSV")

    p = sub.add_parser("sweep", help="train the cartesian product of axis values")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", action="append", default=[], metavar="NAME=V1,V2,...")
    p.add_argument("--workers", type=int, help="process pool width (overrides the config)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rbf-cases", help="run the noisy meshless recovery cases")
    p.add_argument("--cases", default="case1,case2,case3,case4",
                   help=f"comma list from {', '.join(RBF_CASES)}")
    p.add_argument("--epochs", type=int, help="override every case's epoch count")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("keys", help="list config keys and defaults of an experiment kind")
    p.add_argument("kind", choices=KINDS)
    return ap


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_file(path)


def _cmd_generate(args) -> int:
    path = save_generated(_load_config(args.config), args.out)
    print(f"wrote {path}")
    return EXIT_OK


def _print_report(report) -> None:
    for sec in report.sections:
        for p in sec.params:
            r2 = "" if np.isnan(p.r2) else f" R2={p.r2:.5f}"
            print(f"[{sec.name}] {p.name}: {p.mean:.6g} +/- {p.std:.3g} "
                  f"(true {p.true_mean:.6g}, rel err {p.rel_error:.3g}){r2}")
        if not np.isnan(sec.mae_D):
            print(f"[{sec.name}] MAE_D={sec.mae_D:.4g} Linf_D={sec.linf_D:.4g} "
                  f"max rel={sec.max_rel_D:.4g}")
    print(f"final loss {report.final_loss:.6g}")


def _cmd_train(args) -> int:
    result = train(_load_config(args.config))
    written = export_results(result, args.out)
    _print_report(result.report)
    print(f"wrote {written['csv']}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    arrays, meta = datagen.load_dataset(args.data)
    if "X" not in arrays:
        raise ConfigError(f"{args.data} has no observations")
    X, y = arrays["X"], arrays.get("y")
    if args.subset in ("train", "test"):
        if "train" not in arrays:
            raise ConfigError("dataset has no train/test split")
        mask = np.zeros(len(X), dtype=bool)
        mask[arrays["train"].astype(int)] = True
        keep = mask if args.subset == "train" else ~mask
        X, y = X[keep], None if y is None else y[keep]
    elif args.subset == "ood":
        if "X_ood" not in arrays:
            raise ConfigError("dataset has no out-of-range set")
        X, y = arrays["X_ood"], arrays.get("y_ood")
    ev = evaluate_encoder(args.checkpoint, X, y)
    for p in ev.section.params:
        print(f"{p.name}: R2={ev.r2[p.name]:.6f} mean={p.mean:.6g} std={p.std:.3g}")
    if args.out:
        names = [p.name for p in ev.section.params]
        lines = [",".join(names)] + [",".join(repr(float(v)) for v in row) for row in ev.predictions]
        Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    axes = dict(cfg.axes)
    for spec in args.axis:
        name, values = parse_axis(spec)
        axes[name] = values
    cfg = ExperimentConfig(cfg.kind, cfg.values, axes)
    cells = sweep(cfg, workers=args.workers)
    written = export_results(cells, args.out, cfg)
    failed = sum(c.report is None for c in cells)
    print(f"{len(cells)} cells, {failed} failed; wrote {written['csv']}")
    return EXIT_OK


def _cmd_rbf_cases(args) -> int:
    cases = [c.strip() for c in args.cases.split(",") if c.strip()]
    overrides = {"epochs": args.epochs} if args.epochs is not None else None
    cells = run_rbf_noise_cases(cases, overrides, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_rows(ExperimentConfig("rbf_recover"), cells)
    (out / "results.csv").write_text(csv_text(rows))
    for cell in cells:
        if cell.report is None:
            print(f"{cell.axis}: failed ({cell.error})")
        else:
            p = cell.report.section("fit").param("nu")
            print(f"{cell.axis}: nu = {p.mean:.6g} +/- {p.std:.3g} (true {p.true_mean:.6g})")
    return EXIT_OK


def _cmd_keys(args) -> int:
    print(describe(args.kind))
    return EXIT_OK


COMMANDS = {"generate": _cmd_generate, "train": _cmd_train, "eval": _cmd_eval,
            "sweep": _cmd_sweep, "rbf-cases": _cmd_rbf_cases, "keys": _cmd_keys}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, container.ContainerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
