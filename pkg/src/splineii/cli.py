"""Command-line entry point: ``splineii {estimate,montecarlo,ratecheck,selftest}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ContractError, NumericalError
from .harness import McConfig, emit_csv, emit_svg_hist, mise_curve, rate_check, run_montecarlo, summary_dict
from .inference import REGIMES, EstimationConfig, indirect_inference_estimate
from .models import MODELS, get_model
from .selftest import run_selftest

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def read_data(path) -> np.ndarray:
    """First column of a CSV file; a non-numeric first row is treated as a header."""
    values = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if i == 0:
                    continue
                raise ContractError(f"{path}: row {i + 1} is not numeric: {row[0]!r}") from None
    return np.asarray(values)


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, allow_nan=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_estimate(args) -> int:
    model = get_model(args.model)
    overrides = {"seed": args.seed, "compute_variance": not args.no_variance}
    if args.kappa is not None:
        overrides["kappa"] = args.kappa
    if args.k is not None:
        overrides["k"] = args.k
    cfg = EstimationConfig.preset(args.regime, **overrides)
    res = indirect_inference_estimate(read_data(args.data), model, cfg)
    _write_json(res.to_dict(), args.out)
    return EXIT_OK if res.a_n_held else EXIT_NUMERIC


def cmd_montecarlo(args) -> int:
    cfg = McConfig.from_file(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_montecarlo(cfg, workers=args.workers)
    emit_csv(report, cfg.csv_path or out / "records.csv")
    for q in range(len(cfg.theta0)):
        for n in cfg.n_list:
            if report.summaries[n].valid:
                emit_svg_hist(report, q, cfg.svg_path or out / f"hist_n{n}_theta{q + 1}.svg", n=n)
    _write_json(summary_dict(report), out / "summary.json")
    for n, s in report.summaries.items():
        ratio = ", ".join(f"{v:.3f}" for v in s.variance_ratio)
        print(f"n={n}: valid {s.valid}/{cfg.reps}, variance / reference = [{ratio}]")
    return EXIT_OK


def cmd_ratecheck(args) -> int:
    model = get_model(args.model)
    k_list = [int(k) for k in np.unique(np.geomspace(args.kmin, args.kmax, args.points).round())]
    mise = mise_curve(model, args.theta0, k_list, args.tau, args.r, args.reps, args.seed, args.level)
    slope = rate_check(model, args.theta0, k_list, args.tau, args.r, args.reps, args.seed, args.level)
    for k, m in zip(k_list, mise):
        print(f"k={k}  MISE={m:.6e}")
    print(f"slope {slope:.4f}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    return EXIT_OK if run_selftest() else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splineii", description="Spline-based indirect inference estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate theta from one data file")
    e.add_argument("--model", required=True, choices=sorted(MODELS))
    e.add_argument("--data", required=True, help="CSV with observations in the first column")
    e.add_argument("--regime", default="S1", choices=REGIMES)
    e.add_argument("--kappa", type=float)
    e.add_argument("--k", type=int, help="override the simulation size")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--no-variance", action="store_true", help="skip the plug-in variance estimate")
    e.add_argument("--out", help="JSON output path (default stdout)")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("montecarlo", help="run a seeded Monte Carlo campaign")
    m.add_argument("--config", required=True, help="JSON or key = value file")
    m.add_argument("--out-dir", required=True)
    m.add_argument("--workers", type=int)
    m.set_defaults(func=cmd_montecarlo)

    r = sub.add_parser("ratecheck", help="MISE slope of the simulated density estimator")
    r.add_argument("--model", required=True, choices=sorted(MODELS))
    r.add_argument("--theta0", required=True, type=float, nargs="+")
    r.add_argument("--kmin", type=int, default=2**8)
    r.add_argument("--kmax", type=int, default=2**14)
    r.add_argument("--points", type=int, default=7)
    r.add_argument("--reps", type=int, default=50)
    r.add_argument("--tau", type=float, default=1.5)
    r.add_argument("--r", type=int, default=4)
    r.add_argument("--level", type=int, help="freeze J instead of using the resolution rule")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_ratecheck)

    s = sub.add_parser("selftest", help="run the built-in invariant checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, OSError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
