"""Command-line entry point: simulate, fit, detect, predict, benchmark, resample.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines (keys are
the long option names, dashes or underscores); explicit flags win over the
file.  Exit codes: 0 ok, 2 input error, 3 infeasible configuration,
4 incompatible model file.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    COLUMNS,
    SUMMARY_COLUMNS,
    BenchmarkConfig,
    default_threads,
    run_benchmark,
    summarize,
    write_csv,
)
from .curve_core import CurveSet, TimeGrid, build_bspline_basis, eval_basis
from .errors import IncompatibleModel, Infeasible
from .io import (
    doc_to_model,
    file_digest,
    fmt_float,
    load_doc,
    model_to_doc,
    read_curves,
    read_long_series,
    save_doc,
    write_curves,
)
from .model_select import SelectConfig, fit_grid, predict_curves, residual_curves
from .outlier import DepthConfig, depth_report
from .simgen import ScenarioConfig, simulate

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_SCHEMA = 0, 2, 3, 4
THREADS_ENV = "ROBFLR_THREADS"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _int_list(text: str) -> tuple:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _float_list(text: str) -> tuple:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, values may be quoted."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc.strerror or exc}")
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key.replace("-", "_")] = value
    return out


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n")


def _resolved(args) -> dict:
    skip = {"func", "config", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, int(args.threads))
    return default_threads()


# Subcommands.


def cmd_simulate(args) -> int:
    cfg = ScenarioConfig(n=args.n, T=args.T, a=args.a, scenario=args.scenario, seed=args.seed)
    data = simulate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ids = tuple(str(i) for i in range(cfg.n))
    write_curves(out / "x.csv", CurveSet(data.X.grid, data.X.samples, ids))
    write_curves(out / "y.csv", CurveSet(data.Y.grid, data.Y.samples, ids))
    with open(out / "truth.csv", "w") as fh:
        fh.write("id,outlier\n")
        for i, flag in zip(ids, data.outlier_flags):
            fh.write(f"{i},{int(flag)}\n")
    meta = {
        "config": _jsonable(_resolved(args)),
        "n_outliers": int(data.outlier_flags.sum()),
        "true_B": [[float(v) for v in row] for row in data.true_B],
        "contamination": {
            k: [float(v) for v in np.ravel(val)] if np.ndim(val) else float(val)
            for k, val in sorted(data.contamination.items())
        },
        "version": __version__,
    }
    _write_json(out / "meta.json", meta)
    print(f"wrote {cfg.n} samples ({meta['n_outliers']} outliers) to {out}")
    return EXIT_OK


def _check_alpha(alpha: float) -> None:
    if not 0.5 < alpha <= 1:
        raise CliError(f"--alpha must lie in (0.5, 1], got {alpha}")


def cmd_fit(args) -> int:
    _check_alpha(args.alpha)
    X = read_curves(args.x)
    Y = read_curves(args.y)
    if X.n != Y.n:
        raise CliError(f"{args.x} has {X.n} samples but {args.y} has {Y.n}")
    if X.ids != Y.ids:
        raise CliError("predictor and response files list different sample ids")
    num_basis = args.num_basis
    if num_basis is None:
        num_basis = min(200, X.grid.size // 2, Y.grid.size // 2)
    cfg = SelectConfig(
        method=args.method,
        criterion=args.criterion,
        alpha=args.alpha,
        num_basis=num_basis,
        m_cap=args.mmax,
        k_cap=args.kmax,
        scale=args.scale,
        n_starts=args.n_starts,
        seed=args.seed,
    )
    grid = fit_grid(X, Y, cfg)
    model = grid.select(cfg.resolved_criterion)
    provenance = {
        "config": _jsonable(_resolved(args)),
        "resolved_num_basis": num_basis,
        "inputs": {"x": file_digest(args.x), "y": file_digest(args.y)},
        "seed": args.seed,
        "version": __version__,
    }
    save_doc(args.model, model_to_doc(model, provenance))
    crit = cfg.resolved_criterion
    print(f"criterion {crit} (method {cfg.method}, alpha {grid.alpha:g})")
    print("M,K," + crit)
    for (m, k), total in sorted(grid.table(crit).items()):
        print(f"{m},{k},{fmt_float(total) if np.isfinite(total) else 'failed'}")
    print(f"selected M={model.M} K={model.K}")
    return EXIT_OK


def _load_model(path):
    return doc_to_model(load_doc(path))


def _report_paths(report: str) -> tuple[Path, Path]:
    p = Path(report)
    if p.suffix == ".json":
        return p, p.with_suffix(".csv")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".csv")


def cmd_detect(args) -> int:
    model = _load_model(args.model)
    X = read_curves(args.x)
    Y = read_curves(args.y)
    if X.n != Y.n:
        raise CliError(f"{args.x} has {X.n} samples but {args.y} has {Y.n}")
    if not X.grid.same_as(model.grid_x):
        raise CliError(f"{args.x}: time grid differs from the model's predictor grid")
    if not Y.grid.same_as(model.grid_y):
        raise CliError(f"{args.y}: time grid differs from the model's response grid")
    cfg = DepthConfig(delta=args.delta, n_boot=args.n_boot, seed=args.seed)
    rep = depth_report(residual_curves(model, X, Y), cfg)
    json_path, csv_path = _report_paths(args.report)
    _write_json(
        json_path,
        {
            "config": _jsonable(_resolved(args)),
            "inputs": {
                "model": file_digest(args.model),
                "x": file_digest(args.x),
                "y": file_digest(args.y),
            },
            "bandwidth": rep.bandwidth,
            "threshold": rep.threshold,
            "degenerate": rep.degenerate,
            "n": len(rep.ids),
            "n_outliers": rep.n_outliers,
            "outliers": [i for i, f in zip(rep.ids, rep.outlier_flags) if f],
            "per_boot_thresholds": [float(c) for c in rep.per_boot_thresholds],
            "version": __version__,
        },
    )
    with open(csv_path, "w") as fh:
        fh.write("id,depth,flag\n")
        for i, d, f in zip(rep.ids, rep.depths, rep.outlier_flags):
            fh.write(f"{i},{fmt_float(d)},{int(f)}\n")
    print(f"{rep.n_outliers} outliers of {len(rep.ids)}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _load_model(args.model)
    X = read_curves(args.x)
    if not X.grid.same_as(model.grid_x):
        raise CliError(f"{args.x}: time grid differs from the model's predictor grid")
    pred = predict_curves(model, X)
    write_curves(args.out, pred)
    _write_json(
        str(args.out) + ".meta.json",
        {
            "config": _jsonable(_resolved(args)),
            "inputs": {"model": file_digest(args.model), "x": file_digest(args.x)},
            "version": __version__,
        },
    )
    print(f"wrote {pred.n} predicted curves to {args.out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    for a in args.a_list:
        if not 0 <= a < 0.5:
            raise CliError(f"contamination fractions must lie in [0, 0.5), got {a}")
    for alpha in args.alpha_list:
        _check_alpha(alpha)
    cfg = BenchmarkConfig(
        scenarios=args.scenarios,
        a_list=args.a_list,
        alpha_list=args.alpha_list,
        reps=args.reps,
        seed=args.seed,
        n=args.n,
        T=args.T,
        num_basis=args.num_basis,
        n_starts=args.n_starts,
        threads=_threads(args),
    )
    rows = run_benchmark(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "benchmark.csv", rows, COLUMNS)
    write_csv(out / "summary.csv", summarize(rows), SUMMARY_COLUMNS)
    # Thread count does not change results, so it is left out of the metadata.
    config = _jsonable(_resolved(args))
    config.pop("threads", None)
    config["resolved_num_basis"] = cfg.resolved_num_basis
    _write_json(out / "config.json", {"config": config, "version": __version__})
    print(f"wrote {len(rows)} rows to {out / 'benchmark.csv'}")
    return EXIT_OK


def cmd_resample(args) -> int:
    """Refit each long-format series on [0, 1] and sample it on a common grid."""
    series = read_long_series(args.input)
    if not series:
        raise CliError(f"{args.input}: no data rows")
    basis = build_bspline_basis((0.0, 1.0), args.num_basis, 3)
    grid = TimeGrid.uniform(0.0, 1.0, args.resample_points)
    ids, rows = [], []
    for ident in sorted(series):
        arr = series[ident]
        t = arr[:, 0]
        if t.size < args.num_basis:
            raise CliError(
                f"series {ident!r} has {t.size} observations, fewer than --num-basis {args.num_basis}"
            )
        u = (t - t[0]) / (t[-1] - t[0])
        u[-1] = 1.0
        exp = _fit_scattered(u, arr[:, 1], basis)
        ids.append(ident)
        rows.append(exp)
    Phi = eval_basis(basis, grid)
    write_curves(args.out, CurveSet(grid, np.array(rows) @ Phi.T, tuple(ids)))
    print(f"resampled {len(ids)} series to {args.resample_points} points in {args.out}")
    return EXIT_OK


def _fit_scattered(u: np.ndarray, values: np.ndarray, basis) -> np.ndarray:
    # Irregular times are not a TimeGrid, so solve the least-squares fit directly.
    Phi = eval_basis(basis, u)
    coefs, _, rank, _ = np.linalg.lstsq(Phi, values, rcond=None)
    if rank < basis.num_basis:
        raise CliError("observation times leave some basis functions unsupported")
    return coefs


# Parser.


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robflr", description="Robust function-on-function regression and outlier detection."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file; explicit flags override it")
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "Write a simulated dataset (x.csv, y.csv, truth.csv, meta.json).")
    p.add_argument("--scenario", type=int, choices=(1, 2), default=1)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--a", type=float, default=0.0, help="contamination fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = add("fit", cmd_fit, "Select (M, K) and fit a regression model.")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--method", choices=("classical", "robust"), default="robust")
    p.add_argument("--criterion", choices=("bic", "rbic"), default=None)
    p.add_argument("--alpha", type=float, default=0.8, help="retained fraction for trimming")
    p.add_argument("--mmax", type=int, default=10)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--num-basis", type=int, default=None, help="default min(200, T/2)")
    p.add_argument("--scale", choices=("mad", "qn"), default="mad")
    p.add_argument("--n-starts", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", required=True, help="output model JSON")

    p = add("detect", cmd_detect, "Flag outlying samples from the residuals of a fitted model.")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--n-boot", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True, help="report path; writes .json and .csv")

    p = add("predict", cmd_predict, "Predict response curves for new predictor curves.")
    p.add_argument("--model", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--out", required=True)

    p = add("benchmark", cmd_benchmark, "Replicated simulation benchmark.")
    p.add_argument("--scenarios", type=_int_list, default="1,2")
    p.add_argument("--a-list", type=_float_list, default="0,0.1,0.2,0.3")
    p.add_argument("--alpha-list", type=_float_list, default="0.9,0.8,0.7")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--num-basis", type=int, default=None)
    p.add_argument("--n-starts", type=int, default=500)
    p.add_argument("--threads", type=int, default=None, help=f"worker processes (env {THREADS_ENV})")
    p.add_argument("--out", required=True)

    p = add("resample", cmd_resample, "Turn long-format id,time,value series into a curve CSV.")
    p.add_argument("--input", required=True)
    p.add_argument("--num-basis", type=int, default=400)
    p.add_argument("--resample-points", type=int, default=1000)
    p.add_argument("--out", required=True)
    return parser


def _config_path(argv) -> tuple:
    """(subcommand, config path) found by scanning argv before full parsing."""
    command = next((a for a in argv if not a.startswith("-")), None)
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return command, argv[i + 1]
        if a.startswith("--config="):
            return command, a.split("=", 1)[1]
    return command, None


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command, config = _config_path(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if config and command in subparsers:
        values = read_config_file(config)
        sub = subparsers[command]
        known = {a.dest for a in sub._actions} - {"help", "config", "func"}
        unknown = sorted(set(values) - known)
        if unknown:
            raise CliError(f"{config}: unknown keys {', '.join(unknown)}")
        # String defaults go through each option's type, so config values convert like flags.
        sub.set_defaults(**values)
        for action in sub._actions:
            if action.dest in values:
                action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        with warnings.catch_warnings():
            if not sys.warnoptions:
                warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except IncompatibleModel as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except Infeasible as exc:
        print(f"error: infeasible configuration: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
