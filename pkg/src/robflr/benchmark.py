"""Replicated fitting-error / AUC benchmark over the simulated scenarios."""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._seeding import derive_seed
from .curve_core import CurveSet
from .model_select import SelectConfig, fit_grid, predict_curves
from .outlier import residual_depths, roc_auc
from .simgen import ScenarioConfig, fitting_error, simulate

COLUMNS = [
    "scenario",
    "a",
    "method",
    "alpha",
    "criterion",
    "rep",
    "FE",
    "AUC_model",
    "AUC_direct",
    "selected_M",
    "selected_K",
]
SUMMARY_COLUMNS = [
    "scenario",
    "a",
    "method",
    "alpha",
    "criterion",
    "reps",
    "mean_FE",
    "mean_AUC_model",
    "mean_AUC_direct",
    "frac_true_model",
]


@dataclass(frozen=True)
class BenchmarkConfig:
    scenarios: tuple = (1, 2)
    a_list: tuple = (0.0, 0.1, 0.2, 0.3)
    alpha_list: tuple = (0.9, 0.8, 0.7)
    methods: tuple = ("classical", "robust")
    criteria: tuple = ("bic", "rbic")
    reps: int = 100
    seed: int = 0
    n: int = 400
    T: int = 500
    num_basis: int | None = None
    n_starts: int = 500
    threads: int = 1

    @property
    def resolved_num_basis(self) -> int:
        return self.num_basis if self.num_basis is not None else min(200, self.T // 2)


def _row(scenario, a, method, alpha, criterion, rep, fe, auc_model, auc_direct, M, K):
    return {
        "scenario": scenario,
        "a": a,
        "method": method,
        "alpha": alpha,
        "criterion": criterion,
        "rep": rep,
        "FE": fe,
        "AUC_model": auc_model,
        "AUC_direct": auc_direct,
        "selected_M": M,
        "selected_K": K,
    }


def run_replication(cfg: BenchmarkConfig, scenario: int, a: float, rep: int) -> list[dict]:
    """All method rows for one simulated dataset."""
    data = simulate(
        ScenarioConfig(
            n=cfg.n, T=cfg.T, a=a, scenario=scenario, seed=derive_seed(cfg.seed, "data", scenario, rep)
        )
    )
    truth = data.outlier_flags
    auc_direct = roc_auc(residual_depths(data.Y), truth)[2]
    fit_seed = derive_seed(cfg.seed, "fit", scenario, a, rep)
    rows = []

    def evaluate(model, method, alpha, criterion):
        pred = predict_curves(model, data.X)
        fe = fitting_error(data.Y, pred, truth)
        res = data.Y.samples - pred.samples
        depths = residual_depths(CurveSet(data.Y.grid, res))
        auc = roc_auc(depths, truth)[2]
        rows.append(
            _row(scenario, a, method, alpha, criterion, rep, fe, auc, auc_direct, model.M, model.K)
        )

    common = dict(num_basis=cfg.resolved_num_basis, n_starts=cfg.n_starts, seed=fit_seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if "classical" in cfg.methods:
            grid = fit_grid(data.X, data.Y, SelectConfig(method="classical", **common))
            evaluate(grid.select("bic"), "classical", 1.0, "bic")
        if "robust" in cfg.methods:
            for alpha in cfg.alpha_list:
                grid = fit_grid(data.X, data.Y, SelectConfig(method="robust", alpha=alpha, **common))
                for criterion in cfg.criteria:
                    evaluate(grid.select(criterion), "robust", alpha, criterion)
    return rows


def _task(args):
    return run_replication(*args)


def run_benchmark(cfg: BenchmarkConfig) -> list[dict]:
    """Rows for every (scenario, a, rep), in that order regardless of thread count."""
    tasks = [(cfg, s, a, rep) for s in cfg.scenarios for a in cfg.a_list for rep in range(cfg.reps)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def summarize(rows: Iterable[dict], true_model=(3, 3)) -> list[dict]:
    groups: dict = {}
    for row in rows:
        key = tuple(row[c] for c in ("scenario", "a", "method", "alpha", "criterion"))
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in groups.items():
        fe = np.array([m["FE"] for m in members], dtype=float)
        am = np.array([m["AUC_model"] for m in members], dtype=float)
        ad = np.array([m["AUC_direct"] for m in members], dtype=float)
        hits = [(m["selected_M"], m["selected_K"]) == tuple(true_model) for m in members]
        out.append(
            dict(
                zip(SUMMARY_COLUMNS[:5], key),
                reps=len(members),
                mean_FE=float(fe.mean()),
                mean_AUC_model=float(am.mean()),
                mean_AUC_direct=float(ad.mean()),
                frac_true_model=float(np.mean(hits)),
            )
        )
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ROBFLR_THREADS", "1")))
    except ValueError:
        return 1
