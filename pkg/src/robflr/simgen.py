"""Simulated functional regression data with two contamination schemes.

Predictors are ``x_i = mu_x + sum_m z_im phi^x_m`` with three sine/cosine
eigenfunctions; clean responses are ``y_i = mu_y + (z_i B + q_i) phi^y + d_i``.
Scenario 1 outliers use ``B + R``; Scenario 2 outliers add a localized
cubic B-spline bump weighted by ``z_i . l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import BSpline

from ._seeding import derive_seed
from .curve_core import CurveSet, TimeGrid

SQRT2 = math.sqrt(2.0)


def mu_x(t):
    t = np.asarray(t, dtype=float)
    return -10 * (t - 0.5) ** 2 + 2


def mu_y(t):
    t = np.asarray(t, dtype=float)
    return 60 * np.exp(-((t - 1) ** 2))


def phi_x(t) -> np.ndarray:
    """3 x len(t) predictor eigenfunctions."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return SQRT2 * np.vstack([np.sin(np.pi * t), np.sin(7 * np.pi * t), np.cos(7 * np.pi * t)])


def phi_y(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return SQRT2 * np.vstack(
        [np.sin(12 * np.pi * t), np.sin(5 * np.pi * t), np.cos(2 * np.pi * t)]
    )


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 400
    T: int = 500
    a: float = 0.0
    scenario: int = 1
    seed: int = 0
    score_sds: tuple = (math.sqrt(40.0), math.sqrt(10.0), 1.0)
    noise_sd: float = 0.1
    b_range: tuple = (-3.0, 3.0)
    r_sd: float = 0.5
    spike_len: float = 0.1
    l_mean: float = 2.0
    l_sd: float = 1.0
    bump_scale: str = "unit_l2"

    def __post_init__(self):
        if not 0 <= self.a < 0.5:
            raise ValueError(f"contamination fraction must lie in [0, 0.5), got {self.a}")
        if self.scenario not in (1, 2):
            raise ValueError(f"unknown scenario {self.scenario}")
        if self.bump_scale not in ("bspline", "unit_l2"):
            raise ValueError(f"unknown bump scale {self.bump_scale!r}")

    @property
    def n_outliers(self) -> int:
        return int(math.floor(self.a * self.n + 0.5))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(0.0, 1.0, self.T)


@dataclass(frozen=True)
class SimulatedDataset:
    X: CurveSet
    Y: CurveSet
    outlier_flags: np.ndarray
    true_B: np.ndarray
    scores: np.ndarray
    noise: np.ndarray = field(repr=False)
    contamination: dict = field(default_factory=dict, repr=False)

    def true_beta(self, s, t) -> np.ndarray:
        return phi_x(s).T @ self.true_B @ phi_y(t)

    def oracle_prediction(self) -> np.ndarray:
        """Clean-model responses without noise: mu_y + z B phi_y."""
        t = self.Y.grid.points
        return mu_y(t) + self.scores @ self.true_B @ phi_y(t)


def _rng(cfg: ScenarioConfig, purpose: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(cfg.seed, purpose))


def gen_predictors(cfg: ScenarioConfig) -> tuple[CurveSet, np.ndarray]:
    """Predictor curves and their true scores (n x 3)."""
    rng = _rng(cfg, "predictors")
    t = cfg.grid.points
    Z = rng.standard_normal((cfg.n, 3)) * np.asarray(cfg.score_sds)
    X = mu_x(t) + Z @ phi_x(t)
    return CurveSet(cfg.grid, X), Z


def gen_responses(Z: np.ndarray, cfg: ScenarioConfig) -> tuple[CurveSet, np.ndarray, np.ndarray]:
    """Clean responses, the true 3 x 3 B and the noise curves eps_i(t)."""
    rng = _rng(cfg, "responses")
    t = cfg.grid.points
    lo, hi = cfg.b_range
    B = rng.uniform(lo, hi, size=(3, 3))
    q = rng.normal(0.0, cfg.noise_sd, size=(Z.shape[0], 3))
    d = rng.normal(0.0, cfg.noise_sd, size=(Z.shape[0], 1))
    eps = q @ phi_y(t) + d
    Y = mu_y(t) + Z @ B @ phi_y(t) + eps
    return CurveSet(cfg.grid, Y), B, eps


def _pick_outliers(cfg: ScenarioConfig, rng) -> np.ndarray:
    flags = np.zeros(cfg.n, dtype=bool)
    k = cfg.n_outliers
    if k:
        flags[rng.choice(cfg.n, size=k, replace=False)] = True
    return flags


def clean_dataset(cfg: ScenarioConfig) -> SimulatedDataset:
    X, Z = gen_predictors(cfg)
    Y, B, eps = gen_responses(Z, cfg)
    return SimulatedDataset(X, Y, np.zeros(cfg.n, dtype=bool), B, Z, eps)


def contaminate_scenario1(
    data: SimulatedDataset, cfg: ScenarioConfig, R: Optional[np.ndarray] = None
) -> SimulatedDataset:
    """Regenerate a fraction ``a`` of the responses with B replaced by B + R."""
    rng = _rng(cfg, f"contamination-1-{cfg.a!r}")
    flags = _pick_outliers(cfg, rng)
    if R is None:
        R = rng.normal(0.0, cfg.r_sd, size=(3, 3))
    t = data.Y.grid.points
    Y = data.Y.samples.copy()
    Y[flags] = mu_y(t) + data.scores[flags] @ (data.true_B + R) @ phi_y(t) + data.noise[flags]
    return replace(
        data, Y=CurveSet(data.Y.grid, Y), outlier_flags=flags, contamination={"R": R}
    )


def bump(t, start: float, length: float = 0.1) -> np.ndarray:
    """Single cubic B-spline on [start, start + length], zero elsewhere (unnormalized)."""
    knots = start + np.linspace(0.0, length, 5)
    b = BSpline.basis_element(knots, extrapolate=False)(np.asarray(t, dtype=float))
    return np.nan_to_num(b, nan=0.0)


def contaminate_scenario2(
    data: SimulatedDataset, cfg: ScenarioConfig, l: Optional[np.ndarray] = None
) -> SimulatedDataset:
    """Add ``(z_i . l) p(t)`` to a fraction ``a`` of the responses.

    ``p`` is a cubic B-spline bump on a random interval of length
    ``spike_len``, scaled to unit L2 norm on the grid unless
    ``cfg.bump_scale == "bspline"``, which keeps the basis element's own
    scale (peak 2/3).
    """
    rng = _rng(cfg, f"contamination-2-{cfg.a!r}")
    flags = _pick_outliers(cfg, rng)
    grid = data.Y.grid
    start = rng.uniform(0.0, 1.0 - cfg.spike_len)
    p = bump(grid.points, start, cfg.spike_len)
    if cfg.bump_scale == "unit_l2":
        p = p / math.sqrt(grid.trapezoid_weights() @ p**2)
    if l is None:
        l = rng.normal(cfg.l_mean, cfg.l_sd, size=3)
    Y = data.Y.samples.copy()
    Y[flags] += np.outer(data.scores[flags] @ l, p)
    return replace(
        data,
        Y=CurveSet(grid, Y),
        outlier_flags=flags,
        contamination={"l": l, "p": p, "start": start},
    )


def simulate(cfg: ScenarioConfig) -> SimulatedDataset:
    data = clean_dataset(cfg)
    if cfg.n_outliers == 0:
        return data
    if cfg.scenario == 1:
        return contaminate_scenario1(data, cfg)
    return contaminate_scenario2(data, cfg)


def fitting_error(Y, Yhat, flags) -> float:
    """Mean integrated squared error over the samples not flagged as outliers."""
    Ya = Y.samples if isinstance(Y, CurveSet) else np.asarray(Y, dtype=float)
    Yb = Yhat.samples if isinstance(Yhat, CurveSet) else np.asarray(Yhat, dtype=float)
    grid = Y.grid if isinstance(Y, CurveSet) else TimeGrid.uniform(0, 1, Ya.shape[1])
    keep = ~np.asarray(flags, dtype=bool)
    ise = (Ya[keep] - Yb[keep]) ** 2 @ grid.trapezoid_weights()
    return float(ise.mean())
