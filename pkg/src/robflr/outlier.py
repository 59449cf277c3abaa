"""h-modal depth of residual curves and the bootstrap outlier threshold."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import rankdata

from ._seeding import derive_seed
from .curve_core import CurveSet
from .errors import DegenerateDistances, SmallTrimmedSet


@dataclass(frozen=True)
class DepthConfig:
    bandwidth_percentile: float = 15.0
    delta: float = 0.01
    n_boot: int = 200
    smoothing_gamma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 0.5), got {self.delta}")
        if self.n_boot < 1:
            raise ValueError("n_boot must be at least 1")


@dataclass(frozen=True)
class DepthReport:
    ids: tuple
    depths: np.ndarray
    bandwidth: float
    threshold: float
    outlier_flags: np.ndarray
    per_boot_thresholds: np.ndarray = field(repr=False)
    degenerate: bool = False

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_flags.sum())


def _weighted(curves: CurveSet) -> np.ndarray:
    return curves.samples * np.sqrt(curves.grid.trapezoid_weights())


def _pairwise(values: np.ndarray) -> np.ndarray:
    if values.shape[0] < 2:
        return np.zeros((values.shape[0], values.shape[0]))
    return squareform(pdist(values))


def pairwise_l2(curves: CurveSet) -> np.ndarray:
    """n x n matrix of trapezoid-rule L2 distances between curves."""
    return _pairwise(_weighted(curves))


def bandwidth_15pct(dist: np.ndarray, percentile: float = 15.0) -> float:
    """Percentile (linear interpolation) of the pairwise distances with i < j."""
    iu = np.triu_indices(dist.shape[0], k=1)
    pooled = dist[iu]
    h = float(np.percentile(pooled, percentile)) if pooled.size else 0.0
    if h <= 0:
        warnings.warn(
            "pairwise distances are degenerate; using a machine-epsilon bandwidth",
            DegenerateDistances,
            stacklevel=2,
        )
        h = float(np.finfo(float).eps) * max(1.0, float(pooled.max()) if pooled.size else 1.0)
    return h


def h_modal_depth(dist: np.ndarray, h: float) -> np.ndarray:
    """Average Gaussian kernel G(d/h) = exp(-(d/h)^2 / 2) over all curves, self included."""
    return np.mean(np.exp(-0.5 * (np.asarray(dist) / h) ** 2), axis=1)


def bootstrap_threshold(
    res: CurveSet,
    cfg: Optional[DepthConfig] = None,
    h: Optional[float] = None,
    depths: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray]:
    """Smoothed-bootstrap estimate of the depth threshold C.

    Each replicate resamples n curves from those strictly above the delta
    quantile of the depths, perturbs them with Gaussian noise of covariance
    ``gamma`` times the resampled covariance, and records the delta
    percentile of the depths within the replicate (computed with the
    original bandwidth).  C is the median over replicates.
    """
    cfg = cfg or DepthConfig()
    W = _weighted(res)
    n = W.shape[0]
    if h is None or depths is None:
        dist = _pairwise(W)
        h = bandwidth_15pct(dist, cfg.bandwidth_percentile) if h is None else h
        depths = h_modal_depth(dist, h) if depths is None else depths
    cut = np.quantile(depths, cfg.delta)
    keep = depths > cut
    if not keep.any():
        # All depths tie at the cut (e.g. identical curves): keep everything.
        keep = depths >= cut
    pool = W[keep]
    if pool.shape[0] < 10:
        warnings.warn(
            f"only {pool.shape[0]} curves in the bootstrap pool", SmallTrimmedSet, stacklevel=2
        )
    per_boot = np.empty(cfg.n_boot)
    for b in range(cfg.n_boot):
        rng = np.random.default_rng(derive_seed(cfg.seed, "boot", b))
        Xb = pool[rng.integers(0, pool.shape[0], n)]
        if cfg.smoothing_gamma > 0 and n > 1:
            Xc = Xb - Xb.mean(axis=0)
            G = rng.standard_normal((n, n))
            Xb = Xb + np.sqrt(cfg.smoothing_gamma / (n - 1)) * (G @ Xc)
        d_b = h_modal_depth(_pairwise(Xb), h)
        per_boot[b] = np.percentile(d_b, 100 * cfg.delta)
    return float(np.median(per_boot)), per_boot


def depth_report(curves: CurveSet, cfg: Optional[DepthConfig] = None) -> DepthReport:
    """Bandwidth, depths, bootstrap threshold and flags for a set of curves."""
    cfg = cfg or DepthConfig()
    dist = pairwise_l2(curves)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateDistances)
        h = bandwidth_15pct(dist, cfg.bandwidth_percentile)
    degenerate = any(issubclass(w.category, DegenerateDistances) for w in caught)
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    depths = h_modal_depth(dist, h)
    C, per_boot = bootstrap_threshold(curves, cfg, h=h, depths=depths)
    flags = depths < C
    return DepthReport(curves.ids, depths, h, C, flags, per_boot, degenerate)


def detect(model, X: CurveSet, Y: CurveSet, cfg: Optional[DepthConfig] = None) -> DepthReport:
    """Flag samples whose residual curve under ``model`` has depth below the threshold."""
    from .model_select import residual_curves

    return depth_report(residual_curves(model, X, Y), cfg)


def residual_depths(curves: CurveSet, percentile: float = 15.0) -> np.ndarray:
    """Depths only (no threshold); used where a ranking suffices, e.g. ROC analysis."""
    dist = pairwise_l2(curves)
    return h_modal_depth(dist, bandwidth_15pct(dist, percentile))


def roc_auc(depths, truth) -> tuple[np.ndarray, np.ndarray, float]:
    """ROC points and AUC for flagging low depth as outlying.

    Returns ``(fpr, tpr, auc)``; the AUC is the Mann-Whitney statistic with
    tied depths counted one half, which equals the trapezoid area under the
    returned curve.  NaN when either class is empty.
    """
    depths = np.asarray(depths, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.array([0.0, 1.0]), np.array([0.0, 1.0]), float("nan")
    thresholds = np.unique(depths)
    tpr = np.array([0.0] + [np.sum(truth & (depths <= c)) / n_pos for c in thresholds])
    fpr = np.array([0.0] + [np.sum(~truth & (depths <= c)) / n_neg for c in thresholds])
    ranks = rankdata(-depths)
    auc = (ranks[truth].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
    return fpr, tpr, float(auc)
