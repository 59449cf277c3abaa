"""Score-space multivariate regression ``w_i = z_i B + q_i``.

:func:`fit_mlts` minimises the trimmed Frobenius objective
``sum_{i in S} ||w_i - z_i B||^2`` over subsets of size r with random
elemental starts and concentration steps, vectorised across starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .curve_core import eval_basis
from .errors import DimensionMismatch, Infeasible, SingularDesign


@dataclass(frozen=True)
class RegressionFit:
    B: np.ndarray
    subset: np.ndarray
    v: float
    alpha: float
    objective: float
    n_degenerate: int = 0
    trace: tuple = field(default=(), repr=False)

    @property
    def r(self) -> int:
        return self.subset.size


@dataclass(frozen=True)
class MltsConfig:
    alpha: float = 0.8
    n_starts: int = 500
    keep_best: int = 10
    max_csteps: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0.5, 1], got {self.alpha}")
        if self.n_starts < 1 or self.keep_best < 1:
            raise ValueError("n_starts and keep_best must be positive")


def retained_size(alpha: float, n: int) -> int:
    """r = [alpha n], rounded half up."""
    return int(np.floor(alpha * n + 0.5))


def consistency_factor(alpha: float) -> float:
    """Gaussian correction for a variance computed from the alpha fraction of smallest residuals."""
    if alpha >= 1:
        return 1.0
    q = stats.chi2.ppf(alpha, 1)
    return float(alpha / stats.chi2.cdf(q, 3))


def _check(Z, W):
    Z = np.asarray(Z, dtype=float)
    W = np.asarray(W, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if W.ndim == 1:
        W = W[:, None]
    if Z.shape[0] != W.shape[0]:
        raise DimensionMismatch(f"Z has {Z.shape[0]} rows, W has {W.shape[0]}")
    return Z, W


def _lstsq(Z, W):
    B, _, rank, _ = np.linalg.lstsq(Z, W, rcond=None)
    if rank < Z.shape[1]:
        raise SingularDesign(f"design has rank {rank} < {Z.shape[1]}")
    return B


def _objective(Z, W, B, subset) -> float:
    R = W[subset] - Z[subset] @ B
    return float(np.sum(R * R))


def trimmed_scale(residuals: np.ndarray, subset, alpha: float) -> float:
    """sqrt(kappa(alpha) * mean squared residual entry over ``subset``)."""
    R = np.atleast_2d(residuals)[subset]
    v2 = consistency_factor(alpha) * np.sum(R * R) / R.size
    return float(np.sqrt(v2))


def estimate_scale(Z, W, fit: RegressionFit) -> float:
    Z, W = _check(Z, W)
    v = trimmed_scale(W - Z @ fit.B, fit.subset, fit.alpha)
    return v if v > 0 else float(np.finfo(float).tiny)


def _make_fit(Z, W, B, subset, alpha, n_degenerate=0, trace=()):
    subset = np.sort(np.asarray(subset, dtype=int))
    obj = _objective(Z, W, B, subset)
    v = trimmed_scale(W - Z @ B, subset, alpha)
    v = v if v > 0 else float(np.finfo(float).tiny)
    return RegressionFit(B, subset, v, alpha, obj, n_degenerate, trace)


def fit_ols(Z, W) -> RegressionFit:
    """Least squares on all samples."""
    Z, W = _check(Z, W)
    n, M = Z.shape
    if n <= M:
        raise SingularDesign(f"n={n} samples cannot identify {M} predictors")
    B = _lstsq(Z, W)
    return _make_fit(Z, W, B, np.arange(n), 1.0)


def _batched_ls(Zs, Ws):
    G = np.einsum("sim,sik->smk", Zs, Zs)
    rhs = np.einsum("sim,sik->smk", Zs, Ws)
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(Zs) @ Ws


def _cstep(Z, W, B, r):
    """One concentration step for every start: rank residuals, keep r smallest, refit."""
    R = W[None] - Z[None] @ B
    d = np.einsum("snk,snk->sn", R, R)
    idx = np.sort(np.argsort(d, axis=1, kind="stable")[:, :r], axis=1)
    Zs, Ws = Z[idx], W[idx]
    B_new = _batched_ls(Zs, Ws)
    Rs = Ws - Zs @ B_new
    obj = np.einsum("sik,sik->s", Rs, Rs)
    return idx, B_new, obj


def _elemental_starts(Z, W, n_starts, rng, max_redraw=10):
    n, M = Z.shape
    h = M + 1
    idx = np.argsort(rng.random((n_starts, n)), axis=1)[:, :h]
    n_degenerate = 0
    for _ in range(max_redraw):
        sv = np.linalg.svd(Z[idx], compute_uv=False)
        bad = sv[:, -1] <= 1e-10 * np.maximum(sv[:, 0], np.finfo(float).tiny)
        if not np.any(bad):
            break
        n_degenerate += int(bad.sum())
        idx[bad] = np.argsort(rng.random((int(bad.sum()), n)), axis=1)[:, :h]
    else:
        sv = np.linalg.svd(Z[idx], compute_uv=False)
        bad = sv[:, -1] <= 1e-10 * np.maximum(sv[:, 0], np.finfo(float).tiny)
        idx = idx[~bad]
        if idx.shape[0] == 0:
            raise SingularDesign("no non-degenerate elemental subset found")
    return _batched_ls(Z[idx], W[idx]), n_degenerate


def fit_mlts(Z, W, cfg: Optional[MltsConfig] = None, record_trace: bool = False) -> RegressionFit:
    """Multivariate least trimmed squares by random elemental starts and C-steps.

    Every start gets two C-steps; the ``keep_best`` best are iterated until
    their subset stops changing (or ``max_csteps``).  The lowest objective
    wins, ties going to the lexicographically smallest subset.
    """
    cfg = cfg or MltsConfig()
    Z, W = _check(Z, W)
    n, M = Z.shape
    r = retained_size(cfg.alpha, n)
    if r <= M:
        raise Infeasible(f"retained size r={r} must exceed the number of predictors M={M}")
    if r >= n:
        fit = fit_ols(Z, W)
        return RegressionFit(fit.B, fit.subset, fit.v, cfg.alpha, fit.objective)

    rng = np.random.default_rng(cfg.seed)
    B, n_degenerate = _elemental_starts(Z, W, cfg.n_starts, rng)
    traces = ()
    idx, B, obj = _cstep(Z, W, B, r)
    history = [obj]
    idx, B, obj = _cstep(Z, W, B, r)
    history.append(obj)

    keep = np.argsort(obj, kind="stable")[: cfg.keep_best]
    idx, B, obj = idx[keep], B[keep], obj[keep]
    trace = [[h[k] for h in history] for k in keep]
    active = np.ones(keep.size, dtype=bool)
    for _ in range(cfg.max_csteps - 2):
        if not np.any(active):
            break
        a = np.flatnonzero(active)
        idx_new, B_new, obj_new = _cstep(Z, W, B[a], r)
        for j, k in enumerate(a):
            trace[k].append(float(obj_new[j]))
        changed = np.any(idx_new != idx[a], axis=1)
        idx[a], B[a], obj[a] = idx_new, B_new, obj_new
        active[a[~changed]] = False
    if record_trace:
        traces = tuple(tuple(float(x) for x in t) for t in trace)

    best = float(obj.min())
    tied = np.flatnonzero(obj <= best + 1e-10 * max(1.0, abs(best)))
    chosen = min(tied, key=lambda k: tuple(idx[k]))
    subset = idx[chosen]
    B_final = _lstsq(Z[subset], W[subset])
    return _make_fit(Z, W, B_final, subset, cfg.alpha, n_degenerate, traces)


def predict_scores(Z, B) -> np.ndarray:
    return np.asarray(Z, dtype=float) @ np.asarray(B, dtype=float)


def residual_scores(W, Z, B) -> np.ndarray:
    return np.asarray(W, dtype=float) - predict_scores(Z, B)


@dataclass(frozen=True)
class BetaSurface:
    """beta(s, t) = phi_x(s)^T B phi_y(t) for fitted eigenfunctions."""

    fpca_x: object
    fpca_y: object
    B: np.ndarray

    def grid(self, s, t) -> np.ndarray:
        M, K = self.B.shape
        Px = eval_basis(self.fpca_x.basis, s) @ self.fpca_x.eigen_coefs[:M].T
        Py = eval_basis(self.fpca_y.basis, t) @ self.fpca_y.eigen_coefs[:K].T
        return Px @ self.B @ Py.T

    def __call__(self, s, t):
        return self.grid(np.atleast_1d(s), np.atleast_1d(t))


def beta_surface(fpca_x, fpca_y, B) -> BetaSurface:
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] > fpca_x.q or B.shape[1] > fpca_y.q:
        raise DimensionMismatch("B is larger than the available eigenfunctions")
    return BetaSurface(fpca_x, fpca_y, B)
