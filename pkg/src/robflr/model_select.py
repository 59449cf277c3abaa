"""Curve-level likelihood, BIC / RBIC scoring and the (M, K) grid search."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from ._seeding import derive_seed
from .curve_core import (
    CurveSet,
    TimeGrid,
    build_bspline_basis,
    eval_basis,
    fit_expansion,
    gram_factor,
)
from .errors import (
    BadSubsetSize,
    DimensionMismatch,
    NonPositiveScale,
    RankDeficient,
    RobflrError,
)
from .fpca import FpcaModel, RobustPpConfig, fit_fpca, kmax_by_variance, project_scores
from .regression import (
    MltsConfig,
    beta_surface,
    RegressionFit,
    consistency_factor,
    fit_mlts,
    fit_ols,
    retained_size,
)

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class CriterionScore:
    m: int
    k: int
    deviance: float
    penalty: float
    total: float
    v: float = float("nan")


def n_params(m: int, k: int) -> int:
    return m * k + 1


def _as_array(Y):
    return Y.samples if isinstance(Y, CurveSet) else np.atleast_2d(np.asarray(Y, dtype=float))


def _sq_norms(Yobs, Yhat) -> np.ndarray:
    A, B = _as_array(Yobs), _as_array(Yhat)
    if A.shape != B.shape:
        raise DimensionMismatch(f"observed {A.shape} and fitted {B.shape} curves differ in shape")
    R = A - B
    return np.einsum("ij,ij->i", R, R)


def curve_deviance(Yobs, Yhat, v: float) -> np.ndarray:
    """-2 log Gaussian density of each observed curve vector given its prediction."""
    if not v > 0:
        raise NonPositiveScale(f"noise scale must be positive, got {v}")
    sq = _sq_norms(Yobs, Yhat)
    T = _as_array(Yobs).shape[1]
    return sq / v**2 + T * LOG_2PI + 2 * T * math.log(v)


def trimmed_deviance(Yobs, Yhat, v: float, r: int) -> tuple[np.ndarray, float]:
    """Deviance summed over the r best-fitted curves, and that index set."""
    sq = _sq_norms(Yobs, Yhat)
    n = sq.size
    if not 1 <= r <= n:
        raise BadSubsetSize(f"r={r} outside [1, {n}]")
    if not v > 0:
        raise NonPositiveScale(f"noise scale must be positive, got {v}")
    T = _as_array(Yobs).shape[1]
    S = np.sort(np.argsort(sq, kind="stable")[:r])
    value = float(np.sum(sq[S]) / v**2 + r * T * LOG_2PI + 2 * r * T * math.log(v))
    return S, value


def _positive(v: float) -> float:
    return v if v > 0 else float(np.finfo(float).tiny)


def bic(Yobs, Yhat, m: int, k: int, v: Optional[float] = None) -> CriterionScore:
    """-2 log-likelihood over all curves plus (mk + 1) log n.

    ``v`` defaults to its maximum-likelihood value, the RMS residual per
    grid point.
    """
    sq = _sq_norms(Yobs, Yhat)
    n, T = _as_array(Yobs).shape
    if v is None:
        v = _positive(math.sqrt(sq.sum() / (n * T)))
    dev = float(np.sum(curve_deviance(Yobs, Yhat, v)))
    pen = n_params(m, k) * math.log(n)
    return CriterionScore(m, k, dev, pen, dev + pen, v)


def rbic(
    Yobs, Yhat, m: int, k: int, r: int, alpha: Optional[float] = None, v: Optional[float] = None
) -> CriterionScore:
    """Trimmed deviance over the r best-fitted curves plus (mk + 1) log r.

    Without ``v`` the scale is re-estimated from those r curves with the
    Gaussian trimming correction for ``alpha`` (default r / n).
    """
    sq = _sq_norms(Yobs, Yhat)
    n, T = _as_array(Yobs).shape
    if not 1 <= r <= n:
        raise BadSubsetSize(f"r={r} outside [1, {n}]")
    if v is None:
        alpha = r / n if alpha is None else alpha
        S = np.argsort(sq, kind="stable")[:r]
        v = _positive(math.sqrt(consistency_factor(alpha) * sq[S].sum() / (r * T)))
    _, dev = trimmed_deviance(Yobs, Yhat, v, r)
    pen = n_params(m, k) * math.log(r)
    return CriterionScore(m, k, dev, pen, dev + pen, v)


@dataclass(frozen=True)
class SelectConfig:
    """Settings of one model-selection run.

    ``alpha`` is the retained fraction; the classical method always uses 1.
    ``criterion`` defaults to BIC for classical and RBIC for robust fits.
    ``num_basis`` defaults to min(200, T // 2) for each side's grid.
    """

    method: Literal["classical", "robust"] = "robust"
    criterion: Optional[Literal["bic", "rbic"]] = None
    alpha: float = 0.8
    num_basis: Optional[int] = None
    degree: int = 3
    m_cap: int = 10
    k_cap: int = 10
    variance_threshold: float = 0.9999
    scale: Literal["mad", "qn"] = "mad"
    refine_sweeps: int = 2
    n_starts: int = 500
    keep_best: int = 10
    max_csteps: int = 100
    seed: int = 0

    @property
    def resolved_criterion(self) -> str:
        if self.criterion is not None:
            return self.criterion
        return "bic" if self.method == "classical" else "rbic"

    @property
    def resolved_alpha(self) -> float:
        return 1.0 if self.method == "classical" else self.alpha


@dataclass(frozen=True)
class FlrModel:
    fpca_x: FpcaModel
    fpca_y: FpcaModel
    grid_x: TimeGrid
    grid_y: TimeGrid
    M: int
    K: int
    B: np.ndarray
    v: float
    alpha: float
    method: str
    criterion: str
    criterion_table: dict = field(default_factory=dict)
    subset: Optional[np.ndarray] = None

    def beta(self):
        return beta_surface(self.fpca_x, self.fpca_y, self.B)


@dataclass
class CellResult:
    fit: Optional[RegressionFit]
    scores: dict
    error: Optional[str] = None


@dataclass
class GridResult:
    """Every (M, K) fit of one selection run, scored by both criteria."""

    fpca_x: FpcaModel
    fpca_y: FpcaModel
    grid_x: TimeGrid
    grid_y: TimeGrid
    cells: dict
    method: str
    alpha: float
    m_max: int
    k_max: int

    def table(self, criterion: str) -> dict:
        return {
            mk: (cell.scores[criterion].total if cell.fit is not None else math.inf)
            for mk, cell in self.cells.items()
        }

    def best_cell(self, criterion: str) -> tuple[int, int]:
        return argmin_cell(self.table(criterion))

    def select(self, criterion: str) -> FlrModel:
        M, K = self.best_cell(criterion)
        cell = self.cells[(M, K)]
        return FlrModel(
            self.fpca_x,
            self.fpca_y,
            self.grid_x,
            self.grid_y,
            M,
            K,
            cell.fit.B,
            cell.scores[criterion].v,
            self.alpha,
            self.method,
            criterion,
            {mk: self.cells[mk].scores.get(criterion) for mk in self.cells},
            cell.fit.subset,
        )


def argmin_cell(table: dict, tol: float = 1e-9) -> tuple[int, int]:
    """Smallest total; near-ties go to the smallest M + K, then the smallest M."""
    finite = {mk: s for mk, s in table.items() if math.isfinite(s)}
    if not finite:
        raise RobflrError("every grid cell failed to fit")
    best = min(finite.values())
    tied = [mk for mk, s in finite.items() if s <= best + tol * max(1.0, abs(best))]
    return min(tied, key=lambda mk: (mk[0] + mk[1], mk[0]))


def _fit_side(curves: CurveSet, cfg: SelectConfig):
    num_basis = cfg.num_basis if cfg.num_basis is not None else min(200, curves.grid.size // 2)
    basis = build_bspline_basis(curves.grid.domain, num_basis, cfg.degree)
    gf = gram_factor(basis)
    exp = fit_expansion(curves, basis)
    q = min(curves.n - 1, basis.num_basis, 2 * max(cfg.m_cap, cfg.k_cap))
    pp = RobustPpConfig(scale=cfg.scale, num_components=q, refine_sweeps=cfg.refine_sweeps)
    # q deliberately over-asks; kmax_by_variance drops the zero-variance tail.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficient)
        model = fit_fpca(exp, gf, q, cfg.method, pp)
    return model, exp


def eigenfunctions_on(model: FpcaModel, grid: TimeGrid, k: int) -> np.ndarray:
    """k x T matrix of the leading eigenfunctions evaluated on ``grid``."""
    return model.eigen_coefs[:k] @ eval_basis(model.basis, grid).T


def mean_on(model: FpcaModel, grid: TimeGrid) -> np.ndarray:
    return eval_basis(model.basis, grid) @ model.mean_coefs


def fit_grid(X: CurveSet, Y: CurveSet, cfg: Optional[SelectConfig] = None) -> GridResult:
    """Fit FPCA on both sides, then regress and score every (M, K) cell."""
    cfg = cfg or SelectConfig()
    if X.n != Y.n:
        raise DimensionMismatch(f"{X.n} predictor curves but {Y.n} response curves")
    fpca_x, exp_x = _fit_side(X, cfg)
    fpca_y, exp_y = _fit_side(Y, cfg)
    m_max = kmax_by_variance(fpca_x, cfg.variance_threshold, cfg.m_cap)
    k_max = kmax_by_variance(fpca_y, cfg.variance_threshold, cfg.k_cap)
    Zf = project_scores(fpca_x, exp_x, m_max)
    Wf = project_scores(fpca_y, exp_y, k_max)
    mu_y = mean_on(fpca_y, Y.grid)
    phi_y = eigenfunctions_on(fpca_y, Y.grid, k_max)
    alpha = cfg.resolved_alpha
    n = X.n
    r = retained_size(alpha, n)
    cells = {}
    first_error = None
    for M in range(1, m_max + 1):
        for K in range(1, k_max + 1):
            Z, W = Zf[:, :M], Wf[:, :K]
            try:
                if cfg.method == "classical":
                    fit = fit_ols(Z, W)
                else:
                    mcfg = MltsConfig(
                        alpha,
                        cfg.n_starts,
                        cfg.keep_best,
                        cfg.max_csteps,
                        derive_seed(cfg.seed, "mlts", M, K),
                    )
                    fit = fit_mlts(Z, W, mcfg)
            except RobflrError as exc:
                first_error = first_error or exc
                cells[(M, K)] = CellResult(None, {}, str(exc))
                continue
            Yhat = mu_y + (Z @ fit.B) @ phi_y[:K]
            scores = {
                "bic": bic(Y, Yhat, M, K),
                "rbic": rbic(Y, Yhat, M, K, r, alpha=alpha),
            }
            cells[(M, K)] = CellResult(fit, scores)
    if all(c.fit is None for c in cells.values()):
        raise first_error
    return GridResult(fpca_x, fpca_y, X.grid, Y.grid, cells, cfg.method, alpha, m_max, k_max)


def select_model(X: CurveSet, Y: CurveSet, cfg: Optional[SelectConfig] = None) -> FlrModel:
    """Fit the grid and return the criterion-minimising model."""
    cfg = cfg or SelectConfig()
    return fit_grid(X, Y, cfg).select(cfg.resolved_criterion)


def _x_scores(model: FlrModel, X: CurveSet) -> np.ndarray:
    exp = fit_expansion(X, model.fpca_x.basis)
    return project_scores(model.fpca_x, exp, model.M)


def predict_curves(model: FlrModel, X: CurveSet) -> CurveSet:
    """Predicted responses on the model's response grid."""
    Z = _x_scores(model, X)
    Yhat = mean_on(model.fpca_y, model.grid_y) + (Z @ model.B) @ eigenfunctions_on(
        model.fpca_y, model.grid_y, model.K
    )
    return CurveSet(model.grid_y, Yhat, X.ids)


def residual_curves(model: FlrModel, X: CurveSet, Y: CurveSet) -> CurveSet:
    if not Y.grid.same_as(model.grid_y):
        raise DimensionMismatch("response curves are not on the model's response grid")
    pred = predict_curves(model, X)
    return CurveSet(Y.grid, Y.samples - pred.samples, Y.ids)
