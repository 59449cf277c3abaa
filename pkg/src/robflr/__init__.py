"""Robust function-on-function linear regression with outlier detection."""

__version__ = "0.1.0"

from .benchmark import BenchmarkConfig, run_benchmark
from .curve_core import (
    BasisExpansion,
    BSplineBasis,
    Curve,
    CurveSet,
    GramFactor,
    TimeGrid,
    build_bspline_basis,
    center_classical,
    center_robust,
    eval_basis,
    fit_expansion,
    gram_factor,
    inner_product,
)
from .fpca import FpcaModel, RobustPpConfig, fit_fpca, kmax_by_variance, project_scores, reconstruct
from .model_select import FlrModel, SelectConfig, fit_grid, predict_curves, residual_curves, select_model
from .outlier import DepthConfig, DepthReport, depth_report, detect, roc_auc
from .regression import MltsConfig, RegressionFit, fit_mlts, fit_ols
from .simgen import ScenarioConfig, SimulatedDataset, fitting_error, simulate

__all__ = [
    "BasisExpansion",
    "BenchmarkConfig",
    "BSplineBasis",
    "Curve",
    "CurveSet",
    "DepthConfig",
    "DepthReport",
    "FlrModel",
    "FpcaModel",
    "GramFactor",
    "MltsConfig",
    "RegressionFit",
    "RobustPpConfig",
    "ScenarioConfig",
    "SelectConfig",
    "SimulatedDataset",
    "TimeGrid",
    "build_bspline_basis",
    "center_classical",
    "center_robust",
    "depth_report",
    "detect",
    "eval_basis",
    "fit_expansion",
    "fit_fpca",
    "fit_grid",
    "fit_mlts",
    "fit_ols",
    "fitting_error",
    "gram_factor",
    "inner_product",
    "kmax_by_variance",
    "predict_curves",
    "project_scores",
    "reconstruct",
    "residual_curves",
    "roc_auc",
    "run_benchmark",
    "select_model",
    "simulate",
]
