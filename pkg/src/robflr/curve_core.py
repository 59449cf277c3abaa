"""Time grids, cubic B-spline representations and L2 geometry of curves.

Curves are stored as values on a shared, equally spaced grid.  Every
functional computation goes through a clamped B-spline basis: curves are
least-squares fitted to spline coefficients, and inner products between
curves are evaluated exactly through the basis Gram matrix
``G[j, k] = int phi_j(t) phi_k(t) dt``.  With the Cholesky factor
``G = R^T R``, mapping coefficient rows ``c -> R c`` turns the L2 inner
product into a plain Euclidean dot product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

from .errors import (
    BadDomain,
    BadGrid,
    DimensionMismatch,
    NonConvergence,
    OutOfDomain,
    SingularDesign,
    TooFewBasis,
    Underdetermined,
)

_SPACING_RTOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing, equally spaced observation times."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise BadGrid("a time grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise BadGrid("time grid contains non-finite values")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise BadGrid("time grid must be strictly increasing")
        h = (pts[-1] - pts[0]) / (pts.size - 1)
        if np.max(np.abs(steps - h)) > _SPACING_RTOL * h:
            raise BadGrid("time grid is not equally spaced")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, t_min: float, t_max: float, size: int) -> "TimeGrid":
        return cls(np.linspace(t_min, t_max, size))

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights such that ``w @ f`` is the trapezoid integral of f."""
        h = (self.points[-1] - self.points[0]) / (self.size - 1)
        w = np.full(self.size, h)
        w[0] = w[-1] = h / 2
        return w

    def same_as(self, other: "TimeGrid") -> bool:
        return self.size == other.size and np.allclose(
            self.points, other.points, rtol=0, atol=1e-12 * max(1.0, abs(self.points).max())
        )


@dataclass(frozen=True)
class Curve:
    """A single curve sampled on a grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size != self.grid.size:
            raise DimensionMismatch(
                f"curve has {vals.size} values but grid has {self.grid.size} points"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve contains non-finite values")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class CurveSet:
    """n curves observed on a shared grid, one sample per row."""

    grid: TimeGrid
    samples: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if samples.shape[0] < 1:
            raise ValueError("a curve set needs at least one sample")
        if samples.shape[1] != self.grid.size:
            raise DimensionMismatch(
                f"samples have {samples.shape[1]} columns but grid has {self.grid.size} points"
            )
        if not np.all(np.isfinite(samples)):
            bad = int(np.argwhere(~np.isfinite(samples))[0, 0])
            raise ValueError(f"sample row {bad} contains non-finite values")
        ids = tuple(self.ids) if len(self.ids) else tuple(str(i) for i in range(samples.shape[0]))
        if len(ids) != samples.shape[0]:
            raise DimensionMismatch("number of ids does not match number of samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Curve:
        return Curve(self.grid, self.samples[i])

    def subset(self, index) -> "CurveSet":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return CurveSet(self.grid, self.samples[index], tuple(self.ids[i] for i in index))


@dataclass(frozen=True)
class BSplineBasis:
    """Clamped B-spline basis with uniformly spaced interior knots."""

    degree: int
    num_basis: int
    knots: np.ndarray
    domain: tuple[float, float]

    def __call__(self, t) -> np.ndarray:
        return eval_basis(self, t)

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[self.degree + 1 : -(self.degree + 1)]


def build_bspline_basis(domain: Sequence[float], num_basis: int, degree: int = 3) -> BSplineBasis:
    """Clamped basis of ``num_basis`` splines of the given degree on ``domain``."""
    t_min, t_max = float(domain[0]), float(domain[1])
    if not (np.isfinite(t_min) and np.isfinite(t_max)) or t_min >= t_max:
        raise BadDomain(f"degenerate domain [{t_min}, {t_max}]")
    if degree < 0:
        raise TooFewBasis("degree must be non-negative")
    if num_basis < degree + 1:
        raise TooFewBasis(f"num_basis={num_basis} < degree+1={degree + 1}")
    n_interior = num_basis - degree - 1
    breaks = np.linspace(t_min, t_max, n_interior + 2)
    knots = np.concatenate([np.full(degree, t_min), breaks, np.full(degree, t_max)])
    knots.setflags(write=False)
    return BSplineBasis(degree, int(num_basis), knots, (t_min, t_max))


def eval_basis(basis: BSplineBasis, grid) -> np.ndarray:
    """Collocation matrix: row i holds every basis function evaluated at t_i."""
    t = grid.points if isinstance(grid, TimeGrid) else np.atleast_1d(np.asarray(grid, dtype=float))
    lo, hi = basis.domain
    span = hi - lo
    if np.any(t < lo - 1e-12 * span) or np.any(t > hi + 1e-12 * span):
        raise OutOfDomain(f"evaluation points outside basis domain [{lo}, {hi}]")
    t = np.clip(t, lo, hi)
    return BSpline.design_matrix(t, basis.knots, basis.degree).toarray()


@dataclass(frozen=True)
class BasisExpansion:
    """Spline coefficients of n curves (one row per curve)."""

    basis: BSplineBasis
    coefs: np.ndarray
    rms: Optional[np.ndarray] = None

    def __post_init__(self):
        coefs = np.atleast_2d(np.asarray(self.coefs, dtype=float))
        if coefs.shape[1] != self.basis.num_basis:
            raise DimensionMismatch(
                f"expansion has {coefs.shape[1]} coefficients, basis has {self.basis.num_basis}"
            )
        if not np.all(np.isfinite(coefs)):
            raise ValueError("expansion coefficients must be finite")
        object.__setattr__(self, "coefs", coefs)

    @property
    def n(self) -> int:
        return self.coefs.shape[0]

    def with_coefs(self, coefs: np.ndarray) -> "BasisExpansion":
        return BasisExpansion(self.basis, coefs)

    def evaluate(self, grid) -> np.ndarray:
        """Values of every curve on ``grid`` as an n x T matrix."""
        return self.coefs @ eval_basis(self.basis, grid).T


def fit_expansion(curves: CurveSet, basis: BSplineBasis) -> BasisExpansion:
    """Least-squares spline coefficients for every curve, via QR of the collocation matrix."""
    A = eval_basis(basis, curves.grid)
    T, p = A.shape
    if T < p:
        raise Underdetermined(f"{T} grid points cannot determine {p} spline coefficients")
    Q, R = linalg.qr(A, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * diag.max():
        raise SingularDesign("collocation matrix is rank deficient")
    coefs = linalg.solve_triangular(R, Q.T @ curves.samples.T).T
    resid = curves.samples - coefs @ A.T
    rms = np.sqrt(np.mean(resid**2, axis=1))
    return BasisExpansion(basis, coefs, rms)


@dataclass(frozen=True)
class GramFactor:
    """Gram matrix of a basis and its upper Cholesky factor (G = R^T R)."""

    gram: np.ndarray
    chol: np.ndarray


def gram_factor(basis: BSplineBasis) -> GramFactor:
    """Exact Gram matrix by per-span Gauss-Legendre quadrature of order degree+1."""
    nodes, weights = np.polynomial.legendre.leggauss(basis.degree + 1)
    breaks = np.unique(basis.knots)
    a, b = breaks[:-1], breaks[1:]
    half = (b - a)[:, None] / 2
    x = ((a + b)[:, None] / 2 + half * nodes[None, :]).ravel()
    w = (half * weights[None, :]).ravel()
    Phi = eval_basis(basis, x)
    G = Phi.T @ (w[:, None] * Phi)
    G = (G + G.T) / 2
    R = linalg.cholesky(G, lower=False)
    return GramFactor(G, R)


def inner_product(a, b, gf: GramFactor) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = gf.gram.shape[0]
    if a.shape != (p,) or b.shape != (p,):
        raise DimensionMismatch(f"coefficient vectors must have length {p}")
    return float(a @ gf.gram @ b)


def to_orthonormal_coords(exp, gf: GramFactor) -> np.ndarray:
    """Rows c -> R c; Euclidean geometry of the result is the L2 geometry of the curves."""
    C = exp.coefs if isinstance(exp, BasisExpansion) else np.atleast_2d(np.asarray(exp, dtype=float))
    if C.shape[1] != gf.chol.shape[0]:
        raise DimensionMismatch("coefficient width does not match Gram factor")
    return C @ gf.chol.T


def from_orthonormal_coords(coords, gf: GramFactor) -> np.ndarray:
    """Inverse of :func:`to_orthonormal_coords`; returns spline coefficient rows."""
    Cp = np.atleast_2d(np.asarray(coords, dtype=float))
    if Cp.shape[1] != gf.chol.shape[0]:
        raise DimensionMismatch("coordinate width does not match Gram factor")
    return linalg.solve_triangular(gf.chol, Cp.T, lower=False).T


def center_classical(exp: BasisExpansion) -> tuple[np.ndarray, BasisExpansion]:
    mean = exp.coefs.mean(axis=0)
    return mean, exp.with_coefs(exp.coefs - mean)


def spatial_median(X, tol: float = 1e-9, max_iter: int = 500) -> tuple[np.ndarray, int, bool]:
    """Geometric median of the rows of X by the Vardi-Zhang modified Weiszfeld iteration.

    Returns ``(center, n_iter, converged)``.  Iteration starts at the
    coordinatewise median and stops once the step is below ``tol`` relative
    to the data scale.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.median(X, axis=0)
    scale = max(np.max(np.abs(X - y)), np.finfo(float).tiny)
    eps = 1e-12 * scale
    for it in range(1, max_iter + 1):
        diff = X - y
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        away = d > eps
        if not np.any(away):
            return y, it, True
        inv = 1.0 / d[away]
        T = (inv @ X[away]) / inv.sum()
        n_at = np.count_nonzero(~away)
        if n_at:
            R = inv @ diff[away]
            r = np.sqrt(R @ R)
            gamma = min(1.0, n_at / r) if r > 0 else 1.0
            y_new = (1 - gamma) * T + gamma * y
        else:
            y_new = T
        step = np.sqrt(np.sum((y_new - y) ** 2))
        y = y_new
        if step <= tol * scale:
            return y, it, True
    return y, max_iter, False


def center_robust(
    exp: BasisExpansion, gf: Optional[GramFactor] = None, tol: float = 1e-9, max_iter: int = 500
) -> tuple[np.ndarray, BasisExpansion]:
    """Spatial-median center of the coefficient rows.

    With a Gram factor the median is taken in orthonormal coordinates, i.e.
    it minimises the summed L2 distances between curves.  One-dimensional
    coefficients reduce to the ordinary median.
    """
    C = exp.coefs
    if C.shape[1] == 1:
        center = np.median(C, axis=0)
        return center, exp.with_coefs(C - center)
    Y = to_orthonormal_coords(exp, gf) if gf is not None else C
    med, n_iter, ok = spatial_median(Y, tol=tol, max_iter=max_iter)
    if not ok:
        warnings.warn(
            f"spatial median did not converge in {n_iter} iterations; "
            "using the coordinatewise median",
            NonConvergence,
            stacklevel=2,
        )
        med = np.median(Y, axis=0)
    center = from_orthonormal_coords(med, gf)[0] if gf is not None else med
    return center, exp.with_coefs(C - center)
