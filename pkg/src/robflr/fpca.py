"""Classical and projection-pursuit functional PCA on spline coefficients.

Both estimators work in orthonormal coordinates (see
:func:`robflr.curve_core.to_orthonormal_coords`), so principal directions
found there map back to L2-orthonormal eigenfunctions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .curve_core import (
    BasisExpansion,
    BSplineBasis,
    GramFactor,
    center_classical,
    center_robust,
    from_orthonormal_coords,
    to_orthonormal_coords,
)
from .errors import DegenerateData, DimensionMismatch, RankDeficient, TooManyComponents

MAD_FACTOR = 1.4826
QN_FACTOR = 2.2219
BIWEIGHT_C = 4.685


@dataclass(frozen=True)
class FpcaModel:
    """Mean function and eigenfunctions, both as spline coefficients.

    ``eigen_coefs[k]`` holds the coefficients of the k-th eigenfunction and
    ``eigenvalues`` are in variance units (squared robust scale for the
    robust fit).
    """

    basis: BSplineBasis
    gf: GramFactor
    mean_coefs: np.ndarray
    eigen_coefs: np.ndarray
    eigenvalues: np.ndarray
    method: Literal["classical", "robust"] = "classical"

    @property
    def q(self) -> int:
        return self.eigen_coefs.shape[0]


@dataclass(frozen=True)
class RobustPpConfig:
    scale: Literal["mad", "qn"] = "mad"
    num_components: int = 10
    refine_sweeps: int = 2

    def __post_init__(self):
        if self.num_components < 1:
            raise ValueError("num_components must be at least 1")
        if self.scale not in ("mad", "qn"):
            raise ValueError(f"unknown scale estimator {self.scale!r}")


def mad_scale(P: np.ndarray, axis: int = 0) -> np.ndarray:
    med = np.median(P, axis=axis, keepdims=True)
    return MAD_FACTOR * np.median(np.abs(P - med), axis=axis)


def qn_scale(P: np.ndarray, axis: int = 0) -> np.ndarray:
    """Rousseeuw-Croux Qn scale along ``axis`` (plain O(n^2) evaluation)."""
    P = np.moveaxis(np.asarray(P, dtype=float), axis, 0)
    n = P.shape[0]
    if n < 2:
        return np.zeros(P.shape[1:])
    i, j = np.triu_indices(n, k=1)
    d = np.abs(P[i] - P[j])
    h = n // 2 + 1
    k = h * (h - 1) // 2
    return QN_FACTOR * np.partition(d, k - 1, axis=0)[k - 1]


_SCALES = {"mad": mad_scale, "qn": qn_scale}


def _sign_fix(eigen_coefs: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude coefficient is positive."""
    out = eigen_coefs.copy()
    for k, row in enumerate(out):
        if row[np.argmax(np.abs(row))] < 0:
            out[k] = -row
    return out


def _check_q(exp: BasisExpansion, q: int) -> None:
    n, p = exp.coefs.shape
    if q < 1 or q > min(max(n - 1, 1), p):
        raise TooManyComponents(f"q={q} exceeds min(n-1, p)={min(n - 1, p)}")


def _finish(exp, gf, dirs, evals, mean, method) -> FpcaModel:
    eigen_coefs = _sign_fix(from_orthonormal_coords(dirs, gf))
    mean = np.zeros(exp.coefs.shape[1]) if mean is None else np.asarray(mean, dtype=float)
    return FpcaModel(exp.basis, gf, mean, eigen_coefs, np.asarray(evals, dtype=float), method)


def fit_classical_fpca(
    exp: BasisExpansion, gf: GramFactor, q: int, mean: Optional[np.ndarray] = None
) -> FpcaModel:
    """Eigen-decomposition of the sample covariance of centered curves.

    ``exp`` must already be centered; ``mean`` is stored on the model as the
    location that :func:`project_scores` subtracts.
    """
    _check_q(exp, q)
    Y = to_orthonormal_coords(exp, gf)
    n = Y.shape[0]
    _, s, Vt = np.linalg.svd(Y, full_matrices=False)
    evals = s[:q] ** 2 / max(n - 1, 1)
    # Rank is judged against the data scale; with identical curves s[0] is itself rounding noise.
    ref = s[0] if s.size else 0.0
    if mean is not None:
        ref = max(ref, np.sqrt(n) * np.linalg.norm(to_orthonormal_coords(np.atleast_2d(mean), gf)))
    tol = max(Y.shape) * np.finfo(float).eps * ref
    rank = int(np.sum(s > tol))
    if rank < q:
        warnings.warn(
            f"covariance rank {rank} < {q} requested components", RankDeficient, stacklevel=2
        )
        evals[rank:] = 0.0
    return _finish(exp, gf, Vt[:q], evals, mean, "classical")


def _complement_directions(A: np.ndarray, p: int, count: int) -> np.ndarray:
    """``count`` unit vectors orthogonal to the rows of A and to each other."""
    if A.shape[0] == 0:
        return np.eye(p)[:count]
    basis = np.linalg.svd(A, full_matrices=True)[2]
    return basis[A.shape[0] : A.shape[0] + count]


def _biweight(u):
    return np.where(np.abs(u) < 1, (1 - u**2) ** 2, 0.0)


def _refine(Xc, a, s, scale_fn, sweeps):
    """Biweight-reweighted power steps on a weighted covariance.

    A curve is downweighted when its projection is outlying, or when its
    distance from the current axis is (one-sided) outlying, so gross
    outliers orthogonal to ``a`` cannot pull the direction towards them.
    Centering at the weighted mean keeps a shifted bulk from acting as
    spurious variance.
    """
    for _ in range(sweeps):
        if s <= 0:
            break
        proj = Xc @ a
        w = _biweight((proj - np.median(proj)) / (BIWEIGHT_C * s))
        if w.sum() <= 0:
            break
        R = Xc - (w @ Xc) / w.sum()
        pr = R @ a
        orth = np.linalg.norm(R - np.outer(pr, a), axis=1)
        # floor keeps the cut active when the bulk sits at one distance
        so = max(float(mad_scale(orth)), 1e-9 * float(orth.max()))
        if so > 0:
            w = w * _biweight(np.clip((orth - np.median(orth)) / (BIWEIGHT_C * so), 0.0, None))
            R = Xc - (w @ Xc) / w.sum()
            pr = R @ a
        b = R.T @ (w * pr)
        nb = np.linalg.norm(b)
        if nb == 0:
            break
        a = b / nb
        s = float(scale_fn((Xc @ a)[:, None])[0])
    return a, s


def fit_robust_fpca(
    exp: BasisExpansion,
    gf: GramFactor,
    q: int,
    cfg: Optional[RobustPpConfig] = None,
    mean: Optional[np.ndarray] = None,
) -> FpcaModel:
    """Projection-pursuit FPCA with candidate directions taken from the data.

    Component k maximises the robust scale of the projections over the
    normalized (deflated) observations, followed by ``refine_sweeps``
    reweighted power steps.  The data are then projected onto the orthogonal
    complement of the accepted direction before the next search.
    """
    cfg = cfg or RobustPpConfig()
    _check_q(exp, q)
    if exp.n < 2:
        raise DegenerateData("robust FPCA needs at least two curves")
    scale_fn = _SCALES[cfg.scale]
    Xc = to_orthonormal_coords(exp, gf)
    n, p = Xc.shape
    row_norm0 = np.linalg.norm(Xc, axis=1).max()
    vanish = 1e-10 * row_norm0
    dirs, evals = [], []
    for k in range(q):
        norms = np.linalg.norm(Xc, axis=1)
        valid = norms > vanish if row_norm0 > 0 else np.zeros(n, dtype=bool)
        if not np.any(valid):
            warnings.warn(
                f"all candidate directions vanish after {k} components; "
                "remaining components have zero scale",
                RankDeficient,
                stacklevel=2,
            )
            rest = _complement_directions(np.array(dirs).reshape(-1, p), p, q - k)
            dirs.extend(rest)
            evals.extend([0.0] * (q - k))
            break
        cands = Xc[valid] / norms[valid, None]
        scales = scale_fn(Xc @ cands.T, axis=0)
        best = int(np.argmax(scales))
        a, s = _refine(Xc, cands[best], float(scales[best]), scale_fn, cfg.refine_sweeps)
        if dirs:
            A = np.array(dirs)
            a = a - A.T @ (A @ a)
            a /= np.linalg.norm(a)
        dirs.append(a)
        evals.append(s**2)
        Xc = Xc - np.outer(Xc @ a, a)
    dirs = np.array(dirs)
    evals = np.array(evals)
    order = np.argsort(-evals, kind="stable")
    return _finish(exp, gf, dirs[order], evals[order], mean, "robust")


def fit_fpca(
    exp: BasisExpansion,
    gf: GramFactor,
    q: int,
    method: Literal["classical", "robust"] = "classical",
    cfg: Optional[RobustPpConfig] = None,
) -> FpcaModel:
    """Center (mean or spatial median) then fit the matching FPCA."""
    if method == "classical":
        mean, centered = center_classical(exp)
        return fit_classical_fpca(centered, gf, q, mean=mean)
    if method == "robust":
        center, centered = center_robust(exp, gf)
        return fit_robust_fpca(centered, gf, q, cfg, mean=center)
    raise ValueError(f"unknown FPCA method {method!r}")


def project_scores(model: FpcaModel, exp: BasisExpansion, m: Optional[int] = None) -> np.ndarray:
    """Scores <x_i - mean, phi_k> for k < m, as an n x m matrix."""
    m = model.q if m is None else m
    if m > model.q:
        raise TooManyComponents(f"requested {m} scores from a model with {model.q} components")
    if exp.coefs.shape[1] != model.mean_coefs.size:
        raise DimensionMismatch("expansion does not match the model basis")
    return (exp.coefs - model.mean_coefs) @ model.gf.gram @ model.eigen_coefs[:m].T


def reconstruct(model: FpcaModel, scores) -> BasisExpansion:
    """Mean plus the score-weighted sum of the leading eigenfunctions."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    m = scores.shape[1]
    if m > model.q:
        raise TooManyComponents(f"{m} scores for a model with {model.q} components")
    return BasisExpansion(model.basis, model.mean_coefs + scores @ model.eigen_coefs[:m])


def kmax_by_variance(model: FpcaModel, threshold: float = 0.9999, cap: int = 10) -> int:
    """Smallest m whose leading eigenvalues carry ``threshold`` of the total, at most ``cap``."""
    lam = np.clip(model.eigenvalues, 0, None)
    total = lam.sum()
    if total <= 0:
        return 1
    frac = np.cumsum(lam) / total
    hits = np.flatnonzero(frac >= threshold)
    m = int(hits[0]) + 1 if hits.size else lam.size
    return max(1, min(m, cap))
