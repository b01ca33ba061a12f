"""Statistics primitives shared by the law fits.

All functions are deterministic; anything that resamples takes an explicit seed.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import norm, rankdata

from .errors import FitError

DEFAULT_RESAMPLES = 2000


@dataclass(frozen=True)
class OlsFit:
    intercept: float
    slope: float
    r_squared: float
    n: int

    def predict(self, x: float) -> float:
        return self.intercept + self.slope * x


def ols(xs: Sequence[float], ys: Sequence[float]) -> OlsFit:
    """Ordinary least squares with intercept.

    R^2 is ``1 - SSR/SST``. A constant response is fitted exactly by the
    intercept, so its R^2 is reported as 1.0 rather than 0/0.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FitError("xs and ys must be 1-d sequences of equal length")
    if len(x) < 2:
        raise FitError("ols needs at least 2 points")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx <= 1e-300 or np.all(x == x[0]):
        raise FitError("constant predictor")
    slope = float(dx @ (y - ym)) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ssr = float(resid @ resid)
    sst = float((y - ym) @ (y - ym))
    r2 = 1.0 if sst == 0.0 else 1.0 - ssr / sst
    return OlsFit(intercept, slope, min(1.0, max(0.0, r2)), len(x))


@dataclass(frozen=True)
class WilsonInterval:
    lo: float
    hi: float
    point: float
    n: int
    z: float


def wilson(successes: int, n: int, z: float = 1.96) -> WilsonInterval:
    if n < 1:
        raise FitError("wilson interval needs n >= 1")
    if not 0 <= successes <= n:
        raise FitError(f"successes={successes} outside [0, {n}]")
    if z <= 0:
        raise FitError("z must be positive")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return WilsonInterval(min(lo, p), max(hi, p), p, n, z)


def z_for_confidence(level: float) -> float:
    return float(norm.ppf(0.5 + level / 2.0))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rho with average ranks for ties (Pearson correlation of the ranks)."""
    rx = rankdata(xs, method="average")
    ry = rankdata(ys, method="average")
    return _pearson(rx, ry)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return float("nan")
    return max(-1.0, min(1.0, float(da @ db) / denom))


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    ci_lo: float
    ci_hi: float
    resamples: int
    seed: int

    def __iter__(self):
        return iter((self.rho, self.ci_lo, self.ci_hi))


def spearman_bootstrap(
    xs: Sequence[float],
    ys: Sequence[float],
    resamples: int = DEFAULT_RESAMPLES,
    *,
    seed: int,
) -> SpearmanResult:
    """Spearman rho plus a 2.5/97.5 percentile bootstrap interval over resampled pairs.

    Resample ``i`` draws its indices from a generator seeded with ``(seed, i)``,
    so the interval does not depend on evaluation order. Resamples whose ranks
    are constant (rho undefined) are skipped.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise FitError("xs and ys must have equal length")
    if len(x) < 3:
        raise FitError("spearman needs at least 3 pairs")
    rho = spearman(x, y)
    n = len(x)
    boot = np.empty(resamples)
    for i in range(resamples):
        idx = np.random.default_rng([seed, i]).integers(0, n, size=n)
        boot[i] = spearman(x[idx], y[idx])
    boot = boot[~np.isnan(boot)]
    if len(boot) == 0:
        return SpearmanResult(rho, float("nan"), float("nan"), resamples, seed)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return SpearmanResult(rho, float(lo), float(hi), resamples, seed)


@dataclass(frozen=True)
class NlsResult:
    params: tuple[float, ...]
    residual_norm: float
    grid_residual_norm: float


Model = Callable[[np.ndarray, np.ndarray], np.ndarray]


def grid_axes(bounds: Sequence[tuple[float, float]], points: int) -> list[np.ndarray]:
    return [np.linspace(lo, hi, points) for lo, hi in bounds]


def _residual_norm(model: Model, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    pred = np.asarray(model(params, x), dtype=float)
    if not np.all(np.isfinite(pred)):
        return math.inf
    return float(np.linalg.norm(pred - y))


def nls_fit(
    model: Model,
    xs: Sequence[float] | np.ndarray,
    ys: Sequence[float],
    bounds: Sequence[tuple[float, float]],
    init: Sequence[float] | None = None,
    *,
    grid_points: int = 100,
) -> NlsResult:
    """Bounded nonlinear least squares: exhaustive grid seed, then trust-region refinement.

    ``model(params, xs)`` returns predictions. The grid has ``grid_points``
    evenly spaced values per axis (inclusive of the bounds), so the returned
    residual norm is never worse than the best grid node. ``init``, when
    given, is also tried as a refinement start.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(lo > hi):
        raise FitError("inconsistent bounds")
    if init is not None:
        init_arr = np.asarray(init, dtype=float)
        if init_arr.shape != lo.shape or np.any(init_arr < lo) or np.any(init_arr > hi):
            raise FitError(f"init {list(init)} outside bounds")
        if not math.isfinite(_residual_norm(model, init_arr, x, y)):
            raise FitError(f"model values non-finite at parameters {init_arr.tolist()}")

    best_grid, best_norm = None, math.inf
    for node in itertools.product(*grid_axes(bounds, grid_points)):
        p = np.array(node)
        r = _residual_norm(model, p, x, y)
        if r < best_norm:
            best_grid, best_norm = p, r
    if best_grid is None:
        raise FitError(f"model is non-finite at every grid node for parameters within {list(bounds)}")

    starts = [best_grid] + ([np.asarray(init, dtype=float)] if init is not None else [])
    best_p, best_r = best_grid, best_norm
    free = hi > lo
    for start in starts:
        if not np.any(free):
            break
        refined = _refine(model, start, x, y, lo, hi, free)
        if refined is None:
            continue
        r = _residual_norm(model, refined, x, y)
        if r < best_r:
            best_p, best_r = refined, r
    if not math.isfinite(best_r):
        raise FitError(f"model values non-finite at parameters {best_p.tolist()}")
    return NlsResult(tuple(float(v) for v in best_p), best_r, best_norm)


def _refine(model, start, x, y, lo, hi, free):
    def resid(q):
        p = start.copy()
        p[free] = q
        out = np.asarray(model(p, x), dtype=float) - y
        return np.where(np.isfinite(out), out, 1e6)

    q0 = np.clip(start[free], lo[free], hi[free])
    try:
        sol = optimize.least_squares(
            resid, q0, bounds=(lo[free], hi[free]), xtol=1e-14, ftol=1e-14, gtol=1e-14,
            max_nfev=2000,
        )
    except (ValueError, FloatingPointError):
        return None
    p = start.copy()
    p[free] = np.clip(sol.x, lo[free], hi[free])
    return p
