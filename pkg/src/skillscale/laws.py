"""Routing and execution law fits plus their closed-form predictions.

Routing side: logarithmic decay ``Acc(N) = a - b ln N``, pipeline compounding,
mid-chain rebound and the competition-index (Boltzmann) form. Execution side:
rescue, wrong-state propagation, capability-gap synergy, and the coupling of
rescue to the routing slope ``b``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, PreconditionError
from .stats import nls_fit, ols, wilson
from .trials import TrialRecord

DEFAULT_THRESHOLDS = (0.8,)

# Cross-model diagnostic alpha = 0.50 - 3.4 b.
ALPHA_INTERCEPT = 0.50
ALPHA_SLOPE = 3.4

# Empirical compounding exponent gamma = 6.7 b + 1.09.
GAMMA_SLOPE = 6.7
GAMMA_INTERCEPT = 1.09


def n_star(a: float, b: float, threshold: float) -> int | None:
    """Library size where ``a - b ln N`` crosses ``threshold``, rounded half away from zero."""
    if b <= 0:
        return None
    try:
        value = math.exp((a - threshold) / b)
    except OverflowError:
        return None
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class RoutingPoint:
    n: int
    correct: int
    total: int
    accuracy: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class RoutingLawFit:
    a: float
    b: float
    r_squared: float
    n_star: Mapping[float, int | None]
    points: tuple[RoutingPoint, ...] = ()

    def predict(self, n: float) -> float:
        return self.a - self.b * math.log(n)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "r_squared": self.r_squared,
            "n_star": {f"{t:g}": v for t, v in sorted(self.n_star.items())},
            "points": [p.__dict__ for p in self.points],
        }


def fit_routing_points(
    ns: Sequence[float],
    accuracies: Sequence[float],
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
) -> RoutingLawFit:
    """OLS of accuracy on ln N for already-aggregated (N, accuracy) points."""
    if len(set(ns)) < 2:
        raise FitError("routing law needs at least 2 distinct library sizes")
    fit = ols([math.log(n) for n in ns], accuracies)
    a, b = fit.intercept, -fit.slope
    return RoutingLawFit(a, b, fit.r_squared, {t: n_star(a, b, t) for t in thresholds})


def fit_routing_law(
    trials: Iterable[TrialRecord],
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
) -> RoutingLawFit:
    """Per-N accuracy (correct / total) then OLS on (ln N, accuracy)."""
    counts: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for t in trials:
        c = counts[t.n_exposed]
        c[0] += t.correct
        c[1] += 1
    if len(counts) < 2:
        raise FitError("routing law needs at least 2 distinct library sizes")
    points = []
    for n in sorted(counts):
        ok, total = counts[n]
        ci = wilson(ok, total)
        points.append(RoutingPoint(n, ok, total, ok / total, ci.lo, ci.hi))
    base = fit_routing_points([p.n for p in points], [p.accuracy for p in points], thresholds)
    return RoutingLawFit(base.a, base.b, base.r_squared, base.n_star, tuple(points))


def pipeline_accuracy(p_n: float, eta: float, k: int) -> float:
    """Strict all-correct success of a k-step route-only pipeline: p (p - eta)^(k-1)."""
    if k < 1:
        raise PreconditionError("pipeline length k must be >= 1")
    if not 0.0 <= p_n <= 1.0:
        raise PreconditionError(f"p_n={p_n} outside [0, 1]")
    if eta < 0:
        raise PreconditionError("eta must be >= 0")
    if eta >= p_n:
        raise PreconditionError(f"compression penalty eta={eta} must be below p_n={p_n}")
    return p_n * (p_n - eta) ** (k - 1)


def gamma_from_b(b: float) -> float:
    if b < 0:
        raise PreconditionError("b must be >= 0")
    return GAMMA_SLOPE * b + GAMMA_INTERCEPT


def gamma_exact(p_n: float, eta: float, k: int) -> float:
    """Exponent with ``p_n ** (gamma k) == pipeline_accuracy(p_n, eta, k)``."""
    return math.log(pipeline_accuracy(p_n, eta, k)) / (k * math.log(p_n))


@dataclass(frozen=True)
class PipelineFit:
    p_n: float
    eta: float
    gamma: float


def fit_pipeline(p_n: float, acc_pipeline: float, k: int) -> PipelineFit:
    """Recover eta and gamma from single-step accuracy and observed k-step strict success."""
    if k < 2:
        raise PreconditionError("need k >= 2 to separate the compression penalty")
    if not 0 < acc_pipeline <= p_n < 1:
        raise PreconditionError("need 0 < acc_pipeline <= p_n < 1")
    eta = p_n - (acc_pipeline / p_n) ** (1.0 / (k - 1))
    gamma = math.log(acc_pipeline) / (k * math.log(p_n))
    return PipelineFit(p_n, max(0.0, eta), gamma)


def excess_depth_loss(acc_pipeline: float, per_step_acc: Sequence[float]) -> float:
    """log(product of step accuracies) - log(pipeline accuracy); positive when depth hurts."""
    values = [acc_pipeline, *per_step_acc]
    if any(not 0.0 < v <= 1.0 for v in values):
        raise PreconditionError("accuracies must lie in (0, 1]; log is undefined at 0")
    return float(sum(math.log(p) for p in per_step_acc) - math.log(acc_pipeline))


@dataclass(frozen=True)
class RescueFit:
    two_alpha: float
    intercept: float
    r_squared: float
    n: int

    @property
    def alpha(self) -> float:
        return self.two_alpha / 2.0


def rescue_potential(p_a: float, p_b: float) -> float:
    return (1.0 - p_b) * p_a


def fit_rescue(pairs: Iterable[Sequence[float]]) -> RescueFit:
    """Regress observed Delta P(B|A) on (1 - P(B)) P(A); intercept kept as an audit signal."""
    rows = [tuple(p[:3]) for p in pairs]
    if len(rows) < 2:
        raise FitError("rescue fit needs at least 2 pairs")
    xs = [rescue_potential(pa, pb) for pa, pb, _ in rows]
    ys = [d for _, _, d in rows]
    fit = ols(xs, ys)
    return RescueFit(fit.slope, fit.intercept, fit.r_squared, fit.n)


def fit_rescue_hardest(pairs: Iterable[Sequence[float]], fraction: float = 0.25) -> RescueFit:
    """Rescue fit restricted to the hardest downstream decisions (lowest P(B))."""
    rows = sorted((tuple(p[:3]) for p in pairs), key=lambda r: (r[1], r[0], r[2]))
    keep = max(2, int(round(len(rows) * fraction)))
    return fit_rescue(rows[:keep])


@dataclass(frozen=True)
class SynergyFit:
    g_star: float
    left_intercept: float
    left_slope: float
    right_amplitude: float
    right_tau: float

    def __post_init__(self) -> None:
        if self.right_amplitude < 0 or self.right_tau <= 0:
            raise PreconditionError("synergy needs right_amplitude >= 0 and right_tau > 0")

    def continuity_gap(self) -> float:
        """Left branch minus right branch at the threshold (the right branch is 0 there)."""
        return self.left_intercept + self.left_slope * self.g_star


REFERENCE_SYNERGY = SynergyFit(
    g_star=0.25, left_intercept=-0.0775, left_slope=0.31, right_amplitude=0.265, right_tau=0.12
)


def synergy(g: float, fit: SynergyFit = REFERENCE_SYNERGY) -> float:
    if not 0.0 <= g <= 1.0:
        raise PreconditionError(f"capability gap {g} outside [0, 1]")
    return float(_synergy_curve(np.array([g]), fit)[0])


def _synergy_curve(g: np.ndarray, fit: SynergyFit) -> np.ndarray:
    left = fit.left_intercept + fit.left_slope * g
    right = fit.right_amplitude * (1.0 - np.exp(-(g - fit.g_star) / fit.right_tau))
    return np.where(g < fit.g_star, left, right)


def _synergy_projection(g: np.ndarray, s: np.ndarray, g_star: float, tau: float) -> SynergyFit:
    """Linear parameters of both branches given the threshold and saturation scale."""
    left = g < g_star
    gl, sl = g[left], s[left]
    if len(np.unique(gl)) >= 2:
        fit = ols(gl, sl)
        c0, c1 = fit.intercept, fit.slope
    elif len(sl):
        c0, c1 = float(sl.mean()), 0.0
    else:
        c0, c1 = 0.0, 0.0
    phi = 1.0 - np.exp(-(g[~left] - g_star) / tau)
    denom = float(phi @ phi)
    amp = max(0.0, float(phi @ s[~left]) / denom) if denom > 0 else 0.0
    return SynergyFit(g_star, c0, c1, amp, tau)


def fit_synergy(
    points: Iterable[Sequence[float]],
    g_bounds: tuple[float, float] = (0.0, 1.0),
    tau_bounds: tuple[float, float] = (0.01, 1.0),
) -> SynergyFit:
    """Piecewise fit: nonlinear search over (G*, tau), both branches solved linearly inside.

    Continuity at G* is not imposed; ``SynergyFit.continuity_gap`` reports it.
    """
    rows = [tuple(p[:2]) for p in points]
    if len(rows) < 4:
        raise FitError("synergy fit needs at least 4 points")
    g = np.array([r[0] for r in rows], dtype=float)
    s = np.array([r[1] for r in rows], dtype=float)

    def model(params: np.ndarray, x: np.ndarray) -> np.ndarray:
        return _synergy_curve(x, _synergy_projection(g, s, params[0], params[1]))

    res = nls_fit(model, g, s, [g_bounds, tau_bounds])
    return _synergy_projection(g, s, res.params[0], res.params[1])


@dataclass(frozen=True)
class PropagationFit:
    lam: float
    r: float
    r_squared: float | None = None

    @property
    def kappa_zero(self) -> float | None:
        total = self.lam + self.r
        return self.r / total if total > 0 else None


REFERENCE_PROPAGATION = PropagationFit(lam=0.072, r=0.028)


def propagation_delta(kappa: float, fit: PropagationFit = REFERENCE_PROPAGATION) -> float:
    """Downstream quality change under wrong upstream state: -lambda kappa + r (1 - kappa)."""
    if not 0.0 <= kappa <= 1.0:
        raise PreconditionError(f"kappa {kappa} outside [0, 1]")
    return -fit.lam * kappa + fit.r * (1.0 - kappa)


def fit_propagation(points: Iterable[Sequence[float]]) -> PropagationFit:
    rows = [tuple(p[:2]) for p in points]
    fit = ols([k for k, _ in rows], [d for _, d in rows])
    r = fit.intercept
    lam = -fit.slope - r
    return PropagationFit(lam, r, fit.r_squared)


def alpha_from_b(b: float) -> float:
    return ALPHA_INTERCEPT - ALPHA_SLOPE * b


@dataclass(frozen=True)
class CouplingPrediction:
    model_b: float
    alpha_hat: float
    n_values: tuple[float, ...]
    predicted_rescue_curve: tuple[float, ...]


def coupling_predict(
    a: float,
    b: float,
    acc_b: float,
    n_values: Sequence[float],
    alpha: float | None = None,
) -> CouplingPrediction:
    """Rescued downstream accuracy Acc(B) + 2 alpha (1 - Acc(B)) (a - b ln N) at each N.

    alpha defaults to the cross-model diagnostic ``0.50 - 3.4 b``.
    """
    if not 0.0 <= acc_b <= 1.0:
        raise PreconditionError(f"acc_b={acc_b} outside [0, 1]")
    if b < 0:
        raise PreconditionError("b must be >= 0")
    alpha_hat = alpha_from_b(b) if alpha is None else alpha
    curve = tuple(
        acc_b + 2.0 * alpha_hat * (1.0 - acc_b) * (a - b * math.log(n)) for n in n_values
    )
    return CouplingPrediction(b, alpha_hat, tuple(n_values), curve)


@dataclass(frozen=True)
class ReboundFit:
    delta0: float
    c_delta: float
    r_squared: float


def fit_rebound(per_step_delta: Iterable[Sequence[float]]) -> ReboundFit:
    """OLS of mid-chain rebound depth on ln N."""
    rows = [tuple(p[:2]) for p in per_step_delta]
    if len({n for n, _ in rows}) < 2:
        raise FitError("rebound fit needs at least 2 distinct library sizes")
    fit = ols([math.log(n) for n, _ in rows], [d for _, d in rows])
    return ReboundFit(fit.intercept, fit.slope, fit.r_squared)


@dataclass(frozen=True)
class DualTrigger:
    margins: Mapping[str, float]
    captured: Mapping[str, bool] = field(default_factory=dict)

    @property
    def dual_only(self) -> bool:
        c = self.captured
        return c["both"] and not c["query_only"] and not c["skill_only"]


def dual_trigger_margin(m0: float, dq: float, ds: float) -> DualTrigger:
    """Gold-over-abstract margins under query-anchor loss, skill-anchor loss, and both."""
    if m0 <= 0:
        raise PreconditionError("m0 must be > 0")
    if dq < 0 or ds < 0:
        raise PreconditionError("margin losses must be >= 0")
    margins = {"query_only": m0 - dq, "skill_only": m0 - ds, "both": m0 - dq - ds}
    return DualTrigger(margins, {k: v < 0 for k, v in margins.items()})


def in_dual_trigger_regime(m0: float, dq: float, ds: float) -> bool:
    return max(dq, ds) < m0 < dq + ds


@dataclass(frozen=True)
class BoltzmannFit:
    strength: float
    beta: float
    r_squared: float
    residual_norm: float


def boltzmann_accuracy(strength: float, beta: float, similarities: Sequence[float]) -> float:
    ci = sum(math.exp(beta * s) for s in similarities)
    return strength / (strength + ci)


def fit_boltzmann(
    observations: Sequence[tuple[Sequence[float], float]],
    strength_bounds: tuple[float, float] = (0.01, 20.0),
    beta_bounds: tuple[float, float] = (0.0, 10.0),
) -> BoltzmannFit:
    """Fit Acc = A / (A + sum_j exp(beta sim_j)) over (distractor similarities, accuracy) rows."""
    if len(observations) < 3:
        raise FitError("Boltzmann fit needs at least 3 observations")
    width = max(len(s) for s, _ in observations)
    sims = np.full((len(observations), width), np.nan)
    for i, (s, _) in enumerate(observations):
        sims[i, : len(s)] = s
    acc = np.array([a for _, a in observations], dtype=float)
    mask = ~np.isnan(sims)
    filled = np.where(mask, sims, 0.0)

    def model(params: np.ndarray, x: np.ndarray) -> np.ndarray:
        strength, beta = params
        ci = np.where(mask, np.exp(beta * filled), 0.0).sum(axis=1)
        return strength / (strength + ci)

    res = nls_fit(model, filled, acc, [strength_bounds, beta_bounds])
    pred = model(np.array(res.params), filled)
    sst = float(((acc - acc.mean()) ** 2).sum())
    r2 = 1.0 - float(((acc - pred) ** 2).sum()) / sst if sst > 0 else 1.0
    return BoltzmannFit(res.params[0], res.params[1], r2, res.residual_norm)
