from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from oracles import ols as ols_oracle
from skillscale.errors import FitError
from skillscale.stats import nls_fit, ols, spearman, spearman_bootstrap, wilson, z_for_confidence

_float = st.integers(-10_000, 10_000).map(lambda k: k / 100)
_vals = st.lists(_float, min_size=3, max_size=20)


@given(_vals, st.data())
def test_ols_matches_closed_form(xs, data):
    if max(xs) - min(xs) < 1e-3:
        return
    ys = data.draw(st.lists(_float, min_size=len(xs), max_size=len(xs)))
    fit = ols(xs, ys)
    if np.ptp(ys) == 0:
        assert fit.slope == pytest.approx(0.0, abs=1e-9) and fit.r_squared == 1.0
        return
    a, b, r2 = ols_oracle(xs, ys)
    assert fit.intercept == pytest.approx(a, rel=1e-7, abs=1e-7)
    assert fit.slope == pytest.approx(b, rel=1e-7, abs=1e-7)
    assert fit.r_squared == pytest.approx(min(1.0, max(0.0, r2)), abs=1e-7)


def test_ols_constant_predictor_fails():
    with pytest.raises(FitError, match="constant predictor"):
        ols([1, 1, 1], [1, 2, 3])


def test_ols_exact_line():
    fit = ols([0, 1, 2], [1, 3, 5])
    assert (fit.intercept, fit.slope, fit.r_squared) == pytest.approx((1, 2, 1))


def test_wilson_formula():
    ci = wilson(7, 10)
    p, n, z = 0.7, 10, 1.96
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    assert (ci.lo, ci.hi) == pytest.approx((centre - half, centre + half))


@given(st.integers(1, 500), st.data())
def test_wilson_contains_point_and_stays_in_unit_interval(n, data):
    k = data.draw(st.integers(0, n))
    ci = wilson(k, n)
    assert 0.0 <= ci.lo <= k / n <= ci.hi <= 1.0
    if k == 0:
        assert ci.lo == 0.0
    if k == n:
        assert ci.hi == 1.0


def test_wilson_rejects_bad_counts():
    with pytest.raises(FitError):
        wilson(3, 2)
    with pytest.raises(FitError):
        wilson(0, 0)


def test_z_for_confidence():
    assert z_for_confidence(0.95) == pytest.approx(1.959964, abs=1e-6)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=4, max_size=30))
def test_spearman_matches_scipy_with_ties(pairs):
    xs, ys = zip(*pairs)
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        return
    assert spearman(xs, ys) == pytest.approx(sps.spearmanr(xs, ys).statistic, abs=1e-12)


def test_spearman_bootstrap_is_seeded_and_brackets_rho():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    y = x + rng.normal(size=200)
    a = spearman_bootstrap(x, y, 300, seed=5)
    b = spearman_bootstrap(x, y, 300, seed=5)
    assert a == b
    assert a.ci_lo < a.rho < a.ci_hi


def test_nls_recovers_exponential():
    x = np.linspace(0, 2, 30)
    y = 1.5 * np.exp(-0.7 * x)
    res = nls_fit(lambda p, t: p[0] * np.exp(-p[1] * t), x, y, [(0.1, 3), (0.0, 2)], grid_points=20)
    assert res.params == pytest.approx((1.5, 0.7), abs=1e-6)
    assert res.residual_norm <= res.grid_residual_norm


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nls_reports_nonfinite_init():
    with pytest.raises(FitError, match="non-finite"):
        nls_fit(lambda p, t: np.log(p[0] - 1) * t, [1, 2], [1, 2], [(0.0, 3.0)], init=[0.5])


def test_nls_init_outside_bounds():
    with pytest.raises(FitError, match="outside bounds"):
        nls_fit(lambda p, t: p[0] * t, [1, 2], [1, 2], [(0.0, 1.0)], init=[2.0])
