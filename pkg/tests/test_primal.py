import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from dualcontrol import (CappedUtility, DegenerateError, DomainError, MarketModel,
                         PowerUtility, Regime, ThresholdError, primal_from_utility)
from dualcontrol.primal import ClampWarning
from strategies import piecewise_utilities


@pytest.fixture
def cap(capped_market):
    return primal_from_utility(capped_market, CappedUtility(1.0))


def test_oracles(cap):
    st_ = cap.state(0.0, 0.5)
    assert float(st_["u"]) == pytest.approx(O.U_CAP, abs=1e-12)
    assert float(st_["y"]) == pytest.approx(O.Y_CAP, rel=1e-12)
    assert float(st_["pi"]) == pytest.approx(O.PI_CAP, rel=1e-10)
    assert float(st_["u_xx"]) == pytest.approx(-1 / O.V_YY_AT_Y_CAP, rel=1e-10)


@given(st.floats(0.01, 0.99), st.floats(0.0, 0.9))
def test_root_solves_first_order_condition(x, t):
    p = primal_from_utility(MarketModel(0.0, 0.04, 0.2, 1.0), CappedUtility(1.0))
    y = p.y_of_x(t, x)
    assert float(p.dual_surface.v_y(t, y)) == pytest.approx(-x, rel=1e-10, abs=1e-12)


@given(piecewise_utilities(), st.floats(0.0, 0.9), st.floats(0.05, 0.95))
def test_duality_inequality(u, t, frac):
    """u(t, x) <= v(t, y) + x y for every y, with equality at the root."""
    p = primal_from_utility(MarketModel(0.0, 0.04, 0.2, 1.0), u)
    x = frac * p.threshold(t)
    val = p.u(t, x)
    ys = np.geomspace(1e-3, 1e3, 50)
    assert np.all(val <= p.dual_surface.v(t, ys) + x * ys + 1e-12)


@given(piecewise_utilities(), st.floats(0.0, 0.9))
def test_monotone_in_wealth(u, t):
    p = primal_from_utility(MarketModel(0.0, 0.04, 0.2, 1.0), u)
    xs = np.linspace(0.02, 0.98, 25) * p.threshold(t)
    s = p.state(t, xs)
    assert np.all(np.diff(s["y"]) < 0)
    assert np.all(np.diff(s["u"]) > 0)
    assert np.all(s["u_xx"] < 0)


def test_warm_start_matches_bisection(cap):
    xs = np.linspace(0.05, 0.95, 19)
    cold = cap.y_of_x(0.3, xs)
    warm = cap.y_of_x(0.3, xs, guess=cold * 1.1)
    np.testing.assert_allclose(warm, cold, rtol=1e-10)


def test_threshold_and_errors(cap):
    assert cap.x_star == 1.0
    assert cap.u(0.5, 1.5) == 1.0
    assert cap.feedback_control(0.5, 1.5) == 0.0
    with pytest.raises(ThresholdError):
        cap.y_of_x(0.5, 1.0)
    with pytest.raises(DomainError):
        cap.y_of_x(0.5, -0.1)
    with pytest.raises(DegenerateError):
        cap.y_of_x(1.0, 0.5)
    with pytest.raises(DegenerateError):
        cap.feedback_control(1.0, 0.5)
    assert cap.u(1.0, 0.3) == pytest.approx(0.3)
    assert cap.u(0.5, 0.0) == 0.0


def test_clamp_warning(rate_market):
    p = primal_from_utility(rate_market, PowerUtility(0.5), Regime.WITH_RATE)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        y = p.y_of_x(0.0, 1e-40)
    assert any(issubclass(w.category, ClampWarning) for w in rec)
    assert y == pytest.approx(1e12)


@given(st.floats(-2.0, 2.0), st.floats(0.0, 0.9))
def test_u_x_matches_finite_difference(log_frac, t):
    p = primal_from_utility(MarketModel(0.0, 0.04, 0.2, 1.0), CappedUtility(1.0))
    x = 0.5 * math.exp(0.3 * log_frac)
    h = 1e-5 * x
    fd = (p.u(t, x + h) - p.u(t, x - h)) / (2 * h)
    assert p.u_x(t, x) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("tau", [1.0, 5.0, 10.0, 20.0, 40.0])
def test_merton_amount(rate_market, x, tau):
    p = primal_from_utility(rate_market, PowerUtility(0.5), Regime.WITH_RATE)
    target = rate_market.theta * x / (rate_market.sigma * 0.5)
    assert float(p.risky_amount(tau, x)) == pytest.approx(target, rel=1e-8)


def test_risky_amount_domain(rate_market):
    p = primal_from_utility(rate_market, PowerUtility(0.5), Regime.WITH_RATE)
    with pytest.raises(DomainError):
        p.risky_amount(0.0, 1.0)
    with pytest.raises(DomainError):
        p.risky_amount(41.0, 1.0)


def test_root_on_flat_stretch(capped_market):
    """A kink at the current wealth makes v_y + x vanish to rounding over a wide range of y."""
    from dualcontrol import PiecewiseLinearUtility
    p = primal_from_utility(capped_market, PiecewiseLinearUtility((0.5, 1.0), (101.0, 1.0), 1.0))
    y = p.y_of_x(0.0, 0.5)
    assert abs(float(p.dual_surface.v_y(0.0, y)) + 0.5) <= 1e-12
    assert p.u(0.0, 0.5) == pytest.approx(0.5, abs=1e-12)
