import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

import oracles as O
from dualcontrol import (CappedUtility, DiscreteLossDistribution, DomainError, MarketModel,
                         RiskSpec, cvar_cap_closed, cvar_ru, frontier_sweep)
from dualcontrol.closedform import CappedSolution, terminal_probs
from dualcontrol.primal import primal_from_utility
from dualcontrol.riskfrontier import (FRONTIER_HEADER, golden_max, inner_solve, inner_utility,
                                      inner_value, loss_distribution, outer_maximize,
                                      ru_objective, terminal_distribution, write_frontier_csv)

M = MarketModel(0.0, 0.04, 0.2, 1.0)
RISK = RiskSpec(0.95, 0.5)


def bernoulli():
    p_h, p_0 = terminal_probs(M, 1.0, 0.5)
    return DiscreteLossDistribution.from_atoms([(-0.5, p_h), (0.5, p_0)])


def test_spec_validation():
    with pytest.raises(DomainError):
        RiskSpec(1.0, 0.5)
    with pytest.raises(DomainError):
        DiscreteLossDistribution((0.0, 1.0), (0.5, 0.6))
    with pytest.raises(DomainError):
        DiscreteLossDistribution((), ())
    assert RiskSpec(0.95, 0.5).delta == pytest.approx(20.0)


def test_cvar_examples():
    var, cvar = cvar_ru(bernoulli(), 0.5)
    assert cvar == pytest.approx(O.CVAR_HALF, abs=1e-12)
    # f(y) is flat on [-0.5, 0.5] up to the kink slopes; the argmin's left end is the lower atom
    assert var == pytest.approx(-0.5)
    assert cvar_ru(bernoulli(), 0.9) == (pytest.approx(0.5), pytest.approx(0.5))
    d = DiscreteLossDistribution((0.3,), (1.0,))
    assert cvar_ru(d, 0.99) == (0.3, pytest.approx(0.3))


@pytest.mark.parametrize("beta", [0.5, 0.9, 0.95, 0.99])
def test_closed_form_matches_ru(beta):
    probs = terminal_probs(M, 1.0, 0.5)
    assert cvar_cap_closed(0.5, 1.0, probs, beta) == pytest.approx(cvar_ru(bernoulli(), beta)[1],
                                                                   abs=1e-10)


def test_cap_closed_large_H():
    probs = terminal_probs(M, 1e6, 0.5)
    assert cvar_cap_closed(0.5, 1e6, probs, 0.95) == pytest.approx(0.5)


atoms = st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 1.0)), min_size=1, max_size=10)


@given(atoms, st.floats(0.01, 0.99))
def test_cvar_matches_brute_force(raw, beta):
    tot = math.fsum(p for _, p in raw)
    d = DiscreteLossDistribution(tuple(z for z, _ in raw), tuple(p / tot for _, p in raw))
    var, cvar = cvar_ru(d, beta)
    grid = np.linspace(-5.5, 5.5, 4001)
    f = ru_objective(d, beta, grid)
    i = int(np.argmin(f))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    polish = minimize_scalar(lambda y: float(ru_objective(d, beta, y)), bounds=(lo, hi),
                             method="bounded", options={"xatol": 1e-13})
    brute = min(float(f[i]), float(polish.fun), *(float(ru_objective(d, beta, z)) for z in d.values))
    assert cvar == pytest.approx(brute, abs=1e-10)
    assert cvar >= var - 1e-12
    assert float(ru_objective(d, beta, var)) == pytest.approx(cvar, abs=1e-10)


@given(atoms)
def test_small_beta_gives_mean(raw):
    tot = math.fsum(p for _, p in raw)
    d = DiscreteLossDistribution(tuple(z for z, _ in raw), tuple(p / tot for _, p in raw))
    assert cvar_ru(d, 1e-12)[1] == pytest.approx(d.mean(), abs=1e-9)
    assert cvar_ru(d, 1 - 1e-9)[1] == pytest.approx(max(d.values), abs=1e-6)


@pytest.mark.parametrize("lam", [0.0, 0.5, 3.0])
def test_inner_utility_cases(lam):
    H, k = 1.0, lam * RISK.delta
    xs = np.linspace(0, 2, 81)
    u, off = inner_utility(RISK.c + 0.1, lam, RISK, H)
    np.testing.assert_allclose(u(xs), np.minimum(xs, H))
    assert off == 0.0
    u, off = inner_utility(RISK.c, lam, RISK, H)
    np.testing.assert_allclose(u(xs) + off, np.minimum(xs, H))
    y = RISK.c - H - 0.2
    u, off = inner_utility(y, lam, RISK, H)
    expect = np.minimum(xs, H) - k * np.maximum(RISK.c - y - np.minimum(xs, H), 0)
    np.testing.assert_allclose(u(xs) + off, expect, atol=1e-14)


def test_inner_utility_continuous_at_boundary():
    xs = np.linspace(0, 2, 81)
    y = RISK.c - 1.0
    a, oa = inner_utility(y, 0.5, RISK, 1.0)
    b, ob = inner_utility(y + 1e-12, 0.5, RISK, 1.0)
    np.testing.assert_allclose(a(xs) + oa, b(xs) + ob, atol=1e-10)


def test_inner_value_case_formulas():
    sol = CappedSolution(1.0, M)
    base = float(sol.u(0.0, 0.5))
    lam = 0.3
    k = lam * RISK.delta
    y = RISK.c - 1.5
    assert inner_value(y, lam, RISK, M, 0.0, 0.5, 1.0) == pytest.approx(
        (1 + k) * base - k * (RISK.c - y), abs=1e-10)
    assert inner_value(RISK.c + 0.2, lam, RISK, M, 0.0, 0.5, 1.0) == pytest.approx(base, abs=1e-12)
    r = inner_solve(0.2, lam, RISK, M, 0.0, 0.5, 1.0)
    assert r.brackets_ok


def test_inner_value_concave_in_y():
    ys = np.linspace(RISK.c - 1.0, RISK.c, 41)
    vals = np.array([inner_value(y, 0.5, RISK, M, 0.0, 0.5, 1.0) for y in ys])
    assert np.all(np.diff(vals, 2) <= 1e-9)


def test_terminal_distribution_capped():
    pr = primal_from_utility(M, CappedUtility(1.0))
    y0 = float(pr.y_of_x(0.0, 0.5))
    plu, _ = inner_utility(1.0, 0.0, RISK, 1.0)
    xs, probs = terminal_distribution(plu, M, 0.0, y0)
    assert xs.tolist() == [0.0, 1.0]
    assert probs[0] == pytest.approx(O.P_ZERO, abs=1e-12)
    assert probs.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("lam", [0.5, 5.0])
@pytest.mark.parametrize("y", [-0.3, 0.0, 0.1, 0.4])
def test_terminal_distribution_expected_utility(y, lam):
    # y = 0 puts the kink of U^y at the current wealth, where v_y + x is flat near the root
    r = inner_solve(y, lam, RISK, M, 0.0, 0.5, 1.0)
    xs, probs = terminal_distribution(r.utility, M, 0.0, r.dual_point)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert float(np.dot(r.utility(xs), probs)) + r.offset == pytest.approx(r.value, abs=1e-9)


def test_golden_max():
    x, fx, flat = golden_max(lambda y: -(y - 0.3) ** 2, 0.0, 1.0, 1e-10)
    assert x == pytest.approx(0.3, abs=1e-8) and not flat
    x, fx, flat = golden_max(lambda y: 1.0, -1.0, 1.0, 1e-10)
    assert (x, fx, flat) == (-1.0, 1.0, True)


def test_outer_maximize_properties():
    p = outer_maximize(0.5, RISK, M, 0.0, 0.5)
    assert p.objective == pytest.approx(p.expected_utility - p.lam * p.cvar, abs=1e-9)
    assert p.cvar >= p.var - 1e-12
    assert p.brackets_ok

    def obj(y):
        return inner_value(y, 0.5, RISK, M, 0.0, 0.5, 1.0) - 0.5 * y
    assert obj(p.y_star) >= max(obj(RISK.c - 1.0), obj(RISK.c)) - 1e-9


def test_large_lambda_stops_trading():
    p = outer_maximize(1e3, RISK, M, 0.0, 0.5)
    assert abs(p.cvar) < 1e-6
    assert p.expected_utility == pytest.approx(0.5, abs=1e-6)


def test_frontier_sweep_and_csv(tmp_path):
    pts = frontier_sweep([0.0, 0.25, 0.5, 1.0, 2.0, 5.0], RISK, M, 0.0, 0.5, workers=2)
    cv = [p.cvar for p in pts]
    eu = [p.expected_utility for p in pts]
    assert all(b <= a + 1e-12 for a, b in zip(cv, cv[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(eu, eu[1:]))
    assert pts[0].flat
    assert pts[0].cvar == pytest.approx(
        cvar_cap_closed(0.5, 1.0, terminal_probs(M, 1.0, 0.5), 0.95), abs=1e-6)
    assert pts[0].expected_utility == pytest.approx(O.U_CAP, abs=1e-9)
    with pytest.raises(DomainError):
        frontier_sweep([1.0, 0.5], RISK, M, 0.0, 0.5)
    path = tmp_path / "f.csv"
    with open(path, "w") as fh:
        write_frontier_csv(pts, fh, ["note"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# note"
    assert lines[1] == ",".join(FRONTIER_HEADER)
    assert len(lines) == 8


def test_wealth_reward_matches_utility_for_cap():
    a = outer_maximize(0.25, RISK, M, 0.0, 0.5, reward="utility")
    b = outer_maximize(0.25, RISK, M, 0.0, 0.5, reward="wealth")
    assert a.expected_utility == pytest.approx(b.expected_utility, abs=1e-12)


def test_loss_distribution_signs():
    d = loss_distribution(np.array([0.0, 1.0]), np.array([0.4, 0.6]), CappedUtility(1.0), 0.5)
    assert d.values == (0.5, -0.5)
