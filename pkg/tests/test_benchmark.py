import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpshave.benchmark import (
    benchmark,
    centralized_oracle,
    centralized_solve,
    efficiency_loss,
    marginal_gap_identity_check,
    peak_ratio,
    system_cost,
)
from cpshave.closed_form import solve_ne
from cpshave.experiments import TABLE1_REPORTED_SHIFTS
from cpshave.game_core import GameInstance, GameType


@st.composite
def instances(draw, n_min=2, n_max=6):
    n = draw(st.integers(n_min, n_max))
    xs = st.lists(st.floats(0.01, 15), min_size=n, max_size=n)
    a = draw(st.lists(st.floats(0.01, 0.5), min_size=n, max_size=n))
    return GameInstance.from_arrays(draw(xs), draw(xs), a, draw(st.floats(0.2, 5)))


@pytest.mark.parametrize("name, p", [("case1", 1.125), ("case2", 1.0941), ("case3", 1.0)])
def test_reference_efficiency_loss(cases, name, p):
    g = cases[name]
    rep = benchmark(g, solve_ne(g).shifts)
    assert rep.efficiency_loss == pytest.approx(p, abs=1e-3 if p != 1.0 else 1e-9)
    assert rep.peak_ratio == pytest.approx(1.0, abs=1e-6)


def test_case1_costs_by_hand(cases):
    g = cases["case1"]
    cen = centralized_solve(g)
    # balanced, x proportional to 1/alpha: (4/3, 2/3)
    np.testing.assert_allclose(cen, [4 / 3, 2 / 3])
    assert system_cost(g, cen) == pytest.approx(11 + 0.1 * 16 / 9 + 0.2 * 4 / 9)
    assert system_cost(g, [3.5, -1.5]) == pytest.approx(11 + 1.225 + 0.45)


def test_concave_game_equilibrium_is_centralized(cases):
    g = cases["case3"]
    np.testing.assert_allclose(centralized_solve(g), solve_ne(g).shifts, atol=1e-12)


def test_table1_centralized_and_reported_profile(cases):
    g = cases["table1"]
    cen = centralized_solve(g)
    np.testing.assert_allclose(cen, 2.5 * np.array([5, 10, 2.5, 2, 5, 10]) / 34.5)
    assert efficiency_loss(g, TABLE1_REPORTED_SHIFTS, cen) == pytest.approx(1.1317, abs=2e-3)


@given(instances(2, 3))
@settings(max_examples=60, deadline=None)
def test_centralized_matches_grid_oracle(g):
    cen = centralized_solve(g)
    ref = centralized_oracle(g)
    assert system_cost(g, cen) <= system_cost(g, ref) + 1e-7 * max(1.0, system_cost(g, ref))
    np.testing.assert_allclose(cen, ref, atol=1e-3)


@given(instances(4, 8))
@settings(max_examples=25, deadline=None)
def test_centralized_matches_numeric_oracle(g):
    cen = centralized_solve(g)
    ref = centralized_oracle(g)
    assert system_cost(g, cen) <= system_cost(g, ref) + 1e-8 * max(1.0, system_cost(g, ref))


@given(instances())
@settings(max_examples=300, deadline=None)
def test_efficiency_loss_at_least_one(g):
    res = solve_ne(g)
    rep = benchmark(g, res.shifts)
    assert rep.efficiency_loss >= 1.0 - 1e-12
    if res.balanced:
        assert rep.peak_ratio == pytest.approx(1.0, abs=1e-6)


@given(instances(2, 2))
@settings(max_examples=300, deadline=None)
def test_two_agent_identity(g):
    res = solve_ne(g)
    if res.game_type is GameType.CONCAVE:
        with pytest.raises(ValueError):
            marginal_gap_identity_check(g, res.shifts)
    else:
        assert marginal_gap_identity_check(g, res.shifts) <= 1e-9


def test_identity_needs_two_agents(cases):
    with pytest.raises(ValueError):
        marginal_gap_identity_check(cases["table1"], np.zeros(6))


def test_report_fields(cases):
    g = cases["case2"]
    rep = benchmark(g, [3.0, -1.0])
    np.testing.assert_allclose(rep.marginal_cost, [0.3, -0.5])
    assert rep.marginal_gap == pytest.approx(0.8)
    d = rep.to_dict()
    assert set(d["game_shifts"]) == {"x", "y"}
    assert d["efficiency_loss"] == rep.efficiency_loss
    assert peak_ratio(g, [3.0, -1.0], rep.centralized_shifts) == rep.peak_ratio
