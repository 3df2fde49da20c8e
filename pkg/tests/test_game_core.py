import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpshave.game_core import (
    Agent,
    Capability,
    GameInstance,
    GameType,
    InputError,
    agent_costs,
    agent_payoff,
    canonicalize,
    classify_agents,
    classify_game,
    derive_points,
    instance_from_dict,
    load_instance,
    period_costs,
    period_payoffs,
    system_demand,
    to_original,
)

demand = st.floats(0.0, 50.0, allow_nan=False)
penalty = st.floats(0.01, 5.0, allow_nan=False)


@st.composite
def instances(draw, n_min=2, n_max=8):
    n = draw(st.integers(n_min, n_max))
    x1 = draw(st.lists(demand, min_size=n, max_size=n))
    x2 = draw(st.lists(demand, min_size=n, max_size=n))
    a = draw(st.lists(penalty, min_size=n, max_size=n))
    price = draw(st.floats(0.1, 10.0))
    return GameInstance.from_arrays(x1, x2, a, price)


def test_derived_points_case1(cases):
    p = derive_points(cases["case1"])
    np.testing.assert_allclose(p.critical, [5.0, 2.5])
    np.testing.assert_allclose(p.balance, [3.5, -1.5])
    assert p.system_balance == pytest.approx(2.0)
    assert p.system_average == pytest.approx(11.0)


@pytest.mark.parametrize("name, expected", [
    ("case1", GameType.QUASICONCAVE),
    ("case2", GameType.NON_CONCAVE),
    ("case3", GameType.CONCAVE),
    ("table1", GameType.NON_CONCAVE),
])
def test_classification_of_reference_cases(cases, name, expected):
    assert classify_game(canonicalize(cases[name])) is expected


def test_table1_capabilities(cases):
    caps = classify_agents(derive_points(cases["table1"]))
    flagged = [k + 1 for k, c in enumerate(caps) if c is not Capability.CAPABLE]
    assert flagged == [3, 4]
    assert caps[2] is Capability.LOWER_NON_CAPABLE
    assert caps[3] is Capability.UPPER_NON_CAPABLE


def test_boundary_b_equal_sum_r_is_non_concave():
    # b = 2 = r_x + r_y with r = (1, 1); agent x is non-capable (b_x = 3 > 1)
    g = GameInstance.from_arrays([0, 3], [6, 1], [0.5, 0.5], 1.0)
    p = derive_points(g)
    assert p.system_balance == pytest.approx(p.critical.sum())
    assert classify_game(g) is GameType.NON_CONCAVE


def test_canonicalize_swaps_and_negates():
    g = GameInstance.from_arrays([10, 6], [3, 3], [0.1, 0.2], 1.0)
    c = canonicalize(g)
    assert c.swapped
    assert c.X1.sum() <= c.X2.sum()
    assert canonicalize(c) is c
    np.testing.assert_array_equal(to_original(c, [1.0, -2.0]), [-1.0, 2.0])


@given(instances())
@settings(max_examples=200, deadline=None)
def test_canonical_form_properties(g):
    c = canonicalize(g)
    p = derive_points(c)
    assert p.system_balance >= 0
    assert p.balance.sum() == pytest.approx(p.system_balance, abs=1e-9)
    # costs agree across the relabelling, with the tie billed to period 1
    x = np.linspace(-1, 1, g.n)
    s1, s2 = system_demand(g, x)
    if abs(s1 - s2) > 1e-9:
        np.testing.assert_allclose(agent_costs(g, x), agent_costs(c, to_original(c, x)))


@given(instances(), st.floats(-5, 5))
@settings(max_examples=100, deadline=None)
def test_payoff_matches_vector_costs(g, shift):
    x = np.full(g.n, shift)
    c1, c2 = period_costs(g, x)
    s1, s2 = system_demand(g, x)
    for k, a in enumerate(g.agents):
        f1, f2 = period_payoffs(a, shift, g.cp_price)
        assert -f1 == pytest.approx(c1[k])
        assert -f2 == pytest.approx(c2[k])
        assert agent_payoff(a, shift, s1, s2, g.cp_price) == pytest.approx(-agent_costs(g, x)[k])


def test_tie_bills_period_one():
    a = Agent("a", 5.0, 5.0, 1.0)
    f1, f2 = period_payoffs(a, 1.0, 2.0)
    assert agent_payoff(a, 1.0, 10.0, 10.0, 2.0) == f1
    assert f1 != f2


@pytest.mark.parametrize("kwargs, field", [
    ({"penalty": 0.0}, "penalty"),
    ({"penalty": -1.0}, "penalty"),
    ({"demand_p1": -1.0}, "demand_p1"),
    ({"demand_p2": float("nan")}, "demand_p2"),
])
def test_agent_validation(kwargs, field):
    base = {"id": "a", "demand_p1": 1.0, "demand_p2": 2.0, "penalty": 0.5}
    with pytest.raises(InputError) as e:
        Agent(**{**base, **kwargs})
    assert e.value.field == field


def test_instance_validation():
    a = Agent("a", 1, 2, 0.5)
    with pytest.raises(InputError, match="at least 2"):
        GameInstance((a,), 1.0)
    with pytest.raises(InputError, match="unique"):
        GameInstance((a, a), 1.0)
    with pytest.raises(InputError) as e:
        GameInstance((a, Agent("b", 1, 2, 0.5)), 0.0)
    assert e.value.field == "cp_price"


def test_instance_dict_round_trip(cases, tmp_path):
    g = cases["table1"]
    path = tmp_path / "t1.json"
    path.write_text(json.dumps(g.to_dict()))
    back = load_instance(path)
    assert back == g


@pytest.mark.parametrize("data, field", [
    ({"agents": []}, "cp_price"),
    ({"cp_price": 1.0}, "agents"),
    ({"cp_price": 1.0, "agents": [{"demand_p1": 1, "demand_p2": 2}]}, "agents[0].penalty"),
    ({"cp_price": 1.0, "agents": [{"demand_p1": 1, "demand_p2": "x", "penalty": 1}]},
     "agents[0].demand_p2"),
    ({"cp_price": True, "agents": []}, "cp_price"),
])
def test_instance_errors_name_the_field(data, field):
    with pytest.raises(InputError) as e:
        instance_from_dict(data)
    assert e.value.field == field
