import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seeknav.errors import InputError, NonConvergenceError
from seeknav.global_planner import (
    P_FLOOR,
    GlobalAction,
    MdpModel,
    build_mdp,
    next_action,
    policy_to_dict,
    solve,
    value_iteration,
)
from seeknav.scene_graph import CostMatrix
from seeknav.semantic_belief import D_SEARCH, RoomBelief

from oracles import enumerate_optimum, random_model

TIGHT = 1e-11


def two_room_model():
    return MdpModel(["A", "B"], np.array([[0.0, 5.0], [5.0, 0.0]]), np.array([10.0, 10.0]),
                    np.array([0.0, 0.0]), np.array([0.5, 1.0]))


def test_two_room_worked_example():
    v, pol = value_iteration(two_room_model(), tol=1e-12)
    assert v["A"] == 15.0 and v["B"] == 10.0 and v["goal"] == 0.0
    assert pol.action("A") == GlobalAction("move", "B")
    assert pol.action("B") == GlobalAction("search", "B")


def test_two_room_against_enumeration():
    assert np.allclose(enumerate_optimum(two_room_model()), [15.0, 10.0], atol=1e-12)


@pytest.mark.parametrize("c", [0.5, 3.0, 17.0, 100.0])
@pytest.mark.parametrize("p", [0.001, 0.05, 0.3, 0.999])
def test_single_room_geometric(c, p):
    m = MdpModel([0], np.zeros((1, 1)), np.array([c]), np.array([0.0]), np.array([p]))
    v, pol = value_iteration(m, tol=1e-13, max_iter=10**6)
    assert abs(v[0] - c / p) <= 1e-9 * max(1.0, c / p)
    assert pol.action(0).kind == "search"


def test_build_mdp_floor_and_scaling():
    costs = CostMatrix([3, 5], np.array([[0.0, 4.0], [4.0, 0.0]]), np.array([2.0, 2.0]), {3: 0, 5: 1})
    b = RoomBelief("x", [3, 5], [0.0, 0.4])
    m = build_mdp(costs, b, 0.5)
    assert m.goal_search[0] == P_FLOOR and m.goal_move[0] == P_FLOOR
    assert m.goal_search[1] == pytest.approx(0.4 * D_SEARCH)
    assert m.goal_move[1] == pytest.approx(0.2)
    b1 = RoomBelief("x", [3, 5], [1.0, 1.0])
    m1 = build_mdp(costs, b1, 1.0)
    assert np.all(m1.goal_move == 1.0 - P_FLOOR)
    assert np.all(m1.goal_search == D_SEARCH)
    with pytest.raises(InputError):
        build_mdp(costs, RoomBelief("x", [3], [0.5]), 0.5)


def test_action_structure():
    m = random_model(np.random.default_rng(0), 4)
    for i in range(4):
        acts = m.actions(i)
        assert acts[0] == i and sorted(acts) == [0, 1, 2, 3]


def test_bad_inputs():
    m = two_room_model()
    with pytest.raises(InputError):
        value_iteration(m, tol=0.0)
    m.goal_search = np.array([0.0, 1.0])
    with pytest.raises(InputError):
        value_iteration(m)


def test_nonconvergence_reports_residual():
    m = MdpModel([0], np.zeros((1, 1)), np.array([10.0]), np.array([0.0]), np.array([1e-3]))
    with pytest.raises(NonConvergenceError) as ei:
        value_iteration(m, tol=1e-9, max_iter=5)
    assert ei.value.residual > 1e-9 and ei.value.iterations == 5


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_matches_enumeration(seed, n):
    m = random_model(np.random.default_rng(seed), n)
    v, _ = value_iteration(m, tol=TIGHT, max_iter=10**6)
    assert np.allclose(v.J, enumerate_optimum(m), rtol=0, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.sampled_from([0.25, 0.5, 2.0, 8.0]))
def test_cost_scaling(seed, n, lam):
    m = random_model(np.random.default_rng(seed), n)
    v, pol = value_iteration(m, tol=1e-9, max_iter=10**6)
    m2 = MdpModel(m.room_ids, m.move_cost * lam, m.search_cost * lam, m.goal_move, m.goal_search)
    v2, pol2 = value_iteration(m2, tol=1e-9 * lam, max_iter=10**6)
    # powers of two scale every iterate exactly
    assert np.array_equal(v2.J, lam * v.J)
    assert np.array_equal(pol2.targets, pol.targets)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.data())
def test_monotone_in_probability(seed, n, data):
    r = np.random.default_rng(seed)
    costs = CostMatrix(list(range(n)), random_model(r, n).move_cost, r.uniform(1, 100, n), {i: i for i in range(n)})
    probs = r.uniform(0, 1, n)
    k = data.draw(st.integers(0, n - 1))
    raised = probs.copy()
    raised[k] = data.draw(st.floats(float(probs[k]), 1.0))
    J0 = solve(costs, RoomBelief("x", list(range(n)), probs), 0.3, tol=1e-10, max_iter=10**6)[0].J
    J1 = solve(costs, RoomBelief("x", list(range(n)), raised), 0.3, tol=1e-10, max_iter=10**6)[0].J
    assert np.all(J1 <= J0 + 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_policy_is_greedy(seed, n):
    m = random_model(np.random.default_rng(seed), n)
    v, pol = value_iteration(m, tol=1e-10, max_iter=10**6)
    Q = m.q_values(v.J)
    for i in range(n):
        j = int(pol.targets[i])
        assert Q[i, j] - Q[i].min() <= 1e-9
        # tie-break: search first, then the lowest room
        ties = [t for t in m.actions(i) if Q[i, t] == Q[i].min()]
        assert j == ties[0]


def test_determinism():
    m = random_model(np.random.default_rng(5), 8)
    a = value_iteration(m)
    b = value_iteration(m)
    assert a[0].J.tobytes() == b[0].J.tobytes()
    assert np.array_equal(a[1].targets, b[1].targets)


def test_next_action_uses_nearest_room(office_graph, office_costs, prior_table):
    from seeknav.semantic_belief import PriorStore, init_belief

    b = init_belief(prior_table, office_graph, PriorStore(), "fire extinguisher")
    v, pol = solve(office_costs, b, prior_table.p_easy("fire extinguisher"))
    for rid in office_graph.room_ids:
        pos = office_graph.nodes[office_graph.anchor(rid)].position
        assert next_action(pol, office_graph, pos) == pol.action(rid)
    d = policy_to_dict(v, pol)
    assert set(d["rooms"]) == {str(r) for r in office_graph.room_ids}
