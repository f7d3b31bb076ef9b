import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seeknav.global_planner import GlobalAction
from seeknav.local_controller import (
    _TRANSITIONS,
    ACTIVE_SEARCH,
    DONE,
    NAV,
    CandidateBelief,
    ControllerParams,
    ControllerState,
    candidate_update,
    plan_coverage_tour,
    plan_viewpoints,
    step,
)
from seeknav.scene_graph import build_graph, room_path
from seeknav.world_sim import Detection, load_world, spawn
from seeknav import world_sim as ws

from conftest import rect, two_room_plan, world_doc


def world_of(plan, objects=(), spacing=1.0, **sensor):
    w = load_world(world_doc(plan, objects, **sensor))
    g = build_graph(plan, spacing)
    return w, g


def open_plan(size=10.0):
    return {"name": "open", "rooms": [{"id": 0, "label": "office", "polygon": rect(0, 0, size, size)}], "doors": []}


def drive(state, world, graph, robot, action, seed=0, max_ticks=5000, inject=None):
    """Run the controller against the simulator until finish or replan."""
    rng = np.random.default_rng(seed)
    obs = ws.sense(world, robot, rng, state.target)
    events = []
    for tick in range(max_ticks):
        if inject is not None:
            obs = obs + inject(tick, robot)
        state, cmd = step(state, action, obs, robot, graph, world)
        events.extend(state.drain_events())
        if cmd.kind in ("finish", "replan"):
            return state, cmd, robot, events
        robot, obs = ws.step(world, robot, cmd, rng, state.target)
    raise AssertionError("controller did not terminate")


# -- candidate update ----------------------------------------------------------

def test_candidate_update_examples():
    c = CandidateBelief((1.0, 1.0), 0.5)
    assert candidate_update(c, True).existence == pytest.approx(0.9, abs=1e-15)
    assert candidate_update(c, False).existence == pytest.approx(0.1, abs=1e-15)
    one = CandidateBelief((1.0, 1.0), 1.0)
    assert candidate_update(one, True).existence == 1.0
    assert candidate_update(one, False).existence == 1.0
    assert candidate_update(c, True).views_taken == 1


def test_candidate_update_oracle_grid():
    for e in np.linspace(0, 1, 41):
        for viewed in (True, False):
            lr = Fraction(9, 10) if viewed else Fraction(1, 10)
            ls = Fraction(1, 10) if viewed else Fraction(9, 10)
            E = Fraction(float(e))
            want = float(lr * E / (lr * E + ls * (1 - E)))
            got = candidate_update(CandidateBelief((0, 0), float(e)), viewed).existence
            assert abs(got - want) <= 1e-12


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=20))
def test_position_is_running_mean(points):
    c = CandidateBelief(points[0], 0.5)
    c = candidate_update(c, True, positions=points[1:])
    mean = np.mean(np.array(points), axis=0)
    assert c.position == pytest.approx(tuple(mean), abs=1e-9)
    assert c.n_obs == len(points)


# -- viewpoints ------------------------------------------------------------------

def test_viewpoints_on_ring():
    w, _ = world_of(open_plan())
    robot = spawn(w, (1.0, 1.0))
    vps = plan_viewpoints(CandidateBelief((5.0, 5.0)), w, robot)
    assert len(vps) == 3 and len(set(vps)) == 3
    for cell in vps:
        assert abs(math.dist(w.center(cell), (5.0, 5.0)) - 2.0) <= 0.1
    dist = w.distance_field(robot.cell)
    costs = [dist[c] for c in vps]
    assert costs == sorted(costs)


def test_viewpoints_against_wall_are_free_and_visible():
    w, _ = world_of(two_room_plan())
    robot = spawn(w, (1.0, 2.0))
    cand = CandidateBelief((3.85, 0.8))
    vps = plan_viewpoints(cand, w, robot)
    est = w.cell_of((3.85, 0.8))
    for cell in vps:
        assert w.is_free(cell)
        assert w.line_of_sight(cell, est)


def test_viewpoints_fallback():
    plan = two_room_plan()
    plan["doors"] = []
    w = load_world(world_doc(plan))
    robot = spawn(w, (1.0, 2.0))
    vps = plan_viewpoints(CandidateBelief((6.0, 2.0)), w, robot)
    assert vps == [robot.cell] * 3


# -- coverage tour ---------------------------------------------------------------

def test_coverage_tour_matches_search_cost(office_graph, office_costs):
    for i, rid in enumerate(office_costs.room_ids):
        tour = plan_coverage_tour(office_graph, rid, office_costs.anchors[rid])
        assert sorted(tour) == sorted(office_graph.location_ids(rid))
        # executed node path: in-room shortest paths between consecutive tour stops
        nodes = [tour[0]]
        for a, b in zip(tour, tour[1:]):
            nodes.extend(room_path(office_graph, rid, a, b)[1:])
        length = sum(math.dist(office_graph.nodes[a].position, office_graph.nodes[b].position)
                     for a, b in zip(nodes, nodes[1:]))
        assert length == pytest.approx(office_costs.search_cost[i], abs=1e-9)


# -- mode machine -----------------------------------------------------------------

def test_move_navigates_toward_anchor():
    w, g = world_of(two_room_plan())
    robot = spawn(w, (1.0, 2.0))
    anchor = g.nodes[g.anchor(1)].position
    d0 = math.dist(w.center(robot.cell), anchor)
    _, cmd = step(ControllerState("mug"), GlobalAction("move", 1), [], robot, g, w)
    assert cmd.kind == "step_to"
    assert max(abs(cmd.cell[0] - robot.cell[0]), abs(cmd.cell[1] - robot.cell[1])) == 1
    state, cmd, robot, events = drive(ControllerState("mug"), w, g, robot, GlobalAction("move", 1))
    assert cmd.kind == "replan"
    assert math.dist(w.center(robot.cell), anchor) < min(d0, 0.1)
    assert [(e.room, e.mode, e.detected) for e in events] == [(1, "entry", False)]


def test_promotion_threshold():
    w, g = world_of(open_plan())
    robot = spawn(w, (2.0, 2.0))
    s = ControllerState("mug")
    s, _ = step(s, GlobalAction("search", 0), [Detection((6.0, 6.0), "mug", 0.29)], robot, g, w)
    assert s.mode == NAV
    s, _ = step(s, GlobalAction("search", 0), [Detection((6.0, 6.0), "mug", 0.5)], robot, g, w)
    assert s.mode == ACTIVE_SEARCH and s.promotions == 1
    s2 = ControllerState("mug")
    s2, _ = step(s2, GlobalAction("search", 0), [Detection((6.0, 6.0), "cup", 0.9)], robot, g, w)
    assert s2.mode == NAV


def test_full_coverage_emits_one_search_event():
    w, g = world_of(open_plan(6.0))
    robot = spawn(w, (1.0, 1.0))
    s = ControllerState("mug")
    s, cmd, robot, events = drive(s, w, g, robot, GlobalAction("search", 0))
    assert cmd.kind == "replan"
    assert [(e.room, e.mode) for e in events] == [(0, "search")]
    visited = {g.nearest_location(w.center(robot.cell))}
    assert visited  # robot ends on the room's grid


def test_confirms_and_finishes_within_eps():
    obj = (4.0, 2.0)
    w, g = world_of(open_plan(8.0), [("mug", obj)], p_fp=0.0)
    robot = spawn(w, (1.0, 1.0))
    s = ControllerState("mug")
    s, cmd, robot, events = drive(s, w, g, robot, GlobalAction("search", 0), seed=3)
    assert cmd.kind == "finish" and s.mode == DONE
    assert math.dist(cmd.position, obj) <= s.params.eps
    assert s.candidate.existence >= s.params.c_inspect
    assert [(e.room, e.mode, e.detected) for e in events] == [(0, "search", True)]
    # the finish command repeats once done
    _, again = step(s, None, [], robot, g, w)
    assert again.kind == "finish"


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transitions_legal_and_counted(seed):
    w, g = world_of(open_plan(8.0), [("mug", (6.5, 6.5))], p_fp=0.05)
    robot = spawn(w, (1.0, 1.0))
    s = ControllerState("mug")
    s, cmd, _, _ = drive(s, w, g, robot, GlobalAction("search", 0), seed=seed, max_ticks=20000)
    for a, b in s.transitions:
        assert b in _TRANSITIONS[a]
    assert sum(b == ACTIVE_SEARCH for _, b in s.transitions) == s.promotions
    if cmd.kind == "finish":
        assert s.candidate.existence >= s.params.c_inspect
    assert (s.mode == DONE) == (cmd.kind == "finish")


def test_dropped_candidate_is_suppressed():
    # a phantom that is only ever seen once is dropped and never promoted again
    w, g = world_of(open_plan(8.0), p_fp=0.0)
    robot = spawn(w, (1.0, 1.0))
    s = ControllerState("mug")
    seen = []

    def inject(tick, _robot):
        if tick == 0:
            return [Detection((5.0, 5.0), "mug", 0.5)]
        seen.append(s.mode)
        if s.suppressed:
            # strong repeat sightings inside the suppression radius
            return [Detection((5.3, 5.0), "mug", 0.9)]
        return []

    s, cmd, robot, _ = drive(s, w, g, robot, GlobalAction("search", 0), max_ticks=20000, inject=inject)
    assert ACTIVE_SEARCH in seen
    assert cmd.kind == "replan"
    assert s.promotions == 1
    assert len(s.suppressed) == 1 and math.dist(s.suppressed[0], (5.0, 5.0)) <= 1e-9


def test_inspect_unreachable_raises():
    from seeknav.errors import InspectUnreachableError
    from seeknav.local_controller import INSPECT

    w, g = world_of(open_plan(8.0))
    robot = spawn(w, (1.0, 1.0))
    s = ControllerState("mug", params=ControllerParams(eps=0.1, inspect_margin=0.0))
    s.set_mode(ACTIVE_SEARCH)
    s.set_mode(INSPECT)
    s.candidate = CandidateBelief((-3.0, -3.0), 0.95)  # outside the building
    with pytest.raises(InspectUnreachableError):
        step(s, None, [], robot, g, w)
