"""Finite-state local planner.

Modes: ``nav`` executes the current global action (A* to a room anchor, or a
greedy coverage tour of the current room); ``active_search`` confirms a
tentative detection from a ring of viewpoints; ``inspect`` drives to a free
cell close to a confirmed candidate and emits ``finish``; ``done`` is terminal.

The controller hands room-level observation events to the caller through
``state.events`` and asks for a new global action with a ``replan`` command.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InspectUnreachableError
from .scene_graph import greedy_tour, room_path, shortest_path
from .semantic_belief import ObservationEvent
from .world_sim import ControlCommand

NAV, ACTIVE_SEARCH, INSPECT, DONE = "nav", "active_search", "inspect", "done"
_TRANSITIONS = {
    NAV: {ACTIVE_SEARCH},
    ACTIVE_SEARCH: {NAV, INSPECT},
    INSPECT: {DONE},
    DONE: set(),
}


@dataclass
class ControllerParams:
    c_promote: float = 0.3
    c_inspect: float = 0.9
    c_drop: float = 0.05
    r_suppress: float = 1.0
    eps: float = 1.0
    inspect_margin: float = 0.3
    p_view_real: float = 0.9
    p_view_spurious: float = 0.1
    r_view: float = 2.0
    ring_tol: float = 0.5
    n_views: int = 3
    view_ticks: int = 6
    min_view_hits: int = 2  # ticks with an associated detection for a view to count
    assoc_radius: float = 0.75
    max_rounds: int = 2
    seed_existence: float = 0.5

    @property
    def inspect_radius(self):
        return max(self.eps - self.inspect_margin, 0.5 * self.eps)


@dataclass
class CandidateBelief:
    position: tuple
    existence: float = 0.5
    views_taken: int = 0
    n_obs: int = 1

    def absorb(self, positions):
        """Running mean of detection positions."""
        x, y = self.position
        n = self.n_obs
        for px, py in positions:
            n += 1
            x += (px - x) / n
            y += (py - y) / n
        return replace(self, position=(x, y), n_obs=n)


def candidate_update(candidate, viewed, p_real=0.9, p_spurious=0.1, positions=()):
    """Bayes update of candidate existence after one view."""
    e = candidate.existence
    l_real = p_real if viewed else 1.0 - p_real
    l_spur = p_spurious if viewed else 1.0 - p_spurious
    num = l_real * e
    den = num + l_spur * (1.0 - e)
    post = num / den if den > 0 else e
    out = replace(candidate, existence=post, views_taken=candidate.views_taken + 1)
    return out.absorb(positions) if positions else out


@dataclass
class ControllerState:
    target: str
    params: ControllerParams = field(default_factory=ControllerParams)
    mode: str = NAV
    action: object = None
    waypoints: deque = field(default_factory=deque)   # cells
    cells: deque = field(default_factory=deque)       # next grid steps
    candidate: CandidateBelief | None = None
    viewpoints: deque = field(default_factory=deque)
    dwell: int = 0
    view_hits: list = field(default_factory=list)
    rounds: int = 0
    inspect_goal: tuple | None = None
    inspect_anchor: tuple | None = None
    suppressed: list = field(default_factory=list)
    events: list = field(default_factory=list)
    action_log: list = field(default_factory=list)
    promotions: int = 0
    transitions: list = field(default_factory=list)
    finish_position: tuple | None = None

    def set_mode(self, mode):
        if mode not in _TRANSITIONS[self.mode]:
            raise RuntimeError(f"illegal controller transition {self.mode} -> {mode}")
        self.transitions.append((self.mode, mode))
        self.mode = mode

    def drain_events(self):
        ev, self.events = self.events, []
        return ev


# ---------------------------------------------------------------------------
# planning helpers

def plan_coverage_tour(graph, room_id, start):
    """Greedy nearest-neighbour ordering of the room's location nodes."""
    return greedy_tour(graph, room_id, start)[0]


def _nav_waypoints(graph, world, action, robot):
    pos = world.center(robot.cell)
    if action.kind == "move":
        start = graph.nearest_location(pos)
        nodes, _ = shortest_path(graph, start, graph.anchor(action.target))
    else:
        ids = graph.location_ids(action.target)
        arr = np.array([graph.nodes[i].position for i in ids])
        start = ids[int(np.argmin(((arr - np.asarray(pos)) ** 2).sum(axis=1)))]
        tour = plan_coverage_tour(graph, action.target, start)
        nodes = [tour[0]]
        for a, b in zip(tour, tour[1:]):
            nodes.extend(room_path(graph, action.target, a, b)[1:])
    cells = deque()
    for n in nodes:
        c = world.snap(graph.nodes[n].position)
        if not cells or cells[-1] != c:
            cells.append(c)
    return cells


def plan_viewpoints(candidate, world, robot, params=None):
    """Up to ``n_views`` reachable free cells near a ring of radius ``r_view``
    around the candidate, ordered by path cost from the robot.  Falls back to
    repeated views from the current cell."""
    params = params or ControllerParams()
    est = candidate.position
    est_cell = _visible_snap(world, est, robot.cell)
    dist = world.distance_field(robot.cell)
    rr, cc, D = world.free_cells_within(est, params.r_view + params.ring_tol)
    keep = (D >= params.r_view - params.ring_tol) & np.isfinite(dist[rr, cc])
    rr, cc = rr[keep], cc[keep]
    vis = np.array([world.line_of_sight((int(r), int(c)), est_cell) for r, c in zip(rr, cc)], dtype=bool)
    rr, cc = rr[vis], cc[vis]
    chosen = []
    d_here = math.hypot(*(np.subtract(world.center(robot.cell), est)))
    if d_here <= params.r_view + params.ring_tol and world.line_of_sight(robot.cell, est_cell):
        chosen.append(robot.cell)
    if len(rr):
        xs = world.origin[0] + (cc + 0.5) * world.cell_m
        ys = world.origin[1] + (rr + 0.5) * world.cell_m
        for k in range(params.n_views):
            th = 2.0 * math.pi * k / params.n_views
            ideal = (est[0] + params.r_view * math.cos(th), est[1] + params.r_view * math.sin(th))
            d = np.round(np.hypot(xs - ideal[0], ys - ideal[1]), 9)
            i = int(np.argmin(d))
            cell = (int(rr[i]), int(cc[i]))
            if cell not in chosen and len(chosen) < params.n_views:
                chosen.append(cell)
    if not chosen:
        return [robot.cell] * params.n_views
    order = sorted(range(len(chosen)), key=lambda k: (round(float(dist[chosen[k]]), 9), k))
    return [chosen[k] for k in order]


def _visible_snap(world, position, from_cell, radius=1.0):
    """Free cell nearest to ``position`` that is visible from ``from_cell``.

    A noisy estimate close to a wall can snap to the far side of it; the
    robot just saw the object, so prefer cells on its own side.
    """
    rr, cc, D = world.free_cells_within(position, radius)
    order = np.lexsort((cc, rr, np.round(D, 9)))
    for k in order:
        cell = (int(rr[k]), int(cc[k]))
        if world.line_of_sight(from_cell, cell):
            return cell
    return world.snap(position)


def _inspect_goal(world, candidate, robot, params):
    """Nearest reachable free cell within ``inspect_radius`` of the estimate.
    Cells visible from the robot come first so a wall-hugging estimate is
    not approached from the wrong side."""
    rr, cc, D = world.free_cells_within(candidate.position, params.inspect_radius, strict=True)
    if not len(rr):
        raise InspectUnreachableError(f"no free cell within {params.inspect_radius} m of {candidate.position}")
    dist = world.distance_field(robot.cell)
    d = dist[rr, cc]
    ok = np.isfinite(d)
    if not ok.any():
        raise InspectUnreachableError(f"candidate at {candidate.position} is unreachable")
    rr, cc, D, d = rr[ok], cc[ok], D[ok], d[ok]
    hidden = np.array([not world.line_of_sight(robot.cell, (int(r), int(c))) for r, c in zip(rr, cc)])
    i = int(np.lexsort((np.round(D, 9), np.round(d, 9), hidden))[0])
    return (int(rr[i]), int(cc[i]))


# ---------------------------------------------------------------------------

def _near(p, q, r):
    return math.hypot(p[0] - q[0], p[1] - q[1]) <= r


def _resume_nav(state):
    state.candidate = None
    state.viewpoints.clear()
    state.cells.clear()
    state.view_hits = []
    state.dwell = 0
    state.rounds = 0
    state.set_mode(NAV)


def _drop(state):
    state.suppressed.append(state.candidate.position)
    _resume_nav(state)


def _confirm(state, graph, world):
    c = state.candidate
    room = world.room_of(c.position)
    if room is None:
        from .scene_graph import nearest_room
        room = nearest_room(graph, c.position)
    state.events.append(ObservationEvent(room, "search", True, c.position, c.existence))
    state.cells.clear()
    state.inspect_goal = None
    state.set_mode(INSPECT)


def _step_along(state, world, robot, goal):
    if not state.cells:
        path = world.walk_path(robot.cell, goal)
        if path is None:
            return None
        state.cells = deque(path)
    if not state.cells:
        return None
    return ControlCommand("step_to", cell=state.cells.popleft())


def step(state, global_action, observations, robot, graph, world):
    """Advance the controller by one tick; returns ``(state, command)``."""
    p = state.params
    if state.mode == DONE:
        return state, ControlCommand("finish", position=state.finish_position)
    targets = [d for d in observations if d.cls == state.target and d.confidence >= p.c_promote]

    if global_action is not None and global_action != state.action:
        state.action = global_action
        state.action_log.append(global_action)
        state.waypoints = _nav_waypoints(graph, world, global_action, robot)
        state.cells.clear()

    if state.mode == NAV and targets:
        fresh = [d for d in targets if not any(_near(d.position, s, p.r_suppress) for s in state.suppressed)]
        if fresh:
            best = max(fresh, key=lambda d: d.confidence)
            state.candidate = CandidateBelief(best.position, p.seed_existence)
            state.promotions += 1
            state.set_mode(ACTIVE_SEARCH)
            state.viewpoints = deque(plan_viewpoints(state.candidate, world, robot, p))
            state.cells.clear()
            state.dwell = 0
            state.view_hits = []
            targets = []

    if state.mode == ACTIVE_SEARCH:
        cand = state.candidate
        near = [d.position for d in targets if _near(d.position, cand.position, p.assoc_radius)]
        at_vp = bool(state.viewpoints) and robot.cell == state.viewpoints[0]
        if at_vp:
            if near:
                state.view_hits.append(near)
            state.dwell += 1
            if state.dwell < p.view_ticks:
                return state, ControlCommand("step_to", cell=robot.cell)
            viewed = len(state.view_hits) >= p.min_view_hits
            hits = [q for tick in state.view_hits for q in tick]
            state.candidate = candidate_update(cand, viewed, p.p_view_real, p.p_view_spurious, hits)
            state.viewpoints.popleft()
            state.view_hits = []
            state.dwell = 0
            state.cells.clear()
            e = state.candidate.existence
            if e >= p.c_inspect:
                _confirm(state, graph, world)
            elif e <= p.c_drop:
                _drop(state)
            elif not state.viewpoints:
                state.rounds += 1
                if state.rounds >= p.max_rounds:
                    _drop(state)
                else:
                    state.viewpoints = deque(plan_viewpoints(state.candidate, world, robot, p))
        else:
            if near:
                state.candidate = cand.absorb(near)
            cmd = _step_along(state, world, robot, state.viewpoints[0])
            if cmd is None:
                # viewpoint became unreachable; observe from here instead
                state.viewpoints[0] = robot.cell
                state.cells.clear()
                return state, ControlCommand("step_to", cell=robot.cell)
            return state, cmd

    if state.mode == INSPECT:
        cand = state.candidate
        near = [d.position for d in targets if _near(d.position, cand.position, p.assoc_radius)]
        if near:
            state.candidate = cand.absorb(near)
        cand = state.candidate
        stale = (
            state.inspect_goal is None
            or not _near(cand.position, state.inspect_anchor, 0.25)
            or (robot.cell == state.inspect_goal and not state.cells)
        )
        if stale:
            state.inspect_goal = _inspect_goal(world, cand, robot, p)
            state.inspect_anchor = cand.position
            state.cells.clear()
        if robot.cell == state.inspect_goal:
            state.finish_position = world.center(robot.cell)
            state.set_mode(DONE)
            return state, ControlCommand("finish", position=state.finish_position)
        cmd = _step_along(state, world, robot, state.inspect_goal)
        if cmd is None:
            raise InspectUnreachableError(f"cannot reach inspection cell near {cand.position}")
        return state, cmd

    # nav
    while True:
        if state.cells:
            return state, ControlCommand("step_to", cell=state.cells.popleft())
        while state.waypoints and state.waypoints[0] == robot.cell:
            state.waypoints.popleft()
        if not state.waypoints:
            break
        path = world.walk_path(robot.cell, state.waypoints[0])
        if path is None:
            state.waypoints.popleft()
            continue
        state.cells = deque(path)
    if state.action is not None:
        kind = "entry" if state.action.kind == "move" else "search"
        state.events.append(ObservationEvent(state.action.target, kind, False))
        state.action = None
    return state, ControlCommand("replan")
