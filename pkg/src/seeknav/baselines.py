"""Reference room-selection planners sharing the GlobalAction interface.

Each baseline picks a room, then emits ``move(room)`` followed by
``search(room)`` on the next call (or just ``search`` if the robot is already
there).  Every room is selected once before any room is selected again.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .global_planner import GlobalAction
from .scene_graph import nearest_room

log = logging.getLogger(__name__)

SCHEMA_SEMDIST = "seek-semdist/1"
SEMDIST_FLOOR = 0.05


@dataclass
class BaselineState:
    room_ids: list
    visited: set = field(default_factory=set)
    pending: int | None = None
    rng: np.random.Generator | None = None
    order: list = field(default_factory=list)
    semdist: dict = field(default_factory=dict)  # room type -> semantic distance

    def unvisited(self):
        if len(self.visited) >= len(self.room_ids):
            self.visited.clear()
        return [r for r in self.room_ids if r not in self.visited]


def _emit(state, room, current):
    """Move-then-search protocol shared by all baselines."""
    if room == current:
        state.pending = None
        state.visited.add(room)
        return GlobalAction("search", room)
    state.pending = room
    return GlobalAction("move", room)


def _pending(state):
    room = state.pending
    state.pending = None
    state.visited.add(room)
    return GlobalAction("search", room)


# ---------------------------------------------------------------------------
# semantic utility

def semantic_distances(table, object_class):
    """Default semantic distance 1 - P(object | room type), floored."""
    return {rt: max(SEMDIST_FLOOR, 1.0 - table.prior(object_class, rt)) for rt in table.room_types}


def load_semdist(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != SCHEMA_SEMDIST:
        raise InputError(f"field schema: expected {SCHEMA_SEMDIST!r}, got {doc.get('schema')!r}")
    return doc["object"], {k: float(v) for k, v in doc["room_types"].items()}


def save_semdist(path, object_class, distances):
    doc = {"schema": SCHEMA_SEMDIST, "object": object_class, "room_types": dict(distances)}
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def semantic_utility(dist_sem, dist):
    return 1.0 / (max(dist_sem, SEMDIST_FLOOR) * max(dist, 1e-9))


def semantic_utility_next(state, graph, costs, robot_position, object_class=None):
    current = nearest_room(graph, robot_position)
    if state.pending is not None:
        return _pending(state)
    ci = costs.index(current)
    best, best_u = None, -np.inf
    for r in state.unvisited():
        label = graph.rooms[r].label
        ds = state.semdist.get(label)
        if ds is None:
            log.warning("no semantic distance for room type %r; using 1.0", label)
            ds = 1.0
        u = semantic_utility(ds, float(costs.move_cost[ci, costs.index(r)]))
        if u > best_u:
            best, best_u = r, u
    return _emit(state, best, current)


# ---------------------------------------------------------------------------
# room coverage

def coverage_next(state, graph, costs, robot_position):
    current = nearest_room(graph, robot_position)
    if state.pending is not None:
        return _pending(state)
    ci = costs.index(current)
    cand = state.unvisited()
    best = min(cand, key=lambda r: (float(costs.move_cost[ci, costs.index(r)]), r))
    return _emit(state, best, current)


# ---------------------------------------------------------------------------
# random

def random_next(state, graph, robot_position):
    current = nearest_room(graph, robot_position)
    if state.pending is not None:
        return _pending(state)
    if not state.order:
        state.visited.clear()
        state.order = [state.room_ids[i] for i in state.rng.permutation(len(state.room_ids))]
    room = state.order.pop(0)
    return _emit(state, room, current)
