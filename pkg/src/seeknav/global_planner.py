"""Room-level MDP and its value-iteration solution.

States are rooms plus an absorbing goal.  From room i the robot may search
room i (stay on failure) or move to any other room j (land in j on failure).
Each action reaches the goal with a probability taken from the room belief.
The problem is an undiscounted stochastic shortest path; every action has a
floored goal probability, so every stationary policy is proper.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputError, NonConvergenceError
from .scene_graph import nearest_room
from .semantic_belief import D_SEARCH

P_FLOOR = 1e-3
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class GlobalAction:
    kind: str  # "move" | "search"
    target: int

    def __str__(self):
        return f"{self.kind}({self.target})"


@dataclass
class MdpModel:
    room_ids: list
    move_cost: np.ndarray
    search_cost: np.ndarray
    goal_move: np.ndarray    # P(goal | move into room j), indexed by j
    goal_search: np.ndarray  # P(goal | search room i), indexed by i

    @property
    def n(self):
        return len(self.room_ids)

    def actions(self, i):
        """Action targets available in state i, in tie-break order (search first)."""
        return [i] + [j for j in range(self.n) if j != i]

    def q_values(self, J):
        """Bellman right-hand side as an (n, n) array; entry [i, j] is the
        action with target j (search when j == i)."""
        Q = self.move_cost + (1.0 - self.goal_move) * J
        idx = np.arange(self.n)
        Q[idx, idx] = self.search_cost + (1.0 - self.goal_search) * J
        return Q


@dataclass
class ValueFunction:
    room_ids: list
    J: np.ndarray

    def __getitem__(self, room_id):
        if room_id == "goal":
            return 0.0
        return float(self.J[self.room_ids.index(room_id)])


@dataclass
class Policy:
    room_ids: list
    targets: np.ndarray  # per state index, target room index (== own index for search)
    iterations: int
    residual: float

    def action(self, room_id):
        i = self.room_ids.index(room_id)
        j = int(self.targets[i])
        return GlobalAction("search" if j == i else "move", self.room_ids[j])


def _clamp(p):
    return np.clip(p, P_FLOOR, 1.0 - P_FLOOR)


def build_mdp(costs, belief, p_easy):
    if len(costs.room_ids) == 0:
        raise InputError("cannot build an MDP over an empty room set")
    missing = set(costs.room_ids) - set(belief.room_ids)
    if missing:
        raise InputError(f"belief does not cover rooms {sorted(missing)}")
    probs = np.array([belief[r] for r in costs.room_ids])
    return MdpModel(
        list(costs.room_ids),
        np.asarray(costs.move_cost, dtype=float),
        np.asarray(costs.search_cost, dtype=float),
        _clamp(p_easy * probs),
        _clamp(probs * D_SEARCH),
    )


def greedy_targets(model, J):
    Q = model.q_values(J)
    targets = np.empty(model.n, dtype=np.int64)
    for i in range(model.n):
        order = model.actions(i)
        targets[i] = order[int(np.argmin(Q[i, order]))]
    return targets


def value_iteration(model, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Solve the SSP by Jacobi Bellman iteration from J = 0.

    Returns ``(ValueFunction, Policy)``.  The policy is greedy in the final J
    with ties going to search, then to the lowest target room.
    """
    if not tol > 0:
        raise InputError("tol must be positive")
    if np.any(model.goal_search <= 0):
        raise InputError("search goal probabilities must be positive for a proper policy")
    if np.any(model.goal_move < 0) or np.any(model.goal_move > 1) or np.any(model.goal_search > 1):
        raise InputError("goal probabilities must lie in [0, 1]")
    J, iters, residual = kernels.value_iteration(
        np.ascontiguousarray(model.move_cost),
        np.ascontiguousarray(model.search_cost),
        np.ascontiguousarray(model.goal_move),
        np.ascontiguousarray(model.goal_search),
        float(tol),
        int(max_iter),
    )
    if not residual < tol:
        raise NonConvergenceError(residual, iters)
    J = np.asarray(J)
    return ValueFunction(list(model.room_ids), J), Policy(list(model.room_ids), greedy_targets(model, J), int(iters), float(residual))


def solve(costs, belief, p_easy, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    return value_iteration(build_mdp(costs, belief, p_easy), tol, max_iter)


def next_action(policy, graph, robot_position):
    """Receding-horizon query: the stored action of the robot's nearest room."""
    return policy.action(nearest_room(graph, robot_position))


def policy_to_dict(value, policy):
    out = {}
    for rid in policy.room_ids:
        a = policy.action(rid)
        out[str(rid)] = {"J": value[rid], "action": a.kind, "target": a.target}
    return {"rooms": out, "iterations": policy.iterations, "residual": policy.residual}


def dump_policy(value, policy, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(value, policy), fh, indent=1)
