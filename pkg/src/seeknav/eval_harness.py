"""Episode and suite runner: wires planner, controller, simulator and belief."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import local_controller as lc
from . import world_sim as ws
from .baselines import (
    BaselineState,
    coverage_next,
    load_semdist,
    random_next,
    semantic_distances,
    semantic_utility_next,
)
from .errors import InputError, InspectUnreachableError, NoInstanceError, SeekError
from .global_planner import DEFAULT_MAX_ITER, DEFAULT_TOL, next_action, solve
from .scene_graph import load_floor_plan, room_cost_matrix, sample_locations
from .semantic_belief import (
    PriorStore,
    brier_score,
    episode_commit,
    init_belief,
    load_prior_table,
    load_store,
    persist_store,
    update,
)

log = logging.getLogger(__name__)

PLANNERS = ("seek", "semantic_utility", "coverage", "random")
CSV_COLUMNS = (
    "episode", "seed", "start_index", "planner", "success", "path_len_m",
    "shortest_len_m", "spl", "ticks", "brier_first", "brier_last",
)
T_MAX_DEFAULT = 20000


@dataclass
class ScenarioConfig:
    world: str
    prior: str
    object: str
    starts: list
    planners: list = field(default_factory=lambda: ["seek"])
    episodes_per_start: int = 1
    suite_seed: int = 0
    t_max: int = T_MAX_DEFAULT
    epsilon: float = 1.0
    carry_over: bool = False
    output: str | None = None
    store: str | None = None
    semdist: str | None = None
    spacing: float = 1.0
    placements: list = field(default_factory=list)

    def __post_init__(self):
        if not self.t_max > 0:
            raise InputError("field t_max: must be positive")
        for p in self.planners:
            if p not in PLANNERS:
                raise InputError(f"field planner: unknown planner {p!r} (expected one of {PLANNERS})")
        if not self.starts:
            raise InputError("field starts: at least one start position is required")
        if self.episodes_per_start < 1:
            raise InputError("field episodes_per_start: must be >= 1")


def load_scenario(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    return scenario_from_dict(doc, path.parent)


def scenario_from_dict(doc, base_dir=None):
    doc = dict(doc)
    if "planner" in doc:
        p = doc.pop("planner")
        doc["planners"] = [p] if isinstance(p, str) else list(p)
    for key in ("world", "prior", "object", "starts"):
        if key not in doc:
            raise InputError(f"field {key}: required")
    base = Path(base_dir) if base_dir is not None else None
    for key in ("world", "prior", "store", "semdist", "output"):
        if doc.get(key) is not None and base is not None and not Path(doc[key]).is_absolute():
            doc[key] = str(base / doc[key])
    known = set(ScenarioConfig.__dataclass_fields__)
    extra = set(doc) - known
    if extra:
        raise InputError(f"unknown scenario fields: {sorted(extra)}")
    doc["starts"] = [tuple(float(v) for v in s[:2]) for s in doc["starts"]]
    return ScenarioConfig(**doc)


# ---------------------------------------------------------------------------
# planners

class SeekPlanner:
    name = "seek"

    def __init__(self, graph, costs, table, object_class, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        self.graph, self.costs = graph, costs
        self.p_easy = table.p_easy(object_class)
        self.tol, self.max_iter = tol, max_iter
        self.last = None

    def next_action(self, robot_position, belief):
        value, policy = solve(self.costs, belief, self.p_easy, self.tol, self.max_iter)
        self.last = (value, policy)
        return next_action(policy, self.graph, robot_position)


class BaselinePlanner:
    def __init__(self, name, graph, costs, table, object_class, rng, semdist=None):
        self.name = name
        self.graph, self.costs = graph, costs
        self.state = BaselineState(list(costs.room_ids), rng=rng)
        if name == "semantic_utility":
            self.state.semdist = semdist if semdist is not None else semantic_distances(table, object_class)

    def next_action(self, robot_position, belief):
        if self.name == "coverage":
            return coverage_next(self.state, self.graph, self.costs, robot_position)
        if self.name == "random":
            return random_next(self.state, self.graph, robot_position)
        return semantic_utility_next(self.state, self.graph, self.costs, robot_position)


def make_planner(name, graph, costs, table, object_class, rng=None, semdist=None):
    if name == "seek":
        return SeekPlanner(graph, costs, table, object_class)
    if name in PLANNERS:
        return BaselinePlanner(name, graph, costs, table, object_class, rng, semdist)
    raise InputError(f"unknown planner {name!r}")


# ---------------------------------------------------------------------------
# episodes

@dataclass
class EpisodeResult:
    episode: int
    seed: int
    start_index: int
    planner: str
    success: int
    path_len: float
    shortest_len: float
    spl: float
    ticks: int
    actions: list
    brier: list
    reason: str = ""
    promotions: int = 0
    events: list = field(default_factory=list)
    trace: str | None = None

    def csv_row(self):
        def f(x):
            return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"

        return [
            str(self.episode), str(self.seed), str(self.start_index), self.planner, str(self.success),
            f(self.path_len), f(self.shortest_len), f(self.spl), str(self.ticks),
            f(self.brier[0] if self.brier else None), f(self.brier[-1] if self.brier else None),
        ]


def spl_contribution(success, shortest, path):
    if not success:
        return 0.0
    denom = max(path, shortest)
    return 1.0 if denom == 0 else shortest / denom


def spl(results):
    """Mean SPL contribution over episodes."""
    results = list(results)
    if not results:
        raise InputError("spl of an empty result list")
    return float(np.mean([r.spl for r in results]))


def episode_seed(suite_seed, episode_index):
    return int(suite_seed) ^ int(episode_index)


def _truth_rooms(world, graph, object_class):
    rooms = set()
    for o in world.instances(object_class):
        r = world.room_of(o.position)
        rooms.add(r if r is not None else graph.room_of_node(graph.nearest_location(o.position)))
    return rooms


def run_episode(config, world, planner_name, store, seed, start, *, graph, costs, table,
                episode=0, start_index=0, semdist=None, trace_path=None, params=None):
    """Run one seeded episode and return its EpisodeResult.

    The store is read for the initial belief and, when ``config.carry_over``,
    updated in place with the episode's observations.
    """
    obj = config.object
    world_rng, planner_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    planner = make_planner(planner_name, graph, costs, table, obj, planner_rng, semdist)
    params = params or lc.ControllerParams(eps=config.epsilon)
    robot = ws.spawn(world, start)
    belief = init_belief(table, graph, store, obj)
    truth = _truth_rooms(world, graph, obj)
    try:
        shortest = ws.oracle_shortest_length(world, world.center(robot.cell), obj, config.epsilon)
    except NoInstanceError:
        shortest = math.nan
    ctrl = lc.ControllerState(obj, params)
    detections = ws.sense(world, robot, world_rng, obj)
    brier, events, action_log = [], [], []
    action = None
    success, reason = 0, "timeout"
    steps = 0
    trace = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        while robot.tick < config.t_max:
            if action is None:
                steps += 1
                if steps > config.t_max:
                    break
                brier.append(brier_score(belief, truth))
                action = planner.next_action(world.center(robot.cell), belief)
                action_log.append(str(action))
            try:
                ctrl, cmd = lc.step(ctrl, action, detections, robot, graph, world)
            except InspectUnreachableError as e:
                reason = f"inspect_unreachable: {e}"
                break
            for ev in ctrl.drain_events():
                belief = update(belief, ev, table)
                events.append(ev)
            if cmd.kind == "replan":
                action, detections = None, []
                continue
            if trace is not None:
                trace.write(json.dumps({
                    "tick": robot.tick, "mode": ctrl.mode, "pose": list(world.center(robot.cell)),
                    "command": cmd.kind if cmd.cell is None else [cmd.kind, list(cmd.cell)],
                    "detections": [[d.position[0], d.position[1], d.cls, d.confidence] for d in detections],
                }) + "\n")
            if cmd.kind == "finish":
                fp = cmd.position
                ok = any(math.hypot(fp[0] - o.position[0], fp[1] - o.position[1]) < config.epsilon
                         for o in world.instances(obj))
                success, reason = (1, "found") if ok else (0, "wrong_target")
                break
            robot, detections = ws.step(world, robot, cmd, world_rng, target=obj)
    finally:
        if trace is not None:
            trace.close()
    brier.append(brier_score(belief, truth))
    if config.carry_over and store is not None:
        episode_commit(store, events, obj)
    path = robot.traveled
    contrib = spl_contribution(success, 0.0 if math.isnan(shortest) else shortest, path)
    return EpisodeResult(
        episode, seed, start_index, planner_name, success, path, shortest, contrib, robot.tick,
        action_log, brier, reason, ctrl.promotions, events, str(trace_path) if trace_path else None,
    )


# ---------------------------------------------------------------------------
# suites

@dataclass
class SuiteReport:
    planners: dict
    rows: list
    config: dict

    def to_dict(self):
        return {
            "planners": self.planners,
            "rows": [
                {k: v for k, v in asdict(r).items() if k != "events"} for r in self.rows
            ],
            "config": self.config,
        }


class Context:
    """Loaded scenario inputs shared by all episodes of a suite."""

    def __init__(self, config, world=None):
        self.config = config
        self.world = world if world is not None else ws.load_world(config.world)
        self.table = load_prior_table(config.prior)
        self.graph = sample_locations(load_floor_plan(self.world.floor_plan), config.spacing)
        self.costs = room_cost_matrix(self.graph)
        self.semdist = None
        if config.semdist:
            _, self.semdist = load_semdist(config.semdist)

    def initial_store(self):
        if self.config.store and Path(self.config.store).exists():
            return load_store(self.config.store, self.table)
        return PriorStore(table=self.table)

    def with_world(self, world):
        other = object.__new__(Context)
        other.__dict__.update(self.__dict__)
        other.world = world
        return other


def episode_schedule(config):
    """(episode index, start index) pairs, cycling through starts."""
    n = len(config.starts)
    return [(k, k % n) for k in range(n * config.episodes_per_start)]


def run_planner_episodes(ctx, planner_name, store=None, store_path=None):
    config = ctx.config
    store = store if store is not None else ctx.initial_store()
    rows = []
    for k, si in episode_schedule(config):
        seed = episode_seed(config.suite_seed, k)
        try:
            res = run_episode(
                config, ctx.world, planner_name, store, seed, config.starts[si],
                graph=ctx.graph, costs=ctx.costs, table=ctx.table,
                episode=k, start_index=si, semdist=ctx.semdist,
            )
        except SeekError as e:
            log.error("episode %d (%s) failed: %s", k, planner_name, e)
            res = EpisodeResult(k, seed, si, planner_name, 0, math.nan, math.nan, 0.0, 0, [], [], f"error: {e}")
        rows.append(res)
        if config.carry_over and store_path:
            persist_store(store, store_path)
    return rows


def summarize(rows, planners):
    out = {}
    for p in planners:
        spls = np.array([r.spl for r in rows if r.planner == p])
        succ = np.array([r.success for r in rows if r.planner == p])
        out[p] = {
            "mean_spl": float(spls.mean()) if len(spls) else math.nan,
            "std_spl": float(spls.std()) if len(spls) else math.nan,
            "success_rate": float(succ.mean()) if len(succ) else math.nan,
            "episodes": int(len(spls)),
        }
    return out


def results_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


def _config_echo(config):
    d = asdict(config)
    d["starts"] = [list(s) for s in config.starts]
    return d


def write_report(report, rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(rows), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1, default=str), encoding="utf-8")


def run_suite(config, out_dir=None, ctx=None):
    """Run every configured planner over starts x repeats; write CSV/JSON if
    an output directory is given (argument or ``config.output``)."""
    ctx = ctx or Context(config)
    rows = []
    for p in config.planners:
        store_path = None
        if config.store:
            store_path = config.store if len(config.planners) == 1 else f"{config.store}.{p}.json"
        rows.extend(run_planner_episodes(ctx, p, store_path=store_path))
    report = SuiteReport(summarize(rows, config.planners), rows, _config_echo(config))
    out_dir = out_dir or config.output
    if out_dir:
        write_report(report, rows, out_dir)
    return report


# ---------------------------------------------------------------------------
# unexpected-placement study

@dataclass
class PlacementRow:
    placement: int
    room: int
    prior: float
    planner: str
    result: EpisodeResult


def run_placement_study(config, ctx=None):
    """Move the single target instance through ``config.placements`` and run
    every planner from every start (no carry-over)."""
    ctx = ctx or Context(config)
    if not config.placements:
        raise InputError("field placements: empty")
    others = [o for o in ctx.world.objects if o.cls != config.object]
    out = []
    for pi, pl in enumerate(config.placements):
        pos = (float(pl["position"][0]), float(pl["position"][1]))
        world = ws.WorldModel(ctx.world.floor_plan, ctx.world.cell_m, others + [ws.ObjectInstance(config.object, pos)], ctx.world.sensor)
        if not world.is_free(world.cell_of(pos)):
            raise InputError(f"field placements/{pi}: position {pos} lies in an occupied cell")
        room = world.room_of(pos)
        prior = ctx.table.prior(config.object, ctx.graph.rooms[room].label)
        sub = ctx.with_world(world)
        for p in config.planners:
            for k, si in episode_schedule(config):
                seed = episode_seed(config.suite_seed, pi * 1000 + k)
                res = run_episode(
                    config, world, p, None, seed, config.starts[si],
                    graph=sub.graph, costs=sub.costs, table=sub.table,
                    episode=k, start_index=si, semdist=sub.semdist,
                )
                out.append(PlacementRow(pi, room, prior, p, res))
    return out


def bucket_means(rows, edges, planner):
    """Mean SPL per prior bucket.  ``edges`` are descending lower bounds, e.g.
    (0.75, 0.5, 0.0) gives buckets [0.75, 1], [0.5, 0.75), [0, 0.5)."""
    means = []
    for k, lo in enumerate(edges):
        hi = math.inf if k == 0 else edges[k - 1]
        vals = [r.result.spl for r in rows if r.planner == planner and lo <= r.prior < hi]
        means.append(float(np.mean(vals)) if vals else math.nan)
    return means


def placements_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("placement", "room", "prior") + CSV_COLUMNS)
    for r in rows:
        w.writerow([str(r.placement), str(r.room), f"{r.prior:.6f}"] + r.result.csv_row())
    return buf.getvalue()
