"""Seeded 2D grid world: geometry, robot kinematics and a semantic detector."""
from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import Point

from . import kernels
from .errors import InputError, NoInstanceError, SimulationError
from .scene_graph import load_floor_plan

SCHEMA_WORLD = "seek-world/1"
WALL_HALF = 0.1
NOISE_CLIP = 4.0


@dataclass
class SensorParams:
    r_max: float = 5.0
    p0: float = 0.9
    sigma_pos: float = 0.2
    p_fp: float = 0.01
    conf_sigma: float = 0.1
    fp_conf_low: float = 0.3
    fp_conf_high: float = 0.6


@dataclass(frozen=True)
class ObjectInstance:
    cls: str
    position: tuple


@dataclass(frozen=True)
class Detection:
    position: tuple
    cls: str
    confidence: float
    spurious: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class ControlCommand:
    kind: str  # "step_to" | "finish" | "replan"
    cell: tuple | None = None
    position: tuple | None = None


@dataclass(frozen=True)
class RobotState:
    cell: tuple
    cell_m: float
    n_straight: int = 0
    n_diag: int = 0
    tick: int = 0

    @property
    def traveled(self):
        return self.cell_m * (self.n_straight + math.sqrt(2.0) * self.n_diag)


class WorldModel:
    """Occupancy grid rasterized from a floor plan plus ground-truth objects.

    Cell ``(r, c)`` covers ``[ox + c*cell, ox + (c+1)*cell) x [oy + r*cell, ...)``;
    a cell is free when its centre lies inside a room at least WALL_HALF from
    that room's boundary, or inside a door opening.
    """

    def __init__(self, floor_plan, cell_m=0.1, objects=(), sensor=None, graph=None):
        self.floor_plan = floor_plan
        self.graph = graph if graph is not None else load_floor_plan(floor_plan)
        self.cell_m = float(cell_m)
        self.sensor = sensor or SensorParams()
        self.objects = list(objects)
        shapes = [r.shape for r in self.graph.rooms.values()]
        minx, miny, maxx, maxy = shapely.union_all(shapes).bounds
        self.origin = (minx - self.cell_m, miny - self.cell_m)
        cols = int(math.ceil((maxx - minx) / self.cell_m)) + 2
        rows = int(math.ceil((maxy - miny) / self.cell_m)) + 2
        xs = self.origin[0] + (np.arange(cols) + 0.5) * self.cell_m
        ys = self.origin[1] + (np.arange(rows) + 0.5) * self.cell_m
        X, Y = np.meshgrid(xs, ys)
        free = np.zeros((rows, cols), dtype=bool)
        for shp in shapes:
            free |= shapely.contains_xy(shp.buffer(-WALL_HALF), X, Y)
        for door in self.graph.doors:
            rooms = shapely.union_all([self.graph.rooms[r].shape for r in door.rooms])
            opening = Point(door.position).buffer(door.width_m / 2.0).intersection(rooms)
            free |= shapely.contains_xy(opening, X, Y)
        self.free = free
        self._fields = OrderedDict()
        self._adjacency = None
        self._obj_pos = np.array([o.position for o in self.objects], dtype=float).reshape(-1, 2)
        self._obj_cells = [self.cell_of(o.position) for o in self.objects]

    # -- geometry -------------------------------------------------------------

    @property
    def shape(self):
        return self.free.shape

    def cell_of(self, position):
        c = int(math.floor((position[0] - self.origin[0]) / self.cell_m))
        r = int(math.floor((position[1] - self.origin[1]) / self.cell_m))
        return (r, c)

    def center(self, cell):
        return (
            self.origin[0] + (cell[1] + 0.5) * self.cell_m,
            self.origin[1] + (cell[0] + 0.5) * self.cell_m,
        )

    def in_bounds(self, cell):
        return 0 <= cell[0] < self.free.shape[0] and 0 <= cell[1] < self.free.shape[1]

    def is_free(self, cell):
        return self.in_bounds(cell) and bool(self.free[cell])

    def snap(self, position):
        """Nearest free cell to a metric position."""
        cell = self.cell_of(position)
        if self.is_free(cell):
            return cell
        rr, cc = np.nonzero(self.free)
        xs = self.origin[0] + (cc + 0.5) * self.cell_m
        ys = self.origin[1] + (rr + 0.5) * self.cell_m
        k = int(np.argmin((xs - position[0]) ** 2 + (ys - position[1]) ** 2))
        return (int(rr[k]), int(cc[k]))

    def room_of(self, position):
        return self.graph.room_at(position)

    def free_cells_within(self, position, radius, strict=False):
        """Free cells whose centres lie within ``radius`` of ``position``."""
        r0, c0 = self.cell_of(position)
        k = int(math.ceil(radius / self.cell_m)) + 1
        rows, cols = self.free.shape
        rs = np.arange(max(0, r0 - k), min(rows, r0 + k + 1))
        cs = np.arange(max(0, c0 - k), min(cols, c0 + k + 1))
        R, C = np.meshgrid(rs, cs, indexing="ij")
        X = self.origin[0] + (C + 0.5) * self.cell_m
        Y = self.origin[1] + (R + 0.5) * self.cell_m
        D = np.hypot(X - position[0], Y - position[1])
        ok = self.free[R, C] & ((D < radius) if strict else (D <= radius))
        return R[ok], C[ok], D[ok]

    # -- path queries ---------------------------------------------------------

    def distance_field(self, cell):
        """Grid distance (cells) from ``cell`` to every cell; LRU cached."""
        cell = (int(cell[0]), int(cell[1]))
        if cell in self._fields:
            self._fields.move_to_end(cell)
            return self._fields[cell]
        if kernels.USE_JIT:
            dist = kernels.grid_dijkstra(self.free, cell[0], cell[1])
        else:
            if self._adjacency is None:
                self._adjacency = kernels.grid_adjacency(self.free)
            dist = kernels.grid_dijkstra_np(self.free, cell[0], cell[1], adjacency=self._adjacency)
        dist.setflags(write=False)
        self._fields[cell] = dist
        if len(self._fields) > 32:
            self._fields.popitem(last=False)
        return dist

    def walk_path(self, a, b):
        """Cells to step through from ``a`` to ``b`` (``a`` excluded)."""
        a = (int(a[0]), int(a[1]))
        b = (int(b[0]), int(b[1]))
        if a == b:
            return []
        if kernels.line_walkable(self.free, a[0], a[1], b[0], b[1]):
            cells = kernels.line_cells(a[0], a[1], b[0], b[1])
            return [(int(r), int(c)) for r, c in cells[1:]]
        if kernels.USE_JIT:
            dist = kernels.grid_dijkstra(self.free, a[0], a[1], b[0], b[1])
        else:
            dist = self.distance_field(a)
        path = kernels.descend_path(self.free, dist, b[0], b[1])
        if path is None:
            return None
        return path[1:]

    def line_of_sight(self, a, b):
        return bool(kernels.los_clear(self.free, a[0], a[1], b[0], b[1]))

    def instances(self, cls):
        return [o for o in self.objects if o.cls == cls]


# ---------------------------------------------------------------------------

def spawn(world, position):
    return RobotState(world.snap(position), world.cell_m)


def _sense(world, robot, rng, target):
    s = world.sensor
    pos = world.center(robot.cell)
    out = []
    if len(world.objects):
        d = np.hypot(world._obj_pos[:, 0] - pos[0], world._obj_pos[:, 1] - pos[1])
        for k in np.nonzero(d < s.r_max)[0]:
            oc = world._obj_cells[k]
            if not kernels.los_clear(world.free, robot.cell[0], robot.cell[1], oc[0], oc[1]):
                continue
            frac = d[k] / s.r_max
            if rng.random() >= s.p0 * (1.0 - frac):
                continue
            noise = rng.normal(0.0, s.sigma_pos, 2)
            norm = math.hypot(noise[0], noise[1])
            if norm > NOISE_CLIP * s.sigma_pos:
                noise *= NOISE_CLIP * s.sigma_pos / norm
            conf = min(1.0, max(0.0, 1.0 - frac + rng.normal(0.0, s.conf_sigma)))
            obj = world.objects[k]
            out.append(Detection((obj.position[0] + noise[0], obj.position[1] + noise[1]), obj.cls, conf))
    if target is not None and rng.random() < s.p_fp:
        fp = _spurious_cell(world, robot, rng)
        if fp is not None:
            conf = rng.uniform(s.fp_conf_low, s.fp_conf_high)
            out.append(Detection(world.center(fp), target, conf, spurious=True))
    return out


def _spurious_cell(world, robot, rng, tries=64):
    r_cells = world.sensor.r_max / world.cell_m
    for _ in range(tries):
        rad = r_cells * math.sqrt(rng.random())
        ang = 2.0 * math.pi * rng.random()
        cell = (int(round(robot.cell[0] + rad * math.sin(ang))), int(round(robot.cell[1] + rad * math.cos(ang))))
        if world.is_free(cell) and world.line_of_sight(robot.cell, cell):
            return cell
    return None


def sense(world, robot, rng, target=None):
    return _sense(world, robot, rng, target)


def step(world, robot, command, rng, target=None):
    """Apply one command and run the sensing pass.

    ``step_to`` the robot's own cell is a hold (no motion, no cost).
    """
    if command.kind == "finish":
        return replace(robot, tick=robot.tick + 1), []
    if command.kind != "step_to":
        raise SimulationError(f"world cannot execute command {command.kind!r}")
    cell = tuple(command.cell)
    dr, dc = cell[0] - robot.cell[0], cell[1] - robot.cell[1]
    if max(abs(dr), abs(dc)) > 1:
        raise SimulationError(f"step from {robot.cell} to {cell} is not to an adjacent cell")
    if not world.is_free(cell):
        raise SimulationError(f"step into occupied cell {cell}")
    if dr == 0 and dc == 0:
        robot = replace(robot, tick=robot.tick + 1)
    elif dr != 0 and dc != 0:
        robot = replace(robot, cell=cell, n_diag=robot.n_diag + 1, tick=robot.tick + 1)
    else:
        robot = replace(robot, cell=cell, n_straight=robot.n_straight + 1, tick=robot.tick + 1)
    return robot, _sense(world, robot, rng, target)


def oracle_shortest_length(world, start, object_class, eps):
    """Shortest grid path length (m) from ``start`` to any free cell within
    ``eps`` of an instance of ``object_class``."""
    inst = world.instances(object_class)
    if not inst:
        raise NoInstanceError(f"no instance of {object_class!r} in world")
    s = world.snap(start)
    dist = world.distance_field(s)
    best = math.inf
    for o in inst:
        rr, cc, _ = world.free_cells_within(o.position, eps, strict=True)
        if len(rr):
            best = min(best, float(dist[rr, cc].min()))
    return best * world.cell_m


# ---------------------------------------------------------------------------
# files

def world_from_dict(doc, base_dir=None):
    if doc.get("schema") != SCHEMA_WORLD:
        raise InputError(f"field schema: expected {SCHEMA_WORLD!r}, got {doc.get('schema')!r}")
    fp = doc.get("floor_plan")
    if isinstance(fp, str):
        p = Path(fp)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        try:
            fp = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"field floor_plan: cannot load {p}: {e}") from e
    if not isinstance(fp, dict):
        raise InputError("field floor_plan: expected a path or an inline floor plan")
    sensor_doc = doc.get("sensor", {})
    unknown = set(sensor_doc) - set(SensorParams.__dataclass_fields__)
    if unknown:
        raise InputError(f"field sensor: unknown parameters {sorted(unknown)}")
    sensor = SensorParams(**{k: float(v) for k, v in sensor_doc.items()})
    objects = []
    for i, o in enumerate(doc.get("objects", [])):
        try:
            objects.append(ObjectInstance(str(o["class"]), (float(o["position"][0]), float(o["position"][1]))))
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise InputError(f"field objects/{i}: malformed object ({e!r})") from e
    cell = float(doc.get("cell_m", 0.1))
    if not cell > 0:
        raise InputError("field cell_m: must be positive")
    world = WorldModel(fp, cell, objects, sensor)
    for i, o in enumerate(objects):
        if not world.is_free(world.cell_of(o.position)):
            raise InputError(f"field objects/{i}: object {o.cls!r} at {o.position} lies in an occupied cell")
    return world


def load_world(doc):
    """Load a world from a dict or a JSON file path."""
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
        except OSError as e:
            raise InputError(f"cannot read {path}: {e}") from e
        return world_from_dict(data, path.parent)
    return world_from_dict(doc)
