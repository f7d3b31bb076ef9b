"""Layered scene graph (locations/objects, rooms, building) built from floor plans."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import shapely
from shapely.geometry import LineString, Point, Polygon

from .errors import GeometryError, InputError, NoPathError, StateError

SCHEMA_DSG = "seek-dsg/1"
LOCATION = "location"
LAYER_LOCATION, LAYER_ROOM, LAYER_BUILDING = 1, 2, 3
WALL_INSET = 0.3

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3}
FLOOR_PLAN_SCHEMA = {
    "type": "object",
    "required": ["name", "rooms"],
    "properties": {
        "name": {"type": "string"},
        "rooms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "label", "polygon"],
                "properties": {
                    "id": {"type": "integer"},
                    "label": {"type": "string", "minLength": 1},
                    "polygon": {"type": "array", "items": _POINT, "minItems": 3},
                },
            },
        },
        "doors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["rooms", "position"],
                "properties": {
                    "rooms": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                    "position": _POINT,
                    "width_m": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}


@dataclass
class GraphNode:
    id: int
    layer: int
    position: tuple
    label: str
    heading: float = 0.0


@dataclass
class Room:
    id: int
    label: str
    polygon: list

    @property
    def shape(self):
        return Polygon(self.polygon)


@dataclass
class Door:
    rooms: tuple
    position: tuple
    width_m: float = 1.0


@dataclass
class CostMatrix:
    room_ids: list
    move_cost: np.ndarray
    search_cost: np.ndarray
    anchors: dict = field(default_factory=dict)

    def index(self, room_id):
        return self.room_ids.index(room_id)


class LayeredSceneGraph:
    """Hierarchical scene graph.

    Room ids are the integer ids declared in the floor plan; node ids are the
    graph's own numbering (building 0, rooms 1..n in room-id order, then
    location and object nodes in creation order).
    """

    layer_count = 3

    def __init__(self, name, rooms, doors):
        self.name = name
        self.rooms = {r.id: r for r in sorted(rooms, key=lambda r: r.id)}
        self.doors = list(doors)
        self.nodes = {}
        self.intra_edges = []
        self.parent = {}
        self.room_node = {}
        self.door_nodes = {}
        self.spacing = None
        self._next_id = 0
        self._room_rev = None
        self._invalidate()

    # -- construction helpers -------------------------------------------------

    def _add_node(self, layer, position, label, heading=0.0, node_id=None):
        if node_id is None:
            node_id = self._next_id
        if node_id in self.nodes:
            raise StateError(f"duplicate node id {node_id}")
        self._next_id = max(self._next_id, node_id + 1)
        self.nodes[node_id] = GraphNode(node_id, layer, (float(position[0]), float(position[1])), label, float(heading))
        self._invalidate()
        return node_id

    def _add_edge(self, a, b, length=None):
        if length is None:
            pa, pb = self.nodes[a].position, self.nodes[b].position
            length = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
        self.intra_edges.append((a, b, float(length)))
        self._invalidate()

    def _set_parent(self, child, parent):
        if child in self.parent:
            raise StateError(f"node {child} already has a parent")
        if self.nodes[parent].layer != self.nodes[child].layer + 1:
            raise StateError("parent must be exactly one layer above")
        self.parent[child] = parent

    def _invalidate(self):
        self._adj = None
        self._loc_cache = None
        self._room_pairs = {}
        self._cost = None

    # -- queries --------------------------------------------------------------

    @property
    def building_id(self):
        return 0

    @property
    def room_ids(self):
        return list(self.rooms)

    @property
    def parent_edges(self):
        return sorted(self.parent.items())

    def room_of_node(self, node_id):
        """Room id of a room node or of a layer-1 node's parent."""
        node = self.nodes[node_id]
        if node.layer == LAYER_ROOM:
            return self._node_room[node_id]
        return self._node_room[self.parent[node_id]]

    @property
    def _node_room(self):
        if self._room_rev is None or len(self._room_rev) != len(self.room_node):
            self._room_rev = {n: r for r, n in self.room_node.items()}
        return self._room_rev

    def layer_nodes(self, layer):
        return [n for n in self.nodes.values() if n.layer == layer]

    def location_ids(self, room_id=None):
        ids = [n.id for n in self.nodes.values() if n.layer == LAYER_LOCATION and n.label == LOCATION]
        if room_id is not None:
            rn = self.room_node[room_id]
            ids = [i for i in ids if self.parent.get(i) == rn]
        return ids

    def object_ids(self):
        return [n.id for n in self.nodes.values() if n.layer == LAYER_LOCATION and n.label != LOCATION]

    def adjacency(self):
        if self._adj is None:
            adj = {n: [] for n, node in self.nodes.items() if node.layer == LAYER_LOCATION}
            for a, b, w in self.intra_edges:
                if a in adj:
                    adj[a].append((b, w))
                    adj[b].append((a, w))
            for v in adj.values():
                v.sort()
            self._adj = adj
        return self._adj

    def _locations_array(self):
        if self._loc_cache is None:
            ids = np.array(sorted(self.location_ids()), dtype=np.int64)
            pos = np.array([self.nodes[i].position for i in ids], dtype=float).reshape(-1, 2)
            self._loc_cache = (ids, pos)
        return self._loc_cache

    def nearest_location(self, position):
        """Nearest sampled location node (ties: lowest node id)."""
        ids, pos = self._locations_array()
        if len(ids) == 0:
            raise StateError("location layer is empty")
        d2 = ((pos - np.asarray(position, dtype=float)) ** 2).sum(axis=1)
        return int(ids[int(np.argmin(d2))])

    def anchor(self, room_id):
        """Location node of ``room_id`` nearest to the room centroid."""
        ids = sorted(self.location_ids(room_id))
        if not ids:
            raise StateError(f"room {room_id} has no location nodes")
        c = np.asarray(self.nodes[self.room_node[room_id]].position)
        pos = np.array([self.nodes[i].position for i in ids])
        return ids[int(np.argmin(((pos - c) ** 2).sum(axis=1)))]

    def room_at(self, position):
        """Room whose polygon covers ``position`` (lowest id), or None."""
        for rid, room in self.rooms.items():
            if room.shape.covers(Point(position[0], position[1])):
                return rid
        return None

    # -- equality for round-trip checks ------------------------------------

    def __eq__(self, other):
        if not isinstance(other, LayeredSceneGraph):
            return NotImplemented
        return (
            self.name == other.name
            and self.rooms == other.rooms
            and self.doors == other.doors
            and self.nodes == other.nodes
            and self.intra_edges == other.intra_edges
            and self.parent == other.parent
            and self.room_node == other.room_node
            and self.door_nodes == other.door_nodes
            and self.spacing == other.spacing
        )

    def __repr__(self):
        return (
            f"LayeredSceneGraph({self.name!r}, rooms={len(self.rooms)}, "
            f"locations={len(self.location_ids())}, objects={len(self.object_ids())})"
        )


# ---------------------------------------------------------------------------
# building

def _read_doc(doc):
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
        except OSError as e:
            raise InputError(f"cannot read {path}: {e}") from e
    return doc


def _validate(doc, schema):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InputError(f"field {where}: {e.message}") from None


def load_floor_plan(doc):
    """Build the room and building layers from a floor-plan document or path."""
    doc = _read_doc(doc)
    _validate(doc, FLOOR_PLAN_SCHEMA)
    rooms = []
    seen = set()
    for i, r in enumerate(doc["rooms"]):
        if r["id"] in seen:
            raise InputError(f"field rooms/{i}/id: duplicate room id {r['id']}")
        seen.add(r["id"])
        poly = [(float(p[0]), float(p[1])) for p in r["polygon"]]
        room = Room(r["id"], r["label"], poly)
        shp = room.shape
        if not shp.is_valid or shp.area <= 0:
            raise GeometryError(f"room {r['id']}: polygon is not simple")
        rooms.append(room)
    for a_i, a in enumerate(rooms):
        for b in rooms[a_i + 1:]:
            if a.shape.intersection(b.shape).area > 1e-9:
                raise GeometryError(f"rooms {a.id} and {b.id} overlap")
    doors = []
    for i, d in enumerate(doc.get("doors", [])):
        ra, rb = d["rooms"]
        for rid in (ra, rb):
            if rid not in seen:
                raise InputError(f"field doors/{i}/rooms: unknown room id {rid}")
        if ra == rb:
            raise InputError(f"field doors/{i}/rooms: door must join two different rooms")
        doors.append(Door((ra, rb), (float(d["position"][0]), float(d["position"][1])), float(d.get("width_m", 1.0))))

    g = LayeredSceneGraph(doc["name"], rooms, doors)
    b = g._add_node(LAYER_BUILDING, _building_position(rooms), "building")
    assert b == g.building_id
    for rid, room in g.rooms.items():
        c = room.shape.centroid
        nid = g._add_node(LAYER_ROOM, (c.x, c.y), room.label)
        g.room_node[rid] = nid
        g._set_parent(nid, b)
    return g


def _building_position(rooms):
    c = shapely.union_all([r.shape for r in rooms]).centroid
    return (c.x, c.y)


def _axis_positions(lo, hi, spacing):
    n = int(math.floor((hi - lo - 2 * WALL_INSET) / spacing + 1e-9))
    mid = 0.5 * (lo + hi)
    return [mid + (k - (n - 1) / 2.0) * spacing for k in range(n)]


def _connected(nodes, edges):
    if not nodes:
        return True
    adj = {n: [] for n in nodes}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(nodes)


def sample_locations(graph, spacing=1.0):
    """Populate the location layer: a grid of pitch ``spacing`` inset from the
    walls of every room, plus one node per door midpoint."""
    if not spacing > 0:
        raise InputError(f"spacing must be positive, got {spacing}")
    if graph.location_ids():
        raise StateError("location layer already populated")
    for rid, room in graph.rooms.items():
        shp = room.shape
        inner = shp.buffer(-WALL_INSET + 1e-9)
        loose = shp.buffer(1e-9)
        minx, miny, maxx, maxy = shp.bounds
        xs = _axis_positions(minx, maxx, spacing)
        ys = _axis_positions(miny, maxy, spacing)
        grid = {}
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                if not inner.is_empty and inner.covers(Point(x, y)):
                    grid[(ix, iy)] = (x, y)
        if not grid:
            raise GeometryError(f"room {rid} is too small to hold a location node at spacing {spacing}")
        ids = {}
        rn = graph.room_node[rid]
        for key in sorted(grid, key=lambda k: (k[1], k[0])):
            nid = graph._add_node(LAYER_LOCATION, grid[key], LOCATION)
            graph._set_parent(nid, rn)
            ids[key] = nid
        edges = []
        for (ix, iy), nid in sorted(ids.items(), key=lambda kv: kv[1]):
            for nb in ((ix + 1, iy), (ix, iy + 1)):
                if nb in ids and loose.covers(LineString([grid[(ix, iy)], grid[nb]])):
                    edges.append((nid, ids[nb]))
        if not _connected(list(ids.values()), edges):
            raise GeometryError(f"room {rid}: sampled location nodes are not connected")
        for a, b in edges:
            graph._add_edge(a, b)
    for door in graph.doors:
        owner = min(door.rooms)
        nid = graph._add_node(LAYER_LOCATION, door.position, LOCATION)
        graph._set_parent(nid, graph.room_node[owner])
        graph.door_nodes[nid] = tuple(door.rooms)
        for rid in sorted(door.rooms):
            cand = [i for i in graph.location_ids(rid) if i not in graph.door_nodes]
            pos = np.array([graph.nodes[i].position for i in cand])
            d2 = ((pos - np.asarray(door.position)) ** 2).sum(axis=1)
            graph._add_edge(nid, cand[int(np.argmin(d2))])
    graph.spacing = float(spacing)
    return graph


def insert_object_node(graph, object_class, position):
    """Add an observed object as a layer-1 leaf attached to the nearest location node."""
    if not graph.location_ids():
        raise StateError("cannot insert an object before locations are sampled")
    near = graph.nearest_location(position)
    nid = graph._add_node(LAYER_LOCATION, position, object_class)
    graph._add_edge(nid, near)
    graph._set_parent(nid, graph.parent[near])
    return nid


def nearest_room(graph, position):
    return graph.room_of_node(graph.nearest_location(position))


# ---------------------------------------------------------------------------
# search

def _check_layer1(graph, node_id):
    node = graph.nodes.get(node_id)
    if node is None or node.layer != LAYER_LOCATION:
        raise InputError(f"node {node_id} is not a layer-1 node")


def shortest_path(graph, from_loc, to_loc):
    """A* over the location layer with a straight-line heuristic.

    Returns ``(path, length)``; raises NoPathError when unreachable.
    """
    _check_layer1(graph, from_loc)
    _check_layer1(graph, to_loc)
    if from_loc == to_loc:
        return [from_loc], 0.0
    adj = graph.adjacency()
    goal = graph.nodes[to_loc].position

    def h(n):
        p = graph.nodes[n].position
        return math.hypot(p[0] - goal[0], p[1] - goal[1])

    g = {from_loc: 0.0}
    came = {}
    closed = set()
    heap = [(h(from_loc), from_loc)]
    while heap:
        _, n = heapq.heappop(heap)
        if n in closed:
            continue
        if n == to_loc:
            path = [n]
            while n in came:
                n = came[n]
                path.append(n)
            path.reverse()
            return path, g[to_loc]
        closed.add(n)
        for m, w in adj[n]:
            if m in closed:
                continue
            cand = g[n] + w
            if cand < g.get(m, math.inf):
                g[m] = cand
                came[m] = n
                heapq.heappush(heap, (cand + h(m), m))
    raise NoPathError(f"no path between nodes {from_loc} and {to_loc}")


def _dijkstra(adj, source, allowed=None):
    dist = {source: 0.0}
    pred = {}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        for m, w in adj[n]:
            if allowed is not None and m not in allowed:
                continue
            nd = d + w
            if nd < dist.get(m, math.inf):
                dist[m] = nd
                pred[m] = n
                heapq.heappush(heap, (nd, m))
    return dist, pred


def _room_pairs(graph, room_id):
    """All-pairs distances and predecessors inside one room's location subgraph."""
    if room_id not in graph._room_pairs:
        nodes = graph.location_ids(room_id)
        allowed = set(nodes)
        adj = graph.adjacency()
        graph._room_pairs[room_id] = {n: _dijkstra(adj, n, allowed) for n in nodes}
    return graph._room_pairs[room_id]


def room_path(graph, room_id, a, b):
    """Node path between two location nodes of ``room_id`` staying inside the room."""
    pairs = _room_pairs(graph, room_id)
    _, pred = pairs[a]
    path = [b]
    while path[-1] != a:
        path.append(pred[path[-1]])
    path.reverse()
    return path


def greedy_tour(graph, room_id, start):
    """Greedy nearest-neighbour tour over the location nodes of a room.

    Distances are shortest paths inside the room; ties go to the lowest node
    id.  Returns ``(order, length)``.
    """
    pairs = _room_pairs(graph, room_id)
    if start not in pairs:
        raise InputError(f"node {start} is not a location node of room {room_id}")
    order = [start]
    remaining = set(pairs) - {start}
    length = 0.0
    cur = start
    while remaining:
        dist = pairs[cur][0]
        nxt = min(remaining, key=lambda n: (dist.get(n, math.inf), n))
        if not math.isfinite(dist.get(nxt, math.inf)):
            raise NoPathError(f"room {room_id}: node {nxt} unreachable inside room")
        length += dist[nxt]
        order.append(nxt)
        remaining.discard(nxt)
        cur = nxt
    return order, length


def room_cost_matrix(graph):
    """Room-to-room travel costs between anchors and per-room greedy tour lengths."""
    if graph._cost is not None:
        return graph._cost
    rooms = graph.room_ids
    if not graph.location_ids():
        raise StateError("locations not sampled")
    anchors = {r: graph.anchor(r) for r in rooms}
    n = len(rooms)
    move = np.zeros((n, n))
    adj = graph.adjacency()
    missing = []
    for i, ri in enumerate(rooms):
        dist, _ = _dijkstra(adj, anchors[ri])
        for j in range(i + 1, n):
            d = dist.get(anchors[rooms[j]])
            if d is None:
                missing.append((ri, rooms[j]))
                continue
            move[i, j] = move[j, i] = d
    if missing:
        raise NoPathError(f"unreachable room pairs: {missing}")
    search = np.array([greedy_tour(graph, r, anchors[r])[1] for r in rooms])
    graph._cost = CostMatrix(rooms, move, search, anchors)
    return graph._cost


# ---------------------------------------------------------------------------
# persistence

def graph_to_dict(graph):
    locations = []
    objects = []
    for nid in sorted(graph.nodes):
        node = graph.nodes[nid]
        if node.layer != LAYER_LOCATION:
            continue
        entry = {
            "id": nid,
            "position": list(node.position),
            "room": graph.room_of_node(nid),
            "heading": node.heading,
        }
        if node.label == LOCATION:
            if nid in graph.door_nodes:
                entry["door"] = list(graph.door_nodes[nid])
            locations.append(entry)
        else:
            entry["label"] = node.label
            objects.append(entry)
    return {
        "schema": SCHEMA_DSG,
        "name": graph.name,
        "rooms": [{"id": r.id, "label": r.label, "polygon": [list(p) for p in r.polygon]} for r in graph.rooms.values()],
        "doors": [{"rooms": list(d.rooms), "position": list(d.position), "width_m": d.width_m} for d in graph.doors],
        "spacing": graph.spacing,
        "locations": locations,
        "objects": objects,
        "edges": [[a, b, w] for a, b, w in graph.intra_edges],
    }


def graph_from_dict(doc):
    if doc.get("schema") != SCHEMA_DSG:
        raise InputError(f"field schema: expected {SCHEMA_DSG!r}, got {doc.get('schema')!r}")
    g = load_floor_plan({k: doc[k] for k in ("name", "rooms", "doors") if k in doc})
    try:
        for kind in ("locations", "objects"):
            for entry in doc.get(kind, []):
                label = LOCATION if kind == "locations" else entry["label"]
                nid = g._add_node(LAYER_LOCATION, entry["position"], label, entry.get("heading", 0.0), node_id=entry["id"])
                g._set_parent(nid, g.room_node[entry["room"]])
                if "door" in entry:
                    g.door_nodes[nid] = tuple(entry["door"])
        for a, b, w in doc.get("edges", []):
            g._add_edge(int(a), int(b), float(w))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed scene graph document: {e!r}") from e
    g.spacing = doc.get("spacing")
    return g


def save_graph(graph, path):
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=1), encoding="utf-8")


def load_graph(path):
    return graph_from_dict(_read_doc(path))


def build_graph(floor_plan, spacing=1.0):
    return sample_locations(load_floor_plan(floor_plan), spacing)
