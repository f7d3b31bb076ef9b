"""Relational semantic knowledge: object/room-type priors and per-room beliefs.

A belief holds an independent Bernoulli probability per room that the target
can be found there.  Within an episode it is updated by Bayes' rule from room
level observations; across episodes a count store blends observed
found/searched frequencies into the prior.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

log = logging.getLogger(__name__)

SCHEMA_RSN = "seek-rsn/1"
SCHEMA_STORE = "seek-store/1"
UNKNOWN = "unknown"

D_SEARCH = 0.95   # P(detect | present) for a full coverage search
PSEUDO_COUNT = 5.0
UNKNOWN_OBJECT_P = 0.5

ROOM_TYPES = (
    "bathroom", "bedroom", "closet", "dining room", "entryway", "family room",
    "garage", "hallway", "library", "laundry room", "kitchen", "living room",
    "meeting room", "lounge", "office", "porch", "recreation room", "stairs",
    "toilet", "utility room", "tv room", "gym", "outdoor", "balcony", "bar",
    "classroom", "storage room",
)


@dataclass
class ObjectPrior:
    room_probs: dict
    p_easy: float


@dataclass
class PriorTable:
    room_types: list
    objects: dict

    def resolve_type(self, label):
        return label if label in self.room_types else UNKNOWN

    def has(self, object_class):
        return object_class in self.objects

    def prior(self, object_class, room_type):
        """P(object found in a room of this type); falls back to the unknown row."""
        obj = self.objects.get(object_class)
        if obj is None:
            return UNKNOWN_OBJECT_P
        rt = self.resolve_type(room_type)
        if rt in obj.room_probs:
            return obj.room_probs[rt]
        return obj.room_probs.get(UNKNOWN, UNKNOWN_OBJECT_P)

    def p_easy(self, object_class):
        obj = self.objects.get(object_class)
        return UNKNOWN_OBJECT_P if obj is None else obj.p_easy


@dataclass
class RoomBelief:
    object_class: str
    room_ids: list
    probs: np.ndarray
    low_confidence: bool = False

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)

    def index(self, room_id):
        return self.room_ids.index(room_id)

    def __getitem__(self, room_id):
        return float(self.probs[self.index(room_id)])

    def copy(self):
        return RoomBelief(self.object_class, list(self.room_ids), self.probs.copy(), self.low_confidence)


@dataclass
class ObservationEvent:
    room: int
    mode: str  # "entry" | "search"
    detected: bool = False
    position: tuple | None = None
    confidence: float | None = None

    def __post_init__(self):
        if self.mode not in ("entry", "search"):
            raise ValueError(f"unknown observation mode {self.mode!r}")


@dataclass
class PriorStore:
    counts: dict = field(default_factory=dict)  # (object, room) -> [found, searched]
    table: PriorTable | None = None

    def get(self, object_class, room_id):
        found, searched = self.counts.get((object_class, room_id), (0, 0))
        return found, searched

    def copy(self):
        return PriorStore({k: list(v) for k, v in self.counts.items()}, self.table)

    def __eq__(self, other):
        if not isinstance(other, PriorStore):
            return NotImplemented
        return {k: tuple(v) for k, v in self.counts.items()} == {k: tuple(v) for k, v in other.counts.items()}


# ---------------------------------------------------------------------------

def init_belief(table, graph, store, object_class):
    """Initial per-room belief: prior table blended with the store's counts."""
    low = not table.has(object_class)
    if low:
        log.warning("object %r not in prior table; using the uniform unknown row", object_class)
    rooms = graph.room_ids
    probs = np.empty(len(rooms))
    for i, rid in enumerate(rooms):
        prior = table.prior(object_class, graph.rooms[rid].label)
        found, searched = store.get(object_class, rid) if store is not None else (0, 0)
        probs[i] = (found + PSEUDO_COUNT * prior) / (searched + PSEUDO_COUNT)
    return RoomBelief(object_class, rooms, probs, low_confidence=low)


def posterior(p, detect_prob, detected):
    """Bayes update of a single room's probability (zero false-positive rate)."""
    if detected:
        return 1.0
    miss = p * (1.0 - detect_prob)
    return miss / (miss + (1.0 - p))


def update(belief, event, table):
    """Return a new belief with only ``event.room`` updated."""
    d = D_SEARCH if event.mode == "search" else table.p_easy(belief.object_class)
    out = belief.copy()
    i = out.index(event.room)
    out.probs[i] = posterior(float(out.probs[i]), d, event.detected)
    return out


def episode_commit(store, events, object_class):
    """Fold one finished episode's events into the count store (in place)."""
    searched = {}
    for ev in events:
        if ev.mode == "search":
            searched.setdefault(ev.room, False)
    for ev in events:
        if ev.detected and ev.room in searched:
            searched[ev.room] = True
    for room, found in sorted(searched.items()):
        counts = store.counts.setdefault((object_class, room), [0, 0])
        counts[1] += 1
        if found:
            counts[0] += 1
    return store


def brier_score(belief, truth):
    truth = set(truth)
    missing = truth - set(belief.room_ids)
    if missing:
        raise InputError(f"truth rooms not covered by belief: {sorted(missing)}")
    ind = np.array([1.0 if r in truth else 0.0 for r in belief.room_ids])
    return float(np.mean((belief.probs - ind) ** 2))


# ---------------------------------------------------------------------------
# files

def _load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e


def _check_prob(value, where):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not 0.0 <= value <= 1.0:
        raise InputError(f"field {where}: expected a probability in [0, 1], got {value!r}")
    return float(value)


def prior_table_from_dict(doc):
    if doc.get("schema") != SCHEMA_RSN:
        raise InputError(f"field schema: expected {SCHEMA_RSN!r}, got {doc.get('schema')!r}")
    types = list(doc.get("room_types", []))
    if UNKNOWN not in types:
        types.append(UNKNOWN)
    objects = {}
    for name, entry in doc.get("objects", {}).items():
        if "room_probs" not in entry or "p_easy" not in entry:
            raise InputError(f"field objects/{name}: needs room_probs and p_easy")
        probs = {}
        for rt, p in entry["room_probs"].items():
            if rt not in types:
                raise InputError(f"field objects/{name}/room_probs/{rt}: undeclared room type")
            probs[rt] = _check_prob(p, f"objects/{name}/room_probs/{rt}")
        objects[name] = ObjectPrior(probs, _check_prob(entry["p_easy"], f"objects/{name}/p_easy"))
    return PriorTable(types, objects)


def load_prior_table(path):
    return prior_table_from_dict(_load_json(path))


def prior_table_to_dict(table):
    return {
        "schema": SCHEMA_RSN,
        "room_types": list(table.room_types),
        "objects": {k: {"room_probs": dict(v.room_probs), "p_easy": v.p_easy} for k, v in table.objects.items()},
    }


def store_to_dict(store):
    rows = [
        {"object": obj, "room": room, "found": c[0], "searched": c[1]}
        for (obj, room), c in sorted(store.counts.items())
    ]
    return {"schema": SCHEMA_STORE, "counts": rows}


def store_from_dict(doc, table=None):
    if doc.get("schema") != SCHEMA_STORE:
        raise InputError(f"field schema: expected {SCHEMA_STORE!r}, got {doc.get('schema')!r}")
    counts = {}
    for i, row in enumerate(doc.get("counts", [])):
        try:
            obj, room, found, searched = row["object"], int(row["room"]), int(row["found"]), int(row["searched"])
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"field counts/{i}: malformed row ({e!r})") from e
        if not 0 <= found <= searched:
            raise InputError(f"field counts/{i}: need 0 <= found <= searched, got {found}/{searched}")
        counts[(obj, room)] = [found, searched]
    return PriorStore(counts, table)


def persist_store(store, path):
    """Atomically write the store (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name, dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(store_to_dict(store), fh, indent=1)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_store(path, table=None):
    return store_from_dict(_load_json(path), table)
