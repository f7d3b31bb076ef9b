import json

import numpy as np
import pytest

from seeknav import DATA_DIR
from seeknav.scene_graph import build_graph, room_cost_matrix
from seeknav.semantic_belief import load_prior_table

OFFICE = DATA_DIR / "office_21.json"
PRIOR = DATA_DIR / "office_prior.json"
SCEN = DATA_DIR / "scenarios"


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def two_room_plan(width=4.0):
    return {
        "name": "two",
        "rooms": [
            {"id": 0, "label": "kitchen", "polygon": rect(0, 0, width, 4)},
            {"id": 1, "label": "office", "polygon": rect(width, 0, 2 * width, 4)},
        ],
        "doors": [{"rooms": [0, 1], "position": [width, 2.0], "width_m": 1.0}],
    }


def corridor_plan(length=10.0, width=1.2):
    return {
        "name": "corridor",
        "rooms": [{"id": 0, "label": "hallway", "polygon": rect(0, 0, length, width)}],
        "doors": [],
    }


def world_doc(plan, objects=(), **sensor):
    return {
        "schema": "seek-world/1",
        "floor_plan": plan,
        "cell_m": 0.1,
        "objects": [{"class": c, "position": list(p)} for c, p in objects],
        "sensor": sensor,
    }


@pytest.fixture(scope="session")
def office_graph():
    return build_graph(OFFICE, 1.0)


@pytest.fixture(scope="session")
def office_costs(office_graph):
    return room_cost_matrix(office_graph)


@pytest.fixture(scope="session")
def prior_table():
    return load_prior_table(PRIOR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
