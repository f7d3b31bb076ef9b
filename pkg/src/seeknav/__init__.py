"""Semantic object-goal search: layered scene graph, room belief, room-level
MDP planner, finite-state local controller and a grid-world simulator."""
from .errors import (
    GeometryError,
    InputError,
    InspectUnreachableError,
    NonConvergenceError,
    SeekError,
)

__version__ = "0.1.0"

DATA_DIR = __import__("pathlib").Path(__file__).parent / "data"

__all__ = [
    "DATA_DIR",
    "GeometryError",
    "InputError",
    "InspectUnreachableError",
    "NonConvergenceError",
    "SeekError",
    "__version__",
]
