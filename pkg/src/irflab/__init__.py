"""Iterated random functions: simulation, stability checks and a model zoo."""
from ._backend import BACKEND
from .engine import (
    Drift,
    ModelSpec,
    backward_iterate,
    coalescence_time,
    coupling_distance,
    estimate_vstar,
    forward_iterate,
    negative_iterate,
    vstar_samples,
)
from .errors import IrfError

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Drift",
    "IrfError",
    "ModelSpec",
    "backward_iterate",
    "coalescence_time",
    "coupling_distance",
    "estimate_vstar",
    "forward_iterate",
    "negative_iterate",
    "vstar_samples",
    "__version__",
]
