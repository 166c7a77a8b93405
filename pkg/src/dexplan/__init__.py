"""Hierarchical contact-mode planning for dexterous rigid-body manipulation."""

from .errors import (
    BudgetExhausted,
    DegenerateLabels,
    DexplanError,
    EmptyMesh,
    NoActions,
    ParseError,
    PenetrationTooDeep,
    ProjectionDiverged,
    SolverFailure,
    TooManyContacts,
    ValidationError,
)
from .se3 import DistanceWeights, Pose

__version__ = "0.1.0"

__all__ = [
    "Pose",
    "DistanceWeights",
    "DexplanError",
    "PenetrationTooDeep",
    "TooManyContacts",
    "SolverFailure",
    "ProjectionDiverged",
    "NoActions",
    "BudgetExhausted",
    "EmptyMesh",
    "ParseError",
    "ValidationError",
    "DegenerateLabels",
    "__version__",
]
