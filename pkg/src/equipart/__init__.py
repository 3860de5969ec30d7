"""Inference of hidden equal-size partitionings from noisy pairwise streams."""

from .core import (
    Assignment,
    ConstraintSet,
    NoiseGrid,
    PairCounts,
    PartitionSpec,
    conditional_placement_distribution,
    equivalent_up_to_relabeling,
    is_feasible,
    log_prior,
    same_partition,
    validate_constraints,
)
from .errors import EquipartError

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "ConstraintSet",
    "EquipartError",
    "NoiseGrid",
    "PairCounts",
    "PartitionSpec",
    "conditional_placement_distribution",
    "equivalent_up_to_relabeling",
    "is_feasible",
    "log_prior",
    "same_partition",
    "validate_constraints",
    "__version__",
]
