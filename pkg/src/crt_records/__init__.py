"""Records and removed masses of the Poisson cutting process on continuum random trees."""

from __future__ import annotations

__version__ = "0.1.0"

from .crt_sampler import NestedSample, Params, joint_density, sample_excursion_tree, sample_spanned_tree
from .errors import (
    CRTRecordsError,
    DegenerateInputError,
    DomainError,
    IncompleteEventsError,
    InvalidParameterError,
    QuadratureError,
    SingularInputError,
    StructuralError,
)
from .randkit import SeedSpec
from .record_process import MarkRealization, coupled_records, simulate_halfline, simulate_records, theta_hat
from .removed_mass import removal_events, small_mass_asymptotics, theta_identities
from .tree_core import ExcursionTree, TreePoint, WeightedTree, excursion_to_tree, graft

__all__ = [
    "CRTRecordsError", "DegenerateInputError", "DomainError", "ExcursionTree", "IncompleteEventsError",
    "InvalidParameterError", "MarkRealization", "NestedSample", "Params", "QuadratureError", "SeedSpec",
    "SingularInputError", "StructuralError", "TreePoint", "WeightedTree", "__version__", "coupled_records",
    "excursion_to_tree", "graft", "joint_density", "removal_events", "sample_excursion_tree",
    "sample_spanned_tree", "simulate_halfline", "simulate_records", "small_mass_asymptotics", "theta_hat",
    "theta_identities",
]
