"""Closed-loop optimization campaigns over schema-governed tabular data."""

from .acquisition import (
    AcquisitionSpec,
    CostModel,
    Proposal,
    ehvi_exact,
    expected_improvement,
    lower_confidence_bound,
    optimize_acquisition,
    probability_of_improvement,
    qehvi_mc,
)
from .campaign import Campaign, CampaignConfig, IterationRecord, impute, initial_design
from .gp import (
    GpModel,
    KernelConfig,
    PosteriorSlice,
    fit_gp,
    log_marginal_likelihood,
    predict,
    sample_posterior,
)
from .pareto import (
    ParetoFront,
    default_reference_point,
    dominates,
    hypervolume,
    pareto_front,
)
from .schema import FieldSpec, SchemaTemplate, TravelerForm
from .store import DataStore, ProvenanceStamp, RowSet
from .units import UnitRegistry, convert_unit

__version__ = "0.1.0"

__all__ = [
    "AcquisitionSpec", "Campaign", "CampaignConfig", "CostModel", "DataStore",
    "FieldSpec", "GpModel", "IterationRecord", "KernelConfig", "ParetoFront",
    "PosteriorSlice", "Proposal", "ProvenanceStamp", "RowSet", "SchemaTemplate",
    "TravelerForm", "UnitRegistry", "convert_unit", "default_reference_point",
    "dominates", "ehvi_exact", "expected_improvement", "fit_gp", "hypervolume",
    "impute", "initial_design", "log_marginal_likelihood",
    "lower_confidence_bound", "optimize_acquisition", "pareto_front", "predict",
    "probability_of_improvement", "qehvi_mc", "sample_posterior",
]
