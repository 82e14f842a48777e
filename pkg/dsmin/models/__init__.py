"""Models module initialization"""
from dsmin.models.schemas import (
    PermutationMode,
    InnerMode,
    StepRule,
    BoundKind,
    CheckedProperty,
    InstanceKind,
    SolverConfig,
    CertBound,
    IterationRecord,
    SolverTrace,
    OracleReport,
    InstanceSpec,
    ExperimentConfig,
    SeriesSummary,
    ExperimentSummary,
)

__all__ = [
    "PermutationMode",
    "InnerMode",
    "StepRule",
    "BoundKind",
    "CheckedProperty",
    "InstanceKind",
    "SolverConfig",
    "CertBound",
    "IterationRecord",
    "SolverTrace",
    "OracleReport",
    "InstanceSpec",
    "ExperimentConfig",
    "SeriesSummary",
    "ExperimentSummary",
]
