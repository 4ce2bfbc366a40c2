"""User-side energy, traffic and CO2e benchmarking of web services.

The harness scripts repeatable user interactions (functional units) in
a real browser, samples energy and network counters while they run,
cleans the series, and converts deltas between conditions into CO2e
figures with user-side, network-side and embodied components.
"""

from .model import (
    BASIC_UNITS,
    COMPARISON_METRICS,
    SESSION_RECIPE,
    ComparisonDelta,
    ConditionSpec,
    EmissionFactors,
    EmissionReport,
    FunctionalUnitResult,
    MeasurementSeries,
    ScaleProjection,
    UnitEmissions,
    condition_label,
    validate_factors,
)
from .emissions import UnitDeltas, emission_breakdown, transfer_intensity, c_elec
from .report import ReportSpec, build_report, render, scale_projection
from .sampler import MachineSpec, ProviderSpec, Sample, SamplerSet, integrate

__version__ = "0.1.0"

__all__ = [
    "BASIC_UNITS",
    "COMPARISON_METRICS",
    "SESSION_RECIPE",
    "ComparisonDelta",
    "ConditionSpec",
    "EmissionFactors",
    "EmissionReport",
    "FunctionalUnitResult",
    "MachineSpec",
    "MeasurementSeries",
    "ProviderSpec",
    "ReportSpec",
    "Sample",
    "SamplerSet",
    "ScaleProjection",
    "UnitDeltas",
    "UnitEmissions",
    "build_report",
    "c_elec",
    "condition_label",
    "emission_breakdown",
    "integrate",
    "render",
    "scale_projection",
    "transfer_intensity",
    "validate_factors",
    "__version__",
]
