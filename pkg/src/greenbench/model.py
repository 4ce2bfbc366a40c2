"""Domain types shared across the harness.

Canonical units everywhere: grams for CO2e masses, joules for energy,
bytes for data, seconds (or integer nanoseconds for timestamps) for time.
Conversions to kWh, MB, tonnes etc. happen only at the emission-model and
report boundaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Any, Iterable, Mapping, Optional, TextIO

# Well-known functional unit labels. Units are plain strings so that new
# scenarios can define their own labels without touching this module.
LOGIN = "Login"
LOGOUT = "Logout"
NO_ATTACHMENT = "NoAttachment"
ATTACHMENT = "Attachment"
READ = "Read"
REPLY = "Reply"
DELETE = "Delete"
SESSION = "Session"

#: Constituents of a full mail session, in execution order. Read appears
#: twice (read-then-reply and read-then-delete).
SESSION_RECIPE: tuple[str, ...] = (
    LOGIN, NO_ATTACHMENT, ATTACHMENT, READ, REPLY, READ, DELETE, LOGOUT,
)

BASIC_UNITS: tuple[str, ...] = (
    LOGIN, LOGOUT, NO_ATTACHMENT, ATTACHMENT, READ, REPLY, DELETE,
)

# Mandatory energy channels; providers may add more (e.g. "gpu").
CH_CPU = "cpu"
CH_MEMORY = "memory"
CH_MACHINE = "machine"
MANDATORY_CHANNELS = (CH_CPU, CH_MEMORY, CH_MACHINE)

#: Metrics a comparison can be computed over.
COMPARISON_METRICS = (
    "duration",
    "energy.machine",
    "energy.cpu",
    "energy.memory",
    "mean_power.machine",
    "network_bytes",
)

#: Number of retained samples a series needs to count as acceptance grade.
QUOTA = 100

STORE_FORMAT = "greenbench-results"
STORE_VERSION = 1

SECONDS_PER_YEAR = 365.25 * 86400.0


class StoreError(Exception):
    """Raised when a results store file is malformed or missing."""


@dataclass(frozen=True)
class EmissionFactors:
    """Constants of the emission model, in source units.

    ``grid_intensity`` is gCO2e/kWh, ``transfer_intensity_base`` is kWh/GB
    at ``base_year``, ``device_embodied_total`` is gCO2e over the whole
    device life, ``device_lifetime_seconds`` is seconds.
    """

    grid_intensity: float = 445.0
    joule_to_kwh: float = 2.7778e-7
    transfer_intensity_base: float = 0.06
    base_year: int = 2015
    halving_period_years: float = 1.0
    assessment_year: int = 2024
    device_embodied_total: float = 200_000.0
    device_lifetime_seconds: float = 4.5 * SECONDS_PER_YEAR
    resource_share: float = 1.0
    embodied_to_use_ratio: float = 0.21

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EmissionFactors":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown emission factor fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_factors(f: EmissionFactors) -> ValidationResult:
    """Check every invariant of an EmissionFactors value.

    Returns a verdict instead of raising so callers can report all
    violations at once (e.g. when validating a config file).
    """
    violations: list[str] = []
    positive = [
        ("grid_intensity", f.grid_intensity),
        ("joule_to_kwh", f.joule_to_kwh),
        ("transfer_intensity_base", f.transfer_intensity_base),
        ("halving_period_years", f.halving_period_years),
        ("device_embodied_total", f.device_embodied_total),
        ("device_lifetime_seconds", f.device_lifetime_seconds),
        ("embodied_to_use_ratio", f.embodied_to_use_ratio),
    ]
    for name, value in positive:
        if not value > 0:
            violations.append(f"{name} must be positive, got {value}")
    if not 0 < f.resource_share <= 1:
        violations.append(
            f"resource_share must be in (0,1], got {f.resource_share}"
        )
    if f.assessment_year < f.base_year:
        violations.append(
            f"assessment_year {f.assessment_year} precedes base_year {f.base_year}"
        )
    return ValidationResult(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class ConditionSpec:
    """Experimental condition a series was measured under."""

    adblock: bool = False
    tracking_profile: str = "permissive"
    pgp: bool = False
    injected_latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.tracking_profile not in ("permissive", "restrictive"):
            raise ValueError(
                f"tracking_profile must be 'permissive' or 'restrictive',"
                f" got {self.tracking_profile!r}"
            )
        if self.injected_latency_ms < 0:
            raise ValueError("injected_latency_ms must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ConditionSpec":
        return cls(**data)


def condition_label(c: ConditionSpec) -> str:
    """Canonical short label for a condition, used in store filenames.

    Two specs with equal fields always map to the same label, so data
    recorded under differently-named presets still lands together.
    """
    parts = []
    if c.adblock:
        parts.append("adblock")
    if c.tracking_profile != "permissive":
        parts.append(c.tracking_profile)
    if c.pgp:
        parts.append("pgp")
    if c.injected_latency_ms:
        parts.append(f"latency{c.injected_latency_ms}")
    return "+".join(parts) if parts else "baseline"


@dataclass(frozen=True)
class FunctionalUnitResult:
    """One execution of one functional unit.

    ``energy_j`` maps channel name to joules over the unit's window.
    ``error`` marks a failed run; failed runs never enter a series.
    """

    unit: str
    run_id: str
    started_ns: int
    ended_ns: int
    energy_j: Mapping[str, float]
    network_bytes: int
    error: Optional[str] = None

    def __post_init__(self) -> None:
        if self.ended_ns <= self.started_ns:
            raise ValueError(
                f"run {self.run_id}: ended_ns must be after started_ns"
            )
        object.__setattr__(self, "energy_j", dict(self.energy_j))
        missing = [c for c in MANDATORY_CHANNELS if c not in self.energy_j]
        if missing:
            raise ValueError(f"run {self.run_id}: missing energy channels {missing}")
        for channel, joules in self.energy_j.items():
            if joules < 0:
                raise ValueError(
                    f"run {self.run_id}: negative energy on {channel!r}"
                )
        if self.network_bytes < 0:
            raise ValueError(f"run {self.run_id}: negative network_bytes")

    @property
    def duration_s(self) -> float:
        return (self.ended_ns - self.started_ns) / 1e9

    @property
    def mean_power_w(self) -> dict[str, float]:
        # Derived on access so it is exactly energy/duration, always.
        d = self.duration_s
        return {channel: joules / d for channel, joules in self.energy_j.items()}

    @property
    def ok(self) -> bool:
        return self.error is None

    def metric(self, name: str) -> float:
        """Value of one comparison metric for this run."""
        if name == "duration":
            return self.duration_s
        if name == "network_bytes":
            return float(self.network_bytes)
        prefix, _, channel = name.partition(".")
        if prefix == "energy" and channel in self.energy_j:
            return self.energy_j[channel]
        if prefix == "mean_power" and channel in self.energy_j:
            return self.energy_j[channel] / self.duration_s
        raise KeyError(f"unknown metric {name!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "unit": self.unit,
            "run_id": self.run_id,
            "started_ns": self.started_ns,
            "ended_ns": self.ended_ns,
            "energy_j": dict(self.energy_j),
            "network_bytes": self.network_bytes,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FunctionalUnitResult":
        return cls(
            unit=data["unit"],
            run_id=data["run_id"],
            started_ns=data["started_ns"],
            ended_ns=data["ended_ns"],
            energy_j=data["energy_j"],
            network_bytes=data["network_bytes"],
            error=data.get("error"),
        )

@dataclass(frozen=True)
class FilterEvent:
    """Why one run was excluded from a series."""

    run_id: str
    reason: str  # "error" or "iqr"
    detail: str = ""


@dataclass(frozen=True)
class MeasurementSeries:
    """Cleaned collection of runs for one (service, condition, unit)."""

    service: str
    condition: ConditionSpec
    unit: str
    raw_count: int
    valid_count: int
    retained_count: int
    results: tuple[FunctionalUnitResult, ...]
    filter_log: tuple[FilterEvent, ...] = ()

    def __post_init__(self) -> None:
        if self.retained_count != len(self.results):
            raise ValueError("retained_count must match len(results)")
        for r in self.results:
            if not r.ok:
                raise ValueError(
                    f"run {r.run_id} carries an error and cannot be retained"
                )

    @property
    def acceptance_grade(self) -> bool:
        """True when the series meets the retained-sample quota."""
        return self.retained_count >= QUOTA

    def metric_values(self, metric: str) -> list[float]:
        return [r.metric(metric) for r in self.results]


@dataclass(frozen=True)
class ComparisonDelta:
    """Paired statistics for one metric between conditions A and B.

    ``delta`` is mean_a - mean_b: positive means condition B saves.
    Normality verdicts are stats.TestVerdict values; they are advisory.
    """

    metric: str
    mean_a: float
    mean_b: float
    delta: float
    delta_pct: float
    p_value: float
    normality_a: Any
    normality_b: Any
    significant: bool
    n_a: int = 0
    n_b: int = 0


@dataclass(frozen=True)
class UnitEmissions:
    """CO2e breakdown for one functional unit, in grams."""

    use_user_g: float
    use_network_g: float
    embodied_user_g: float
    embodied_network_g: float
    total_g: float

    @classmethod
    def build(
        cls,
        use_user_g: float,
        use_network_g: float,
        embodied_user_g: float,
        embodied_network_g: float,
    ) -> "UnitEmissions":
        return cls(
            use_user_g=use_user_g,
            use_network_g=use_network_g,
            embodied_user_g=embodied_user_g,
            embodied_network_g=embodied_network_g,
            total_g=use_user_g + use_network_g + embodied_user_g + embodied_network_g,
        )

    @property
    def components(self) -> tuple[float, float, float, float]:
        return (
            self.use_user_g,
            self.use_network_g,
            self.embodied_user_g,
            self.embodied_network_g,
        )


@dataclass(frozen=True)
class ScaleProjection:
    """Population-scale annual saving derived from one per-session figure."""

    population: float
    sessions_per_year: float
    per_session_saving_g: float
    annual_saving_t: float
    flight_equivalents: float


@dataclass(frozen=True)
class EmissionReport:
    per_unit: Mapping[str, UnitEmissions]
    projections: tuple[ScaleProjection, ...] = ()
    # Which source produced the Session row: "measured" or "composed".
    session_source: str = "measured"

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_unit", dict(self.per_unit))


# ---------------------------------------------------------------------------
# Results store: line-delimited JSON, one result per line, header first.

def store_header(service: str, condition_label: str, condition: ConditionSpec) -> dict[str, Any]:
    return {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "service": service,
        "condition_label": condition_label,
        "condition": condition.to_dict(),
    }


def write_results(
    fp: TextIO,
    service: str,
    condition_label: str,
    condition: ConditionSpec,
    results: Iterable[FunctionalUnitResult],
) -> None:
    """Write a complete store file: header line, then one result per line."""
    fp.write(json.dumps(store_header(service, condition_label, condition)) + "\n")
    append_results(fp, results)


def append_results(fp: TextIO, results: Iterable[FunctionalUnitResult]) -> None:
    for r in results:
        fp.write(json.dumps(r.to_dict()) + "\n")


@dataclass(frozen=True)
class StoreFile:
    service: str
    condition_label: str
    condition: ConditionSpec
    results: tuple[FunctionalUnitResult, ...]


def read_results(fp: TextIO) -> StoreFile:
    """Parse a store file written by write_results/append_results."""
    header_line = fp.readline()
    if not header_line.strip():
        raise StoreError("empty store file")
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise StoreError(f"malformed store header: {exc}") from exc
    if header.get("format") != STORE_FORMAT:
        raise StoreError(f"not a {STORE_FORMAT} file")
    if header.get("version") != STORE_VERSION:
        raise StoreError(f"unsupported store version {header.get('version')}")
    results = []
    for lineno, line in enumerate(fp, start=2):
        if not line.strip():
            continue
        try:
            results.append(FunctionalUnitResult.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise StoreError(f"bad record at line {lineno}: {exc}") from exc
    return StoreFile(
        service=header["service"],
        condition_label=header["condition_label"],
        condition=ConditionSpec.from_dict(header["condition"]),
        results=tuple(results),
    )
