"""Comparison tables, emission breakdowns and scale projections.

Pure transformations over a read-only series store: a mapping from
(service, condition_label) to per-unit MeasurementSeries. Every number
in a rendered report is recomputed from stored series; nothing is
hand-entered. Human formats round to 4 significant figures, machine
formats carry full precision.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import stats
from .emissions import UnitDeltas, emission_breakdown
from .model import (
    COMPARISON_METRICS,
    SESSION,
    SESSION_RECIPE,
    ComparisonDelta,
    EmissionFactors,
    EmissionReport,
    MeasurementSeries,
    ScaleProjection,
    UnitEmissions,
)

# Tonnes CO2e for one Paris - New York round trip per passenger. Kept as
# a named constant so reports stay auditable; the flight-equivalents
# figure is exactly annual tonnes divided by this.
FLIGHT_RT_TONNES = 1.32

RENDER_FORMATS = ("plain_table", "csv", "json", "markdown")

SeriesStore = Mapping[tuple[str, str], Mapping[str, MeasurementSeries]]


class ReportError(Exception):
    """A report cannot be computed from the store as requested."""


@dataclass(frozen=True)
class ProjectionSpec:
    population: float
    sessions_per_year: float

    def __post_init__(self) -> None:
        if self.population <= 0 or self.sessions_per_year <= 0:
            raise ValueError("population and sessions_per_year must be positive")


@dataclass(frozen=True)
class ReportSpec:
    baseline: tuple[str, str]  # (service, condition_label)
    variant: tuple[str, str]
    units: tuple[str, ...]
    factors: EmissionFactors = field(default_factory=EmissionFactors)
    projections: tuple[ProjectionSpec, ...] = ()
    metrics: tuple[str, ...] = COMPARISON_METRICS

    def __post_init__(self) -> None:
        if tuple(self.baseline) == tuple(self.variant):
            raise ValueError("baseline and variant must differ")
        if not self.units:
            raise ValueError("at least one unit required")


def direction_of(delta: float) -> str:
    """Annotation for a baseline-minus-variant delta."""
    if delta > 0:
        return "saving"
    if delta < 0:
        return "increase"
    return "neutral"


@dataclass(frozen=True)
class ComparisonRow:
    unit: str
    delta: ComparisonDelta
    direction: str


def _series_for(store: SeriesStore, key: tuple[str, str], unit: str) -> MeasurementSeries:
    try:
        by_unit = store[tuple(key)]
    except KeyError:
        raise ReportError(
            f"no stored series for service {key[0]!r} condition {key[1]!r}"
        ) from None
    try:
        return by_unit[unit]
    except KeyError:
        raise ReportError(
            f"service {key[0]!r} condition {key[1]!r} has no unit {unit!r}"
        ) from None


def comparison_table(spec: ReportSpec, store: SeriesStore) -> tuple[ComparisonRow, ...]:
    """One row per (unit, metric), baseline vs variant."""
    rows = []
    for unit in spec.units:
        base = _series_for(store, spec.baseline, unit)
        var = _series_for(store, spec.variant, unit)
        for metric in spec.metrics:
            delta = stats.compare_series(base, var, metric)
            rows.append(
                ComparisonRow(
                    unit=unit, delta=delta, direction=direction_of(delta.delta)
                )
            )
    return tuple(rows)


def _mean_delta(
    store: SeriesStore, spec: ReportSpec, unit: str, metric: str
) -> float:
    base = _series_for(store, spec.baseline, unit)
    var = _series_for(store, spec.variant, unit)
    base_values = base.metric_values(metric)
    var_values = var.metric_values(metric)
    if not base_values or not var_values:
        raise ReportError(f"unit {unit!r} has an empty series for {metric!r}")
    return sum(base_values) / len(base_values) - sum(var_values) / len(var_values)


def unit_deltas(store: SeriesStore, spec: ReportSpec, unit: str) -> UnitDeltas:
    """Baseline-minus-variant mean deltas feeding the emission model."""
    return UnitDeltas(
        energy_j=_mean_delta(store, spec, unit, "energy.machine"),
        data_mb=_mean_delta(store, spec, unit, "network_bytes") / 1e6,
        duration_s=_mean_delta(store, spec, unit, "duration"),
    )


def _composed_session_deltas(store: SeriesStore, spec: ReportSpec) -> UnitDeltas:
    energy = data = duration = 0.0
    for unit in SESSION_RECIPE:
        energy += _mean_delta(store, spec, unit, "energy.machine")
        data += _mean_delta(store, spec, unit, "network_bytes") / 1e6
        duration += _mean_delta(store, spec, unit, "duration")
    return UnitDeltas(energy_j=energy, data_mb=data, duration_s=duration)


def _has_unit(store: SeriesStore, key: tuple[str, str], unit: str) -> bool:
    return unit in store.get(tuple(key), {})


def emission_table(spec: ReportSpec, store: SeriesStore) -> EmissionReport:
    """Per-unit four-component CO2e breakdown of baseline-vs-variant.

    The Session row uses the measured Session series when both sides
    have one, otherwise it is composed by summing the recipe's
    constituent deltas; the report records which.
    """
    per_unit: dict[str, UnitEmissions] = {}
    for unit in spec.units:
        if unit == SESSION:
            continue
        per_unit[unit] = emission_breakdown(
            unit_deltas(store, spec, unit), spec.factors
        )
    session_source = "measured"
    if SESSION in spec.units:
        if _has_unit(store, spec.baseline, SESSION) and _has_unit(
            store, spec.variant, SESSION
        ):
            deltas = unit_deltas(store, spec, SESSION)
        else:
            deltas = _composed_session_deltas(store, spec)
            session_source = "composed"
        per_unit[SESSION] = emission_breakdown(deltas, spec.factors)
    if spec.projections and SESSION not in per_unit:
        raise ReportError("projections need a Session row; add Session to units")
    projections = tuple(
        scale_projection(
            per_unit[SESSION].total_g, p.population, p.sessions_per_year
        )
        for p in spec.projections
    )
    return EmissionReport(
        per_unit=per_unit, projections=projections, session_source=session_source
    )


def scale_projection(
    per_session_g: float,
    population: float,
    sessions_per_year: float,
    flight_rt_tonnes: float = FLIGHT_RT_TONNES,
) -> ScaleProjection:
    """Annual population-scale saving from one per-session figure.

    tonnes/year = g/session x population x sessions/year x 1e-6.
    A negative per-session figure projects a regression, sign kept.
    """
    if population <= 0 or sessions_per_year <= 0:
        raise ValueError("population and sessions_per_year must be positive")
    if flight_rt_tonnes <= 0:
        raise ValueError("flight_rt_tonnes must be positive")
    annual_t = per_session_g * population * sessions_per_year * 1e-6
    return ScaleProjection(
        population=population,
        sessions_per_year=sessions_per_year,
        per_session_saving_g=per_session_g,
        annual_saving_t=annual_t,
        flight_equivalents=annual_t / flight_rt_tonnes,
    )


@dataclass(frozen=True)
class ReportBundle:
    """Everything one rendered report contains."""

    baseline: tuple[str, str]
    variant: tuple[str, str]
    comparison: tuple[ComparisonRow, ...]
    emissions: Optional[EmissionReport]
    factors: EmissionFactors


def build_report(spec: ReportSpec, store: SeriesStore) -> ReportBundle:
    return ReportBundle(
        baseline=tuple(spec.baseline),
        variant=tuple(spec.variant),
        comparison=comparison_table(spec, store),
        emissions=emission_table(spec, store),
        factors=spec.factors,
    )


# ---------------------------------------------------------------------------
# Rendering. plain_table/markdown round for humans; csv/json carry the
# raw repr so values survive a parse round-trip unchanged.

def _sig(x: float) -> str:
    return f"{x:.4g}"


def _full(x: float) -> str:
    return repr(float(x))


def render(bundle: ReportBundle, fmt: str = "plain_table") -> str:
    if fmt not in RENDER_FORMATS:
        raise ValueError(f"unknown format {fmt!r}; pick one of {RENDER_FORMATS}")
    if fmt == "json":
        return _render_json(bundle)
    if fmt == "csv":
        return _render_csv(bundle)
    if fmt == "markdown":
        return _render_tables(bundle, markdown=True)
    return _render_tables(bundle, markdown=False)


_COMPARISON_HEADER = (
    "unit", "metric", "baseline_mean", "variant_mean", "delta", "delta_pct",
    "p_value", "significant", "direction",
)
_EMISSION_HEADER = (
    "unit", "use_user_g", "use_network_g", "embodied_user_g",
    "embodied_network_g", "total_g",
)
_PROJECTION_HEADER = (
    "population", "sessions_per_year", "per_session_saving_g",
    "annual_saving_t", "flight_equivalents",
)


def _comparison_cells(row: ComparisonRow, num) -> list[str]:
    d = row.delta
    return [
        row.unit, d.metric, num(d.mean_a), num(d.mean_b), num(d.delta),
        num(d.delta_pct), num(d.p_value), str(d.significant), row.direction,
    ]


def _emission_cells(unit: str, e: UnitEmissions, num) -> list[str]:
    return [
        unit, num(e.use_user_g), num(e.use_network_g), num(e.embodied_user_g),
        num(e.embodied_network_g), num(e.total_g),
    ]


def _projection_cells(p: ScaleProjection, num) -> list[str]:
    return [
        num(p.population), num(p.sessions_per_year), num(p.per_session_saving_g),
        num(p.annual_saving_t), num(p.flight_equivalents),
    ]


def _text_table(header: Sequence[str], rows: list[list[str]], markdown: bool) -> str:
    if markdown:
        lines = [
            "| " + " | ".join(header) + " |",
            "| " + " | ".join("---" for _ in header) + " |",
        ]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines)
    widths = [
        max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]
    def fmt(cells: Sequence[str]) -> str:
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines)


def _render_tables(bundle: ReportBundle, markdown: bool) -> str:
    head = "##" if markdown else "=="
    parts = [
        f"{head} comparison: {bundle.baseline[0]}/{bundle.baseline[1]}"
        f" vs {bundle.variant[0]}/{bundle.variant[1]}",
        _text_table(
            _COMPARISON_HEADER,
            [_comparison_cells(r, _sig) for r in bundle.comparison],
            markdown,
        ),
    ]
    if bundle.emissions is not None:
        parts.append(
            f"{head} emission deltas (gCO2e, baseline minus variant,"
            f" session {bundle.emissions.session_source})"
        )
        parts.append(
            _text_table(
                _EMISSION_HEADER,
                [
                    _emission_cells(u, e, _sig)
                    for u, e in bundle.emissions.per_unit.items()
                ],
                markdown,
            )
        )
        if bundle.emissions.projections:
            parts.append(f"{head} scale projections")
            parts.append(
                _text_table(
                    _PROJECTION_HEADER,
                    [
                        _projection_cells(p, _sig)
                        for p in bundle.emissions.projections
                    ],
                    markdown,
                )
            )
    factor_items = ", ".join(
        f"{k}={v}" for k, v in sorted(bundle.factors.to_dict().items())
    )
    parts.append(f"{head} emission factors: {factor_items}")
    return "\n\n".join(parts) + "\n"


def _render_csv(bundle: ReportBundle) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("section",) + _COMPARISON_HEADER)
    for row in bundle.comparison:
        writer.writerow(["comparison"] + _comparison_cells(row, _full))
    if bundle.emissions is not None:
        writer.writerow(())
        writer.writerow(("section",) + _EMISSION_HEADER)
        for unit, e in bundle.emissions.per_unit.items():
            writer.writerow(["emission"] + _emission_cells(unit, e, _full))
        if bundle.emissions.projections:
            writer.writerow(())
            writer.writerow(("section",) + _PROJECTION_HEADER)
            for p in bundle.emissions.projections:
                writer.writerow(["projection"] + _projection_cells(p, _full))
    return out.getvalue()


def _render_json(bundle: ReportBundle) -> str:
    doc = {
        "baseline": {"service": bundle.baseline[0], "condition": bundle.baseline[1]},
        "variant": {"service": bundle.variant[0], "condition": bundle.variant[1]},
        "factors": bundle.factors.to_dict(),
        "comparison": [
            {
                "unit": r.unit,
                "metric": r.delta.metric,
                "baseline_mean": r.delta.mean_a,
                "variant_mean": r.delta.mean_b,
                "delta": r.delta.delta,
                "delta_pct": r.delta.delta_pct,
                "p_value": r.delta.p_value,
                "significant": r.delta.significant,
                "n_baseline": r.delta.n_a,
                "n_variant": r.delta.n_b,
                "direction": r.direction,
            }
            for r in bundle.comparison
        ],
    }
    if bundle.emissions is not None:
        doc["emissions"] = {
            "session_source": bundle.emissions.session_source,
            "per_unit": {
                unit: {
                    "use_user_g": e.use_user_g,
                    "use_network_g": e.use_network_g,
                    "embodied_user_g": e.embodied_user_g,
                    "embodied_network_g": e.embodied_network_g,
                    "total_g": e.total_g,
                }
                for unit, e in bundle.emissions.per_unit.items()
            },
            "projections": [
                {
                    "population": p.population,
                    "sessions_per_year": p.sessions_per_year,
                    "per_session_saving_g": p.per_session_saving_g,
                    "annual_saving_t": p.annual_saving_t,
                    "flight_equivalents": p.flight_equivalents,
                }
                for p in bundle.emissions.projections
            ],
        }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
