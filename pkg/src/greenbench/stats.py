"""Data cleaning and significance testing for measurement series.

A raw campaign produces runs that may have failed or been contaminated by
background activity. The pipeline here drops errored runs, then applies
IQR outlier filtering on machine energy (a run is kept or dropped
atomically so rows stay aligned across metrics), and provides the
statistical comparisons used by reports: Welch's t-test and the
D'Agostino-Pearson normality check. Normality verdicts are advisory;
Welch p-values are always reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .model import (
    SESSION_RECIPE,
    ComparisonDelta,
    ConditionSpec,
    FilterEvent,
    FunctionalUnitResult,
    MeasurementSeries,
    StoreFile,
)

DEFAULT_ALPHA = 0.05
FILTER_METRIC = "energy.machine"

#: Metrics that add up across constituent units (mean power does not).
SUMMABLE_METRICS = (
    "duration",
    "energy.machine",
    "energy.cpu",
    "energy.memory",
    "network_bytes",
)


class InsufficientDataError(ValueError):
    """Too few samples for the requested statistic."""


@dataclass(frozen=True)
class TestVerdict:
    statistic: float
    p_value: float
    alpha: float = DEFAULT_ALPHA
    significant: bool = False
    degenerate: bool = False

    def __post_init__(self) -> None:
        if self.significant != (self.p_value < self.alpha):
            raise ValueError("significant must equal p_value < alpha")


def _verdict(statistic: float, p_value: float, alpha: float, degenerate: bool = False) -> TestVerdict:
    return TestVerdict(
        statistic=float(statistic),
        p_value=float(p_value),
        alpha=alpha,
        significant=bool(p_value < alpha),
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class IqrResult:
    retained: tuple[float, ...]
    dropped: tuple[float, ...]
    bounds: tuple[float, float]


def iqr_bounds(values: Sequence[float]) -> tuple[float, float]:
    """Tukey fences [Q1 - 1.5*IQR, Q3 + 1.5*IQR].

    Quartiles use linear interpolation between order statistics (the
    "type 7" rule); bounds depend on this choice, so it is fixed here
    and stated in report metadata.
    """
    if len(values) < 4:
        raise InsufficientDataError(
            f"IQR filtering needs at least 4 values, got {len(values)}"
        )
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25.0, 75.0])
    iqr = q3 - q1
    return float(q1 - 1.5 * iqr), float(q3 + 1.5 * iqr)


def _iqr_partition(
    values: Sequence[float],
) -> tuple[list[int], list[tuple[int, float, float]], tuple[float, float]]:
    """Tukey fences re-fitted on the survivors until nothing more drops.

    Returns retained indices, dropped entries as (index, lo, hi) with the
    fences of the pass that dropped them, and the final fences. Stops
    early when fewer than 4 values survive, since quartiles are no
    longer estimable on the remainder.
    """
    idx = list(range(len(values)))
    dropped: list[tuple[int, float, float]] = []
    while True:
        lo, hi = iqr_bounds([values[i] for i in idx])
        keep = [i for i in idx if lo <= values[i] <= hi]
        if len(keep) == len(idx):
            return keep, dropped, (lo, hi)
        dropped.extend((i, lo, hi) for i in idx if not lo <= values[i] <= hi)
        if len(keep) < 4:
            return keep, dropped, (lo, hi)
        idx = keep


def iqr_filter(values: Sequence[float]) -> IqrResult:
    """Split values into retained and dropped, preserving order.

    Filtering is a fixed point: running it again on the retained set
    drops nothing further (whenever enough values survive for the
    fences to be defined at all).
    """
    keep, dropped, bounds = _iqr_partition(list(values))
    retained = tuple(values[i] for i in sorted(keep))
    dropped_values = tuple(values[i] for i, _, _ in sorted(dropped))
    return IqrResult(retained=retained, dropped=dropped_values, bounds=bounds)


def welch_t_test(
    a: Sequence[float], b: Sequence[float], alpha: float = DEFAULT_ALPHA
) -> TestVerdict:
    """Two-sided Welch unequal-variance t-test on two samples."""
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("Welch t-test needs at least 2 samples per side")
    arr_a = np.asarray(a, dtype=float)
    arr_b = np.asarray(b, dtype=float)
    if arr_a.var(ddof=1) == 0 and arr_b.var(ddof=1) == 0:
        # No variance on either side: the difference in means is exact,
        # a t statistic is undefined.
        if arr_a.mean() == arr_b.mean():
            return _verdict(0.0, 1.0, alpha, degenerate=True)
        sign = 1.0 if arr_a.mean() > arr_b.mean() else -1.0
        return _verdict(sign * math.inf, 0.0, alpha, degenerate=True)
    statistic, p_value = sps.ttest_ind(arr_a, arr_b, equal_var=False)
    return _verdict(statistic, p_value, alpha)


def normality_check(
    values: Sequence[float], alpha: float = DEFAULT_ALPHA
) -> TestVerdict:
    """D'Agostino-Pearson omnibus test; significant means non-normal."""
    if len(values) < 8:
        raise InsufficientDataError(
            f"normality check needs at least 8 values, got {len(values)}"
        )
    arr = np.asarray(values, dtype=float)
    if np.all(arr == arr[0]):
        return _verdict(0.0, 1.0, alpha, degenerate=True)
    with warnings.catch_warnings():
        # The verdict is advisory; scipy's small-n accuracy caveat from
        # kurtosistest would otherwise leak into every short comparison.
        warnings.filterwarnings("ignore", message="`kurtosistest` p-value")
        statistic, p_value = sps.normaltest(arr)
    return _verdict(statistic, p_value, alpha)


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    n: int
    ci95: tuple[float, float]


def summarize_values(values: Sequence[float]) -> Summary:
    if len(values) < 2:
        raise InsufficientDataError("summary needs at least 2 values")
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    half = 1.96 * sd / math.sqrt(len(arr))
    return Summary(mean=mean, sd=sd, n=len(arr), ci95=(mean - half, mean + half))


def summarize(series: MeasurementSeries, metric: str) -> Summary:
    """Mean, sample sd, count and normal-approximation 95% CI."""
    return summarize_values(series.metric_values(metric))


def build_series(
    service: str,
    condition: ConditionSpec,
    unit: str,
    raw: Iterable[FunctionalUnitResult],
    filter_metric: str = FILTER_METRIC,
) -> MeasurementSeries:
    """Assemble a cleaned series from raw runs of one unit.

    Errored runs are dropped first, then runs whose ``filter_metric``
    falls outside the IQR fences. All other metrics of a dropped run are
    dropped with it. With fewer than 4 valid runs the IQR step is skipped
    (nothing to estimate quartiles from).
    """
    raw = list(raw)
    log: list[FilterEvent] = []
    valid: list[FunctionalUnitResult] = []
    for r in raw:
        if r.unit != unit:
            raise ValueError(f"run {r.run_id} is for unit {r.unit!r}, not {unit!r}")
        if r.ok:
            valid.append(r)
        else:
            log.append(FilterEvent(run_id=r.run_id, reason="error", detail=r.error or ""))

    retained = valid
    if len(valid) >= 4:
        metric_values = [r.metric(filter_metric) for r in valid]
        keep, dropped, _ = _iqr_partition(metric_values)
        keep_set = set(keep)
        retained = [r for i, r in enumerate(valid) if i in keep_set]
        for i, lo, hi in sorted(dropped):
            log.append(FilterEvent(
                run_id=valid[i].run_id,
                reason="iqr",
                detail=f"{filter_metric}={metric_values[i]:g} outside [{lo:g}, {hi:g}]",
            ))

    return MeasurementSeries(
        service=service,
        condition=condition,
        unit=unit,
        raw_count=len(raw),
        valid_count=len(valid),
        retained_count=len(retained),
        results=tuple(retained),
        filter_log=tuple(log),
    )


def series_from_store(store: StoreFile) -> dict[str, MeasurementSeries]:
    """Rebuild cleaned per-unit series from a raw store file.

    Filtering always happens here, at load time; the store holds raw
    runs only, so a change to the filtering rule never needs stored
    data to be rewritten.
    """
    by_unit: dict[str, list[FunctionalUnitResult]] = {}
    for r in store.results:
        by_unit.setdefault(r.unit, []).append(r)
    return {
        unit: build_series(store.service, store.condition, unit, runs)
        for unit, runs in by_unit.items()
    }


def compare_series(
    a: MeasurementSeries,
    b: MeasurementSeries,
    metric: str,
    alpha: float = DEFAULT_ALPHA,
) -> ComparisonDelta:
    """Delta statistics for one metric between two series of the same unit."""
    if a.unit != b.unit:
        raise ValueError(f"unit mismatch: {a.unit!r} vs {b.unit!r}")
    values_a = a.metric_values(metric)
    values_b = b.metric_values(metric)
    mean_a = float(np.mean(values_a))
    mean_b = float(np.mean(values_b))
    delta = mean_a - mean_b
    if mean_a != 0:
        delta_pct = 100.0 * delta / mean_a
    else:
        delta_pct = 0.0 if delta == 0 else math.copysign(math.inf, delta)
    welch = welch_t_test(values_a, values_b, alpha=alpha)
    # Normality is advisory and needs n >= 8; small series skip it.
    normality_a = normality_check(values_a, alpha=alpha) if len(values_a) >= 8 else None
    normality_b = normality_check(values_b, alpha=alpha) if len(values_b) >= 8 else None
    return ComparisonDelta(
        metric=metric,
        mean_a=mean_a,
        mean_b=mean_b,
        delta=delta,
        delta_pct=delta_pct,
        p_value=welch.p_value,
        normality_a=normality_a,
        normality_b=normality_b,
        significant=welch.significant,
        n_a=len(values_a),
        n_b=len(values_b),
    )


@dataclass(frozen=True)
class ComposedSummary:
    """Session summary rebuilt from constituent units; always synthetic."""

    metrics: Mapping[str, Summary]
    synthetic: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "metrics", dict(self.metrics))


def compose_session(
    unit_summaries: Mapping[str, Mapping[str, Summary]],
    metrics: Sequence[str] = SUMMABLE_METRICS,
    recipe: Sequence[str] = SESSION_RECIPE,
) -> ComposedSummary:
    """Aggregate constituent unit summaries into a synthetic session.

    Means add up over the recipe (a unit appearing twice counts twice);
    variances add assuming independent units. Raises when a constituent
    is missing, naming the gap.
    """
    missing = sorted({u for u in recipe if u not in unit_summaries})
    if missing:
        raise ValueError(f"missing session constituents: {missing}")
    composed: dict[str, Summary] = {}
    for metric in metrics:
        mean = 0.0
        var = 0.0
        est_var = 0.0  # variance of the mean estimate
        n_min = None
        for unit in recipe:
            s = unit_summaries[unit][metric]
            mean += s.mean
            var += s.sd**2
            est_var += s.sd**2 / s.n
            n_min = s.n if n_min is None else min(n_min, s.n)
        half = 1.96 * math.sqrt(est_var)
        composed[metric] = Summary(
            mean=mean,
            sd=math.sqrt(var),
            n=n_min or 0,
            ci95=(mean - half, mean + half),
        )
    return ComposedSummary(metrics=composed)
