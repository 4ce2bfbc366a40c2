"""Metric providers: periodic energy and network-byte sampling.

Providers poll cumulative counters (powercap-style energy files in
microjoules, per-interface byte statistics) or synthesize a machine
energy counter from CPU utilisation. Each provider runs as its own
periodic producer thread appending to an append-only sample list; the
run orchestrator reads the lists only after sampling has stopped.

Samples keep the counter's native integer unit (microjoules, bytes).
Window integration interpolates and differences in integer arithmetic,
so adjacent windows add up exactly; conversion to float channel units
(joules) happens last.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import psutil

log = logging.getLogger(__name__)

ENERGY_SCALE = 1_000_000  # native microjoules per joule
DEFAULT_COUNTER_RANGE = 2**64
DEFAULT_PERIOD_MS = 100

KINDS = ("energy_counter", "network_counter", "machine_power_model")


class ProviderUnavailable(Exception):
    """The provider's source cannot be read; the message names it."""


@dataclass(frozen=True)
class Sample:
    """One reading of a cumulative channel.

    ``value_native`` is the wrap-corrected counter value in native units
    (microjoules for energy channels, bytes for network channels).
    """

    timestamp_ns: int
    channel: str
    value_native: int
    scale: int = 1  # native units per channel unit
    wrapped: bool = False

    @property
    def value(self) -> float:
        """Reading in channel units (joules or bytes)."""
        return self.value_native / self.scale


@dataclass(frozen=True)
class ProviderSpec:
    kind: str
    channel: str
    source: str = ""
    sample_period_ms: int = DEFAULT_PERIOD_MS

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.sample_period_ms < 10:
            raise ValueError("sample_period_ms must be >= 10")


@dataclass(frozen=True)
class MachineSpec:
    """Two-point power model of the host machine."""

    idle_w: float
    peak_w: float
    cores: int = 1

    def __post_init__(self) -> None:
        if self.peak_w < self.idle_w:
            raise ValueError("peak_w must be >= idle_w")
        if self.idle_w < 0:
            raise ValueError("idle_w must be >= 0")


def machine_power_estimate(
    cpu_util: Sequence[float], machine: MachineSpec
) -> list[float]:
    """Affine watts estimate for each utilisation value in [0, 1].

    Out-of-range utilisation is clamped with a warning rather than
    rejected: psutil can briefly report >100% around CPU hotplug.
    """
    watts = []
    for util in cpu_util:
        if not 0.0 <= util <= 1.0:
            log.warning("cpu utilisation %.4f outside [0,1], clamping", util)
            util = min(max(util, 0.0), 1.0)
        watts.append(machine.idle_w + util * (machine.peak_w - machine.idle_w))
    return watts


class _WrapCorrector:
    """Rebase a wrapping cumulative counter onto a monotone scale.

    The counter is assumed to wrap to zero upon reaching ``counter_range``.
    """

    def __init__(self, counter_range: int = DEFAULT_COUNTER_RANGE) -> None:
        self.counter_range = counter_range
        self._prev_raw: Optional[int] = None
        self._offset = 0

    def correct(self, raw: int) -> tuple[int, bool]:
        wrapped = False
        if self._prev_raw is not None and raw < self._prev_raw:
            self._offset += self.counter_range - self._prev_raw + raw
            self._prev_raw = raw
            return self._offset, True
        if self._prev_raw is None:
            self._offset = raw
        else:
            self._offset += raw - self._prev_raw
        self._prev_raw = raw
        return self._offset, wrapped


def _read_int_file(path: Path) -> int:
    try:
        return int(path.read_text().strip())
    except OSError as exc:
        raise ProviderUnavailable(f"cannot read counter {path}: {exc}") from exc
    except ValueError as exc:
        raise ProviderUnavailable(f"counter {path} is not an integer") from exc


class EnergyCounterReader:
    """Cumulative powercap-style energy counter (microjoule text file).

    A sibling ``max_energy_range_uj`` file, when present, advertises the
    wrap range; otherwise 2**64 is assumed.
    """

    scale = ENERGY_SCALE

    def __init__(self, spec: ProviderSpec) -> None:
        self.spec = spec
        self.path = Path(spec.source)
        counter_range = DEFAULT_COUNTER_RANGE
        range_file = self.path.parent / "max_energy_range_uj"
        if range_file.is_file():
            try:
                counter_range = int(range_file.read_text().strip())
            except (OSError, ValueError):
                pass
        self._corrector = _WrapCorrector(counter_range)

    def read(self) -> Sample:
        raw = _read_int_file(self.path)
        corrected, wrapped = self._corrector.correct(raw)
        return Sample(
            timestamp_ns=time.monotonic_ns(),
            channel=self.spec.channel,
            value_native=corrected,
            scale=self.scale,
            wrapped=wrapped,
        )


class NetworkCounterReader:
    """Cumulative byte counter for a network scope.

    Source forms:
      * ``"eth0"`` - rx+tx bytes of a system interface
      * ``"eth0:rx"`` / ``"eth0:tx"`` - one direction only
      * a directory containing ``rx_bytes``/``tx_bytes`` files
        (control-group or test-provided statistics)
      * a single file holding one cumulative byte count
    """

    scale = 1

    def __init__(self, spec: ProviderSpec) -> None:
        self.spec = spec
        self._paths = self._resolve(spec.source)
        self._corrector = _WrapCorrector()

    @staticmethod
    def _resolve(source: str) -> list[Path]:
        name, _, direction = source.partition(":")
        if direction and direction not in ("rx", "tx"):
            raise ProviderUnavailable(f"bad direction {direction!r} in {source!r}")
        candidate = Path(name)
        if candidate.is_dir():
            base = candidate
        elif candidate.is_file():
            return [candidate]
        else:
            base = Path("/sys/class/net") / name / "statistics"
            if not base.is_dir():
                raise ProviderUnavailable(
                    f"network source {source!r} not found (no interface or path)"
                )
        if direction:
            return [base / f"{direction}_bytes"]
        return [base / "rx_bytes", base / "tx_bytes"]

    def read(self) -> Sample:
        raw = sum(_read_int_file(p) for p in self._paths)
        corrected, wrapped = self._corrector.correct(raw)
        return Sample(
            timestamp_ns=time.monotonic_ns(),
            channel=self.spec.channel,
            value_native=corrected,
            scale=self.scale,
            wrapped=wrapped,
        )


class MachinePowerReader:
    """Synthesized whole-machine energy counter.

    Integrates the affine power estimate over wall time between reads,
    producing a cumulative microjoule counter like a hardware one.
    """

    scale = ENERGY_SCALE

    def __init__(self, spec: ProviderSpec, machine: MachineSpec) -> None:
        self.spec = spec
        self.machine = machine
        self._acc_uj = 0
        self._prev_ns = time.monotonic_ns()
        psutil.cpu_percent(None)  # prime the utilisation window

    def read(self) -> Sample:
        now_ns = time.monotonic_ns()
        util = psutil.cpu_percent(None) / 100.0
        watts = machine_power_estimate([util], self.machine)[0]
        self._acc_uj += round(watts * (now_ns - self._prev_ns) / 1e3)
        self._prev_ns = now_ns
        return Sample(
            timestamp_ns=now_ns,
            channel=self.spec.channel,
            value_native=self._acc_uj,
            scale=self.scale,
        )


Reader = Callable[[], Sample]


def make_reader(spec: ProviderSpec, machine: Optional[MachineSpec] = None) -> Reader:
    if spec.kind == "energy_counter":
        return EnergyCounterReader(spec).read
    if spec.kind == "network_counter":
        return NetworkCounterReader(spec).read
    if machine is None:
        raise ValueError("machine_power_model provider needs a MachineSpec")
    return MachinePowerReader(spec, machine).read


def read_energy_counter(spec: ProviderSpec) -> Sample:
    """One-shot read of an energy counter provider."""
    return EnergyCounterReader(spec).read()


def read_network_counter(spec: ProviderSpec) -> Sample:
    """One-shot read of a network counter provider."""
    return NetworkCounterReader(spec).read()


class _Producer(threading.Thread):
    def __init__(self, name: str, reader: Reader, period_ms: int) -> None:
        super().__init__(name=f"sampler-{name}", daemon=True)
        self.reader = reader
        self.period_s = period_ms / 1000.0
        self.samples: list[Sample] = []
        self._halt = threading.Event()
        self.failure: Optional[Exception] = None

    def run(self) -> None:
        try:
            self.samples.append(self.reader())
            while not self._halt.wait(self.period_s):
                self.samples.append(self.reader())
            self.samples.append(self.reader())  # closing sample on stop
        except Exception as exc:  # surfaced by SamplerSet.stop
            self.failure = exc

    def stop(self, flush_timeout_s: float = 5.0) -> None:
        self._halt.set()
        self.join(timeout=flush_timeout_s)


class SamplerSet:
    """Runs one producer per provider spec for the duration of a run."""

    def __init__(
        self,
        specs: Sequence[ProviderSpec],
        machine: Optional[MachineSpec] = None,
    ) -> None:
        channels = [s.channel for s in specs]
        if len(set(channels)) != len(channels):
            raise ValueError("provider channels must be unique")
        self.specs = list(specs)
        self.machine = machine
        self._producers: list[_Producer] = []

    def start(self) -> None:
        self._producers = [
            _Producer(s.channel, make_reader(s, self.machine), s.sample_period_ms)
            for s in self.specs
        ]
        for p in self._producers:
            p.start()

    def stop(self) -> dict[str, tuple[Sample, ...]]:
        """Stop all producers and return their series, keyed by channel."""
        for p in self._producers:
            p.stop()
        for p in self._producers:
            if p.failure is not None:
                raise ProviderUnavailable(
                    f"provider {p.name} failed: {p.failure}"
                ) from p.failure
        return {
            spec.channel: tuple(producer.samples)
            for spec, producer in zip(self.specs, self._producers)
        }


@dataclass(frozen=True)
class IntegrationResult:
    value_native: int
    scale: int
    extrapolated: bool = False

    @property
    def value(self) -> float:
        """Windowed delta in channel units (joules or bytes)."""
        return self.value_native / self.scale


def _value_at(samples: Sequence[Sample], t_ns: int) -> tuple[int, bool]:
    """Counter value at t by linear interpolation, in native units.

    Interpolation is integer arithmetic (floor division of exact
    products), so repeated evaluation is deterministic and window
    differences add exactly.
    """
    first, last = samples[0], samples[-1]
    if t_ns <= first.timestamp_ns:
        return first.value_native, t_ns < first.timestamp_ns
    if t_ns >= last.timestamp_ns:
        return last.value_native, t_ns > last.timestamp_ns
    # binary search for the bracketing pair
    lo, hi = 0, len(samples) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if samples[mid].timestamp_ns <= t_ns:
            lo = mid
        else:
            hi = mid
    s0, s1 = samples[lo], samples[hi]
    span = s1.timestamp_ns - s0.timestamp_ns
    if span == 0:
        return s0.value_native, False
    dv = s1.value_native - s0.value_native
    return s0.value_native + dv * (t_ns - s0.timestamp_ns) // span, False


def integrate(samples: Sequence[Sample], window: tuple[int, int]) -> IntegrationResult:
    """Cumulative-counter delta over [t0, t1] nanoseconds.

    The result is flagged extrapolated when the window is not fully
    covered by samples (the counter is then held at its edge value).
    """
    if not samples:
        raise ValueError("cannot integrate an empty sample series")
    t0, t1 = window
    if t1 < t0:
        raise ValueError("window end precedes window start")
    v0, extra0 = _value_at(samples, t0)
    v1, extra1 = _value_at(samples, t1)
    return IntegrationResult(
        value_native=v1 - v0,
        scale=samples[0].scale,
        extrapolated=extra0 or extra1,
    )
