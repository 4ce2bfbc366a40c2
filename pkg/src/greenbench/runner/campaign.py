"""Campaign orchestration: repeated scenario runs with live sampling.

One browser session and one scenario execute at a time; metric
providers run concurrently as independent producers. Unit boundaries
are harness-side monotonic timestamps taken between steps, so the
composite Session window exactly spans its constituents and adjacent
units share boundary instants without overlap.
"""

from __future__ import annotations

import copy
import json
import re
import socket
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .. import stats
from ..model import (
    QUOTA,
    ConditionSpec,
    FunctionalUnitResult,
    MeasurementSeries,
    condition_label,
    write_results,
)
from ..sampler import MachineSpec, ProviderSpec, Sample, SamplerSet, integrate
from .conditions import ActiveCondition, CommandRunner, apply_condition, prepare_profile
from .scenario import ScenarioScript, ScenarioStep
from .webdriver import NoSuchElement, WebDriverError, WebDriverSession

DEFAULT_ENDPOINT = "http://127.0.0.1:9515"
ATTACHMENT_BYTES = 5_000_000  # the send-with-attachment fixture size
ATTACHMENT_TOKEN = "{attachment}"


class StepFailure(Exception):
    """A scenario step could not be completed."""


class LatencyError(Exception):
    """No latency probe succeeded against the target."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one campaign needs beyond the scenario itself."""

    condition: ConditionSpec = field(default_factory=ConditionSpec)
    iterations: int = 1
    quota: int = QUOTA
    browser_profile: str = ""
    dns_resolver: str = ""
    attachment_path: str = ""
    webdriver_endpoint: str = DEFAULT_ENDPOINT
    capabilities: Mapping[str, Any] = field(default_factory=dict)
    args_capability_key: str = "goog:chromeOptions"
    settle_delay_s: float = 2.0
    shape_interface: str = ""
    work_dir: str = ""

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.quota < 1:
            raise ValueError("quota must be >= 1")
        if self.settle_delay_s < 0:
            raise ValueError("settle_delay_s must be >= 0")
        object.__setattr__(self, "capabilities", dict(self.capabilities))


def ensure_attachment(path: str | Path, size: int = ATTACHMENT_BYTES) -> Path:
    """Create the attachment fixture if missing (deterministic bytes)."""
    path = Path(path)
    if path.is_file() and path.stat().st_size == size:
        return path
    path.parent.mkdir(parents=True, exist_ok=True)
    block = bytes(range(256)) * 256  # 64 KiB repeating block
    with path.open("wb") as fp:
        remaining = size
        while remaining > 0:
            fp.write(block[: min(remaining, len(block))])
            remaining -= len(block)
    return path


@dataclass(frozen=True)
class RunOutcome:
    """One execute_run invocation: results plus its raw evidence."""

    results: tuple[FunctionalUnitResult, ...]
    valid: bool
    error: Optional[str]
    samples: Mapping[str, tuple[Sample, ...]]
    boundaries: tuple[int, ...]


def _merged_capabilities(cfg: RunConfig, extra_args: Sequence[str]) -> dict[str, Any]:
    caps = copy.deepcopy(dict(cfg.capabilities))
    if extra_args:
        vendor = caps.setdefault(cfg.args_capability_key, {})
        vendor.setdefault("args", []).extend(extra_args)
    return caps


def _perform(
    session: WebDriverSession,
    step: ScenarioStep,
    script: ScenarioScript,
    cfg: RunConfig,
) -> None:
    deadline = time.monotonic() + step.timeout_ms / 1000.0
    if step.action == "navigate":
        session.navigate(script.resolve_url(step.target))
        return
    if step.action == "wait_page_complete":
        while True:
            state = session.execute("return document.readyState")
            if state == "complete":
                return
            if time.monotonic() > deadline:
                raise StepFailure(f"page not complete after {step.timeout_ms} ms")
            time.sleep(0.05)
    selector = script.resolve_selector(step.target)
    if step.action == "wait_for_selector":
        while True:
            try:
                session.find_element(selector)
                return
            except NoSuchElement:
                if time.monotonic() > deadline:
                    raise StepFailure(
                        f"selector {selector!r} absent after {step.timeout_ms} ms"
                    ) from None
                time.sleep(0.05)
    if step.action == "assert_present":
        try:
            session.find_element(selector)
        except NoSuchElement as exc:
            raise StepFailure(f"expected element {selector!r} missing") from exc
        return
    element = session.find_element(selector)
    if step.action == "click":
        session.click(element)
        return
    if step.action == "type_text":
        text = step.payload
        if ATTACHMENT_TOKEN in text:
            if not cfg.attachment_path:
                raise StepFailure("step needs an attachment but none is configured")
            text = text.replace(ATTACHMENT_TOKEN, str(cfg.attachment_path))
        session.send_keys(element, text)
        return
    raise StepFailure(f"unsupported action {step.action!r}")  # unreachable


def execute_run(
    script: ScenarioScript,
    cfg: RunConfig,
    sampler_set: SamplerSet,
    run_index: int = 0,
    active: Optional[ActiveCondition] = None,
    run_prefix: str = "",
) -> RunOutcome:
    """Execute every step once and integrate per-unit windows.

    Returns one FunctionalUnitResult per marked unit that was reached;
    a step failure attaches the error to every unit whose mark covers
    the failing step and invalidates the run.
    """
    energy_channels = [
        s.channel for s in sampler_set.specs if s.kind != "network_counter"
    ]
    network_channels = [
        s.channel for s in sampler_set.specs if s.kind == "network_counter"
    ]
    profile_dir: Optional[Path] = None
    if cfg.browser_profile:
        profile_dir = prepare_profile(
            cfg.browser_profile, cfg.work_dir or Path(cfg.browser_profile).parent
        )
    extra_args = list(active.browser_args) if active else []
    if profile_dir is not None:
        extra_args.append(f"--user-data-dir={profile_dir}")

    sampler_set.start()
    boundaries: list[int] = []
    error: Optional[str] = None
    failed_at: Optional[int] = None

    def mark() -> None:
        now = time.monotonic_ns()
        if boundaries and now <= boundaries[-1]:
            now = boundaries[-1] + 1
        boundaries.append(now)

    session: Optional[WebDriverSession] = None
    try:
        session = WebDriverSession.start(
            cfg.webdriver_endpoint, _merged_capabilities(cfg, extra_args)
        )
        for i, step in enumerate(script.steps):
            mark()
            try:
                _perform(session, step, script, cfg)
            except (WebDriverError, StepFailure) as exc:
                error = f"step {i} ({step.action} {step.target}): {exc}"
                failed_at = i
                break
        mark()
    except WebDriverError as exc:
        # Browser/driver never came up or crashed between steps.
        error = f"browser session failed: {exc}"
        failed_at = -1
        while len(boundaries) < 2:
            mark()
    finally:
        if session is not None:
            session.delete()
        series = sampler_set.stop()

    prefix = run_prefix or script.service
    results = []
    for unit in script.units:
        start, end = script.span(unit)
        if failed_at == -1:
            unit_error, window = error, (boundaries[0], boundaries[-1])
        elif failed_at is not None and start > failed_at:
            continue  # never reached
        elif failed_at is not None and start <= failed_at <= end:
            unit_error, window = error, (boundaries[start], boundaries[-1])
        else:
            unit_error, window = None, (boundaries[start], boundaries[end + 1])
        t0, t1 = window
        energy_j = {
            ch: integrate(series[ch], (t0, t1)).value for ch in energy_channels
        }
        network_bytes = sum(
            integrate(series[ch], (t0, t1)).value_native
            for ch in network_channels
        )
        results.append(
            FunctionalUnitResult(
                unit=unit,
                run_id=f"{prefix}-{unit}-{run_index:04d}",
                started_ns=t0,
                ended_ns=max(t1, t0 + 1),
                energy_j=energy_j,
                network_bytes=network_bytes,
                error=unit_error,
            )
        )
    return RunOutcome(
        results=tuple(results),
        valid=error is None,
        error=error,
        samples=series,
        boundaries=tuple(boundaries),
    )


@dataclass(frozen=True)
class CampaignResult:
    service: str
    condition_label: str
    series: Mapping[str, MeasurementSeries]
    results: tuple[FunctionalUnitResult, ...]
    iterations_run: int
    below_quota: bool
    valid_counts: Mapping[str, int]
    metadata: Mapping[str, Any]
    store_path: Optional[Path] = None


def campaign(
    script: ScenarioScript,
    cfg: RunConfig,
    provider_specs: Sequence[ProviderSpec],
    machine: Optional[MachineSpec] = None,
    store_dir: Optional[str | Path] = None,
    command_runner: Optional[CommandRunner] = None,
    verify_adblock_probe: bool = True,
) -> CampaignResult:
    """Repeat execute_run until quota or the iteration cap.

    Raw results (including errored runs) are persisted; the filtered
    series is recomputed via the stats pipeline and stored alongside
    with its filter log.
    """
    energy_channels = {
        s.channel for s in provider_specs if s.kind != "network_counter"
    }
    missing = [c for c in ("cpu", "memory", "machine") if c not in energy_channels]
    if missing:
        raise ValueError(f"providers must cover energy channels {missing}")
    if not any(s.kind == "network_counter" for s in provider_specs):
        raise ValueError("providers must include a network_counter")

    label = condition_label(cfg.condition)
    prefix = f"{script.service}-{label}"
    valid_counts = {unit: 0 for unit in script.units}
    all_results: list[FunctionalUnitResult] = []
    sample_log: list[tuple[int, Mapping[str, tuple[Sample, ...]]]] = []
    iterations_run = 0

    with apply_condition(
        cfg.condition,
        dns_resolver=cfg.dns_resolver,
        shape_interface=cfg.shape_interface,
        command_runner=command_runner,
        verify=verify_adblock_probe,
    ) as active:
        for i in range(cfg.iterations):
            if i and cfg.settle_delay_s:
                time.sleep(cfg.settle_delay_s)
            sampler_set = SamplerSet(provider_specs, machine)
            outcome = execute_run(
                script, cfg, sampler_set, run_index=i, active=active,
                run_prefix=prefix,
            )
            iterations_run += 1
            all_results.extend(outcome.results)
            sample_log.append((i, outcome.samples))
            for r in outcome.results:
                if r.ok:
                    valid_counts[r.unit] += 1
            if all(v >= cfg.quota for v in valid_counts.values()):
                break

    below_quota = any(v < cfg.quota for v in valid_counts.values())
    series = {
        unit: stats.build_series(
            script.service,
            cfg.condition,
            unit,
            [r for r in all_results if r.unit == unit],
        )
        for unit in script.units
    }
    metadata = {
        "service": script.service,
        "condition_label": label,
        "condition": cfg.condition.to_dict(),
        "iterations_run": iterations_run,
        "iteration_cap": cfg.iterations,
        "quota": cfg.quota,
        "below_quota": below_quota,
        "valid_counts": dict(valid_counts),
    }
    if active.metadata:
        metadata.update(
            {k: v for k, v in active.metadata.items() if k != "condition"}
        )

    store_path: Optional[Path] = None
    if store_dir is not None:
        store_path = persist_campaign(
            Path(store_dir), script.service, label, cfg.condition,
            all_results, series, sample_log, metadata,
        )
    return CampaignResult(
        service=script.service,
        condition_label=label,
        series=series,
        results=tuple(all_results),
        iterations_run=iterations_run,
        below_quota=below_quota,
        valid_counts=valid_counts,
        metadata=metadata,
        store_path=store_path,
    )


# ---------------------------------------------------------------------------
# Persistence. The raw store is the source of truth; the filtered
# sidecar and sample log make every stored number re-derivable.

def persist_campaign(
    store_dir: Path,
    service: str,
    label: str,
    condition: ConditionSpec,
    results: Sequence[FunctionalUnitResult],
    series: Mapping[str, MeasurementSeries],
    sample_log: Sequence[tuple[int, Mapping[str, tuple[Sample, ...]]]],
    metadata: Mapping[str, Any],
) -> Path:
    store_dir.mkdir(parents=True, exist_ok=True)
    base = f"{service}__{label}"
    store_path = store_dir / f"{base}.jsonl"
    with store_path.open("w") as fp:
        write_results(fp, service, label, condition, results)
    filtered = {
        unit: {
            "raw_count": s.raw_count,
            "valid_count": s.valid_count,
            "retained_count": s.retained_count,
            "retained_run_ids": [r.run_id for r in s.results],
            "filter_log": [
                {"run_id": e.run_id, "reason": e.reason, "detail": e.detail}
                for e in s.filter_log
            ],
        }
        for unit, s in series.items()
    }
    (store_dir / f"{base}.filtered.json").write_text(
        json.dumps({"metadata": dict(metadata), "series": filtered}, indent=2)
        + "\n"
    )
    with (store_dir / f"{base}.samples.jsonl").open("w") as fp:
        for run_index, channels in sample_log:
            for channel, samples in channels.items():
                fp.write(
                    json.dumps(
                        {
                            "run_index": run_index,
                            "channel": channel,
                            "scale": samples[0].scale if samples else 1,
                            "samples": [
                                [s.timestamp_ns, s.value_native, s.wrapped]
                                for s in samples
                            ],
                        }
                    )
                    + "\n"
                )
    return store_path


def read_samples(path: str | Path) -> dict[tuple[int, str], tuple[Sample, ...]]:
    """Load a campaign's raw sample log, keyed by (run_index, channel)."""
    out: dict[tuple[int, str], tuple[Sample, ...]] = {}
    with Path(path).open() as fp:
        for line in fp:
            if not line.strip():
                continue
            rec = json.loads(line)
            out[(rec["run_index"], rec["channel"])] = tuple(
                Sample(
                    timestamp_ns=ts,
                    channel=rec["channel"],
                    value_native=native,
                    scale=rec["scale"],
                    wrapped=wrapped,
                )
                for ts, native, wrapped in rec["samples"]
            )
    return out


# ---------------------------------------------------------------------------
# Latency probes.

_PING_TIME = re.compile(r"time[=<]([\d.]+)\s*ms")


def measure_latency(
    host: str,
    count: int = 100,
    method: str = "tcp",
    port: int = 80,
    timeout_s: float = 2.0,
    interval_s: float = 0.0,
) -> stats.Summary:
    """Round-trip-time statistics over ``count`` probes, in milliseconds.

    The TCP method times connection establishment (one round trip) and
    needs no privileges; the ICMP method shells out to ping.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    if method == "icmp":
        return _icmp_latency(host, count, timeout_s)
    if method != "tcp":
        raise ValueError(f"unknown latency method {method!r}")
    if ":" in host:
        name, _, port_text = host.rpartition(":")
        host, port = name, int(port_text)
    rtts_ms: list[float] = []
    last_error: Optional[Exception] = None
    for _ in range(count):
        start = time.perf_counter()
        try:
            sock = socket.create_connection((host, port), timeout=timeout_s)
        except OSError as exc:
            last_error = exc
            continue
        rtts_ms.append((time.perf_counter() - start) * 1000.0)
        sock.close()
        if interval_s:
            time.sleep(interval_s)
    if len(rtts_ms) < 2:
        raise LatencyError(f"cannot probe {host}:{port}: {last_error}")
    return stats.summarize_values(rtts_ms)


def _icmp_latency(host: str, count: int, timeout_s: float) -> stats.Summary:
    argv = ["ping", "-c", str(count), "-W", str(max(1, int(timeout_s))), host]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=count * (timeout_s + 1))
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise LatencyError(f"ping failed: {exc}") from exc
    rtts_ms = [float(m.group(1)) for m in _PING_TIME.finditer(proc.stdout)]
    if len(rtts_ms) < 2:
        raise LatencyError(
            f"ping produced no replies for {host}: {proc.stderr.strip()}"
        )
    return stats.summarize_values(rtts_ms)
