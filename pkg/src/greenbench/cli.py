"""Command-line entry point.

Subcommands cover the measurement workflow end to end: ``run`` executes
a campaign and appends to the store, ``compare`` renders comparison and
emission tables from stored series, ``project`` scales a per-session
saving to a population, and ``ping`` measures round-trip latency.
Exit status is 0 exactly when no error diagnostic was printed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import stats
from .config import Config, ConfigError, load_config, override
from .model import (
    BASIC_UNITS,
    SESSION,
    StoreError,
    condition_label,
    read_results,
)
from .report import (
    RENDER_FORMATS,
    ReportError,
    ReportSpec,
    build_report,
    render,
    scale_projection,
)
from .runner import (
    ConditionError,
    LatencyError,
    RunConfig,
    ScenarioError,
    WebDriverError,
    campaign,
    ensure_attachment,
    load_scenario,
    measure_latency,
)
from .runner.campaign import ATTACHMENT_TOKEN
from .runner.scenario import ScenarioScript

_ERRORS = (
    ConfigError,
    ConditionError,
    LatencyError,
    ReportError,
    ScenarioError,
    StoreError,
    WebDriverError,
    ValueError,
    OSError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greenbench",
        description="Measure the user-side energy, traffic and CO2e of "
        "scripted web-service sessions.",
    )
    parser.add_argument(
        "--config",
        help="config file path (default: $GREENBENCH_CONFIG, else built-ins)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a measurement campaign")
    p_run.add_argument("service", help="service name from the config")
    p_run.add_argument("--condition", default="baseline", help="condition preset")
    p_run.add_argument("--iterations", type=int, default=None,
                       help="iteration cap (default: quota)")
    p_run.add_argument("--quota", type=int, default=100,
                       help="valid results required per unit (default 100)")
    p_run.add_argument("--units", nargs="+", default=None,
                       help="restrict to these functional units")
    p_run.add_argument("--store", default=None, help="results directory")
    p_run.add_argument("--endpoint", default=None, help="WebDriver endpoint URL")
    p_run.add_argument("--resolver", default=None, help="ad-block DNS resolver")
    p_run.add_argument("--interface", default=None, help="interface for latency shaping")
    p_run.add_argument("--profile", default=None, help="browser profile template dir")
    p_run.add_argument("--attachment", default=None, help="attachment fixture path")
    p_run.add_argument("--settle", type=float, default=None,
                       help="settle delay between iterations, seconds")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two stored series")
    p_cmp.add_argument("baseline", help="service or service/condition")
    p_cmp.add_argument("variant", help="service or service/condition")
    p_cmp.add_argument("--format", default="plain_table", choices=RENDER_FORMATS)
    p_cmp.add_argument("--units", nargs="+", default=None)
    p_cmp.add_argument("--store", default=None, help="results directory")
    p_cmp.set_defaults(func=cmd_compare)

    p_proj = sub.add_parser("project", help="population-scale saving projection")
    p_proj.add_argument("--per-session-g", type=float, required=True,
                        help="per-session saving in grams CO2e")
    p_proj.add_argument("--population", type=float, required=True)
    p_proj.add_argument("--sessions-per-year", type=float, required=True)
    p_proj.add_argument("--flight-rt-tonnes", type=float, default=None,
                        help="tonnes CO2e per round-trip flight equivalent")
    p_proj.add_argument("--format", default="plain_table",
                        choices=("plain_table", "json"))
    p_proj.set_defaults(func=cmd_project)

    p_ping = sub.add_parser("ping", help="round-trip latency statistics")
    p_ping.add_argument("host", help="host, host:port, or address")
    p_ping.add_argument("--count", type=int, default=100)
    p_ping.add_argument("--method", default="tcp", choices=("tcp", "icmp"))
    p_ping.add_argument("--port", type=int, default=80)
    p_ping.add_argument("--timeout", type=float, default=2.0)
    p_ping.set_defaults(func=cmd_ping)
    return parser


def _filter_units(script: ScenarioScript, units: Sequence[str]) -> ScenarioScript:
    unknown = [u for u in units if u not in script.unit_marks]
    if unknown:
        raise ScenarioError(
            f"units {unknown} not marked in scenario; available: "
            f"{sorted(script.unit_marks)}"
        )
    marks = {u: script.unit_marks[u] for u in units}
    return dataclasses.replace(script, unit_marks=marks)


def cmd_run(args: argparse.Namespace, config: Config) -> int:
    config = override(
        config,
        store_path=args.store,
        webdriver_endpoint=args.endpoint,
        dns_resolver=args.resolver,
        shape_interface=args.interface,
        browser_profile=args.profile,
        attachment_path=args.attachment,
    )
    svc = config.service(args.service)
    condition = config.condition(args.condition)
    script = load_scenario(
        svc.scenario,
        base_url=svc.base_url or None,
        selectors=svc.selectors or None,
    )
    if args.units:
        script = _filter_units(script, args.units)
    attachment = ""
    if any(ATTACHMENT_TOKEN in s.payload for s in script.steps):
        attachment = str(ensure_attachment(config.attachment_path))
    quota = args.quota
    iterations = args.iterations if args.iterations is not None else quota
    run_cfg = RunConfig(
        condition=condition,
        iterations=iterations,
        quota=quota,
        browser_profile=config.browser_profile,
        dns_resolver=config.dns_resolver,
        attachment_path=attachment,
        webdriver_endpoint=config.webdriver_endpoint,
        settle_delay_s=args.settle if args.settle is not None else 2.0,
        shape_interface=config.shape_interface,
    )
    result = campaign(
        script,
        run_cfg,
        config.providers,
        machine=config.machine,
        store_dir=config.store_path,
    )
    print(f"service {result.service}, condition {result.condition_label}: "
          f"{result.iterations_run} iterations")
    for unit in script.units:
        series = result.series[unit]
        print(f"  {unit}: {series.retained_count} retained "
              f"({series.valid_count} valid of {series.raw_count} raw)")
    if result.store_path is not None:
        print(f"stored: {result.store_path}")
    if result.below_quota:
        print(
            f"warning: below quota ({quota}) after {result.iterations_run} "
            f"iterations", file=sys.stderr,
        )
    return 0


def _parse_target(text: str) -> tuple[str, str]:
    service, _, condition = text.partition("/")
    return service, condition or "baseline"


def _resolve_label(config: Config, name: str) -> str:
    try:
        return condition_label(config.condition(name))
    except ConfigError:
        return name  # already a canonical store label


def _load_store_side(store_dir: Path, service: str, label: str):
    path = store_dir / f"{service}__{label}.jsonl"
    if not path.is_file():
        raise ReportError(f"no stored series at {path}")
    with path.open() as fp:
        return stats.series_from_store(read_results(fp))


def cmd_compare(args: argparse.Namespace, config: Config) -> int:
    config = override(config, store_path=args.store)
    store_dir = Path(config.store_path)
    svc_a, cond_a = _parse_target(args.baseline)
    svc_b, cond_b = _parse_target(args.variant)
    key_a = (svc_a, _resolve_label(config, cond_a))
    key_b = (svc_b, _resolve_label(config, cond_b))
    store = {
        key_a: _load_store_side(store_dir, *key_a),
        key_b: _load_store_side(store_dir, *key_b),
    }
    if args.units:
        units = tuple(args.units)
    else:
        common = set(store[key_a]) & set(store[key_b])
        ordered = [u for u in BASIC_UNITS + (SESSION,) if u in common]
        ordered += sorted(common - set(ordered))
        units = tuple(ordered)
    spec = ReportSpec(
        baseline=key_a, variant=key_b, units=units, factors=config.factors
    )
    sys.stdout.write(render(build_report(spec, store), args.format))
    return 0


def cmd_project(args: argparse.Namespace, config: Config) -> int:
    for name in ("per_session_g", "population", "sessions_per_year"):
        if getattr(args, name) <= 0:
            raise ValueError(f"--{name.replace('_', '-')} must be positive")
    flight_rt = (
        args.flight_rt_tonnes
        if args.flight_rt_tonnes is not None
        else config.flight_rt_tonnes
    )
    proj = scale_projection(
        args.per_session_g,
        args.population,
        args.sessions_per_year,
        flight_rt_tonnes=flight_rt,
    )
    if args.format == "json":
        print(json.dumps(dataclasses.asdict(proj), indent=2, sort_keys=True))
    else:
        print(f"per-session saving: {proj.per_session_saving_g:.4g} g CO2e")
        print(f"population: {proj.population:.4g}, "
              f"sessions/year: {proj.sessions_per_year:.4g}")
        print(f"annual saving: {proj.annual_saving_t:.4g} t CO2e "
              f"({proj.flight_equivalents:.4g} round-trip flight equivalents)")
    return 0


def cmd_ping(args: argparse.Namespace, config: Config) -> int:
    summary = measure_latency(
        args.host,
        count=args.count,
        method=args.method,
        port=args.port,
        timeout_s=args.timeout,
    )
    print(f"{args.host}: mean {summary.mean:.3f} ms, sd {summary.sd:.3f} ms, "
          f"n {summary.n}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
