"""Harness configuration.

One YAML file describes the whole deployment: emission factors, the
machine power model, metric providers, services (scenario file plus
selector overrides), named condition presets, and the store location.
Command-line flags override individual fields one-for-one; the
``GREENBENCH_CONFIG`` environment variable supplies the file path when
no flag does.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .model import ConditionSpec, EmissionFactors, validate_factors
from .report import FLIGHT_RT_TONNES
from .sampler import MachineSpec, ProviderSpec

ENV_CONFIG = "GREENBENCH_CONFIG"

DEFAULT_ENDPOINT = "http://127.0.0.1:9515"


class ConfigError(Exception):
    """The configuration file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class ServiceConfig:
    """Where one service's scenario lives and how to address it."""

    scenario: str
    base_url: str = ""
    selectors: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "selectors", dict(self.selectors))


@dataclass(frozen=True)
class Config:
    factors: EmissionFactors = field(default_factory=EmissionFactors)
    machine: MachineSpec = field(default_factory=lambda: MachineSpec(10.0, 50.0, 1))
    providers: tuple[ProviderSpec, ...] = ()
    services: Mapping[str, ServiceConfig] = field(default_factory=dict)
    conditions: Mapping[str, ConditionSpec] = field(default_factory=dict)
    store_path: str = "results"
    webdriver_endpoint: str = DEFAULT_ENDPOINT
    dns_resolver: str = ""
    shape_interface: str = ""
    browser_profile: str = ""
    attachment_path: str = "attachment.bin"
    flight_rt_tonnes: float = FLIGHT_RT_TONNES

    def __post_init__(self) -> None:
        object.__setattr__(self, "services", dict(self.services))
        object.__setattr__(self, "conditions", dict(self.conditions))

    def condition(self, name: str) -> ConditionSpec:
        """Resolve a named preset; bare ``baseline`` always exists."""
        if name in self.conditions:
            return self.conditions[name]
        if name == "baseline":
            return ConditionSpec()
        raise ConfigError(
            f"unknown condition {name!r}; configured: "
            f"{sorted(self.conditions) or '(none)'}"
        )

    def service(self, name: str) -> ServiceConfig:
        try:
            return self.services[name]
        except KeyError:
            raise ConfigError(
                f"unknown service {name!r}; configured: "
                f"{sorted(self.services) or '(none)'}"
            ) from None


def _build_factors(data: Mapping[str, Any]) -> EmissionFactors:
    try:
        factors = EmissionFactors.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad factors section: {exc}") from exc
    verdict = validate_factors(factors)
    if not verdict.ok:
        raise ConfigError(
            "invalid emission factors: " + "; ".join(verdict.violations)
        )
    return factors


def _build_machine(data: Mapping[str, Any]) -> MachineSpec:
    unknown = set(data) - {"idle_w", "peak_w", "cores"}
    if unknown:
        raise ConfigError(f"unknown machine fields: {sorted(unknown)}")
    try:
        return MachineSpec(
            idle_w=float(data.get("idle_w", 10.0)),
            peak_w=float(data.get("peak_w", 50.0)),
            cores=int(data.get("cores", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad machine section: {exc}") from exc


def _build_providers(entries: Any) -> tuple[ProviderSpec, ...]:
    if not isinstance(entries, list):
        raise ConfigError("providers must be a list")
    specs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"provider {i} must be a mapping")
        try:
            specs.append(ProviderSpec(**entry))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"provider {i}: {exc}") from exc
    return tuple(specs)


def _build_services(entries: Any, config_dir: Path) -> dict[str, ServiceConfig]:
    if not isinstance(entries, dict):
        raise ConfigError("services must be a mapping")
    services = {}
    for name, entry in entries.items():
        if isinstance(entry, str):
            entry = {"scenario": entry}
        if not isinstance(entry, dict) or "scenario" not in entry:
            raise ConfigError(f"service {name!r} needs a scenario file")
        scenario = str(entry["scenario"])
        if not os.path.isabs(scenario):
            scenario = str(config_dir / scenario)
        if not Path(scenario).is_file():
            raise ConfigError(f"service {name!r}: scenario file {scenario} not found")
        services[name] = ServiceConfig(
            scenario=scenario,
            base_url=str(entry.get("base_url", "")),
            selectors=dict(entry.get("selectors") or {}),
        )
    return services


def _build_conditions(entries: Any) -> dict[str, ConditionSpec]:
    if not isinstance(entries, dict):
        raise ConfigError("conditions must be a mapping")
    conditions = {}
    for name, entry in entries.items():
        if entry is None:
            entry = {}
        if not isinstance(entry, dict):
            raise ConfigError(f"condition {name!r} must be a mapping")
        try:
            conditions[name] = ConditionSpec.from_dict(entry)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"condition {name!r}: {exc}") from exc
    return conditions


def load_config(path: Optional[str | Path] = None) -> Config:
    """Load a config file, or built-in defaults when no path is given.

    Resolution order: explicit path, then $GREENBENCH_CONFIG, then
    defaults. Relative paths inside the file resolve against the file's
    directory.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return Config()
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    known = {
        "factors", "machine", "providers", "services", "conditions",
        "store_path", "webdriver_endpoint", "dns_resolver", "shape_interface",
        "browser_profile", "attachment_path", "flight_rt_tonnes",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config_dir = path.resolve().parent

    def resolved(key: str, default: str) -> str:
        # Path-valued keys resolve relative to the config file.
        value = str(raw.get(key, "") or default)
        if value and not os.path.isabs(value):
            return str(config_dir / value)
        return value

    return Config(
        factors=_build_factors(raw.get("factors") or {}),
        machine=_build_machine(raw.get("machine") or {}),
        providers=_build_providers(raw.get("providers") or []),
        services=_build_services(raw.get("services") or {}, config_dir),
        conditions=_build_conditions(raw.get("conditions") or {}),
        store_path=resolved("store_path", "results"),
        webdriver_endpoint=str(raw.get("webdriver_endpoint") or DEFAULT_ENDPOINT),
        dns_resolver=str(raw.get("dns_resolver") or ""),
        shape_interface=str(raw.get("shape_interface") or ""),
        browser_profile=resolved("browser_profile", ""),
        attachment_path=resolved("attachment_path", "attachment.bin"),
        flight_rt_tonnes=float(raw.get("flight_rt_tonnes", FLIGHT_RT_TONNES)),
    )


def override(config: Config, **fields: Any) -> Config:
    """Apply non-None flag values over config fields, one-for-one."""
    changes = {k: v for k, v in fields.items() if v is not None}
    return replace(config, **changes) if changes else config
