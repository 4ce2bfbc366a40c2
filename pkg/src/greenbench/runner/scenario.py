"""Declarative scenario scripts.

A scenario is data, not code: an ordered list of browser steps plus
``unit_marks`` that tag step ranges as functional units. The same
step list drives every service; per-service differences live in the
selector map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from ..model import SESSION

ACTIONS = (
    "navigate",
    "click",
    "type_text",
    "wait_for_selector",
    "wait_page_complete",
    "assert_present",
)

# Actions whose target names a selector (directly or via the map).
SELECTOR_ACTIONS = ("click", "type_text", "wait_for_selector", "assert_present")

DEFAULT_TIMEOUT_MS = 10_000


class ScenarioError(Exception):
    """A scenario file is structurally invalid."""


@dataclass(frozen=True)
class ScenarioStep:
    action: str
    target: str = ""
    payload: str = ""
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ScenarioError(f"unknown action {self.action!r}")
        if self.timeout_ms <= 0:
            raise ScenarioError("timeout_ms must be positive")
        if self.action != "wait_page_complete" and not self.target:
            raise ScenarioError(f"action {self.action!r} needs a target")


@dataclass(frozen=True)
class ScenarioScript:
    service: str
    steps: tuple[ScenarioStep, ...]
    unit_marks: Mapping[str, tuple[int, int]]
    selectors: Mapping[str, str] = field(default_factory=dict)
    base_url: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "selectors", dict(self.selectors))
        object.__setattr__(self, "unit_marks", self._normalized_marks())

    def _normalized_marks(self) -> dict[str, tuple[int, int]]:
        n = len(self.steps)
        spans: dict[str, tuple[int, int]] = {}
        for unit, span in dict(self.unit_marks).items():
            try:
                start, end = int(span[0]), int(span[1])
            except (TypeError, ValueError, IndexError) as exc:
                raise ScenarioError(f"unit {unit!r}: mark must be [start, end]") from exc
            if not (0 <= start <= end < n):
                raise ScenarioError(
                    f"unit {unit!r}: steps [{start}, {end}] out of range 0..{n - 1}"
                )
            spans[unit] = (start, end)
        basic = {u: s for u, s in spans.items() if u != SESSION}
        ordered = sorted(basic.items(), key=lambda kv: kv[1])
        for (unit_a, span_a), (unit_b, span_b) in zip(ordered, ordered[1:]):
            if span_b[0] <= span_a[1]:
                raise ScenarioError(
                    f"units {unit_a!r} and {unit_b!r} overlap on steps"
                )
        if SESSION in spans and basic:
            lo = min(s[0] for s in basic.values())
            hi = max(s[1] for s in basic.values())
            if spans[SESSION] != (lo, hi):
                raise ScenarioError(
                    f"{SESSION} mark must span its constituents [{lo}, {hi}]"
                )
        return spans

    def resolve_selector(self, target: str) -> str:
        """Map a logical selector name; unknown names pass through as CSS."""
        return self.selectors.get(target, target)

    def resolve_url(self, target: str) -> str:
        if "://" in target or not self.base_url:
            return target
        return self.base_url.rstrip("/") + "/" + target.lstrip("/")

    def span(self, unit: str) -> tuple[int, int]:
        return tuple(self.unit_marks[unit])  # type: ignore[return-value]

    @property
    def units(self) -> tuple[str, ...]:
        """Units in execution order (by start step; Session last)."""
        basic = sorted(
            (u for u in self.unit_marks if u != SESSION),
            key=lambda u: self.unit_marks[u],
        )
        if SESSION in self.unit_marks:
            basic.append(SESSION)
        return tuple(basic)


def load_scenario(
    path: str | Path,
    base_url: Optional[str] = None,
    selectors: Optional[Mapping[str, str]] = None,
) -> ScenarioScript:
    """Load a YAML scenario file.

    ``base_url`` and ``selectors`` override the file's values, so one
    scenario can drive a service deployed at any address.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"scenario {path} must be a mapping")
    return build_scenario(raw, base_url=base_url, selectors=selectors)


def build_scenario(
    raw: Mapping[str, Any],
    base_url: Optional[str] = None,
    selectors: Optional[Mapping[str, str]] = None,
) -> ScenarioScript:
    try:
        steps_raw = raw["steps"]
        service = raw["service"]
    except KeyError as exc:
        raise ScenarioError(f"scenario missing required key {exc}") from exc
    if not isinstance(steps_raw, list) or not steps_raw:
        raise ScenarioError("scenario steps must be a non-empty list")
    steps = []
    for i, entry in enumerate(steps_raw):
        if not isinstance(entry, dict):
            raise ScenarioError(f"step {i} must be a mapping")
        unknown = set(entry) - {"action", "target", "payload", "timeout_ms"}
        if unknown:
            raise ScenarioError(f"step {i}: unknown keys {sorted(unknown)}")
        try:
            steps.append(ScenarioStep(**entry))
        except TypeError as exc:
            raise ScenarioError(f"step {i}: {exc}") from exc
    merged_selectors = dict(raw.get("selectors") or {})
    if selectors:
        merged_selectors.update(selectors)
    return ScenarioScript(
        service=str(service),
        steps=tuple(steps),
        unit_marks=raw.get("unit_marks") or {},
        selectors=merged_selectors,
        base_url=base_url if base_url is not None else str(raw.get("base_url", "")),
    )
