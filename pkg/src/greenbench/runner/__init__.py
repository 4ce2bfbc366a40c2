"""Scenario execution against a real browser, with condition control."""

from .campaign import (
    CampaignResult,
    LatencyError,
    RunConfig,
    RunOutcome,
    StepFailure,
    campaign,
    ensure_attachment,
    execute_run,
    measure_latency,
    read_samples,
)
from .conditions import (
    ActiveCondition,
    ConditionError,
    TcNetemShaper,
    apply_condition,
    dns_query_a,
    prepare_profile,
    verify_adblock,
)
from .scenario import ScenarioError, ScenarioScript, ScenarioStep, load_scenario
from .webdriver import NoSuchElement, WebDriverError, WebDriverSession

__all__ = [
    "ActiveCondition",
    "CampaignResult",
    "ConditionError",
    "LatencyError",
    "NoSuchElement",
    "RunConfig",
    "RunOutcome",
    "ScenarioError",
    "ScenarioScript",
    "ScenarioStep",
    "StepFailure",
    "TcNetemShaper",
    "WebDriverError",
    "WebDriverSession",
    "apply_condition",
    "campaign",
    "dns_query_a",
    "ensure_attachment",
    "execute_run",
    "load_scenario",
    "measure_latency",
    "prepare_profile",
    "read_samples",
    "verify_adblock",
]
