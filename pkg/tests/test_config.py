"""Configuration loading, preset resolution, overrides."""

import textwrap

import pytest

from greenbench.config import (
    ENV_CONFIG,
    Config,
    ConfigError,
    load_config,
    override,
)
from greenbench.model import ConditionSpec

from conftest import DEMO_SCENARIO


def write_config(tmp_path, body):
    path = tmp_path / "greenbench.yaml"
    path.write_text(textwrap.dedent(body))
    return path


FULL = f"""\
factors:
  grid_intensity: 300.0
  assessment_year: 2026
machine:
  idle_w: 12.0
  peak_w: 80.0
  cores: 8
providers:
  - kind: energy_counter
    channel: cpu
    source: /tmp/cpu_uj
  - kind: machine_power_model
    channel: machine
services:
  demo:
    scenario: {DEMO_SCENARIO}
    base_url: http://127.0.0.1:8000
conditions:
  adblock:
    adblock: true
  slow:
    injected_latency_ms: 100
store_path: results
dns_resolver: 127.0.0.1:53
flight_rt_tonnes: 1.5
"""


class TestDefaults:
    def test_no_path_no_env_gives_defaults(self, monkeypatch):
        monkeypatch.delenv(ENV_CONFIG, raising=False)
        config = load_config()
        assert config.factors.grid_intensity == 445.0
        assert config.machine.idle_w == 10.0
        assert config.store_path == "results"
        assert config.webdriver_endpoint == "http://127.0.0.1:9515"

    def test_baseline_condition_always_exists(self):
        assert Config().condition("baseline") == ConditionSpec()

    def test_unknown_condition_lists_presets(self, tmp_path):
        config = load_config(write_config(tmp_path, FULL))
        with pytest.raises(ConfigError, match="adblock"):
            config.condition("pgp50")

    def test_unknown_service_lists_configured(self, tmp_path):
        config = load_config(write_config(tmp_path, FULL))
        with pytest.raises(ConfigError, match="demo"):
            config.service("gmail")


class TestLoading:
    def test_full_file(self, tmp_path):
        config = load_config(write_config(tmp_path, FULL))
        assert config.factors.grid_intensity == 300.0
        assert config.factors.assessment_year == 2026
        assert config.machine.peak_w == 80.0
        assert config.machine.cores == 8
        assert len(config.providers) == 2
        assert config.providers[0].channel == "cpu"
        assert config.service("demo").base_url == "http://127.0.0.1:8000"
        assert config.condition("adblock") == ConditionSpec(adblock=True)
        assert config.condition("slow") == ConditionSpec(injected_latency_ms=100)
        assert config.dns_resolver == "127.0.0.1:53"
        assert config.flight_rt_tonnes == 1.5

    def test_env_var_supplies_path(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, FULL)
        monkeypatch.setenv(ENV_CONFIG, str(path))
        assert load_config().factors.grid_intensity == 300.0

    def test_explicit_path_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_CONFIG, "/nonexistent/greenbench.yaml")
        config = load_config(write_config(tmp_path, FULL))
        assert config.factors.grid_intensity == 300.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.yaml")

    def test_empty_file_is_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path).factors.grid_intensity == 445.0

    def test_unknown_top_level_key(self, tmp_path):
        path = write_config(tmp_path, "store_pth: oops\n")
        with pytest.raises(ConfigError, match="store_pth"):
            load_config(path)

    def test_invalid_factors_rejected_at_load(self, tmp_path):
        path = write_config(tmp_path, "factors:\n  grid_intensity: -4\n")
        with pytest.raises(ConfigError, match="grid_intensity"):
            load_config(path)

    def test_unknown_factor_field_rejected(self, tmp_path):
        path = write_config(tmp_path, "factors:\n  carbon: 4\n")
        with pytest.raises(ConfigError, match="carbon"):
            load_config(path)

    def test_bad_provider_entry_indexed(self, tmp_path):
        path = write_config(
            tmp_path,
            "providers:\n  - kind: quantum\n    channel: q\n    source: x\n",
        )
        with pytest.raises(ConfigError, match="provider 0"):
            load_config(path)

    def test_missing_scenario_file_named(self, tmp_path):
        path = write_config(tmp_path, "services:\n  demo: nope.yaml\n")
        with pytest.raises(ConfigError, match="nope.yaml"):
            load_config(path)

    def test_service_shorthand_and_relative_paths(self, tmp_path):
        scenario = tmp_path / "demo.yaml"
        scenario.write_text("service: demo\nsteps:\n  - action: wait_page_complete\n")
        config = load_config(write_config(tmp_path, "services:\n  demo: demo.yaml\n"))
        assert config.service("demo").scenario == str(scenario)

    def test_store_path_resolves_against_config_dir(self, tmp_path):
        config = load_config(write_config(tmp_path, "store_path: data/runs\n"))
        assert config.store_path == str(tmp_path / "data" / "runs")

    def test_absolute_store_path_untouched(self, tmp_path):
        config = load_config(write_config(tmp_path, "store_path: /var/lib/gb\n"))
        assert config.store_path == "/var/lib/gb"


class TestOverride:
    def test_none_values_ignored(self):
        config = Config()
        same = override(config, store_path=None, dns_resolver=None)
        assert same == config

    def test_set_values_replace(self):
        config = override(Config(), store_path="/tmp/out", dns_resolver="10.0.0.2")
        assert config.store_path == "/tmp/out"
        assert config.dns_resolver == "10.0.0.2"
