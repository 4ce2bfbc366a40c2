"""Shared fixtures: demo site server, bundled stores, campaign environments."""

from __future__ import annotations

import threading
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from types import SimpleNamespace

import pytest

from greenbench import stats
from greenbench.model import read_results
from greenbench.runner.campaign import RunConfig, ensure_attachment
from greenbench.runner.scenario import load_scenario
from greenbench.sampler import MachineSpec, ProviderSpec

from mock_webdriver import MockWebDriver

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"
SERIES_DIR = FIXTURES / "series"
DEMO_SCENARIO = FIXTURES / "scenarios" / "demo.yaml"
SITE_DIR = FIXTURES / "site"

# Scoreboard for the acceptance suite: verdict lines collected during
# the run, replayed uncaptured once the terminal is ours again.
CRITERION_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERION_LINES):
            terminalreporter.line(CRITERION_LINES[number])


class _SiteHandler(SimpleHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def do_POST(self) -> None:
        # Upload sink: drain the body, acknowledge.
        length = int(self.headers.get("Content-Length", 0))
        while length > 0:
            length -= len(self.rfile.read(min(length, 1 << 16)))
        body = b"stored\n"
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args) -> None:
        pass


@pytest.fixture(scope="session")
def site_server():
    """Serves the bundled demo webmail pages over loopback."""
    handler = partial(_SiteHandler, directory=str(SITE_DIR))
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    host, port = httpd.server_address[:2]
    yield f"http://{host}:{port}"
    httpd.shutdown()
    httpd.server_close()


@pytest.fixture(scope="session")
def fixture_store():
    """All bundled result stores, filtered, keyed by (service, label)."""
    store = {}
    for path in sorted(SERIES_DIR.glob("*.jsonl")):
        with path.open() as fp:
            loaded = read_results(fp)
        store[(loaded.service, loaded.condition_label)] = stats.series_from_store(loaded)
    return store


class RunEnv:
    """A campaign sandbox: counter files, attachment, mock drivers."""

    def __init__(self, tmp_path: Path, base_url: str) -> None:
        self.tmp_path = tmp_path
        self.base_url = base_url
        self.cpu_file = tmp_path / "cpu_energy_uj"
        self.mem_file = tmp_path / "memory_energy_uj"
        self.cpu_file.write_text("1765000\n")
        self.mem_file.write_text("52000\n")
        self.attachment = tmp_path / "attachment.bin"
        ensure_attachment(str(self.attachment), size=200_000)
        self.machine = MachineSpec(idle_w=10.0, peak_w=50.0, cores=4)
        self.store_dir = tmp_path / "store"
        self._drivers: list[MockWebDriver] = []

    def launch(self, tag: str = "main", **driver_kw) -> SimpleNamespace:
        traffic = self.tmp_path / f"traffic_{tag}"
        driver = MockWebDriver(traffic_file=traffic, **driver_kw).start()
        self._drivers.append(driver)
        providers = (
            ProviderSpec("energy_counter", "cpu", str(self.cpu_file), 10),
            ProviderSpec("energy_counter", "memory", str(self.mem_file), 10),
            ProviderSpec("machine_power_model", "machine", "", 10),
            ProviderSpec("network_counter", "net", str(traffic), 10),
        )
        return SimpleNamespace(driver=driver, providers=providers, endpoint=driver.endpoint)

    def run_config(self, endpoint: str, **kw) -> RunConfig:
        kw.setdefault("iterations", 3)
        kw.setdefault("quota", 3)
        kw.setdefault("settle_delay_s", 0.0)
        kw.setdefault("attachment_path", str(self.attachment))
        return RunConfig(webdriver_endpoint=endpoint, **kw)

    def script(self):
        return load_scenario(DEMO_SCENARIO, base_url=self.base_url)

    def close(self) -> None:
        for driver in self._drivers:
            driver.stop()


@pytest.fixture
def run_env(tmp_path, site_server):
    env = RunEnv(tmp_path, site_server)
    yield env
    env.close()
