"""Condition orchestration: DNS probe, latency shaping, profile copies."""

import socket
import struct
import subprocess
import threading

import pytest

from greenbench.model import ConditionSpec
from greenbench.runner.conditions import (
    ConditionError,
    TcNetemShaper,
    apply_condition,
    dns_query_a,
    prepare_profile,
    verify_adblock,
)


class ScriptedResolver:
    """UDP server answering every A query the same way."""

    def __init__(self, answers=(), rcode=0):
        self.answers = answers
        self.rcode = rcode
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(("127.0.0.1", 0))
        self.queries = 0
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()

    @property
    def address(self) -> str:
        host, port = self.sock.getsockname()
        return f"{host}:{port}"

    def _serve(self) -> None:
        while True:
            try:
                query, peer = self.sock.recvfrom(4096)
            except OSError:
                return
            self.queries += 1
            qid = query[:2]
            flags = struct.pack("!H", 0x8180 | self.rcode)
            counts = struct.pack("!HHHH", 1, len(self.answers), 0, 0)
            question = query[12:]
            response = qid + flags + counts + question
            for ip in self.answers:
                response += (
                    b"\xc0\x0c"  # pointer to the question name
                    + struct.pack("!HHIH", 1, 1, 60, 4)
                    + socket.inet_aton(ip)
                )
            self.sock.sendto(response, peer)

    def close(self) -> None:
        self.sock.close()


@pytest.fixture
def resolver_factory():
    servers = []

    def make(**kw):
        server = ScriptedResolver(**kw)
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.close()


class TestDnsProbe:
    def test_reads_a_records(self, resolver_factory):
        server = resolver_factory(answers=("93.184.216.34", "93.184.216.35"))
        got = dns_query_a("doubleclick.net", server.address)
        assert got == ["93.184.216.34", "93.184.216.35"]
        assert server.queries == 1

    def test_nxdomain_is_empty(self, resolver_factory):
        server = resolver_factory(rcode=3)
        assert dns_query_a("doubleclick.net", server.address) == []

    def test_refused_raises(self, resolver_factory):
        server = resolver_factory(rcode=5)
        with pytest.raises(ConditionError, match="rcode 5"):
            dns_query_a("doubleclick.net", server.address)

    def test_unreachable_resolver(self):
        with pytest.raises(ConditionError, match="DNS probe"):
            dns_query_a("doubleclick.net", "127.0.0.1:1", timeout_s=0.3)

    def test_bad_label_rejected(self, resolver_factory):
        server = resolver_factory()
        with pytest.raises(ConditionError, match="label"):
            dns_query_a("a..b", server.address)


class TestVerifyAdblock:
    def test_sinkhole_passes(self, resolver_factory):
        server = resolver_factory(answers=("0.0.0.0",))
        verify_adblock(server.address)

    def test_nxdomain_sinkhole_passes(self, resolver_factory):
        server = resolver_factory(rcode=3)
        verify_adblock(server.address)

    def test_routable_answer_fails(self, resolver_factory):
        server = resolver_factory(answers=("93.184.216.34",))
        with pytest.raises(ConditionError, match="not blocking ads"):
            verify_adblock(server.address)


class RecordingRunner:
    def __init__(self, returncode=0, stderr=""):
        self.calls = []
        self.returncode = returncode
        self.stderr = stderr

    def __call__(self, argv):
        self.calls.append(list(argv))
        return subprocess.CompletedProcess(
            argv, self.returncode, stdout="", stderr=self.stderr
        )


class TestShaper:
    def test_apply_and_restore_invocations(self):
        runner = RecordingRunner()
        shaper = TcNetemShaper(interface="eth0", delay_ms=50, runner=runner)
        shaper.apply()
        shaper.restore()
        assert runner.calls == [
            ["tc", "qdisc", "add", "dev", "eth0", "root", "netem", "delay", "50ms"],
            ["tc", "qdisc", "del", "dev", "eth0", "root"],
        ]

    def test_restore_without_apply_is_a_no_op(self):
        runner = RecordingRunner()
        TcNetemShaper(interface="eth0", delay_ms=50, runner=runner).restore()
        assert runner.calls == []

    def test_nonzero_exit_raises_with_stderr(self):
        runner = RecordingRunner(returncode=2, stderr="RTNETLINK answers: EPERM")
        shaper = TcNetemShaper(interface="eth0", delay_ms=50, runner=runner)
        with pytest.raises(ConditionError, match="EPERM"):
            shaper.apply()

    def test_missing_binary_raises(self):
        def runner(argv):
            raise FileNotFoundError("tc")

        shaper = TcNetemShaper(interface="eth0", delay_ms=50, runner=runner)
        with pytest.raises(ConditionError, match="cannot run tc"):
            shaper.apply()


class TestProfiles:
    def test_copy_is_isolated(self, tmp_path):
        template = tmp_path / "template"
        template.mkdir()
        (template / "prefs.js").write_text("user_pref('a', 1);\n")
        copy = prepare_profile(template, tmp_path)
        assert copy != template
        assert (copy / "prefs.js").read_text() == "user_pref('a', 1);\n"
        (copy / "prefs.js").write_text("mutated")
        assert (template / "prefs.js").read_text() == "user_pref('a', 1);\n"

    def test_missing_template(self, tmp_path):
        with pytest.raises(ConditionError, match="does not exist"):
            prepare_profile(tmp_path / "absent", tmp_path)


class TestApplyCondition:
    def test_baseline_needs_nothing(self):
        with apply_condition(ConditionSpec()) as active:
            assert active.metadata["condition"]["adblock"] is False
            assert "latency_shaping" not in active.metadata

    def test_adblock_requires_resolver(self):
        with pytest.raises(ConditionError, match="dns_resolver"):
            with apply_condition(ConditionSpec(adblock=True)):
                pass

    def test_adblock_verified_and_recorded(self, resolver_factory):
        server = resolver_factory(answers=("0.0.0.0",))
        spec = ConditionSpec(adblock=True)
        with apply_condition(spec, dns_resolver=server.address) as active:
            assert active.metadata["dns_resolver"] == server.address
        assert server.queries == 1

    def test_adblock_verification_failure_aborts(self, resolver_factory):
        server = resolver_factory(answers=("93.184.216.34",))
        with pytest.raises(ConditionError, match="not blocking"):
            with apply_condition(ConditionSpec(adblock=True), dns_resolver=server.address):
                pass

    def test_latency_requires_interface(self):
        with pytest.raises(ConditionError, match="shape_interface"):
            with apply_condition(ConditionSpec(injected_latency_ms=50)):
                pass

    def test_latency_shapes_and_restores(self):
        runner = RecordingRunner()
        spec = ConditionSpec(injected_latency_ms=50)
        with apply_condition(spec, shape_interface="lo", command_runner=runner) as active:
            assert len(runner.calls) == 1
            meta = active.metadata["latency_shaping"]
            assert meta == {"interface": "lo", "delay_ms": 50, "direction": "egress"}
        assert runner.calls[-1][:3] == ["tc", "qdisc", "del"]

    def test_shaping_restored_when_body_raises(self):
        runner = RecordingRunner()
        with pytest.raises(RuntimeError):
            with apply_condition(
                ConditionSpec(injected_latency_ms=20),
                shape_interface="lo",
                command_runner=runner,
            ):
                raise RuntimeError("campaign crashed")
        assert runner.calls[-1][:3] == ["tc", "qdisc", "del"]

    def test_restrictive_profile_recorded(self):
        spec = ConditionSpec(tracking_profile="restrictive")
        with apply_condition(spec) as active:
            assert active.metadata["tracking_profile"] == "restrictive"
