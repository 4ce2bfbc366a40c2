"""Experimental condition orchestration.

A condition bundles the environment knobs a campaign runs under:
DNS-level ad blocking, injected network latency, and the browser
profile template. ``apply_condition`` activates everything up front,
verifies it took effect where it can, and restores the environment on
release. A condition that cannot be established raises; the harness
never silently measures under the wrong condition.
"""

from __future__ import annotations

import contextlib
import os
import shutil
import socket
import struct
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Optional, Sequence

from ..model import ConditionSpec

# Domain whose blocking every mainstream DNS blocklist agrees on.
DEFAULT_PROBE_DOMAIN = "doubleclick.net"

# Answers a sinkhole resolver returns for blocked names.
SINKHOLE_ADDRESSES = frozenset({"0.0.0.0", "127.0.0.1"})


class ConditionError(Exception):
    """The requested condition could not be established or verified."""


# ---------------------------------------------------------------------------
# DNS probe. A hand-rolled A query keeps the dependency surface at zero;
# the probe only needs to distinguish sinkhole answers from routable ones.

def _encode_qname(domain: str) -> bytes:
    out = b""
    for label in domain.strip(".").split("."):
        raw = label.encode("idna") if label else b""
        if not 0 < len(raw) < 64:
            raise ConditionError(f"bad DNS label in {domain!r}")
        out += bytes([len(raw)]) + raw
    return out + b"\x00"


def _skip_name(payload: bytes, offset: int) -> int:
    while True:
        if offset >= len(payload):
            raise ConditionError("truncated DNS name")
        length = payload[offset]
        if length == 0:
            return offset + 1
        if length & 0xC0 == 0xC0:  # compression pointer ends the name
            return offset + 2
        offset += 1 + length


def dns_query_a(
    domain: str,
    resolver: str,
    port: int = 53,
    timeout_s: float = 3.0,
) -> list[str]:
    """Resolve A records for ``domain`` against a specific resolver.

    Returns the answer addresses; an empty list means NXDOMAIN or a
    no-answer response (how some sinkholes block).
    """
    if ":" in resolver:
        host, _, port_text = resolver.rpartition(":")
        resolver, port = host, int(port_text)
    query_id = struct.unpack("!H", os.urandom(2))[0]
    header = struct.pack("!HHHHHH", query_id, 0x0100, 1, 0, 0, 0)
    question = _encode_qname(domain) + struct.pack("!HH", 1, 1)  # A, IN
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.settimeout(timeout_s)
        try:
            sock.sendto(header + question, (resolver, port))
            payload, _ = sock.recvfrom(4096)
        except OSError as exc:
            raise ConditionError(
                f"DNS probe to {resolver}:{port} failed: {exc}"
            ) from exc
    if len(payload) < 12:
        raise ConditionError("short DNS response")
    rid, flags, qdcount, ancount = struct.unpack("!HHHH", payload[:8])
    if rid != query_id:
        raise ConditionError("DNS response id mismatch")
    rcode = flags & 0x000F
    if rcode == 3:  # NXDOMAIN: blocked by deletion
        return []
    if rcode != 0:
        raise ConditionError(f"DNS query refused (rcode {rcode})")
    offset = 12
    for _ in range(qdcount):
        offset = _skip_name(payload, offset) + 4
    addresses = []
    for _ in range(ancount):
        offset = _skip_name(payload, offset)
        if offset + 10 > len(payload):
            raise ConditionError("truncated DNS answer")
        rtype, _, _, rdlength = struct.unpack("!HHIH", payload[offset : offset + 10])
        offset += 10
        rdata = payload[offset : offset + rdlength]
        offset += rdlength
        if rtype == 1 and rdlength == 4:
            addresses.append(socket.inet_ntoa(rdata))
    return addresses


def verify_adblock(
    resolver: str,
    probe_domain: str = DEFAULT_PROBE_DOMAIN,
    timeout_s: float = 3.0,
) -> None:
    """Check that ``resolver`` actually sinkholes a known ad domain."""
    answers = dns_query_a(probe_domain, resolver, timeout_s=timeout_s)
    routable = [a for a in answers if a not in SINKHOLE_ADDRESSES]
    if routable:
        raise ConditionError(
            f"resolver {resolver} returned routable answers {routable} "
            f"for {probe_domain}; it is not blocking ads"
        )


# ---------------------------------------------------------------------------
# Latency shaping. The command runner is injectable so tests can verify
# the exact invocations without root or a real qdisc.

CommandRunner = Callable[[Sequence[str]], subprocess.CompletedProcess]


def _default_runner(argv: Sequence[str]) -> subprocess.CompletedProcess:
    return subprocess.run(argv, capture_output=True, text=True)


@dataclass
class TcNetemShaper:
    """Adds fixed egress delay on one interface via tc netem.

    The full delay is applied on egress (not split across directions);
    campaigns record that choice in their metadata.
    """

    interface: str
    delay_ms: int
    runner: CommandRunner = _default_runner
    _active: bool = field(default=False, init=False)

    def apply(self) -> None:
        argv = [
            "tc", "qdisc", "add", "dev", self.interface,
            "root", "netem", "delay", f"{self.delay_ms}ms",
        ]
        self._run(argv)
        self._active = True

    def restore(self) -> None:
        if not self._active:
            return
        self._run(["tc", "qdisc", "del", "dev", self.interface, "root"])
        self._active = False

    def _run(self, argv: Sequence[str]) -> None:
        try:
            proc = self.runner(argv)
        except OSError as exc:
            raise ConditionError(f"cannot run {argv[0]}: {exc}") from exc
        if proc.returncode != 0:
            stderr = (proc.stderr or "").strip()
            raise ConditionError(f"{' '.join(argv)} failed: {stderr}")


# ---------------------------------------------------------------------------
# Browser profile templates. Each run gets a throwaway copy so state
# never leaks between iterations.

def prepare_profile(template_dir: str | Path, work_root: str | Path) -> Path:
    template = Path(template_dir)
    if not template.is_dir():
        raise ConditionError(f"profile template {template} does not exist")
    target = Path(tempfile.mkdtemp(prefix="profile-", dir=str(work_root)))
    shutil.copytree(template, target, dirs_exist_ok=True)
    return target


@dataclass(frozen=True)
class ActiveCondition:
    """Everything a live condition contributes to a run."""

    spec: ConditionSpec
    browser_args: tuple[str, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)


@contextlib.contextmanager
def apply_condition(
    spec: ConditionSpec,
    dns_resolver: str = "",
    shape_interface: str = "",
    command_runner: Optional[CommandRunner] = None,
    probe_domain: str = DEFAULT_PROBE_DOMAIN,
    verify: bool = True,
) -> Iterator[ActiveCondition]:
    """Activate a condition for the duration of a campaign.

    The ad-block leg requires ``dns_resolver`` (verified by probing a
    known ad domain); the latency leg requires ``shape_interface``.
    Missing prerequisites raise instead of degrading silently.
    """
    browser_args: list[str] = []
    metadata: dict[str, Any] = {"condition": spec.to_dict()}
    shaper: Optional[TcNetemShaper] = None

    if spec.adblock:
        if not dns_resolver:
            raise ConditionError("adblock condition needs a dns_resolver address")
        if verify:
            verify_adblock(dns_resolver, probe_domain)
        metadata["dns_resolver"] = dns_resolver
    if spec.injected_latency_ms:
        if not shape_interface:
            raise ConditionError("latency condition needs a shape_interface")
        shaper = TcNetemShaper(
            interface=shape_interface,
            delay_ms=spec.injected_latency_ms,
            runner=command_runner or _default_runner,
        )
        metadata["latency_shaping"] = {
            "interface": shape_interface,
            "delay_ms": spec.injected_latency_ms,
            "direction": "egress",
        }
    if spec.tracking_profile == "restrictive":
        metadata["tracking_profile"] = "restrictive"

    if shaper is not None:
        shaper.apply()
    try:
        yield ActiveCondition(
            spec=spec, browser_args=tuple(browser_args), metadata=metadata
        )
    finally:
        if shaper is not None:
            shaper.restore()
