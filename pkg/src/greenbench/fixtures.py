"""Bundled reference datasets.

Deterministic demo series for four webmail setups (gmail, outlook,
proton, selfhosted) under several conditions. They let the compare and
report pipeline run, and the regression suite pin its numbers, with no
hardware counters or live services. Magnitudes are representative of
laptop-class webmail sessions.

Every series is generated from fixed session-level means and per-unit
profiles. Each unit gets 108 raw runs: 100 clean runs whose jitter sums
to zero (so the sample mean equals the target mean exactly), 4 planted
outliers the IQR filter must drop, and 4 errored runs. Seeds derive
from the series key via crc32, so regeneration is byte-stable.

Regenerate with ``python -m greenbench.fixtures --out fixtures/series``.
"""

from __future__ import annotations

import argparse
import random
import zlib
from pathlib import Path
from typing import Mapping

from .model import (
    ATTACHMENT,
    DELETE,
    LOGIN,
    LOGOUT,
    NO_ATTACHMENT,
    READ,
    REPLY,
    SESSION,
    SESSION_RECIPE,
    BASIC_UNITS,
    ConditionSpec,
    FunctionalUnitResult,
    condition_label,
    write_results,
)

CLEAN_RUNS = 100
OUTLIER_RUNS = 4
ERROR_RUNS = 4
RAW_RUNS = CLEAN_RUNS + OUTLIER_RUNS + ERROR_RUNS

JITTER = 0.01  # +/-1% uniform grid; IQR fences for a uniform sit at +/-2%

# Energy channel split: cpu and memory as fractions of machine energy.
CPU_SHARE = 0.55
MEMORY_SHARE = 0.12

# Session-level means: (energy J, duration s, traffic MB) per condition.
SESSIONS: dict[tuple[str, str], tuple[float, float, float]] = {
    ("gmail", "baseline"): (6281.0, 265.0, 15.5),
    ("outlook", "baseline"): (6072.0, 265.5, 15.12),
    ("outlook", "adblock"): (5954.65, 261.81, 13.85),
    ("proton", "baseline"): (5563.0, 239.5, 7.0),
    ("selfhosted", "baseline"): (3617.13, 150.75, 6.4),
    ("selfhosted", "latency50"): (3641.13, 152.6, 6.4),
    ("selfhosted", "pgp"): (4104.0, 178.0, 13.014),
    ("selfhosted", "pgp+latency50"): (4128.0, 180.2, 13.014),
}

CONDITIONS: dict[str, ConditionSpec] = {
    "baseline": ConditionSpec(),
    "adblock": ConditionSpec(adblock=True),
    "latency50": ConditionSpec(injected_latency_ms=50),
    "pgp": ConditionSpec(pgp=True),
    "pgp+latency50": ConditionSpec(pgp=True, injected_latency_ms=50),
}

# Per-unit share of the session, identical for energy and duration.
# The recipe (Read twice) sums to 0.97; the remaining 3% is inter-unit
# navigation overhead that belongs to the session but to no unit.
UNIT_SHARE: dict[str, float] = {
    LOGIN: 0.10,
    NO_ATTACHMENT: 0.20,
    ATTACHMENT: 0.30,
    READ: 0.06,
    REPLY: 0.17,
    DELETE: 0.02,
    LOGOUT: 0.06,
}

# Traffic is shaped differently per service family: ad-funded webmail
# spreads bytes across every page, lean services concentrate them in
# the attachment upload.
TRAFFIC_SHARE: dict[str, dict[str, float]] = {
    "gmail": {
        ATTACHMENT: 0.42, NO_ATTACHMENT: 0.13, REPLY: 0.12, READ: 0.07,
        LOGIN: 0.10, LOGOUT: 0.04, DELETE: 0.02,
    },
    "outlook": {
        ATTACHMENT: 0.42, NO_ATTACHMENT: 0.13, REPLY: 0.12, READ: 0.07,
        LOGIN: 0.10, LOGOUT: 0.04, DELETE: 0.02,
    },
    "proton": {
        ATTACHMENT: 0.75, NO_ATTACHMENT: 0.05, REPLY: 0.05, READ: 0.02,
        LOGIN: 0.05, LOGOUT: 0.02, DELETE: 0.01,
    },
    "selfhosted": {
        ATTACHMENT: 0.80, NO_ATTACHMENT: 0.04, REPLY: 0.04, READ: 0.015,
        LOGIN: 0.04, LOGOUT: 0.01, DELETE: 0.01,
    },
}

# Units whose payloads encryption touches; login/logout/delete traffic
# and energy stay at their plain values under the pgp condition.
PGP_AFFECTED = (NO_ATTACHMENT, ATTACHMENT, READ, REPLY)

# Encrypted 5 MB attachment mail: binary ciphertext plus base64
# transport encoding pushes the upload past 11 MB.
PGP_ATTACHMENT_MB = 11.1

OUTLIER_FACTORS = {"energy": 1.3, "duration": 1.28, "bytes": 1.33}

ERROR_MESSAGES = (
    "induced: step timeout",
    "induced: element missing",
    "induced: browser crash",
    "induced: step timeout",
)

EPOCH_NS = 1_700_000_000_000_000_000


def _recipe_sum(shares: Mapping[str, float]) -> float:
    return sum(shares[u] for u in SESSION_RECIPE)


def unit_means(service: str, label: str) -> dict[str, dict[str, float]]:
    """Target means per unit: energy J (machine), duration s, traffic MB.

    The Session entry carries the session-level means directly; basic
    units follow the share profiles, with the pgp condition scaling
    only the affected units so the recipe sum still lands on the
    session target.
    """
    energy, duration, mb = SESSIONS[(service, label)]
    shares = TRAFFIC_SHARE[service]
    means: dict[str, dict[str, float]] = {
        SESSION: {"energy": energy, "duration": duration, "mb": mb}
    }
    if "pgp" not in label:
        for unit in BASIC_UNITS:
            means[unit] = {
                "energy": UNIT_SHARE[unit] * energy,
                "duration": UNIT_SHARE[unit] * duration,
                "mb": shares[unit] * mb,
            }
        return means

    # pgp conditions: solve the affected-unit scale against the plain
    # values of the matching non-pgp condition.
    plain_label = label.replace("pgp+", "").replace("pgp", "") or "baseline"
    plain_energy, plain_duration, plain_mb = SESSIONS[(service, plain_label)]
    untouched = [u for u in BASIC_UNITS if u not in PGP_AFFECTED]

    def scaled(total: float, plain_total: float, share_of) -> dict[str, float]:
        plain = {u: share_of(u) * plain_total for u in BASIC_UNITS}
        target = _recipe_sum({u: share_of(u) for u in BASIC_UNITS}) * total
        fixed = sum(plain[u] for u in untouched)
        affected = sum(
            plain[u] * SESSION_RECIPE.count(u) for u in PGP_AFFECTED
        )
        scale = (target - fixed) / affected
        return {
            u: plain[u] * (scale if u in PGP_AFFECTED else 1.0)
            for u in BASIC_UNITS
        }

    energy_by_unit = scaled(energy, plain_energy, lambda u: UNIT_SHARE[u])
    duration_by_unit = scaled(duration, plain_duration, lambda u: UNIT_SHARE[u])

    # Traffic: the encrypted attachment upload is pinned, the other
    # affected units share the remainder proportionally.
    plain_traffic = {u: shares[u] * plain_mb for u in BASIC_UNITS}
    recipe_mb = _recipe_sum(shares) * mb
    fixed_mb = sum(plain_traffic[u] for u in untouched)
    rest_plain = sum(
        plain_traffic[u] * SESSION_RECIPE.count(u)
        for u in PGP_AFFECTED
        if u != ATTACHMENT
    )
    rest_scale = (recipe_mb - fixed_mb - PGP_ATTACHMENT_MB) / rest_plain
    traffic_by_unit = {}
    for u in BASIC_UNITS:
        if u == ATTACHMENT:
            traffic_by_unit[u] = PGP_ATTACHMENT_MB
        elif u in PGP_AFFECTED:
            traffic_by_unit[u] = plain_traffic[u] * rest_scale
        else:
            traffic_by_unit[u] = plain_traffic[u]

    for unit in BASIC_UNITS:
        means[unit] = {
            "energy": energy_by_unit[unit],
            "duration": duration_by_unit[unit],
            "mb": traffic_by_unit[unit],
        }
    return means


def _seed(*parts: str) -> int:
    return zlib.crc32("|".join(parts).encode())


def _jitter_factors(key: str, n: int = CLEAN_RUNS) -> list[float]:
    """Symmetric uniform grid of relative offsets, shuffled; sums to 0."""
    grid = [JITTER * (2.0 * i / (n - 1) - 1.0) for i in range(n)]
    random.Random(_seed(key)).shuffle(grid)
    return [1.0 + g for g in grid]


def generate_unit_runs(
    service: str, label: str, unit: str
) -> list[FunctionalUnitResult]:
    means = unit_means(service, label)[unit]
    energy_f = _jitter_factors(f"{service}|{label}|{unit}|energy")
    duration_f = _jitter_factors(f"{service}|{label}|{unit}|duration")
    bytes_f = _jitter_factors(f"{service}|{label}|{unit}|bytes")
    cpu_f = _jitter_factors(f"{service}|{label}|{unit}|cpu")
    memory_f = _jitter_factors(f"{service}|{label}|{unit}|memory")

    runs = []
    cursor = EPOCH_NS
    gap_ns = 2_000_000_000  # settle delay between runs
    for i in range(RAW_RUNS):
        if i < CLEAN_RUNS:
            e_mult, d_mult, b_mult = energy_f[i], duration_f[i], bytes_f[i]
            c_mult, m_mult = cpu_f[i], memory_f[i]
            error = None
        elif i < CLEAN_RUNS + OUTLIER_RUNS:
            e_mult = OUTLIER_FACTORS["energy"]
            d_mult = OUTLIER_FACTORS["duration"]
            b_mult = OUTLIER_FACTORS["bytes"]
            c_mult = m_mult = e_mult
            error = None
        else:
            e_mult = d_mult = b_mult = c_mult = m_mult = 1.0
            error = ERROR_MESSAGES[i - CLEAN_RUNS - OUTLIER_RUNS]
        machine = means["energy"] * e_mult
        duration_ns = round(means["duration"] * d_mult * 1e9)
        runs.append(
            FunctionalUnitResult(
                unit=unit,
                run_id=f"{service}-{label}-{unit}-{i:04d}",
                started_ns=cursor,
                ended_ns=cursor + duration_ns,
                energy_j={
                    "machine": machine,
                    "cpu": machine * CPU_SHARE * c_mult,
                    "memory": machine * MEMORY_SHARE * m_mult,
                },
                network_bytes=round(means["mb"] * 1e6 * b_mult),
                error=error,
            )
        )
        cursor += duration_ns + gap_ns
    return runs


def generate_store(service: str, label: str) -> list[FunctionalUnitResult]:
    """All raw runs for one (service, condition): 8 units x 108 runs."""
    runs = []
    for unit in BASIC_UNITS + (SESSION,):
        runs.extend(generate_unit_runs(service, label, unit))
    return runs


def write_fixture_stores(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for (service, label) in sorted(SESSIONS):
        condition = CONDITIONS[label]
        assert condition_label(condition) == label
        path = out / f"{service}__{label}.jsonl"
        with path.open("w") as fp:
            write_results(fp, service, label, condition, generate_store(service, label))
        paths.append(path)
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="fixtures/series", help="output directory")
    args = parser.parse_args(argv)
    for path in write_fixture_stores(args.out):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
