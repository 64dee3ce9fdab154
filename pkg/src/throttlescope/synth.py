"""Labeled synthetic measurement corpora for testing detectors end to end.

Counters are synthesized backward from drawn ground-truth values (throughput,
RTT, loss, congestion-limited share) so the metrics layer recovers them, and
every record carries a truth entry saying whether a throttling policy was in
force. Generation is deterministic per seed: each (client, day) cell draws
from its own counter-based RNG stream, so any evaluation order produces the
same corpus.

RNG layout (Philox 4x64, 128-bit key):
    key = (seed mod 2^64) << 64 | tag
    tag = (1 << 62) | client_index          client-stable draws
    tag = (client_index << 24) | day_index  per-cell draws
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from datetime import date, datetime, time, timedelta, timezone
from importlib import resources
from ipaddress import IPv4Network
from pathlib import Path

import numpy as np
from numpy.random import Generator, Philox

from .attribution import PrefixTable
from .ingest import Direction, MeasurementRecord

_MASK64 = (1 << 64) - 1
_CLIENT_TAG = 1 << 62
_DAY_BITS = 24

# Guard rails keeping every generated record inside the validity filter.
_MIN_DUR_US = 9_600_000
_MAX_DUR_US = 11_000_000
_MAX_THROUGHPUT_MBPS = 115.0
_SEGMENT_OCTETS = 1460

SCENARIO_NAMES = ("NOV2011", "OCT2012", "STAGGERED", "EXEMPT_ACADEMIC", "DIURNAL_ONLY")


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True, slots=True)
class GroupSpec:
    asn: int
    prefix: str
    owner: str
    n_clients: int
    log_mean_mbps: float  # ln of the group's median throughput in Mbit/s
    log_sigma: float


@dataclass(frozen=True, slots=True)
class DiurnalShape:
    amplitude: float  # peak-hour slowdown fraction in [0, 1)
    peak_local_hour: float
    utc_offset_minutes: int


@dataclass(frozen=True, slots=True)
class ThrottlePolicy:
    start: date
    end: date
    factor: float | None = None  # multiplicative cap in (0, 1]
    ceiling_mbps: float | None = None  # absolute cap
    scope_asns: tuple[int, ...] = ()  # empty together with scope_prefixes = ALL
    scope_prefixes: tuple[str, ...] = ()
    exempt_asns: tuple[int, ...] = ()
    exempt_prefixes: tuple[str, ...] = ()
    stagger_days: tuple[tuple[int, int], ...] = ()  # (asn, onset delay days)
    loss_injection: float = 0.0
    rtt_inflation: float = 1.0

    def applies_to(self, group: GroupSpec) -> bool:
        if group.asn in self.exempt_asns or group.prefix in self.exempt_prefixes:
            return False
        if not self.scope_asns and not self.scope_prefixes:
            return True
        return group.asn in self.scope_asns or group.prefix in self.scope_prefixes

    def onset_for(self, group: GroupSpec) -> date:
        delay = dict(self.stagger_days).get(group.asn, 0)
        return self.start + timedelta(days=delay)


@dataclass(frozen=True, slots=True)
class ThrottleScenario:
    name: str
    seed: int
    start: date
    end: date
    groups: tuple[GroupSpec, ...]
    diurnal: DiurnalShape
    tests_per_client_day: float
    server_mix: tuple[tuple[str, float], ...]
    policies: tuple[ThrottlePolicy, ...]
    country: str = "IR"

    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def validate(self) -> None:
        if self.start > self.end:
            raise ScenarioError("empty span")
        if self.tests_per_client_day <= 0:
            raise ScenarioError("tests_per_client_day must be positive")
        total_p = sum(p for _, p in self.server_mix)
        if abs(total_p - 1.0) > 1e-9:
            raise ScenarioError(f"server mix probabilities sum to {total_p}, not 1")
        if not (0.0 <= self.diurnal.amplitude < 1.0):
            raise ScenarioError("diurnal amplitude must be in [0, 1)")
        if not (-720 <= self.diurnal.utc_offset_minutes <= 840):
            raise ScenarioError("utc offset outside [-720, 840] minutes")
        if not self.groups:
            raise ScenarioError("scenario needs at least one group")
        for group in self.groups:
            if group.n_clients < 1:
                raise ScenarioError(f"group AS{group.asn}: n_clients must be >= 1")
            network = IPv4Network(group.prefix)
            if group.n_clients > network.num_addresses - 2:
                raise ScenarioError(
                    f"group AS{group.asn}: {group.n_clients} clients exceed "
                    f"hosts of {group.prefix}"
                )
        for policy in self.policies:
            if policy.start > policy.end:
                raise ScenarioError("policy with empty interval")
            if (policy.factor is None) == (policy.ceiling_mbps is None):
                raise ScenarioError("policy needs exactly one of factor or ceiling")
            if policy.factor is not None and not (0.0 < policy.factor <= 1.0):
                raise ScenarioError("policy factor must be in (0, 1]")
            if policy.ceiling_mbps is not None and policy.ceiling_mbps <= 0:
                raise ScenarioError("policy ceiling must be positive")
            if policy.loss_injection < 0 or policy.rtt_inflation <= 0:
                raise ScenarioError("bad loss/rtt policy parameters")
            if any(delay < 0 for _, delay in policy.stagger_days):
                raise ScenarioError("stagger delays must be >= 0")


@dataclass(frozen=True, slots=True)
class RecordTruth:
    """Ground truth for one generated record (aligned by source_line)."""

    line_no: int
    client_addr: str
    throughput_bps: float
    avg_rtt_ms: float
    loss_congestion: float
    loss_retrans: float
    net_limited_ratio: float
    duration_s: float
    throttled: bool
    policy_index: int | None


@dataclass(frozen=True, slots=True)
class TruthEvent:
    """One policy as applied to one group, stagger included."""

    policy_index: int
    asn: int
    prefix: str
    start: date
    end: date
    factor: float | None
    ceiling_mbps: float | None
    loss_injection: float
    rtt_inflation: float


@dataclass(slots=True)
class SynthResult:
    scenario: ThrottleScenario
    records: list[MeasurementRecord]
    truths: list[RecordTruth]
    events: list[TruthEvent]
    prefix_table: PrefixTable


@dataclass(frozen=True, slots=True)
class _Client:
    index: int
    addr: str
    group: GroupSpec
    base_mbps: float
    base_rtt_ms: float
    base_loss: float
    base_nlr: float


def _stream(seed: int, tag: int) -> Generator:
    return Generator(Philox(key=((seed & _MASK64) << 64) | (tag & _MASK64)))


def _diurnal_multiplier(shape: DiurnalShape, utc_second: int) -> float:
    local_hour = (utc_second / 3600.0 + shape.utc_offset_minutes / 60.0) % 24.0
    load = 0.5 * (1.0 + math.cos(2.0 * math.pi * (local_hour - shape.peak_local_hour) / 24.0))
    return 1.0 - shape.amplitude * load


def _build_clients(scenario: ThrottleScenario) -> list[_Client]:
    clients: list[_Client] = []
    index = 0
    for group in scenario.groups:
        base = int(IPv4Network(group.prefix).network_address)
        for i in range(group.n_clients):
            rng = _stream(scenario.seed, _CLIENT_TAG | index)
            addr_int = base + 1 + i
            clients.append(
                _Client(
                    index=index,
                    addr=f"{addr_int >> 24 & 255}.{addr_int >> 16 & 255}."
                    f"{addr_int >> 8 & 255}.{addr_int & 255}",
                    group=group,
                    base_mbps=float(np.exp(rng.normal(group.log_mean_mbps, group.log_sigma))),
                    base_rtt_ms=float(np.exp(rng.normal(math.log(120.0), 0.35))),
                    base_loss=float(rng.uniform(0.004, 0.03)),
                    base_nlr=float(rng.uniform(0.25, 0.65)),
                )
            )
            index += 1
    return clients


def _pick_country(mix: tuple[tuple[str, float], ...], u: float) -> str:
    acc = 0.0
    for country, p in mix:
        acc += p
        if u < acc:
            return country
    return mix[-1][0]


def generate(scenario: ThrottleScenario) -> SynthResult:
    """Generate a corpus: records ordered by timestamp, truth per record."""
    scenario.validate()
    clients = _build_clients(scenario)
    n_days = scenario.n_days()
    mix = scenario.server_mix
    policies = scenario.policies

    staged: list[tuple[datetime, str, int, MeasurementRecord, RecordTruth]] = []
    for client in clients:
        group = client.group
        group_policies = [
            (idx, p, p.onset_for(group))
            for idx, p in enumerate(policies)
            if p.applies_to(group)
        ]
        for day_index in range(n_days):
            day = scenario.start + timedelta(days=day_index)
            rng = _stream(scenario.seed, (client.index << _DAY_BITS) | day_index)
            n_tests = int(rng.poisson(scenario.tests_per_client_day))
            if n_tests == 0:
                continue
            active = [(idx, p) for idx, p, onset in group_policies if onset <= day <= p.end]
            for test_index in range(n_tests):
                second = int(rng.integers(0, 86_400))
                mbps = (
                    client.base_mbps
                    * _diurnal_multiplier(scenario.diurnal, second)
                    * float(np.exp(rng.normal(0.0, 0.08)))
                )
                loss = client.base_loss
                rtt = client.base_rtt_ms
                for _, policy in active:
                    if policy.factor is not None:
                        mbps *= policy.factor
                    else:
                        mbps = min(mbps, policy.ceiling_mbps)  # type: ignore[arg-type]
                    loss += policy.loss_injection
                    rtt *= policy.rtt_inflation
                if active:
                    mbps *= float(np.exp(rng.normal(0.0, 0.03)))
                mbps = min(mbps, _MAX_THROUGHPUT_MBPS)
                loss = min(loss, 0.9)
                nlr = client.base_nlr * float(rng.uniform(0.9, 1.1))

                duration_us = int(rng.integers(_MIN_DUR_US, _MAX_DUR_US + 1))
                octets = int(round(mbps * duration_us / 8.0))
                cwnd_us = int(round(nlr * duration_us))
                rest_us = duration_us - cwnd_us
                rwin_us = int(round(rest_us * float(rng.uniform(0.3, 0.9))))
                snd_us = rest_us - rwin_us

                count_rtt = int(rng.integers(20, 400))
                sum_rtt = int(round(rtt * count_rtt))
                avg_rtt = sum_rtt / count_rtt
                min_rtt = int(math.floor(avg_rtt * float(rng.uniform(0.55, 0.9))))
                max_rtt = int(math.ceil(avg_rtt * float(rng.uniform(1.4, 2.6))))

                segs_out = max(1, math.ceil(octets / _SEGMENT_OCTETS))
                cong_signals = min(segs_out, int(round(loss * segs_out)))
                data_segs_out = segs_out
                retrans = min(
                    data_segs_out,
                    int(round(loss * float(rng.uniform(0.4, 0.9)) * data_segs_out)),
                )

                timestamp = datetime.combine(
                    day, time(second // 3600, second % 3600 // 60, second % 60),
                    tzinfo=timezone.utc,
                )
                record = MeasurementRecord(
                    client_addr=client.addr,
                    timestamp=timestamp,
                    server_country=_pick_country(mix, float(rng.random())),
                    direction=Direction.S2C,
                    sum_rtt=float(sum_rtt),
                    count_rtt=count_rtt,
                    min_rtt=float(min_rtt),
                    max_rtt=float(max_rtt),
                    cong_signals=cong_signals,
                    segs_out=segs_out,
                    segs_retrans=retrans,
                    data_segs_out=data_segs_out,
                    snd_lim_time_rwin=rwin_us,
                    snd_lim_time_cwnd=cwnd_us,
                    snd_lim_time_snd=snd_us,
                    hc_thru_octets_acked=octets,
                )
                truth = RecordTruth(
                    line_no=0,
                    client_addr=client.addr,
                    throughput_bps=octets * 8.0 / (duration_us / 1e6),
                    avg_rtt_ms=avg_rtt,
                    loss_congestion=cong_signals / segs_out,
                    loss_retrans=retrans / data_segs_out,
                    net_limited_ratio=cwnd_us / duration_us,
                    duration_s=duration_us / 1e6,
                    throttled=bool(active),
                    policy_index=active[0][0] if active else None,
                )
                staged.append((timestamp, client.addr, test_index, record, truth))

    staged.sort(key=lambda item: (item[0], item[1], item[2]))
    records: list[MeasurementRecord] = []
    truths: list[RecordTruth] = []
    for line_no, (_, _, _, record, truth) in enumerate(staged, start=1):
        records.append(replace(record, source_line=line_no))
        truths.append(replace(truth, line_no=line_no))

    events = [
        TruthEvent(
            policy_index=idx,
            asn=group.asn,
            prefix=group.prefix,
            start=policy.onset_for(group),
            end=policy.end,
            factor=policy.factor,
            ceiling_mbps=policy.ceiling_mbps,
            loss_injection=policy.loss_injection,
            rtt_inflation=policy.rtt_inflation,
        )
        for idx, policy in enumerate(policies)
        for group in scenario.groups
        if policy.applies_to(group)
    ]
    table = PrefixTable(
        (g.prefix, g.asn, g.owner, scenario.country) for g in scenario.groups
    )
    return SynthResult(
        scenario=scenario,
        records=records,
        truths=truths,
        events=events,
        prefix_table=table,
    )


def scenario_to_dict(scenario: ThrottleScenario) -> dict:
    return {
        "name": scenario.name,
        "seed": scenario.seed,
        "span": [scenario.start.isoformat(), scenario.end.isoformat()],
        "country": scenario.country,
        "tests_per_client_day": scenario.tests_per_client_day,
        "diurnal": {
            "amplitude": scenario.diurnal.amplitude,
            "peak_local_hour": scenario.diurnal.peak_local_hour,
            "utc_offset_minutes": scenario.diurnal.utc_offset_minutes,
        },
        "server_mix": [[c, p] for c, p in scenario.server_mix],
        "groups": [
            {
                "asn": g.asn,
                "prefix": g.prefix,
                "owner": g.owner,
                "n_clients": g.n_clients,
                "log_mean_mbps": g.log_mean_mbps,
                "log_sigma": g.log_sigma,
            }
            for g in scenario.groups
        ],
        "policies": [
            {
                "start": p.start.isoformat(),
                "end": p.end.isoformat(),
                "factor": p.factor,
                "ceiling_mbps": p.ceiling_mbps,
                "scope_asns": list(p.scope_asns),
                "scope_prefixes": list(p.scope_prefixes),
                "exempt_asns": list(p.exempt_asns),
                "exempt_prefixes": list(p.exempt_prefixes),
                "stagger_days": [list(pair) for pair in p.stagger_days],
                "loss_injection": p.loss_injection,
                "rtt_inflation": p.rtt_inflation,
            }
            for p in scenario.policies
        ],
    }


def scenario_from_dict(data: dict) -> ThrottleScenario:
    try:
        scenario = ThrottleScenario(
            name=data.get("name", "custom"),
            seed=int(data["seed"]),
            start=date.fromisoformat(data["span"][0]),
            end=date.fromisoformat(data["span"][1]),
            country=data.get("country", "IR"),
            tests_per_client_day=float(data["tests_per_client_day"]),
            diurnal=DiurnalShape(
                amplitude=float(data["diurnal"]["amplitude"]),
                peak_local_hour=float(data["diurnal"]["peak_local_hour"]),
                utc_offset_minutes=int(data["diurnal"]["utc_offset_minutes"]),
            ),
            server_mix=tuple((str(c), float(p)) for c, p in data["server_mix"]),
            groups=tuple(
                GroupSpec(
                    asn=int(g["asn"]),
                    prefix=str(g["prefix"]),
                    owner=str(g.get("owner", f"AS{g['asn']}")),
                    n_clients=int(g["n_clients"]),
                    log_mean_mbps=float(g["log_mean_mbps"]),
                    log_sigma=float(g["log_sigma"]),
                )
                for g in data["groups"]
            ),
            policies=tuple(
                ThrottlePolicy(
                    start=date.fromisoformat(p["start"]),
                    end=date.fromisoformat(p["end"]),
                    factor=None if p.get("factor") is None else float(p["factor"]),
                    ceiling_mbps=(
                        None if p.get("ceiling_mbps") is None else float(p["ceiling_mbps"])
                    ),
                    scope_asns=tuple(int(a) for a in p.get("scope_asns", [])),
                    scope_prefixes=tuple(p.get("scope_prefixes", [])),
                    exempt_asns=tuple(int(a) for a in p.get("exempt_asns", [])),
                    exempt_prefixes=tuple(p.get("exempt_prefixes", [])),
                    stagger_days=tuple(
                        (int(a), int(d)) for a, d in p.get("stagger_days", [])
                    ),
                    loss_injection=float(p.get("loss_injection", 0.0)),
                    rtt_inflation=float(p.get("rtt_inflation", 1.0)),
                )
                for p in data.get("policies", [])
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario config: {exc}") from exc
    scenario.validate()
    return scenario


def load_scenario(source: str | Path) -> ThrottleScenario:
    """Load a scenario from a canned name or a JSON config path."""
    name = str(source)
    if name.upper() in SCENARIO_NAMES:
        return replay_episode(name.upper())
    path = Path(source)
    if not path.exists():
        raise ScenarioError(
            f"unknown scenario {source!r}: not a canned name "
            f"{list(SCENARIO_NAMES)} or an existing file"
        )
    return scenario_from_dict(json.loads(path.read_text(encoding="utf-8")))


def replay_episode(name: str) -> ThrottleScenario:
    """A canned scenario whose national trajectory mirrors a known episode."""
    if name not in SCENARIO_NAMES:
        raise ScenarioError(f"unknown scenario name {name!r}; pick from {SCENARIO_NAMES}")
    text = (
        resources.files("throttlescope.data.scenarios")
        .joinpath(f"{name.lower()}.json")
        .read_text(encoding="utf-8")
    )
    return scenario_from_dict(json.loads(text))
