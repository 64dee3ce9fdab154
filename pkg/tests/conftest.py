"""Shared fixtures and record factories."""

from __future__ import annotations

import dataclasses
from datetime import date, datetime, timezone

import pytest

from throttlescope.aggregate import best_per_client_day
from throttlescope.ingest import Direction, MeasurementRecord, validate
from throttlescope.metrics import derive
from throttlescope.synth import (
    DiurnalShape,
    GroupSpec,
    ThrottlePolicy,
    ThrottleScenario,
    generate,
)


def make_record(**overrides) -> MeasurementRecord:
    """A valid S2C record: 10 s, 1.25 MB acked -> 1.0 Mbit/s."""
    fields = dict(
        client_addr="91.98.5.5",
        timestamp=datetime(2011, 11, 1, 12, 0, 0, tzinfo=timezone.utc),
        server_country="GR",
        direction=Direction.S2C,
        sum_rtt=5000.0,
        count_rtt=50,
        min_rtt=60.0,
        max_rtt=300.0,
        cong_signals=10,
        segs_out=900,
        segs_retrans=5,
        data_segs_out=880,
        snd_lim_time_rwin=3_000_000,
        snd_lim_time_cwnd=5_000_000,
        snd_lim_time_snd=2_000_000,
        hc_thru_octets_acked=1_250_000,
    )
    fields.update(overrides)
    return MeasurementRecord(**fields)


def small_scenario(seed: int = 7, **overrides) -> ThrottleScenario:
    """Two groups, two months, one throttling policy: fast to generate."""
    fields = dict(
        name="small",
        seed=seed,
        start=date(2011, 10, 1),
        end=date(2011, 11, 30),
        groups=(
            GroupSpec(
                asn=12660,
                prefix="213.233.160.0/19",
                owner="Sharif University of Technology",
                n_clients=8,
                log_mean_mbps=1.7917594692280550,
                log_sigma=0.5,
            ),
            GroupSpec(
                asn=16322,
                prefix="91.98.0.0/15",
                owner="Parsonline",
                n_clients=12,
                log_mean_mbps=0.7884573603642703,
                log_sigma=0.5,
            ),
        ),
        diurnal=DiurnalShape(amplitude=0.3, peak_local_hour=20.0, utc_offset_minutes=270),
        tests_per_client_day=2.0,
        server_mix=(("GR", 0.6), ("US", 0.4)),
        policies=(
            ThrottlePolicy(
                start=date(2011, 11, 10),
                end=date(2011, 11, 30),
                factor=0.3,
                loss_injection=0.2,
            ),
        ),
    )
    fields.update(overrides)
    return ThrottleScenario(**fields)


def pipeline_days(result):
    """validate -> derive -> attribute -> dedup, for a SynthResult."""
    tests = []
    for record in result.records:
        if not validate(record).valid:
            continue
        attribution = result.prefix_table.lookup(record.client_addr)
        assert attribution is not None
        tests.append((record, derive(record), attribution))
    return tests, best_per_client_day(tests)


@pytest.fixture(scope="session")
def small_result():
    return generate(small_scenario())


def with_seed(scenario: ThrottleScenario, seed: int) -> ThrottleScenario:
    return dataclasses.replace(scenario, seed=seed)
