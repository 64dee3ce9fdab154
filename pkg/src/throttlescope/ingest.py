"""Parse TCP diagnostic test records from NDJSON and filter out unusable tests.

Each input line describes one server-to-client (or client-to-server) diagnostic
test through its kernel-level connection counters. Parsing is streaming and
fault-isolating: a malformed line is reported with its line number and never
aborts the rest of the stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from ipaddress import AddressValueError, IPv4Address
from typing import IO, Iterable, Iterator

# Duration bounds are strict on both ends; duration is the summed
# send-limited time (rwin + cwnd + snd), the same denominator used for
# throughput.
MIN_DURATION_US = 9_000_000
MAX_DURATION_US = 3_600_000_000
MIN_SEGMENTS = 1
MAX_SEGMENTS = 120_000


class Direction(str, Enum):
    S2C = "S2C"
    C2S = "C2S"


class ValidityReason(str, Enum):
    OK = "OK"
    TOO_SHORT = "TOO_SHORT"
    TOO_LONG = "TOO_LONG"
    TOO_FEW_PACKETS = "TOO_FEW_PACKETS"
    TOO_MANY_PACKETS = "TOO_MANY_PACKETS"
    WRONG_DIRECTION = "WRONG_DIRECTION"
    MALFORMED = "MALFORMED"


@dataclass(frozen=True, slots=True)
class ValidityVerdict:
    valid: bool
    reason: ValidityReason


@dataclass(frozen=True, slots=True)
class MeasurementRecord:
    """One diagnostic test, expressed through its TCP stack counters.

    Time counters are microseconds, RTT fields are milliseconds.
    ``source_line`` is parser provenance (1-based), not part of the wire
    format.
    """

    client_addr: str
    timestamp: datetime
    server_country: str
    direction: Direction
    sum_rtt: float
    count_rtt: int
    min_rtt: float
    max_rtt: float
    cong_signals: int
    segs_out: int
    segs_retrans: int
    data_segs_out: int
    snd_lim_time_rwin: int
    snd_lim_time_cwnd: int
    snd_lim_time_snd: int
    hc_thru_octets_acked: int
    source_line: int = 0

    @property
    def duration_us(self) -> int:
        return self.snd_lim_time_rwin + self.snd_lim_time_cwnd + self.snd_lim_time_snd


@dataclass(frozen=True, slots=True)
class ParseFailure:
    """A line that could not be turned into a record."""

    line_no: int
    reason: str


# Wire name -> (attribute, kind). Kinds: "count" (non-negative int),
# "ms" (non-negative number).
_COUNTER_FIELDS = {
    "CountRTT": "count_rtt",
    "CongSignals": "cong_signals",
    "SegsOut": "segs_out",
    "SegsRetrans": "segs_retrans",
    "DataSegsOut": "data_segs_out",
    "SndLimTimeRwin": "snd_lim_time_rwin",
    "SndLimTimeCwnd": "snd_lim_time_cwnd",
    "SndLimTimeSnd": "snd_lim_time_snd",
    "HCThruOctetsAcked": "hc_thru_octets_acked",
}
_RTT_FIELDS = {"SumRTT": "sum_rtt", "MinRTT": "min_rtt", "MaxRTT": "max_rtt"}
WIRE_FIELDS = (
    "client_addr",
    "timestamp",
    "server_country",
    "direction",
    "SumRTT",
    "CountRTT",
    "MinRTT",
    "MaxRTT",
    "CongSignals",
    "SegsOut",
    "SegsRetrans",
    "DataSegsOut",
    "SndLimTimeRwin",
    "SndLimTimeCwnd",
    "SndLimTimeSnd",
    "HCThruOctetsAcked",
)


class MalformedLineError(ValueError):
    pass


def _as_count(name: str, value: object) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedLineError(f"non-numeric counter {name}")
    if isinstance(value, float):
        if not value.is_integer():
            raise MalformedLineError(f"non-integer counter {name}")
        value = int(value)
    if value < 0:
        raise MalformedLineError(f"negative counter {name}")
    return value


def _as_millis(name: str, value: object) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedLineError(f"non-numeric counter {name}")
    if value < 0:
        raise MalformedLineError(f"negative counter {name}")
    return float(value)


def _parse_timestamp(value: object) -> datetime:
    if not isinstance(value, str):
        raise MalformedLineError("timestamp must be an RFC 3339 string")
    text = value.replace("Z", "+00:00") if value.endswith("Z") else value
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise MalformedLineError(f"unparsable timestamp {value!r}") from exc
    if ts.tzinfo is None:
        raise MalformedLineError("timestamp lacks a UTC offset")
    return ts.astimezone(timezone.utc)


def parse_line(line: str, line_no: int = 0) -> MeasurementRecord:
    """Parse one NDJSON line; raises MalformedLineError with the cause."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLineError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise MalformedLineError("line is not a JSON object")
    missing = [name for name in WIRE_FIELDS if name not in obj]
    if missing:
        raise MalformedLineError(f"missing field {missing[0]}")

    addr = obj["client_addr"]
    try:
        IPv4Address(addr)
    except (AddressValueError, ValueError) as exc:
        raise MalformedLineError(f"unparsable address {addr!r}") from exc

    direction_raw = obj["direction"]
    try:
        direction = Direction(direction_raw)
    except ValueError as exc:
        raise MalformedLineError(f"unknown direction {direction_raw!r}") from exc

    country = obj["server_country"]
    if not isinstance(country, str) or len(country) != 2:
        raise MalformedLineError(f"invalid server_country {country!r}")

    fields: dict[str, object] = {
        "client_addr": addr,
        "timestamp": _parse_timestamp(obj["timestamp"]),
        "server_country": country.upper(),
        "direction": direction,
        "source_line": line_no,
    }
    for wire, attr in _COUNTER_FIELDS.items():
        fields[attr] = _as_count(wire, obj[wire])
    for wire, attr in _RTT_FIELDS.items():
        fields[attr] = _as_millis(wire, obj[wire])

    record = MeasurementRecord(**fields)  # type: ignore[arg-type]
    if record.segs_retrans > record.segs_out:
        raise MalformedLineError("SegsRetrans exceeds SegsOut")
    if record.count_rtt > 0:
        avg = record.sum_rtt / record.count_rtt
        if not (record.min_rtt <= avg <= record.max_rtt):
            raise MalformedLineError("RTT ordering violated (min <= avg <= max)")
    return record


def iter_records(
    lines: Iterable[str] | IO[str],
) -> Iterator[MeasurementRecord | ParseFailure]:
    """Stream records in input order; malformed lines yield ParseFailure."""
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield parse_line(line, line_no)
        except MalformedLineError as exc:
            yield ParseFailure(line_no=line_no, reason=str(exc))


def parse_records(
    lines: Iterable[str] | IO[str],
) -> tuple[list[MeasurementRecord], list[ParseFailure]]:
    """Eager form of iter_records: (records, failures), both in input order."""
    records: list[MeasurementRecord] = []
    failures: list[ParseFailure] = []
    for item in iter_records(lines):
        if isinstance(item, ParseFailure):
            failures.append(item)
        else:
            records.append(item)
    return records, failures


def validate(record: MeasurementRecord) -> ValidityVerdict:
    """Apply the test-consistency filter.

    A test is kept only if it is downstream (S2C), its summed send-limited
    time is strictly between 9 seconds and one hour, and it exchanged at
    least 1 and fewer than 120,000 segments. Check order: direction,
    duration, then segment count.
    """
    if record.direction is not Direction.S2C:
        return ValidityVerdict(False, ValidityReason.WRONG_DIRECTION)
    duration = record.duration_us
    if duration <= MIN_DURATION_US:
        return ValidityVerdict(False, ValidityReason.TOO_SHORT)
    if duration >= MAX_DURATION_US:
        return ValidityVerdict(False, ValidityReason.TOO_LONG)
    if record.segs_out < MIN_SEGMENTS:
        return ValidityVerdict(False, ValidityReason.TOO_FEW_PACKETS)
    if record.segs_out >= MAX_SEGMENTS:
        return ValidityVerdict(False, ValidityReason.TOO_MANY_PACKETS)
    return ValidityVerdict(True, ValidityReason.OK)


def to_wire(record: MeasurementRecord) -> dict[str, object]:
    """Record as a wire-format dict (inverse of parse_line), canonical order."""
    out: dict[str, object] = {}
    for wire in WIRE_FIELDS:
        if wire == "client_addr":
            out[wire] = record.client_addr
        elif wire == "timestamp":
            out[wire] = record.timestamp.astimezone(timezone.utc).strftime(
                "%Y-%m-%dT%H:%M:%SZ"
            )
        elif wire == "server_country":
            out[wire] = record.server_country
        elif wire == "direction":
            out[wire] = record.direction.value
        elif wire in _RTT_FIELDS:
            value = getattr(record, _RTT_FIELDS[wire])
            out[wire] = int(value) if float(value).is_integer() else value
        else:
            out[wire] = getattr(record, _COUNTER_FIELDS[wire])
    return out


def to_json_line(record: MeasurementRecord) -> str:
    return json.dumps(to_wire(record), sort_keys=False, separators=(",", ":"))

