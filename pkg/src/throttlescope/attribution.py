"""Map client IPv4 addresses to (prefix, ASN, owner, country).

The table is a longest-prefix-match index over CIDR entries, loaded once per
analysis run from CSV (columns: cidr, asn, owner, country). Lookups are
read-only and safe to share across threads.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from ipaddress import IPv4Address, IPv4Network
from typing import IO, Iterable, Iterator

from .ingest import MeasurementRecord


class PrefixTableError(ValueError):
    """Malformed or duplicate CIDR while building a table."""


@dataclass(frozen=True, slots=True)
class Attribution:
    prefix: str
    asn: int
    owner: str
    country: str


class PrefixTable:
    """Immutable longest-prefix-match index over IPv4 CIDR entries."""

    def __init__(self, entries: Iterable[tuple[str, int, str, str]]):
        # One dict per prefix length: network-bits -> attribution. A lookup
        # probes lengths longest-first, so the first hit is the answer.
        self._by_len: dict[int, dict[int, Attribution]] = {}
        self._entries: list[Attribution] = []
        seen: set[tuple[int, int]] = set()
        for cidr, asn, owner, country in entries:
            try:
                network = IPv4Network(cidr)
            except ValueError as exc:
                raise PrefixTableError(f"malformed CIDR {cidr!r}: {exc}") from exc
            key = (int(network.network_address), network.prefixlen)
            if key in seen:
                raise PrefixTableError(f"duplicate CIDR {network.with_prefixlen}")
            seen.add(key)
            attribution = Attribution(
                prefix=network.with_prefixlen,
                asn=int(asn),
                owner=owner,
                country=country,
            )
            plen = network.prefixlen
            bits = int(network.network_address) >> (32 - plen) if plen else 0
            self._by_len.setdefault(plen, {})[bits] = attribution
            self._entries.append(attribution)
        self._lengths = sorted(self._by_len, reverse=True)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[Attribution]:
        return list(self._entries)

    def lookup(self, addr: str | IPv4Address) -> Attribution | None:
        """Most specific entry containing addr, or None when uncovered."""
        value = int(IPv4Address(addr))
        for plen in self._lengths:
            bits = value >> (32 - plen) if plen else 0
            hit = self._by_len[plen].get(bits)
            if hit is not None:
                return hit
        return None


def load_prefix_table(source: str | IO[str] | Iterable[str]) -> PrefixTable:
    """Build a PrefixTable from CSV with header cidr,asn,owner,country."""
    if isinstance(source, str):
        with open(source, newline="", encoding="utf-8") as handle:
            return load_prefix_table(handle)
    reader = csv.DictReader(source)
    required = {"cidr", "asn", "owner", "country"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise PrefixTableError(
            f"prefix CSV must have columns {sorted(required)}, got {reader.fieldnames}"
        )

    def rows() -> Iterator[tuple[str, int, str, str]]:
        for idx, row in enumerate(reader, start=2):
            try:
                asn = int(row["asn"])
            except (TypeError, ValueError) as exc:
                raise PrefixTableError(f"row {idx}: bad ASN {row.get('asn')!r}") from exc
            yield row["cidr"].strip(), asn, row["owner"].strip(), row["country"].strip()

    return PrefixTable(rows())


def bundled_table() -> PrefixTable:
    """The prefix fixture shipped with the package (Iranian networks)."""
    text = resources.files("throttlescope.data").joinpath("iran_prefixes.csv").read_text()
    return load_prefix_table(io.StringIO(text))


def attribute_records(
    records: Iterable[MeasurementRecord], table: PrefixTable
) -> tuple[list[tuple[MeasurementRecord, Attribution]], int]:
    """Pair each record with its attribution; returns (pairs, miss_count)."""
    pairs: list[tuple[MeasurementRecord, Attribution]] = []
    misses = 0
    for record in records:
        hit = table.lookup(record.client_addr)
        if hit is None:
            misses += 1
        else:
            pairs.append((record, hit))
    return pairs, misses


def filter_country(
    records: Iterable[MeasurementRecord], table: PrefixTable, country: str
) -> tuple[list[MeasurementRecord], int]:
    """Keep records attributed to the given country; count unattributable ones.

    Records attributed to a different country are dropped silently; records
    with no covering prefix are dropped and counted as misses.
    """
    kept: list[MeasurementRecord] = []
    misses = 0
    for record in records:
        hit = table.lookup(record.client_addr)
        if hit is None:
            misses += 1
        elif hit.country == country:
            kept.append(record)
    return kept, misses
