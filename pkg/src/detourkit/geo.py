"""IP-to-location enrichment with a local cache.

Lookups go cache first; on a miss the configured provider is queried once
and the answer persisted. Reserved and private ranges short-circuit to
unknown without touching the provider, and provider failures degrade to
unknown fields instead of erroring, so desk-scale runs work fully offline.

The cache is a plain append-friendly CSV (``ip,city,region,country,
timestamp``); the last entry for an IP wins.
"""

from __future__ import annotations

import csv
import ipaddress
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

import requests

from .detours import DetourInsight
from .errors import InvalidAddressError
from .graph import KIND_PROBE, canonical_ipv4

SOURCE_CACHE = "cache"
SOURCE_PROVIDER = "provider"
SOURCE_STATIC = "static_file"

ProviderResult = Optional[tuple[Optional[str], Optional[str], Optional[str]]]


@dataclass(frozen=True, slots=True)
class GeoRecord:
    """Location of one IP; None fields are unknown."""

    ip: str
    city: Optional[str]
    region: Optional[str]
    country: Optional[str]
    source: str

    def __post_init__(self) -> None:
        if self.city is not None and self.country is None:
            raise ValueError("a record with a city must carry its country")


def _normalize_fields(
    city: Optional[str], region: Optional[str], country: Optional[str]
) -> tuple[Optional[str], Optional[str], Optional[str]]:
    city = city or None
    region = region or None
    country = country or None
    if country is None:
        city = None
    return city, region, country


def unknown_record(ip: str, source: str = SOURCE_PROVIDER) -> GeoRecord:
    return GeoRecord(ip=ip, city=None, region=None, country=None, source=source)


class NullGeoProvider:
    """Always answers unknown; the fully-offline default."""

    source_label = SOURCE_PROVIDER

    def fetch(self, ip: str) -> ProviderResult:
        return None


class StaticFileGeoProvider:
    """Serves lookups from a CSV of ip,city,region,country rows."""

    source_label = SOURCE_STATIC

    def __init__(self, path: str | Path):
        self._table: dict[str, tuple[Optional[str], Optional[str], Optional[str]]] = {}
        with open(path, "r", encoding="utf-8", newline="") as handle:
            for row in csv.reader(handle):
                if not row or not row[0].strip() or row[0].strip().lower() == "ip":
                    continue
                padded = [cell.strip() for cell in row] + ["", "", ""]
                self._table[padded[0]] = _normalize_fields(padded[1], padded[2], padded[3])

    def fetch(self, ip: str) -> ProviderResult:
        return self._table.get(ip)


class HttpGeoProvider:
    """Queries a per-IP HTTP resource returning city/region/country JSON.

    Requests are spaced at least ``min_interval_s`` apart. Any transport or
    decoding failure yields None so callers degrade to unknown.
    """

    source_label = SOURCE_PROVIDER

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 5.0,
        min_interval_s: float = 0.1,
        fetcher: Optional[Callable[[str, float], dict]] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.min_interval_s = min_interval_s
        self._fetcher = fetcher if fetcher is not None else self._http_get
        self._last_request = 0.0
        self._lock = threading.Lock()

    @staticmethod
    def _http_get(url: str, timeout_s: float) -> dict:
        response = requests.get(url, timeout=timeout_s)
        response.raise_for_status()
        return response.json()

    def fetch(self, ip: str) -> ProviderResult:
        with self._lock:
            wait = self._last_request + self.min_interval_s - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()
        try:
            payload = self._fetcher(f"{self.base_url}/{ip}", self.timeout_s)
        except Exception:
            return None
        if not isinstance(payload, dict):
            return None
        return _normalize_fields(
            payload.get("city"), payload.get("region"), payload.get("country")
        )


class GeoCache:
    """CSV-backed ip -> location cache; appends only, last entry wins."""

    HEADER = ("ip", "city", "region", "country", "timestamp")

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, GeoRecord] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8", newline="") as handle:
            for row in csv.reader(handle):
                if not row or not row[0].strip() or row[0].strip().lower() == "ip":
                    continue
                padded = [cell.strip() for cell in row] + ["", "", ""]
                city, region, country = _normalize_fields(padded[1], padded[2], padded[3])
                self._entries[padded[0]] = GeoRecord(
                    ip=padded[0], city=city, region=region, country=country, source=SOURCE_CACHE
                )

    def get(self, ip: str) -> Optional[GeoRecord]:
        return self._entries.get(ip)

    def put(self, record: GeoRecord) -> None:
        with self._lock:
            self._entries[record.ip] = replace(record, source=SOURCE_CACHE)
            new_file = not self.path.exists()
            with open(self.path, "a", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle)
                if new_file:
                    writer.writerow(self.HEADER)
                writer.writerow(
                    [
                        record.ip,
                        record.city or "",
                        record.region or "",
                        record.country or "",
                        int(time.time()),
                    ]
                )

    def __len__(self) -> int:
        return len(self._entries)


def _is_reserved(ip: str) -> bool:
    address = ipaddress.IPv4Address(ip)
    return (
        address.is_private
        or address.is_reserved
        or address.is_loopback
        or address.is_link_local
        or address.is_multicast
        or address.is_unspecified
    )


class GeoLookup:
    """Cache-then-provider lookup pipeline.

    Safe to call from parallel workers: provider calls and cache writes are
    serialized. Failed lookups are remembered in-process so repeat calls
    stay idempotent and never re-query the provider.
    """

    def __init__(self, cache: Optional[GeoCache] = None, provider=None):
        self.cache = cache
        self.provider = provider if provider is not None else NullGeoProvider()
        self._lock = threading.Lock()
        self._unresolved: dict[str, GeoRecord] = {}

    def lookup(self, ip: str) -> GeoRecord:
        """Locate one IPv4 address; never fails for valid input."""
        canonical = canonical_ipv4(ip.strip())
        if canonical is None:
            raise InvalidAddressError(f"not an IPv4 address: {ip!r}")
        if _is_reserved(canonical):
            return unknown_record(canonical)
        if self.cache is not None:
            cached = self.cache.get(canonical)
            if cached is not None:
                return cached
        with self._lock:
            known = self._unresolved.get(canonical)
            if known is not None:
                return known
            if self.cache is not None:
                cached = self.cache.get(canonical)
                if cached is not None:
                    return cached
            result = self.provider.fetch(canonical)
            if result is None:
                record = unknown_record(canonical, source=self.provider.source_label)
                self._unresolved[canonical] = record
                return record
            city, region, country = _normalize_fields(*result)
            record = GeoRecord(
                ip=canonical,
                city=city,
                region=region,
                country=country,
                source=self.provider.source_label,
            )
            if self.cache is not None:
                self.cache.put(record)
            return record


@dataclass(frozen=True, slots=True)
class LocatedInsight:
    """A detour insight plus the location of each endpoint."""

    insight: DetourInsight
    source_geo: GeoRecord
    via_geo: GeoRecord
    destination_geo: GeoRecord


def load_probe_locations(path: str | Path) -> dict[str, GeoRecord]:
    """Load a probe_id,city,region,country sidecar table."""
    table: dict[str, GeoRecord] = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.reader(handle):
            if not row or not row[0].strip() or row[0].strip().lower() == "probe_id":
                continue
            padded = [cell.strip() for cell in row] + ["", "", ""]
            city, region, country = _normalize_fields(padded[1], padded[2], padded[3])
            table[padded[0]] = GeoRecord(
                ip=padded[0], city=city, region=region, country=country, source=SOURCE_STATIC
            )
    return table


def annotate(
    insights: Iterable[DetourInsight],
    lookup: GeoLookup,
    probe_locations: Optional[dict[str, GeoRecord]] = None,
) -> Iterator[LocatedInsight]:
    """Attach a location to every endpoint of every insight.

    Insights are passed through untouched (counts and numbers preserved);
    endpoints that cannot be located get unknown records. Probe-keyed
    endpoints are resolved through the sidecar table.
    """
    probe_locations = probe_locations or {}

    def locate(key) -> GeoRecord:
        if key.kind == KIND_PROBE:
            found = probe_locations.get(key.value)
            return found if found is not None else unknown_record(key.value)
        try:
            return lookup.lookup(key.value)
        except InvalidAddressError:
            return unknown_record(key.value)

    for insight in insights:
        yield LocatedInsight(
            insight=insight,
            source_geo=locate(insight.source),
            via_geo=locate(insight.via),
            destination_geo=locate(insight.destination),
        )
