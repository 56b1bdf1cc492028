"""Textual traceroute parsing, hop counting and city-transit detection.

Trace files carry a one-line header ``# source_label | destination``
followed by conventional traceroute output (hop number, responding
name/address pairs, up to three RTTs, ``*`` for timeouts). Hop counts come
from the raw hop lines; the TTL left in a ping response gives an
independent hop estimate to cross-check against.

Whether a trace transits a given city is decided by reverse-DNS token
matching first (airport-code style router names), geolocation second;
router geo data alone is too unreliable to lead.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import ParseError
from .geo import GeoRecord
from .graph import canonical_ipv4

VERDICT_YES = "yes"
VERDICT_NO = "no"
VERDICT_UNKNOWN = "unknown"

# fraction of hops that must be unassessable before "no" degrades to "unknown"
UNKNOWN_HOP_FRACTION = 0.5

COMMON_INITIAL_TTLS = (64, 128, 255)

REPORT_HEADER = ("source_label", "destination", "hop_count", "city_verdict")

_HOP_LINE = re.compile(r"^\s*(\d+)\s+(.*)$")
_TRACEROUTE_TO = re.compile(r"^traceroute to (\S+)(?: \(([\d.]+)\))?", re.IGNORECASE)


@dataclass(frozen=True, slots=True)
class TracerouteHop:
    """One hop line. Unresponsive hops have no address and no RTTs.

    When a line shows several responding endpoints (per-packet load
    balancing), the first one names the hop; all RTTs on the line are kept.
    """

    index: int
    address: Optional[str]
    rdns_name: Optional[str]
    rtts_ms: tuple[float, ...]
    geo: Optional[GeoRecord] = None

    @property
    def responded(self) -> bool:
        return self.address is not None or self.rdns_name is not None


@dataclass(frozen=True, slots=True)
class TracerouteTrace:
    source_label: str
    destination: str
    hops: tuple[TracerouteHop, ...]
    reached: bool


@dataclass(frozen=True)
class CitySpec:
    """What to look for: rDNS tokens plus an optional geolocation city."""

    tokens: frozenset[str]
    geo_city: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.tokens and self.geo_city is None:
            raise ValueError("need at least one token or a geo city")


LOS_ANGELES = CitySpec(tokens=frozenset({"lax", "losangeles", "la-"}), geo_city="Los Angeles")


@dataclass(frozen=True)
class CityDetection:
    verdict: str
    evidence: tuple[tuple[int, str], ...]


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_hop_line(index: int, rest: str, lineno: int) -> TracerouteHop:
    tokens = rest.split()
    address: Optional[str] = None
    name: Optional[str] = None
    rtts: list[float] = []
    saw_endpoint = False
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if token == "*" or token.startswith("!"):
            i += 1
            continue
        if _is_float(token) and i + 1 < len(tokens) and tokens[i + 1] == "ms":
            rtts.append(float(token))
            i += 2
            continue
        # a responding endpoint: "name (ip)" or a bare address
        if i + 1 < len(tokens) and tokens[i + 1].startswith("(") and tokens[i + 1].endswith(")"):
            endpoint_name = token
            endpoint_addr = tokens[i + 1][1:-1]
            i += 2
        else:
            canonical = canonical_ipv4(token)
            if canonical is None and _is_float(token):
                raise ParseError(lineno, f"dangling value {token!r}")
            endpoint_name = None if canonical is not None else token
            endpoint_addr = canonical
            i += 1
        if not saw_endpoint:
            address = endpoint_addr
            # traceroute prints the address twice when reverse DNS fails
            name = endpoint_name if endpoint_name != endpoint_addr else None
            saw_endpoint = True
    return TracerouteHop(index=index, address=address, rdns_name=name, rtts_ms=tuple(rtts))


def parse_traceroute(text: str) -> TracerouteTrace:
    """Parse one trace. Raises :class:`ParseError` with the line number."""
    source_label = ""
    destination = ""
    dest_ip: Optional[str] = None
    hops: list[TracerouteHop] = []
    last_index = 0
    saw_content = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if saw_content:
                raise ParseError(lineno, "header after hop lines")
            body = line.lstrip("#").strip()
            if "|" in body:
                label_part, dest_part = body.split("|", 1)
                source_label = label_part.strip()
                destination = dest_part.strip()
            else:
                source_label = body
            continue
        header = _TRACEROUTE_TO.match(line)
        if header is not None:
            if not destination:
                destination = header.group(1)
            dest_ip = header.group(2)
            saw_content = True
            continue
        hop_match = _HOP_LINE.match(line)
        if hop_match is None:
            raise ParseError(lineno, f"unrecognizable line {line!r}")
        saw_content = True
        index = int(hop_match.group(1))
        if index <= last_index:
            raise ParseError(lineno, f"hop index {index} not increasing")
        last_index = index
        hops.append(_parse_hop_line(index, hop_match.group(2), lineno))

    if not hops:
        raise ParseError(1, "no hop lines found")

    last = hops[-1]
    reached = False
    if last.responded:
        dest_lower = destination.lower()
        if dest_ip is not None and last.address == dest_ip:
            reached = True
        elif last.address is not None and last.address == destination:
            reached = True
        elif last.rdns_name is not None and dest_lower and (
            last.rdns_name.lower() == dest_lower or last.rdns_name.lower().startswith(dest_lower)
        ):
            reached = True
    return TracerouteTrace(
        source_label=source_label,
        destination=destination,
        hops=tuple(hops),
        reached=reached,
    )


def read_trace_file(path: str | Path) -> TracerouteTrace:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_traceroute(handle.read())


def hop_count(trace: TracerouteTrace) -> int:
    """Number of hop lines, counted as printed (timeouts included)."""
    return len(trace.hops)


def ttl_hop_estimate(observed_ttl: int) -> Optional[int]:
    """Estimate path length from the TTL left in a ping response.

    Assumes the sender started from the nearest common initial TTL at or
    above the observed value (64, 128 or 255). Returns None when the
    observed TTL is out of range.
    """
    if not 1 <= observed_ttl <= 255:
        return None
    initial = min(t for t in COMMON_INITIAL_TTLS if t >= observed_ttl)
    return initial - observed_ttl + 1


def hops_agree(ttl_estimate: Optional[int], traceroute_hops: int, slack: int = 1) -> bool:
    """Cross-check the TTL estimate against the traceroute hop count."""
    if ttl_estimate is None:
        return False
    return abs(ttl_estimate - traceroute_hops) <= slack


def _name_candidates(name: str) -> set[str]:
    segments = name.lower().split(".")
    candidates = set(segments)
    for segment in segments:
        candidates.update(segment.split("-"))
    return candidates


def _hop_token_match(hop: TracerouteHop, tokens: frozenset[str]) -> Optional[str]:
    if hop.rdns_name is None:
        return None
    candidates = _name_candidates(hop.rdns_name)
    for token in sorted(tokens):
        lowered = token.lower()
        if any(candidate.startswith(lowered) for candidate in candidates):
            return token
    return None


def detect_city(trace: TracerouteTrace, city_spec: CitySpec) -> CityDetection:
    """Decide whether the trace transits the given city.

    ``yes`` needs evidence (a matched rDNS token or a geolocated hop);
    with no evidence the verdict degrades from ``no`` to ``unknown`` when
    at least half the hops cannot be assessed (no reverse DNS and no geo).
    """
    evidence: list[tuple[int, str]] = []
    unassessable = 0
    for hop in trace.hops:
        matched = _hop_token_match(hop, city_spec.tokens)
        if matched is not None:
            evidence.append((hop.index, matched))
            continue
        geo_city = hop.geo.city if hop.geo is not None else None
        if (
            city_spec.geo_city is not None
            and geo_city is not None
            and geo_city.lower() == city_spec.geo_city.lower()
        ):
            evidence.append((hop.index, geo_city))
            continue
        if hop.rdns_name is None and geo_city is None:
            unassessable += 1
    if evidence:
        return CityDetection(verdict=VERDICT_YES, evidence=tuple(evidence))
    if trace.hops and unassessable / len(trace.hops) >= UNKNOWN_HOP_FRACTION:
        return CityDetection(verdict=VERDICT_UNKNOWN, evidence=())
    return CityDetection(verdict=VERDICT_NO, evidence=())


def write_trace_report_csv(
    rows: Iterable[tuple[str, str, int, str]], path: str | Path
) -> None:
    """Write label/destination/hops/verdict rows; verdicts are title-cased."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_HEADER)
        for label, destination, hops, verdict in rows:
            writer.writerow([label, destination, hops, verdict.capitalize()])
