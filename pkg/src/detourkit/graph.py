"""Directed latency graph aggregated from ping records.

Edge weights are noise-reduced RTT estimates: each record is reduced to its
representative RTT, samples are averaged within a measurement, and the
per-measurement means are averaged across measurements. A missing edge means
no connectivity was observed between the two endpoints.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

from .errors import NoDataError, ParseError
from .ingest import PingRecord, representative_rtt

KIND_PROBE = "probe"
KIND_IP = "ip"

SNAPSHOT_HEADER = ("source", "destination", "rtt_ms", "sample_count", "measurement_count")


def canonical_ipv4(text: str) -> Optional[str]:
    """Return the canonical dotted-quad form (no leading zeros), or None."""
    parts = text.split(".")
    if len(parts) != 4:
        return None
    octets = []
    for part in parts:
        if not part.isdigit():
            return None
        value = int(part)
        if value > 255:
            return None
        octets.append(str(value))
    return ".".join(octets)


@dataclass(frozen=True, order=True, slots=True)
class EndpointKey:
    """A graph node: a numeric probe id or an IP address.

    Ordering is (kind, value), used for deterministic tie-breaking.
    """

    kind: str
    value: str

    @classmethod
    def from_text(cls, text: str) -> "EndpointKey":
        """Classify raw endpoint text: all-digits -> probe, else ip.

        IPv4 values are canonicalized; non-IP text (e.g. a hostname used as
        a ping target) is kept verbatim under the ip kind.
        """
        text = text.strip()
        if text.isdigit():
            return cls(KIND_PROBE, text)
        canonical = canonical_ipv4(text)
        return cls(KIND_IP, canonical if canonical is not None else text)

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class LatencyEdge:
    """Aggregated directed RTT between two endpoints."""

    source: EndpointKey
    destination: EndpointKey
    rtt_ms: float
    sample_count: int
    measurement_count: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rtt_ms) and self.rtt_ms > 0):
            raise ValueError(f"edge rtt must be finite and > 0, got {self.rtt_ms!r}")
        if not self.sample_count >= self.measurement_count >= 1:
            raise ValueError("need sample_count >= measurement_count >= 1")
        if self.source == self.destination:
            raise ValueError("self-edges are not allowed")


class LatencyGraph:
    """Directed graph of endpoints, adjacency-indexed by source.

    Immutable once built; edge(a, b) may exist without edge(b, a), and a
    missing edge is the no-observed-connectivity signal.
    """

    def __init__(self) -> None:
        self._out: dict[EndpointKey, dict[EndpointKey, LatencyEdge]] = {}
        self._in: dict[EndpointKey, set[EndpointKey]] = {}

    def add_edge(self, edge: LatencyEdge) -> None:
        self._out.setdefault(edge.source, {})[edge.destination] = edge
        self._out.setdefault(edge.destination, {})
        self._in.setdefault(edge.source, set())
        self._in.setdefault(edge.destination, set()).add(edge.source)

    @property
    def node_count(self) -> int:
        return len(self._out)

    @property
    def edge_count(self) -> int:
        return sum(len(dsts) for dsts in self._out.values())

    def nodes(self) -> Iterator[EndpointKey]:
        return iter(self._out)

    def edges(self) -> Iterator[LatencyEdge]:
        for dsts in self._out.values():
            yield from dsts.values()

    def edge(self, source: EndpointKey, destination: EndpointKey) -> Optional[LatencyEdge]:
        dsts = self._out.get(source)
        return dsts.get(destination) if dsts else None

    def edge_rtt(self, source: EndpointKey, destination: EndpointKey) -> Optional[float]:
        """Aggregated RTT in ms, or None when no connectivity was observed."""
        edge = self.edge(source, destination)
        return edge.rtt_ms if edge is not None else None

    def successors(self, source: EndpointKey) -> Mapping[EndpointKey, LatencyEdge]:
        return self._out.get(source, {})

    def predecessors(self, destination: EndpointKey) -> frozenset[EndpointKey]:
        return frozenset(self._in.get(destination, ()))


@dataclass
class BuildStats:
    """Accounting for build_graph: records seen, used and skipped."""

    records: int = 0
    used: int = 0
    skipped: Counter = field(default_factory=Counter)


def build_graph(records: Iterable[PingRecord], stats: Optional[BuildStats] = None) -> LatencyGraph:
    """Aggregate filtered records into a latency graph.

    Edge weight = mean over measurements of (mean over that measurement's
    samples of the representative RTT). Self-pairs and no-data records are
    skipped and counted. Deterministic and independent of record order.
    """
    if stats is None:
        stats = BuildStats()
    keys: dict[str, EndpointKey] = {}
    # (source, destination) -> measurement_id -> sample rtts
    # fsum over the collected values keeps the result exact, so the graph is
    # bit-identical under any record reordering
    groups: dict[tuple[EndpointKey, EndpointKey], dict[str, list[float]]] = {}

    for record in records:
        stats.records += 1
        source = keys.get(record.source_id)
        if source is None:
            source = keys[record.source_id] = EndpointKey.from_text(record.source_id)
        destination = keys.get(record.destination_id)
        if destination is None:
            destination = keys[record.destination_id] = EndpointKey.from_text(record.destination_id)
        if source == destination:
            stats.skipped["self_pair"] += 1
            continue
        try:
            rtt = representative_rtt(record)
        except NoDataError:
            stats.skipped["no_data"] += 1
            continue
        by_msm = groups.setdefault((source, destination), {})
        by_msm.setdefault(record.measurement_id, []).append(rtt)
        stats.used += 1

    graph = LatencyGraph()
    for (source, destination), by_msm in groups.items():
        means = [math.fsum(rtts) / len(rtts) for _, rtts in sorted(by_msm.items())]
        graph.add_edge(
            LatencyEdge(
                source=source,
                destination=destination,
                rtt_ms=math.fsum(means) / len(means),
                sample_count=sum(len(rtts) for rtts in by_msm.values()),
                measurement_count=len(by_msm),
            )
        )
    return graph


def save_graph(graph: LatencyGraph, path: str | Path) -> None:
    """Write the snapshot CSV (RTTs rendered with 3 decimals)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SNAPSHOT_HEADER)
        rows = sorted(graph.edges(), key=lambda e: (e.source, e.destination))
        for edge in rows:
            writer.writerow(
                [
                    edge.source.value,
                    edge.destination.value,
                    f"{edge.rtt_ms:.3f}",
                    edge.sample_count,
                    edge.measurement_count,
                ]
            )


def load_graph(path: str | Path) -> LatencyGraph:
    """Read a snapshot CSV back into a graph.

    Raises :class:`ParseError` with the offending line number on malformed
    snapshots.
    """
    graph = LatencyGraph()
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1:
                if tuple(cell.strip() for cell in row) != SNAPSHOT_HEADER:
                    raise ParseError(lineno, "bad snapshot header")
                continue
            if len(row) != len(SNAPSHOT_HEADER):
                raise ParseError(lineno, f"expected {len(SNAPSHOT_HEADER)} columns")
            try:
                edge = LatencyEdge(
                    source=EndpointKey.from_text(row[0]),
                    destination=EndpointKey.from_text(row[1]),
                    rtt_ms=float(row[2]),
                    sample_count=int(row[3]),
                    measurement_count=int(row[4]),
                )
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from exc
            graph.add_edge(edge)
    return graph
