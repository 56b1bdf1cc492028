"""One-hop relay search over a latency graph.

For every ordered endpoint pair (s, d) the finder considers each relay m
with edges s->m and m->d. When the direct edge exists and the relay path is
faster by at least the configured percentage, that is an improvement
insight; when no direct edge exists, the relay path is a connectivity
bridge. Improvements are bucketed per source-destination pair into a
histogram using each pair's best relay.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .graph import EndpointKey, LatencyGraph

KIND_IMPROVEMENT = "improvement"
KIND_BRIDGE = "bridge"

INSIGHT_HEADER = (
    "source",
    "via",
    "destination",
    "overlay_rtt_ms",
    "direct_rtt_ms",
    "improvement_ms",
    "improvement_pct",
    "kind",
)


@dataclass(frozen=True, slots=True)
class DetourInsight:
    """A (source, via, destination) finding.

    ``overlay_rtt_ms`` is the exact sum of the two leg RTTs. Bridges have no
    direct edge, so their improvement fields are None.
    """

    source: EndpointKey
    via: EndpointKey
    destination: EndpointKey
    overlay_rtt_ms: float
    direct_rtt_ms: Optional[float]
    improvement_ms: Optional[float]
    improvement_pct: Optional[float]
    kind: str

    @property
    def pair(self) -> tuple[EndpointKey, EndpointKey]:
        return (self.source, self.destination)


def _make_insight(
    source: EndpointKey,
    via: EndpointKey,
    destination: EndpointKey,
    overlay: float,
    direct: Optional[float],
) -> DetourInsight:
    if direct is None:
        return DetourInsight(source, via, destination, overlay, None, None, None, KIND_BRIDGE)
    gain = direct - overlay
    return DetourInsight(
        source,
        via,
        destination,
        overlay,
        direct,
        gain,
        100.0 * gain / direct,
        KIND_IMPROVEMENT,
    )


def enumerate_detours(graph: LatencyGraph, threshold_pct: float = 1.0) -> Iterator[DetourInsight]:
    """Yield improvement and bridge insights for every viable triplet.

    Improvements require a strictly faster relay path whose gain is at
    least ``threshold_pct`` percent of the direct RTT. Each (s, m, d)
    triplet with both legs present is considered exactly once; emission
    order is unspecified (report layers sort).
    """
    if threshold_pct < 0:
        raise ValueError("threshold_pct must be >= 0")
    for via in graph.nodes():
        successors = graph.successors(via)
        if not successors:
            continue
        for source in graph.predecessors(via):
            leg_in = graph.edge_rtt(source, via)
            for destination, leg_out in successors.items():
                if destination == source:
                    continue
                overlay = leg_in + leg_out.rtt_ms
                direct = graph.edge_rtt(source, destination)
                if direct is None:
                    yield _make_insight(source, via, destination, overlay, None)
                    continue
                gain = direct - overlay
                if gain > 0 and 100.0 * gain / direct >= threshold_pct:
                    yield _make_insight(source, via, destination, overlay, direct)


def best_detour(
    graph: LatencyGraph, source: EndpointKey, destination: EndpointKey
) -> Optional[DetourInsight]:
    """Return the minimal-overlay relay insight for one pair, or None.

    Ties on overlay RTT break to the smallest via key. The result reports
    the best relay regardless of any improvement threshold: when the direct
    edge exists the improvement fields may even be negative.
    """
    if source == destination:
        raise ValueError("source and destination must differ")
    best: Optional[tuple[float, EndpointKey]] = None
    for via, leg_in in graph.successors(source).items():
        if via == destination:
            continue
        leg_out = graph.edge(via, destination)
        if leg_out is None:
            continue
        candidate = (leg_in.rtt_ms + leg_out.rtt_ms, via)
        if best is None or candidate < best:
            best = candidate
    if best is None:
        return None
    overlay, via = best
    return _make_insight(source, via, destination, overlay, graph.edge_rtt(source, destination))


@dataclass(frozen=True)
class ImprovementHistogram:
    """Counts of source-destination pairs by floored improvement bucket.

    Each pair is counted once, using its best detour's improvement
    percentage. Bucket key = floor(pct / width) * width.
    """

    bucket_width_pct: float
    counts: dict[float, int]

    def total_pairs(self) -> int:
        return sum(self.counts.values())

    def sorted_items(self) -> list[tuple[float, int]]:
        return sorted(self.counts.items())

    def cumulative(self) -> dict[float, int]:
        """Per-bucket counts re-rendered as at-least-this-bucket totals."""
        out: dict[float, int] = {}
        running = 0
        for bucket, count in sorted(self.counts.items(), reverse=True):
            running += count
            out[bucket] = running
        return out


def improvement_histogram(
    insights: Iterable[DetourInsight], bucket_width_pct: float = 1.0
) -> ImprovementHistogram:
    """Bucket improvement insights per pair by their best percentage.

    Bridges (no percentage) are ignored; callers normally pass a stream
    already restricted to improvements.
    """
    if bucket_width_pct <= 0:
        raise ValueError("bucket_width_pct must be > 0")
    best_pct: dict[tuple[EndpointKey, EndpointKey], float] = {}
    for insight in insights:
        if insight.improvement_pct is None:
            continue
        pair = insight.pair
        current = best_pct.get(pair)
        if current is None or insight.improvement_pct > current:
            best_pct[pair] = insight.improvement_pct
    counts: dict[float, int] = {}
    for pct in best_pct.values():
        bucket = math.floor(pct / bucket_width_pct) * bucket_width_pct
        counts[bucket] = counts.get(bucket, 0) + 1
    return ImprovementHistogram(bucket_width_pct=bucket_width_pct, counts=counts)


def report_order(insights: Iterable[DetourInsight]) -> list[DetourInsight]:
    """Deterministic report ordering.

    Improvements first, by percentage descending then source/via/destination;
    bridges after, by keys.
    """
    return sorted(
        insights,
        key=lambda i: (
            0 if i.kind == KIND_IMPROVEMENT else 1,
            -(i.improvement_pct or 0.0),
            i.source,
            i.via,
            i.destination,
        ),
    )


def _fmt_opt(value: Optional[float], digits: int) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def insight_row(insight: DetourInsight) -> list[str]:
    return [
        insight.source.value,
        insight.via.value,
        insight.destination.value,
        f"{insight.overlay_rtt_ms:.3f}",
        _fmt_opt(insight.direct_rtt_ms, 3),
        _fmt_opt(insight.improvement_ms, 3),
        _fmt_opt(insight.improvement_pct, 2),
        insight.kind,
    ]


def write_insights_csv(insights: Iterable[DetourInsight], path: str | Path) -> int:
    """Write the insight export; returns the number of rows written."""
    rows = 0
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(INSIGHT_HEADER)
        for insight in insights:
            writer.writerow(insight_row(insight))
            rows += 1
    return rows


def write_histogram_csv(
    histogram: ImprovementHistogram, path: str | Path, cumulative: bool = False
) -> None:
    counts = histogram.cumulative() if cumulative else histogram.counts
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bucket_pct", "pair_count"])
        for bucket, count in sorted(counts.items()):
            writer.writerow([f"{bucket:g}", count])
