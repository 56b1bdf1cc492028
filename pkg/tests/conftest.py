"""Shared test helpers: tiny graph builders and brute-force oracles.

The oracles deliberately re-derive results by exhaustive triple loops over
edge lookups, independent of the adjacency-driven production code paths.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Optional

import pytest

from detourkit.graph import EndpointKey, LatencyEdge, LatencyGraph

FIXTURES = Path(__file__).parent / "fixtures"


def make_graph(edges: dict[tuple[str, str], float]) -> LatencyGraph:
    graph = LatencyGraph()
    for (source, destination), rtt in edges.items():
        graph.add_edge(
            LatencyEdge(
                source=EndpointKey.from_text(source),
                destination=EndpointKey.from_text(destination),
                rtt_ms=rtt,
                sample_count=1,
                measurement_count=1,
            )
        )
    return graph


def random_graph(rng: random.Random, max_nodes: int = 50, density: float = 0.3) -> LatencyGraph:
    n = rng.randint(4, max_nodes)
    names = [f"{i:03d}" for i in range(n)]
    edges: dict[tuple[str, str], float] = {}
    for source in names:
        for destination in names:
            if source != destination and rng.random() < density:
                edges[(source, destination)] = rng.uniform(0.1, 300.0)
    if not edges:
        edges[(names[0], names[1])] = rng.uniform(0.1, 300.0)
    return make_graph(edges)


def brute_force_detours(graph: LatencyGraph, threshold_pct: float) -> set[tuple]:
    """O(V^3) re-derivation of every insight, keyed for set comparison."""
    found = set()
    nodes = sorted(graph.nodes())
    for source in nodes:
        for destination in nodes:
            if source == destination:
                continue
            direct = graph.edge_rtt(source, destination)
            for via in nodes:
                if via == source or via == destination:
                    continue
                leg_in = graph.edge_rtt(source, via)
                leg_out = graph.edge_rtt(via, destination)
                if leg_in is None or leg_out is None:
                    continue
                overlay = leg_in + leg_out
                if direct is None:
                    found.add((source, via, destination, overlay, None, None, None, "bridge"))
                    continue
                gain = direct - overlay
                if gain > 0 and 100.0 * gain / direct >= threshold_pct:
                    found.add(
                        (
                            source,
                            via,
                            destination,
                            overlay,
                            direct,
                            gain,
                            100.0 * gain / direct,
                            "improvement",
                        )
                    )
    return found


def brute_force_best(
    graph: LatencyGraph, source: EndpointKey, destination: EndpointKey
) -> Optional[tuple[float, EndpointKey]]:
    """Minimal-overlay via, first-in-sorted-order on ties."""
    best: Optional[tuple[float, EndpointKey]] = None
    for via in sorted(graph.nodes()):
        if via == source or via == destination:
            continue
        leg_in = graph.edge_rtt(source, via)
        leg_out = graph.edge_rtt(via, destination)
        if leg_in is None or leg_out is None:
            continue
        overlay = leg_in + leg_out
        if best is None or overlay < best[0]:
            best = (overlay, via)
    return best


def insight_key(insight) -> tuple:
    return (
        insight.source,
        insight.via,
        insight.destination,
        insight.overlay_rtt_ms,
        insight.direct_rtt_ms,
        insight.improvement_ms,
        insight.improvement_pct,
        insight.kind,
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
