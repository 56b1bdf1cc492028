"""Ping-measurement analysis toolkit.

Builds a directed latency graph from ping feeds, searches it for one-hop
relay paths that beat (or bridge) the direct route, enriches findings with
IP locations, analyzes traceroutes for city transit, and composes per-leg
RTT distributions into end-to-end relay predictions.
"""

from .detours import (
    DetourInsight,
    ImprovementHistogram,
    best_detour,
    enumerate_detours,
    improvement_histogram,
)
from .errors import (
    EmptyInputError,
    InvalidAddressError,
    NoDataError,
    ParseError,
    ToolkitError,
)
from .geo import GeoCache, GeoLookup, GeoRecord, annotate
from .graph import EndpointKey, LatencyEdge, LatencyGraph, build_graph, load_graph, save_graph
from .ingest import (
    FilterSpec,
    PingRecord,
    filter_records,
    parse_result_line,
    representative_rtt,
    serialize_record,
)
from .stats import (
    ComparisonVerdict,
    OverlayPath,
    RttSummary,
    compare,
    compose,
    monte_carlo_compose,
    summarize,
)
from .traceroute import (
    CityDetection,
    CitySpec,
    TracerouteHop,
    TracerouteTrace,
    detect_city,
    hop_count,
    parse_traceroute,
    ttl_hop_estimate,
)

__all__ = [
    "ComparisonVerdict",
    "CityDetection",
    "CitySpec",
    "DetourInsight",
    "EmptyInputError",
    "EndpointKey",
    "FilterSpec",
    "GeoCache",
    "GeoLookup",
    "GeoRecord",
    "ImprovementHistogram",
    "InvalidAddressError",
    "LatencyEdge",
    "LatencyGraph",
    "NoDataError",
    "OverlayPath",
    "ParseError",
    "PingRecord",
    "RttSummary",
    "ToolkitError",
    "TracerouteHop",
    "TracerouteTrace",
    "annotate",
    "best_detour",
    "build_graph",
    "compare",
    "compose",
    "detect_city",
    "enumerate_detours",
    "filter_records",
    "hop_count",
    "improvement_histogram",
    "load_graph",
    "monte_carlo_compose",
    "parse_result_line",
    "parse_traceroute",
    "representative_rtt",
    "save_graph",
    "serialize_record",
    "summarize",
    "ttl_hop_estimate",
]

__version__ = "0.1.0"
