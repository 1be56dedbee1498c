"""tracefuse: dual-graph evidence engine over agent execution traces."""

from .breadth import BreadthEdge, BreadthGraph, BreadthNode, build_breadth_graph
from .depth import DepthEdge, DepthGraph, DepthNode, build_depth_graph
from .embedding import ReferenceEmbedder, cosine
from .fusion import (
    AnswerDistribution,
    FusionOutcome,
    HyperParams,
    run_query,
)
from .query import Answer, Query
from .trace import Trace, TraceEvent, parse_trace_file, serialize_trace, validate_trace
from .units import normalize_unit

__all__ = [
    "Answer",
    "AnswerDistribution",
    "BreadthEdge",
    "BreadthGraph",
    "BreadthNode",
    "DepthEdge",
    "DepthGraph",
    "DepthNode",
    "FusionOutcome",
    "HyperParams",
    "Query",
    "ReferenceEmbedder",
    "Trace",
    "TraceEvent",
    "build_breadth_graph",
    "build_depth_graph",
    "cosine",
    "normalize_unit",
    "parse_trace_file",
    "run_query",
    "serialize_trace",
    "validate_trace",
]

__version__ = "0.1.0"
