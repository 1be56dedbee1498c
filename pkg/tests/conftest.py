from __future__ import annotations

import sys
from pathlib import Path

import pytest

from tracefuse import breadth, depth, trace
from tracefuse.query import load_query

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent.parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def turing_trace() -> trace.Trace:
    return trace.parse_trace_file((FIXTURES / "turing.jsonl").read_bytes())


@pytest.fixture(scope="session")
def landgrant_trace() -> trace.Trace:
    return trace.parse_trace_file((FIXTURES / "landgrant.jsonl").read_bytes())


@pytest.fixture(scope="session")
def turing_graphs(turing_trace):
    breadth_graph = breadth.build_breadth_graph(turing_trace)
    depth_graph, dropped = depth.build_depth_graph(turing_trace)
    return breadth_graph, depth_graph, dropped


@pytest.fixture(scope="session")
def landgrant_graphs(landgrant_trace):
    breadth_graph = breadth.build_breadth_graph(landgrant_trace)
    depth_graph, dropped = depth.build_depth_graph(landgrant_trace)
    return breadth_graph, depth_graph, dropped


@pytest.fixture(scope="session")
def turing_query():
    return load_query(FIXTURES / "query_turing.json")


@pytest.fixture(scope="session")
def landgrant_area_query():
    return load_query(FIXTURES / "query_landgrant_area.json")


@pytest.fixture(scope="session")
def landgrant_count_query():
    return load_query(FIXTURES / "query_landgrant_count.json")
