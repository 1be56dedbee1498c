from __future__ import annotations

import pytest

from tracefuse.breadth import BreadthGraph, BreadthNode
from tracefuse.depth import DepthGraph, DepthNode
from tracefuse.query import (
    Answer,
    Query,
    parse_display,
    resolve_breadth_support,
    resolve_depth_support,
)


def _query(*displays: str) -> Query:
    answers = tuple(Answer(f"a{i}", d) for i, d in enumerate(displays))
    return Query(question_id="q", text="find it", answers=answers)


def test_query_requires_two_unique_answers() -> None:
    with pytest.raises(ValueError):
        Query("q", "t", (Answer("a", "x"),))
    with pytest.raises(ValueError):
        Query("q", "t", (Answer("a", "x"), Answer("a", "y")))


def test_parse_display_number_with_unit() -> None:
    parsed = parse_display("60000 acres")
    assert (parsed.value, parsed.unit, parsed.unit_known) == (60000.0, "acre", True)


def test_parse_display_scaled_unit_and_commas() -> None:
    parsed = parse_display("5 thousand_acres")
    assert (parsed.value, parsed.unit) == (5000.0, "acre")
    assert parse_display("12,000 persons").value == 12000.0


def test_parse_display_text() -> None:
    parsed = parse_display("Riemann Hypothesis")
    assert not parsed.is_number
    assert parsed.text == "riemann hypothesis"


def test_entity_supports_numeric_display(turing_graphs, turing_query) -> None:
    support = resolve_breadth_support(turing_graphs[0], turing_query)
    assert support["t:105"] == frozenset({"steps-105"})
    assert support["t:47"] == frozenset({"steps-47"})


def test_span_value_supports_display(turing_graphs, turing_query) -> None:
    support = resolve_breadth_support(turing_graphs[0], turing_query)
    span_hits = {
        node_id for node_id, answers in support.items()
        if node_id.startswith("s:") and "steps-47" in answers
    }
    assert len(span_hits) == 1


def test_depth_artifact_unit_aware_matching(landgrant_graphs, landgrant_area_query) -> None:
    support = resolve_depth_support(landgrant_graphs[1], landgrant_area_query)
    assert support == {"run-landgrant-01:a007": frozenset({"acres-60000"})}


def test_unit_mismatch_blocks_support(landgrant_graphs) -> None:
    query = _query("60000 seconds", "1 acre")
    support = resolve_depth_support(landgrant_graphs[1], query)
    assert support == {}


def test_text_display_matches_text_artifact() -> None:
    node = DepthNode(node_id="n1", kind="artifact", timestamp=1,
                     value="halting state reached", unit=None, value_type="text")
    graph = DepthGraph(nodes=(node,), edges=())
    support = resolve_depth_support(graph, _query("Halting state reached", "other thing"))
    assert support == {"n1": frozenset({"a0"})}


def test_marks_resolve_against_displays() -> None:
    node = BreadthNode(node_id="s:x", kind="span", label="some span", text="t")
    graph = BreadthGraph(
        nodes=(node,), edges=(), answer_marks={"s:x": frozenset({"47 steps"})}
    )
    support = resolve_breadth_support(graph, _query("47 steps", "105 steps"))
    assert support["s:x"] == frozenset({"a0"})


def test_marks_normalize_units_before_matching() -> None:
    node = DepthNode(node_id="n1", kind="validator", timestamp=1, check_kind="c", outcome="ok")
    graph = DepthGraph(
        nodes=(node,), edges=(), answer_marks={"n1": frozenset({"5 thousand_acres"})}
    )
    support = resolve_depth_support(graph, _query("5000 acres", "1 acre"))
    assert support == {"n1": frozenset({"a0"})}
