"""Query model and answer-support labeling.

A query carries a finite answer set. A graph node supports an answer when
its normalized label or carried value equals the answer's display string
after unit normalization, or when the node carries an explicit
answer-support annotation from the trace whose display matches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import breadth, depth, units
from .depth import OpItem
from .embedding import tokenize


@dataclass(frozen=True)
class Answer:
    answer_id: str
    display: str


@dataclass(frozen=True)
class Query:
    question_id: str
    text: str
    answers: tuple[Answer, ...]
    op_override: tuple[OpItem, ...] | None = None
    seed_terms: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.answers) < 2:
            raise ValueError("a query needs at least two candidate answers")
        ids = [a.answer_id for a in self.answers]
        if len(set(ids)) != len(ids):
            raise ValueError("answer ids must be unique")

    @property
    def answer_ids(self) -> tuple[str, ...]:
        return tuple(a.answer_id for a in self.answers)


def load_query(path: str | Path) -> Query:
    raw = json.loads(Path(path).read_text("utf-8"))
    answers = tuple(Answer(a["id"], a["display"]) for a in raw["answers"])
    override = raw.get("op_override")
    if override is not None:
        override = tuple((item[0], item[1]) for item in override)
    seed_terms = raw.get("seed_terms")
    if seed_terms is not None:
        seed_terms = tuple(seed_terms)
    return Query(
        question_id=raw["question_id"],
        text=raw["text"],
        answers=answers,
        op_override=override,
        seed_terms=seed_terms,
    )


# --- display normalization --------------------------------------------------

@dataclass(frozen=True)
class ParsedDisplay:
    value: float | None
    unit: str | None      # canonical when known, raw otherwise
    unit_known: bool
    text: str             # normalized token form, used for textual answers

    @property
    def is_number(self) -> bool:
        return self.value is not None


def parse_display(display: str) -> ParsedDisplay:
    normalized = " ".join(tokenize(display))
    parts = display.split()
    if parts:
        try:
            value = float(parts[0].replace(",", ""))
        except ValueError:
            return ParsedDisplay(None, None, False, normalized)
        unit = "_".join(parts[1:]).lower() if len(parts) > 1 else None
        if unit is not None and units.is_known_unit(unit):
            value, unit = units.normalize_unit(value, unit)
            return ParsedDisplay(value, unit, True, normalized)
        return ParsedDisplay(value, unit, unit is None, normalized)
    return ParsedDisplay(None, None, False, normalized)


def _render_number(value: float) -> str:
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _displays_equal(a: ParsedDisplay, b: ParsedDisplay) -> bool:
    if a.is_number and b.is_number:
        # units are canonical whenever known, so string equality suffices
        return a.value == b.value and a.unit == b.unit
    return a.text == b.text and a.text != ""


def _artifact_matches(node: depth.DepthNode, want: ParsedDisplay) -> bool:
    if node.value_type == "number" and want.is_number:
        if node.value != want.value:
            return False
        if want.unit is None:
            return True
        return want.unit_known and node.unit is not None and units.units_compatible(node.unit, want.unit)
    if node.value_type in ("text", "table") and not want.is_number:
        rendered = node.value if isinstance(node.value, str) else ""
        return " ".join(tokenize(rendered)) == want.text and want.text != ""
    return False


def _entity_matches(label: str, want: ParsedDisplay) -> bool:
    if want.is_number:
        return label == _render_number(want.value)
    return label == want.text


def _span_matches(label: str, want: ParsedDisplay) -> bool:
    text, sep, carried = label.rpartition(" = ")
    if sep:
        return _displays_equal(parse_display(carried), want)
    return label == want.text and want.text != ""


def resolve_breadth_support(graph: breadth.BreadthGraph, query: Query) -> dict[str, frozenset[str]]:
    wants = [(a.answer_id, parse_display(a.display)) for a in query.answers]
    support: dict[str, set[str]] = {}
    for node in graph.nodes:
        for answer_id, want in wants:
            if node.kind == "entity":
                hit = _entity_matches(node.label, want)
            elif node.kind == "span":
                hit = _span_matches(node.label, want)
            else:
                hit = node.label == want.text
            if hit:
                support.setdefault(node.node_id, set()).add(answer_id)
    _apply_marks(graph.answer_marks, wants, support)
    return {k: frozenset(v) for k, v in support.items()}


def resolve_depth_support(graph: depth.DepthGraph, query: Query) -> dict[str, frozenset[str]]:
    wants = [(a.answer_id, parse_display(a.display)) for a in query.answers]
    support: dict[str, set[str]] = {}
    for node in graph.nodes:
        if node.kind != "artifact":
            continue
        for answer_id, want in wants:
            if _artifact_matches(node, want):
                support.setdefault(node.node_id, set()).add(answer_id)
    _apply_marks(graph.answer_marks, wants, support)
    return {k: frozenset(v) for k, v in support.items()}


def _apply_marks(
    marks: dict[str, frozenset[str]] | dict,
    wants: list[tuple[str, ParsedDisplay]],
    support: dict[str, set[str]],
) -> None:
    for node_id, displays in marks.items():
        for display in displays:
            marked = parse_display(display)
            for answer_id, want in wants:
                if _displays_equal(marked, want):
                    support.setdefault(node_id, set()).add(answer_id)
