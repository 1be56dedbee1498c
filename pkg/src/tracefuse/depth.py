"""Depth causal graph: admission-gated execution provenance.

Nodes abstract the trace into actions, artifacts and validators; directed
edges (consumes / produces / verified_by / carryover) are admitted only
when relation typing, unit compatibility and strict temporal order all
hold. Edge confidence blends validator success with step repeatability.
Retrieval matches the query's required operation sequence against path
operation sequences with a type/unit-aware LCS, weighted by path
reliability.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence


from . import units
from .trace import Trace, TraceEvent

DEPTH_RELATIONS = ("consumes", "produces", "verified_by", "carryover")
VALUE_TYPES = ("number", "text", "table")

# (src kind, dst kind) -> admitted relation
_RELATION_TYPING = {
    ("artifact", "action"): "consumes",
    ("action", "artifact"): "produces",
    ("artifact", "validator"): "verified_by",
    ("artifact", "artifact"): "carryover",
}

CONFIDENCE_FLOOR = 0.05
PASS_WEIGHT = 0.7
REPEAT_WEIGHT = 0.3
DEFAULT_PASS_RATE = 0.5

OpItem = tuple[str, str | None]  # (op_type, optional canonical unit)


class EmptyPath(ValueError):
    pass


class EmptyOpSequence(ValueError):
    pass


@dataclass(frozen=True)
class DepthNode:
    node_id: str
    kind: str  # action | artifact | validator
    timestamp: int
    # action payload
    tool: str | None = None
    op_type: str | None = None
    params_digest: str | None = None
    env_sig: str | None = None
    # artifact payload
    value: float | str | None = None
    unit: str | None = None
    value_type: str | None = None
    # validator payload
    check_kind: str | None = None
    outcome: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("action", "artifact", "validator"):
            raise ValueError(f"bad depth node kind {self.kind!r}")
        if self.kind == "artifact" and self.value_type not in VALUE_TYPES:
            raise ValueError(f"bad artifact value_type {self.value_type!r}")


@dataclass(frozen=True)
class DepthEdge:
    src: str
    dst: str
    relation: str
    confidence: float

    def __post_init__(self) -> None:
        if self.relation not in DEPTH_RELATIONS:
            raise ValueError(f"bad depth relation {self.relation!r}")
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside (0, 1]")


@dataclass(frozen=True)
class DroppedEdge:
    src: str
    dst: str
    gate: str  # RelationTyping | UnitCompatibility | TemporalOrder
    reason: str


@dataclass(frozen=True)
class DepthGraph:
    nodes: tuple[DepthNode, ...]
    edges: tuple[DepthEdge, ...]
    answer_marks: Mapping[str, frozenset[str]] = field(default_factory=dict)
    answer_support: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = {n.node_id for n in self.nodes}
        if len(ids) != len(self.nodes):
            raise ValueError("duplicate node_id in depth graph")
        for edge in self.edges:
            if edge.src not in ids or edge.dst not in ids:
                raise ValueError(f"edge endpoint missing: {edge.src}->{edge.dst}")

    @cached_property
    def node_map(self) -> dict[str, DepthNode]:
        return {n.node_id: n for n in self.nodes}

    @cached_property
    def incoming(self) -> dict[str, tuple[DepthEdge, ...]]:
        by_dst: dict[str, list[DepthEdge]] = {n.node_id: [] for n in self.nodes}
        for edge in self.edges:
            by_dst[edge.dst].append(edge)
        return {k: tuple(sorted(v, key=lambda e: (e.src, e.relation))) for k, v in by_dst.items()}

    def is_acyclic(self) -> bool:
        order = {n.node_id: n.timestamp for n in self.nodes}
        return all(order[e.src] < order[e.dst] for e in self.edges)

    def with_answer_support(self, support: Mapping[str, frozenset[str]]) -> "DepthGraph":
        return replace(self, answer_support=dict(support))


def edge_confidence(validator_pass_rate: float, repeats: int) -> float:
    """Blend of validator success and repeatability, clamped to [0.05, 1]."""
    raw = PASS_WEIGHT * validator_pass_rate + REPEAT_WEIGHT * min(repeats, 3) / 3
    return min(1.0, max(CONFIDENCE_FLOOR, raw))


def _artifact_value(event: TraceEvent) -> tuple[float | str | None, str | None, str]:
    """Normalized (value, canonical unit, value_type) for an artifact event.

    Unknown units pass through unconverted; the admission gate will refuse
    comparisons against them.
    """
    value = event.value
    unit = event.unit
    if isinstance(value, float):
        if unit is not None and units.is_known_unit(unit):
            value, unit = units.normalize_unit(value, unit)
        return value, unit, "number"
    payload = value if isinstance(value, str) else event.text
    if "\n" in payload or "|" in payload:
        return value, None, "table"
    return value, None, "text"


def _event_signature(event: TraceEvent) -> tuple:
    value = event.value
    unit = event.unit
    if isinstance(value, float) and unit is not None and units.is_known_unit(unit):
        value, unit = units.normalize_unit(value, unit)
    return (event.kind, event.tool, event.op_type, event.params_digest, value, unit)


def build_depth_graph(trace: Trace) -> tuple[DepthGraph, list[DroppedEdge]]:
    """Provenance nodes plus every admitted edge; dropped candidates reported.

    Candidate edges come from the events' input references; each passes the
    relation-typing, unit-compatibility and temporal-order gates or is
    dropped with the first failing gate as reason.
    """
    from .breadth import parse_answer_mark  # annotation syntax shared with breadth

    nodes: dict[str, DepthNode] = {}
    event_kind: dict[str, str] = {}
    node_id_of: dict[str, str] = {}
    for event in trace.events:
        event_kind[event.event_id] = event.kind
        if event.kind == "note":
            continue
        node_id = f"{event.run_id}:{event.event_id}"
        node_id_of[event.event_id] = node_id
        if event.kind == "action":
            nodes[node_id] = DepthNode(
                node_id=node_id,
                kind="action",
                timestamp=event.timestamp,
                tool=event.tool,
                op_type=event.op_type,
                params_digest=event.params_digest,
                env_sig=f"{event.run_id}/{event.branch_id}",
            )
        elif event.kind == "artifact":
            value, unit, value_type = _artifact_value(event)
            nodes[node_id] = DepthNode(
                node_id=node_id,
                kind="artifact",
                timestamp=event.timestamp,
                value=value,
                unit=unit,
                value_type=value_type,
            )
        else:
            nodes[node_id] = DepthNode(
                node_id=node_id,
                kind="validator",
                timestamp=event.timestamp,
                check_kind=event.params_digest,
                outcome=event.status,
            )

    events = trace.event_map()
    signature_counts: dict[tuple, int] = {}
    for event in trace.events:
        if event.kind != "note":
            signature = _event_signature(event)
            signature_counts[signature] = signature_counts.get(signature, 0) + 1

    validator_stats: dict[str, list[int]] = {}
    for event in trace.events:
        if event.kind != "validator":
            continue
        for ref in event.inputs:
            total_ok = validator_stats.setdefault(ref, [0, 0])
            total_ok[0] += 1
            if event.status == "ok":
                total_ok[1] += 1

    def pass_rate_of(event_id: str) -> float:
        stats = validator_stats.get(event_id)
        if stats is None:
            return DEFAULT_PASS_RATE
        return stats[1] / stats[0]

    admitted: dict[tuple[str, str, str], float] = {}
    dropped: list[DroppedEdge] = []
    for event in trace.events:
        if event.kind == "note":
            continue
        for ref in event.inputs:
            src = events.get(ref)
            if src is None or src.kind == "note":
                continue
            src_id = node_id_of[ref]
            dst_id = node_id_of[event.event_id]
            relation = _RELATION_TYPING.get((src.kind, event.kind))
            if relation is None:
                dropped.append(
                    DroppedEdge(
                        src_id, dst_id, "RelationTyping",
                        f"no relation admits {src.kind} -> {event.kind}",
                    )
                )
                continue
            if relation == "carryover":
                src_node = nodes[src_id]
                dst_node = nodes[dst_id]
                number_pair = src_node.value_type == "number" or dst_node.value_type == "number"
                if number_pair and not units.units_compatible(src_node.unit, dst_node.unit):
                    dropped.append(
                        DroppedEdge(
                            src_id, dst_id, "UnitCompatibility",
                            f"units {src_node.unit!r} and {dst_node.unit!r} are not comparable",
                        )
                    )
                    continue
            if src.timestamp >= event.timestamp:
                dropped.append(
                    DroppedEdge(
                        src_id, dst_id, "TemporalOrder",
                        f"src timestamp {src.timestamp} not before dst {event.timestamp}",
                    )
                )
                continue
            if event.kind == "validator":
                pass_rate = 1.0 if event.status == "ok" else 0.0
            elif relation == "consumes":
                pass_rate = pass_rate_of(ref)
            else:  # produces / carryover anchor on the downstream artifact
                pass_rate = pass_rate_of(event.event_id)
            repeats = signature_counts[_event_signature(src)] - 1
            confidence = edge_confidence(pass_rate, repeats)
            key = (src_id, dst_id, relation)
            if confidence > admitted.get(key, 0.0):
                admitted[key] = confidence

    marks: dict[str, set[str]] = {}
    for event in trace.events:
        if event.kind != "note":
            continue
        display = parse_answer_mark(event.text)
        if display is None:
            continue
        for ref in event.inputs:
            node_id = node_id_of.get(ref)
            if node_id is not None:
                marks.setdefault(node_id, set()).add(display)

    graph = DepthGraph(
        nodes=tuple(sorted(nodes.values(), key=lambda n: n.node_id)),
        edges=tuple(
            DepthEdge(src=s, dst=d, relation=r, confidence=c)
            for (s, d, r), c in sorted(admitted.items())
        ),
        answer_marks={k: frozenset(v) for k, v in sorted(marks.items())},
    )
    assert graph.is_acyclic(), "admitted depth edges must respect timestamps"
    return graph, dropped


def merge_depth_graphs(graphs: list["DepthGraph"]) -> "DepthGraph":
    """Subject-mode union of provenance graphs.

    Node ids are run-scoped, so distinct runs union disjointly; re-ingesting
    the same run is idempotent. Conflicting payloads under one id are
    rejected.
    """
    nodes: dict[str, DepthNode] = {}
    for graph in graphs:
        for node in graph.nodes:
            existing = nodes.get(node.node_id)
            if existing is None:
                nodes[node.node_id] = node
            elif existing != node:
                raise ValueError(
                    f"depth node {node.node_id!r} has conflicting payloads across inputs"
                )
    edges: dict[tuple[str, str, str], float] = {}
    for graph in graphs:
        for edge in graph.edges:
            key = (edge.src, edge.dst, edge.relation)
            if edge.confidence > edges.get(key, 0.0):
                edges[key] = edge.confidence
    marks: dict[str, set[str]] = {}
    for graph in graphs:
        for node_id, displays in graph.answer_marks.items():
            marks.setdefault(node_id, set()).update(displays)
    return DepthGraph(
        nodes=tuple(sorted(nodes.values(), key=lambda n: n.node_id)),
        edges=tuple(
            DepthEdge(src=s, dst=d, relation=r, confidence=c)
            for (s, d, r), c in sorted(edges.items())
        ),
        answer_marks={k: frozenset(v) for k, v in sorted(marks.items())},
    )


# --- reliability and typed sequence matching -------------------------------

def path_reliability(edges: Sequence[DepthEdge], tau: float) -> float:
    if not edges:
        raise EmptyPath("reliability of an empty path is undefined")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    product = 1.0
    for edge in edges:
        product *= edge.confidence
    return product ** tau


_OP_RULES: tuple[tuple[tuple[str, ...], str], ...] = (
    (("look", "up"), "search"),
    (("find",), "search"),
    (("search",), "search"),
    (("retrieve",), "search"),
    (("locate",), "search"),
    (("read",), "parse"),
    (("extract",), "parse"),
    (("parse",), "parse"),
    (("simulate",), "compute"),
    (("run",), "compute"),
    (("count",), "compute"),
    (("compute",), "compute"),
    (("calculate",), "compute"),
    (("sum",), "compute"),
    (("subtract",), "compute"),
    (("check",), "verify"),
    (("confirm",), "verify"),
    (("verify",), "verify"),
    (("validate",), "verify"),
)


def extract_query_ops(text: str, override: Sequence[OpItem] | None = None) -> list[OpItem]:
    """Required typed operations of a query.

    An explicit override is authoritative; otherwise the keyword rule table
    fires in textual order with adjacent repeats collapsed.
    """
    if override is not None:
        ops = [(op, unit) for op, unit in override]
        if not ops:
            raise EmptyOpSequence("op-sequence override is empty")
        return ops
    from .embedding import tokenize

    tokens = tokenize(text)
    ops: list[OpItem] = []
    i = 0
    while i < len(tokens):
        matched = None
        for phrase, op in _OP_RULES:
            if tuple(tokens[i : i + len(phrase)]) == phrase:
                matched = (op, len(phrase))
                break
        if matched:
            op, width = matched
            if not ops or ops[-1][0] != op:
                ops.append((op, None))
            i += width
        else:
            i += 1
    if not ops:
        raise EmptyOpSequence(f"no operation keyword found in {text!r}")
    return ops


def _ops_match(a: OpItem, b: OpItem) -> bool:
    if a[0] != b[0]:
        return False
    return units.units_compatible(a[1], b[1])


def lcs_typed(a: Sequence[OpItem], b: Sequence[OpItem]) -> int:
    """Longest common subsequence counting only type- and unit-compatible matches."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for item_a in a:
        current = [0] * (len(b) + 1)
        for j, item_b in enumerate(b):
            if _ops_match(item_a, item_b):
                current[j + 1] = previous[j] + 1
            else:
                current[j + 1] = max(current[j], previous[j + 1])
        previous = current
    return previous[-1]


def path_ops(graph: DepthGraph, node_ids: Sequence[str]) -> list[OpItem]:
    """Ordered op types of the action/validator nodes along a path."""
    ops: list[OpItem] = []
    for node_id in node_ids:
        node = graph.node_map[node_id]
        if node.kind == "action":
            ops.append((node.op_type or "other", None))
        elif node.kind == "validator":
            ops.append(("verify", None))
    return ops


@dataclass(frozen=True)
class DepthPath:
    nodes: tuple[str, ...]  # in causal order, ending at the target
    edges: tuple[DepthEdge, ...]


def enumerate_admissible_paths(
    graph: DepthGraph, target: str, max_length: int
) -> list[DepthPath]:
    """All directed paths of at most ``max_length`` edges ending at ``target``.

    Admission gates already held at construction, so this is bounded
    backward traversal. A target with no incoming edges yields the single
    zero-length path.
    """
    if target not in graph.node_map:
        raise KeyError(f"unknown depth node {target!r}")
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    incoming = graph.incoming
    if not incoming.get(target):
        return [DepthPath(nodes=(target,), edges=())]
    paths: list[DepthPath] = []

    def walk(nodes: tuple[str, ...], edges: tuple[DepthEdge, ...]) -> None:
        head = nodes[0]
        for edge in incoming.get(head, ()):
            if edge.src in nodes:
                continue
            extended_nodes = (edge.src,) + nodes
            extended_edges = (edge,) + edges
            paths.append(DepthPath(nodes=extended_nodes, edges=extended_edges))
            if len(extended_edges) < max_length:
                walk(extended_nodes, extended_edges)

    walk((target,), ())
    return sorted(paths, key=lambda p: (len(p.edges), p.nodes))


def depth_score(
    graph: DepthGraph,
    query_ops: Sequence[OpItem],
    target: str,
    max_length: int,
    tau: float,
) -> float:
    """Best reliability-weighted operation-sequence match over paths to target."""
    if not query_ops:
        raise EmptyOpSequence("query requires at least one operation")
    best = 0.0
    for path in enumerate_admissible_paths(graph, target, max_length):
        if not path.edges:  # zero-length paths are excluded from the max
            continue
        overlap = lcs_typed(list(query_ops), path_ops(graph, path.nodes))
        if overlap == 0:
            continue
        score = path_reliability(path.edges, tau) * overlap / len(query_ops)
        best = max(best, score)
    return best
