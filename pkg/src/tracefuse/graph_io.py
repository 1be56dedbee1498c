"""Canonical graph files: sorted node records, then edges, then marks.

One format serves both graph kinds; the versioned header line names the
kind. Serialization is byte-canonical (sorted records, compact JSON), so
serialize -> deserialize -> serialize is the identity on bytes.
"""

from __future__ import annotations

import json

from . import breadth, depth

_MAGIC = "tracefuse-graph"
_VERSION = "v1"


class SchemaMismatch(ValueError):
    pass


def _dump(record: list) -> str:
    return json.dumps(record, separators=(",", ":"))


def _canonical_number(value: float | str | None) -> float | int | str | None:
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def serialize_graph(graph: breadth.BreadthGraph | depth.DepthGraph) -> bytes:
    if isinstance(graph, breadth.BreadthGraph):
        kind = "breadth"
        node_lines = [
            "node\t" + _dump([n.node_id, n.kind, n.label, n.text, n.source_event])
            for n in sorted(graph.nodes, key=lambda n: n.node_id)
        ]
    elif isinstance(graph, depth.DepthGraph):
        kind = "depth"
        node_lines = []
        for n in sorted(graph.nodes, key=lambda n: n.node_id):
            if n.kind == "action":
                payload = [n.tool, n.op_type, n.params_digest, n.env_sig]
            elif n.kind == "artifact":
                payload = [_canonical_number(n.value), n.unit, n.value_type]
            else:
                payload = [n.check_kind, n.outcome]
            node_lines.append("node\t" + _dump([n.node_id, n.kind, n.timestamp, *payload]))
    else:
        raise TypeError(f"not a graph: {type(graph)!r}")
    lines = [f"{_MAGIC} {_VERSION} {kind}"]
    lines.extend(node_lines)
    for e in sorted(graph.edges, key=lambda e: (e.src, e.dst, e.relation)):
        lines.append("edge\t" + _dump([e.src, e.dst, e.relation, e.confidence]))
    for node_id in sorted(graph.answer_marks):
        for display in sorted(graph.answer_marks[node_id]):
            lines.append("mark\t" + _dump([node_id, display]))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_record(line_no: int, line: str) -> tuple[str, list]:
    tag, _, body = line.partition("\t")
    if tag not in ("node", "edge", "mark") or not body:
        raise SchemaMismatch(f"line {line_no}: unrecognized record {line[:40]!r}")
    try:
        record = json.loads(body)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"line {line_no}: invalid JSON: {exc.msg}") from None
    if not isinstance(record, list):
        raise SchemaMismatch(f"line {line_no}: record must be a JSON array")
    return tag, record


def deserialize_graph(data: bytes) -> breadth.BreadthGraph | depth.DepthGraph:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaMismatch(f"not valid UTF-8: {exc}") from None
    lines = text.splitlines()
    if not lines:
        raise SchemaMismatch("empty graph file")
    header = lines[0].split(" ")
    if len(header) != 3 or header[0] != _MAGIC:
        raise SchemaMismatch(f"bad header {lines[0]!r}")
    if header[1] != _VERSION:
        raise SchemaMismatch(f"unsupported version {header[1]!r}")
    kind = header[2]
    if kind not in ("breadth", "depth"):
        raise SchemaMismatch(f"unknown graph kind {kind!r}")

    nodes: list = []
    edges: list = []
    marks: dict[str, set[str]] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        tag, record = _parse_record(line_no, line)
        try:
            if tag == "node":
                if kind == "breadth":
                    node_id, node_kind, label, node_text, source_event = record
                    nodes.append(
                        breadth.BreadthNode(
                            node_id=node_id,
                            kind=node_kind,
                            label=label,
                            text=node_text,
                            source_event=source_event,
                        )
                    )
                else:
                    node_id, node_kind, timestamp = record[0], record[1], record[2]
                    payload = record[3:]
                    if node_kind == "action":
                        tool, op_type, params_digest, env_sig = payload
                        nodes.append(
                            depth.DepthNode(
                                node_id=node_id, kind="action", timestamp=timestamp,
                                tool=tool, op_type=op_type,
                                params_digest=params_digest, env_sig=env_sig,
                            )
                        )
                    elif node_kind == "artifact":
                        value, unit, value_type = payload
                        if isinstance(value, int):
                            value = float(value)
                        nodes.append(
                            depth.DepthNode(
                                node_id=node_id, kind="artifact", timestamp=timestamp,
                                value=value, unit=unit, value_type=value_type,
                            )
                        )
                    elif node_kind == "validator":
                        check_kind, outcome = payload
                        nodes.append(
                            depth.DepthNode(
                                node_id=node_id, kind="validator", timestamp=timestamp,
                                check_kind=check_kind, outcome=outcome,
                            )
                        )
                    else:
                        raise SchemaMismatch(f"line {line_no}: bad node kind {node_kind!r}")
            elif tag == "edge":
                src, dst, relation, confidence = record
                if kind == "breadth":
                    edges.append(
                        breadth.BreadthEdge(src=src, dst=dst, relation=relation, confidence=confidence)
                    )
                else:
                    edges.append(
                        depth.DepthEdge(src=src, dst=dst, relation=relation, confidence=confidence)
                    )
            else:
                node_id, display = record
                marks.setdefault(node_id, set()).add(display)
        except SchemaMismatch:
            raise
        except (ValueError, TypeError) as exc:
            raise SchemaMismatch(f"line {line_no}: {exc}") from None

    frozen_marks = {k: frozenset(v) for k, v in sorted(marks.items())}
    try:
        if kind == "breadth":
            return breadth.BreadthGraph(
                nodes=tuple(nodes), edges=tuple(edges), answer_marks=frozen_marks
            )
        return depth.DepthGraph(
            nodes=tuple(nodes), edges=tuple(edges), answer_marks=frozen_marks
        )
    except ValueError as exc:
        raise SchemaMismatch(str(exc)) from None
