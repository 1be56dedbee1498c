"""Structured execution traces: the canonical stepwise record format.

A trace file is UTF-8 JSON lines. Line 1 is a header record carrying the
trace identity (`run_id`, `question_id`); every following line is one
event. The serializer emits fields in a fixed order with no insignificant
whitespace, so parse -> serialize -> parse is byte-exact.

Parsing rejects the whole file on any malformed record, duplicate event id
or dangling input reference. Temporal-order violations are *not* parse
errors: they are reported by ``validate_trace`` so the two checkers cover
disjoint error classes.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field

EVENT_KINDS = ("action", "artifact", "validator", "note")
OP_TYPES = ("search", "parse", "compute", "verify", "other")
STATUSES = ("ok", "fail", "retry")

_HEADER_SCHEMA = "tracefuse.trace.v1"

# canonical field order for event records
_EVENT_FIELDS = (
    "event_id",
    "run_id",
    "timestamp",
    "kind",
    "tool",
    "op_type",
    "params_digest",
    "text",
    "value",
    "unit",
    "inputs",
    "status",
    "branch_id",
)


class MalformedRecord(ValueError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateEventId(ValueError):
    def __init__(self, line_no: int, event_id: str) -> None:
        super().__init__(f"line {line_no}: duplicate event_id {event_id!r}")
        self.line_no = line_no
        self.event_id = event_id


class DanglingInputRef(ValueError):
    def __init__(self, line_no: int, event_id: str, ref: str) -> None:
        super().__init__(f"line {line_no}: event {event_id!r} references unknown input {ref!r}")
        self.line_no = line_no
        self.event_id = event_id
        self.ref = ref


@dataclass(frozen=True)
class TraceEvent:
    event_id: str
    run_id: str
    timestamp: int
    kind: str
    params_digest: str
    text: str
    inputs: tuple[str, ...]
    status: str
    branch_id: str
    tool: str | None = None
    op_type: str | None = None
    value: float | str | None = None
    unit: str | None = None


@dataclass(frozen=True)
class Trace:
    run_id: str
    question_id: str
    events: tuple[TraceEvent, ...] = field(default_factory=tuple)

    def event_map(self) -> dict[str, TraceEvent]:
        return {e.event_id: e for e in self.events}


# --- violations reported by validate_trace -------------------------------

@dataclass(frozen=True)
class Violation:
    code: str  # TemporalOrder | DanglingInput | DuplicateId
    event_id: str
    detail: str


def validate_trace(trace: Trace) -> list[Violation]:
    """All admissibility violations in ``trace``; empty iff graph-buildable."""
    violations: list[Violation] = []
    seen: dict[str, TraceEvent] = {}
    for event in trace.events:
        if event.event_id in seen:
            violations.append(
                Violation("DuplicateId", event.event_id, "event_id occurs more than once")
            )
        else:
            seen[event.event_id] = event
    for event in trace.events:
        for ref in event.inputs:
            src = seen.get(ref)
            if src is None:
                violations.append(
                    Violation("DanglingInput", event.event_id, f"input {ref!r} does not exist")
                )
            elif src.timestamp >= event.timestamp:
                violations.append(
                    Violation(
                        "TemporalOrder",
                        event.event_id,
                        f"input {ref!r} has timestamp {src.timestamp} >= {event.timestamp}",
                    )
                )
    return violations


# --- parsing --------------------------------------------------------------

def _parse_event(line_no: int, record: object) -> TraceEvent:
    if not isinstance(record, dict):
        raise MalformedRecord(line_no, "event record must be a JSON object")
    unknown = set(record) - set(_EVENT_FIELDS)
    if unknown:
        raise MalformedRecord(line_no, f"unknown fields {sorted(unknown)}")
    for name in ("event_id", "run_id", "kind", "params_digest", "text", "status", "branch_id"):
        if not isinstance(record.get(name), str):
            raise MalformedRecord(line_no, f"missing or non-string field {name!r}")
    timestamp = record.get("timestamp")
    if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp < 0:
        raise MalformedRecord(line_no, "timestamp must be a non-negative integer")
    kind = record["kind"]
    if kind not in EVENT_KINDS:
        raise MalformedRecord(line_no, f"bad kind {kind!r}")
    status = record["status"]
    if status not in STATUSES:
        raise MalformedRecord(line_no, f"bad status {status!r}")
    inputs = record.get("inputs", [])
    if not isinstance(inputs, list) or not all(isinstance(i, str) for i in inputs):
        raise MalformedRecord(line_no, "inputs must be a list of event ids")
    tool = record.get("tool")
    if tool is not None and not isinstance(tool, str):
        raise MalformedRecord(line_no, "tool must be a string when present")
    op_type = record.get("op_type")
    if op_type is not None and op_type not in OP_TYPES:
        raise MalformedRecord(line_no, f"bad op_type {op_type!r}")
    value = record.get("value")
    if value is not None and not isinstance(value, (int, float, str)):
        raise MalformedRecord(line_no, "value must be a scalar or string")
    if isinstance(value, bool):
        raise MalformedRecord(line_no, "value must be a scalar or string")
    unit = record.get("unit")
    if unit is not None and not isinstance(unit, str):
        raise MalformedRecord(line_no, "unit must be a string when present")

    # kind-specific schema rules
    if kind == "action":
        if op_type is None:
            raise MalformedRecord(line_no, "action events require op_type")
    elif kind == "validator":
        if op_type is None:
            raise MalformedRecord(line_no, "validator events require op_type")
        if tool is not None:
            raise MalformedRecord(line_no, "validator events must not carry tool")
    else:  # artifact / note
        if tool is not None:
            raise MalformedRecord(line_no, f"{kind} events must not carry tool")
        if op_type is not None:
            raise MalformedRecord(line_no, f"{kind} events must not carry op_type")

    if isinstance(value, int):
        value = float(value)
    return TraceEvent(
        event_id=record["event_id"],
        run_id=record["run_id"],
        timestamp=timestamp,
        kind=kind,
        params_digest=record["params_digest"],
        text=record["text"],
        inputs=tuple(inputs),
        status=status,
        branch_id=record["branch_id"],
        tool=tool,
        op_type=op_type,
        value=value,
        unit=unit,
    )


def parse_trace_file(data: bytes) -> Trace:
    """Parse canonical trace bytes into a validated, timestamp-sorted Trace.

    Rejects the whole file on the first malformed record, duplicate event
    id or dangling input reference.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRecord(0, f"not valid UTF-8: {exc}") from None
    lines = text.splitlines()
    if not lines:
        raise MalformedRecord(1, "empty file: missing trace header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedRecord(1, f"invalid JSON: {exc.msg}") from None
    if not isinstance(header, dict) or header.get("schema") != _HEADER_SCHEMA:
        raise MalformedRecord(1, f"first line must be a {_HEADER_SCHEMA} header")
    run_id = header.get("run_id")
    question_id = header.get("question_id")
    if not isinstance(run_id, str) or not run_id:
        raise MalformedRecord(1, "header run_id must be a non-empty string")
    if not isinstance(question_id, str) or not question_id:
        raise MalformedRecord(1, "header question_id must be a non-empty string")
    if set(header) - {"schema", "run_id", "question_id"}:
        raise MalformedRecord(1, "header carries unknown fields")

    events: list[TraceEvent] = []
    seen: dict[str, int] = {}
    for offset, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise MalformedRecord(offset, "blank line")
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(offset, f"invalid JSON: {exc.msg}") from None
        event = _parse_event(offset, record)
        if event.event_id in seen:
            raise DuplicateEventId(offset, event.event_id)
        seen[event.event_id] = offset
        events.append(event)
    for event in events:
        for ref in event.inputs:
            if ref not in seen:
                raise DanglingInputRef(seen[event.event_id], event.event_id, ref)
    events.sort(key=lambda e: (e.timestamp, e.event_id))
    return Trace(run_id=run_id, question_id=question_id, events=tuple(events))


# --- canonical serialization ----------------------------------------------

def _canonical_value(value: float | str | None) -> float | int | str | None:
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def serialize_trace(trace: Trace) -> bytes:
    """Canonical byte form: header line, then events sorted by (timestamp, id)."""
    out = [
        json.dumps(
            {"schema": _HEADER_SCHEMA, "run_id": trace.run_id, "question_id": trace.question_id},
            separators=(",", ":"),
        )
    ]
    for event in sorted(trace.events, key=lambda e: (e.timestamp, e.event_id)):
        record: dict[str, object] = {}
        for name in _EVENT_FIELDS:
            raw = getattr(event, name)
            if name == "value":
                raw = _canonical_value(raw)
            elif name == "inputs":
                raw = list(raw)
            if raw is None:
                continue
            record[name] = raw
        out.append(json.dumps(record, separators=(",", ":")))
    return ("\n".join(out) + "\n").encode("utf-8")


def run_extractor(command: list[str], raw_log: bytes) -> Trace:
    """Pipe a raw log through an external extractor emitting trace lines."""
    proc = subprocess.run(command, input=raw_log, capture_output=True, check=False)
    if proc.returncode != 0:
        raise MalformedRecord(
            0, f"extractor exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace').strip()}"
        )
    return parse_trace_file(proc.stdout)
