from __future__ import annotations

import json
import sys

import pytest

from tracefuse import trace

HEADER = {"schema": "tracefuse.trace.v1", "run_id": "r1", "question_id": "q1"}


def _line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def _event(eid: str, ts: int, kind: str = "action", **extra) -> dict:
    record = {
        "event_id": eid,
        "run_id": "r1",
        "timestamp": ts,
        "kind": kind,
        "params_digest": "d",
        "text": f"event {eid}",
        "inputs": [],
        "status": "ok",
        "branch_id": "main",
    }
    if kind == "action":
        record.setdefault("tool", "t")
        record.setdefault("op_type", "search")
    if kind == "validator":
        record.setdefault("op_type", "verify")
    record.update(extra)
    return record


def _file(*events: dict) -> bytes:
    return ("\n".join([_line(HEADER)] + [_line(e) for e in events]) + "\n").encode()


def test_empty_file_is_malformed() -> None:
    with pytest.raises(trace.MalformedRecord) as exc:
        trace.parse_trace_file(b"")
    assert exc.value.line_no == 1


def test_single_action_record_parses() -> None:
    parsed = trace.parse_trace_file(_file(_event("e1", 1)))
    assert len(parsed.events) == 1
    assert parsed.events[0].op_type == "search"
    assert parsed.question_id == "q1"


def test_turing_fixture_counts(turing_trace) -> None:
    assert len(turing_trace.events) == 12
    assert sum(1 for e in turing_trace.events if e.kind == "validator") == 3


def test_duplicate_event_id_rejected() -> None:
    with pytest.raises(trace.DuplicateEventId):
        trace.parse_trace_file(_file(_event("e1", 1), _event("e1", 2)))


def test_dangling_input_rejected() -> None:
    with pytest.raises(trace.DanglingInputRef):
        trace.parse_trace_file(_file(_event("e1", 1, inputs=["missing"])))


def test_malformed_json_reports_line() -> None:
    data = (_line(HEADER) + "\n{oops\n").encode()
    with pytest.raises(trace.MalformedRecord) as exc:
        trace.parse_trace_file(data)
    assert exc.value.line_no == 2


@pytest.mark.parametrize(
    "mutation",
    [
        {"timestamp": -1},
        {"kind": "mystery"},
        {"status": "maybe"},
        {"op_type": "guess"},
        {"unexpected": 1},
    ],
)
def test_schema_violations_rejected(mutation: dict) -> None:
    with pytest.raises(trace.MalformedRecord):
        trace.parse_trace_file(_file(_event("e1", 1, **mutation)))


def test_artifact_must_not_carry_tool() -> None:
    bad = _event("e1", 1, kind="artifact")
    bad["tool"] = "t"
    with pytest.raises(trace.MalformedRecord):
        trace.parse_trace_file(_file(bad))


def test_action_requires_op_type() -> None:
    bad = _event("e1", 1)
    del bad["op_type"]
    with pytest.raises(trace.MalformedRecord):
        trace.parse_trace_file(_file(bad))


def test_events_sorted_by_timestamp_then_id() -> None:
    parsed = trace.parse_trace_file(_file(_event("e2", 5), _event("e1", 5), _event("e0", 3)))
    assert [e.event_id for e in parsed.events] == ["e0", "e1", "e2"]


# --- validate_trace ---------------------------------------------------------

def test_validate_wellformed_fixture_is_clean(turing_trace) -> None:
    assert trace.validate_trace(turing_trace) == []


def test_validate_flags_temporal_order() -> None:
    events = (
        trace.TraceEvent("e1", "r1", 5, "artifact", "d", "x", (), "ok", "main"),
        trace.TraceEvent(
            "e2", "r1", 3, "action", "d", "y", ("e1",), "ok", "main", tool="t", op_type="search"
        ),
    )
    violations = trace.validate_trace(trace.Trace("r1", "q1", events))
    assert [v.code for v in violations] == ["TemporalOrder"]
    assert violations[0].event_id == "e2"


def test_validate_counts_each_violation_once(turing_trace) -> None:
    # mutate the fixture: one dangling ref and one duplicated id
    events = list(turing_trace.events)
    first = events[0]
    events.append(
        trace.TraceEvent(
            "x90", first.run_id, 90, "artifact", "d", "dup probe", ("nope",), "ok", "main"
        )
    )
    events.append(
        trace.TraceEvent(
            first.event_id, first.run_id, 91, "artifact", "d", "dup", (), "ok", "main"
        )
    )
    mutated = trace.Trace(turing_trace.run_id, turing_trace.question_id, tuple(events))
    violations = trace.validate_trace(mutated)
    assert len(violations) == 2
    assert {v.code for v in violations} == {"DanglingInput", "DuplicateId"}


def test_parse_and_validate_cover_disjoint_error_classes() -> None:
    # a parse success can only ever fail validation on temporal order
    data = _file(
        _event("e1", 5, kind="artifact"),
        _event("e2", 3, inputs=["e1"]),
    )
    parsed = trace.parse_trace_file(data)
    codes = {v.code for v in trace.validate_trace(parsed)}
    assert codes == {"TemporalOrder"}


# --- canonical round-trip -----------------------------------------------------

def test_fixture_files_are_canonical(fixtures_dir) -> None:
    for name in ("turing.jsonl", "landgrant.jsonl"):
        raw = (fixtures_dir / name).read_bytes()
        assert trace.serialize_trace(trace.parse_trace_file(raw)) == raw


def test_roundtrip_canonicalizes_noncanonical_input() -> None:
    header = json.dumps(HEADER, indent=None, separators=(", ", ": "))
    event = json.dumps(_event("e1", 1), separators=(", ", ": "))
    raw = (header + "\n" + event + "\n").encode()
    parsed = trace.parse_trace_file(raw)
    canonical = trace.serialize_trace(parsed)
    assert trace.parse_trace_file(canonical) == parsed
    assert trace.serialize_trace(trace.parse_trace_file(canonical)) == canonical


def test_extractor_hook_runs_external_command(tmp_path) -> None:
    raw = b"anything at all"
    script = tmp_path / "extract.py"
    script.write_text(
        "import sys, json\n"
        f"header = {json.dumps(HEADER)!r}\n"
        "sys.stdin.read()\n"
        "print(header)\n"
        f"print({_line(_event('e1', 1))!r})\n"
    )
    parsed = trace.run_extractor([sys.executable, str(script)], raw)
    assert parsed.question_id == "q1"
    assert len(parsed.events) == 1


def test_extractor_failure_surfaces(tmp_path) -> None:
    script = tmp_path / "boom.py"
    script.write_text("import sys; sys.exit(3)\n")
    with pytest.raises(trace.MalformedRecord):
        trace.run_extractor([sys.executable, str(script)], b"")
