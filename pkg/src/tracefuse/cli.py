"""Command-line surface: ingest, build, query, explain, verify-theorem, report.

Every command is deterministic: identical inputs and config produce
byte-identical output files. Exit codes: 0 ok, 2 parse failure,
3 validation/merge failure, 4 abstention.
"""

from __future__ import annotations

import argparse
import json
import shlex
import subprocess
import sys
from pathlib import Path

from . import breadth, depth, fusion, graph_io, theorem, trace
from .config import ConfigError, RunConfig, load_config
from .embedding import ReferenceEmbedder, RemoteEmbedder
from .query import load_query

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_ABSTAIN = 4


def _fail(message: str) -> None:
    print(f"tracefuse: {message}", file=sys.stderr)


def _out_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    out = Path(args.out) if args.out else Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _embedder(config: RunConfig):
    if config.embedder == "remote":
        return RemoteEmbedder(endpoint=config.embedder_endpoint, dim=config.embedder_dim)
    return ReferenceEmbedder(dim=config.embedder_dim)


def cmd_ingest(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    parse_failures = 0
    validation_failures = 0
    written = 0
    for path_str in args.traces:
        path = Path(path_str)
        raw = path.read_bytes()
        if args.extractor:
            try:
                parsed = trace.run_extractor(shlex.split(args.extractor), raw)
            except (trace.MalformedRecord, trace.DuplicateEventId, trace.DanglingInputRef) as exc:
                _fail(f"{path}: {exc}")
                parse_failures += 1
                continue
        else:
            try:
                parsed = trace.parse_trace_file(raw)
            except (trace.MalformedRecord, trace.DuplicateEventId, trace.DanglingInputRef) as exc:
                _fail(f"{path}: {exc}")
                parse_failures += 1
                continue
        violations = trace.validate_trace(parsed)
        if violations:
            for violation in violations:
                _fail(f"{path}: {violation.code} on {violation.event_id}: {violation.detail}")
            validation_failures += 1
            continue
        target = out / f"{path.stem.removesuffix('.trace')}.jsonl"
        target.write_bytes(trace.serialize_trace(parsed))
        written += 1
    print(f"ingested {written}/{len(args.traces)} traces")
    if parse_failures:
        return EXIT_PARSE
    if validation_failures:
        return EXIT_VALIDATION
    return EXIT_OK


def _load_traces(paths: list[str]) -> tuple[list[trace.Trace], int]:
    traces: list[trace.Trace] = []
    for path_str in paths:
        path = Path(path_str)
        try:
            parsed = trace.parse_trace_file(path.read_bytes())
        except (trace.MalformedRecord, trace.DuplicateEventId, trace.DanglingInputRef) as exc:
            _fail(f"{path}: {exc}")
            return [], EXIT_PARSE
        violations = trace.validate_trace(parsed)
        if violations:
            for violation in violations:
                _fail(f"{path}: {violation.code} on {violation.event_id}: {violation.detail}")
            return [], EXIT_VALIDATION
        traces.append(parsed)
    return traces, EXIT_OK


def _write_graph_pair(
    out: Path,
    stem: str,
    breadth_graph: breadth.BreadthGraph,
    depth_graph: depth.DepthGraph,
    dropped: list[depth.DroppedEdge],
) -> None:
    (out / f"{stem}.breadth.graph").write_bytes(graph_io.serialize_graph(breadth_graph))
    (out / f"{stem}.depth.graph").write_bytes(graph_io.serialize_graph(depth_graph))
    lines = ["src\tdst\tgate\treason"]
    for drop in sorted(dropped, key=lambda d: (d.src, d.dst, d.gate)):
        lines.append(f"{drop.src}\t{drop.dst}\t{drop.gate}\t{drop.reason}")
    (out / f"{stem}.depth.dropped.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_build(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    mode = args.mode or config.mode
    out = _out_dir(args, config)
    traces, status = _load_traces(args.traces)
    if status != EXIT_OK:
        return status
    alias_table: dict[str, str] = {}
    if args.aliases:
        alias_table = json.loads(Path(args.aliases).read_text("utf-8"))
    pairs: list[tuple[str, breadth.BreadthGraph, depth.DepthGraph, list[depth.DroppedEdge]]] = []
    for parsed, path_str in zip(traces, args.traces):
        breadth_graph = breadth.build_breadth_graph(
            parsed,
            alias_table=alias_table,
            relation_confidence=config.relation_confidence(),
            supports_scale=config.supports_scale,
        )
        depth_graph, dropped = depth.build_depth_graph(parsed)
        pairs.append((Path(path_str).stem, breadth_graph, depth_graph, dropped))
    if mode == "signal":
        for stem, breadth_graph, depth_graph, dropped in pairs:
            _write_graph_pair(out, stem, breadth_graph, depth_graph, dropped)
        print(f"built {len(pairs)} graph pair(s) in signal mode")
        return EXIT_OK
    try:
        merged_breadth = breadth.merge_breadth_graphs([p[1] for p in pairs])
        merged_depth = depth.merge_depth_graphs([p[2] for p in pairs])
    except (breadth.MergeConflict, ValueError) as exc:
        _fail(f"subject merge failed: {exc}")
        return EXIT_VALIDATION
    dropped_all = [d for p in pairs for d in p[3]]
    _write_graph_pair(out, "subject", merged_breadth, merged_depth, dropped_all)
    print(f"built merged subject graph pair from {len(pairs)} trace(s)")
    return EXIT_OK


def _load_graph(path: str, expected: str):
    graph = graph_io.deserialize_graph(Path(path).read_bytes())
    is_breadth = isinstance(graph, breadth.BreadthGraph)
    if (expected == "breadth") != is_breadth:
        raise graph_io.SchemaMismatch(f"{path} is not a {expected} graph")
    return graph


def _command_verifier(command: str) -> fusion.PathVerifier:
    argv = shlex.split(command)

    def verify(context: str, answer_display: str) -> bool:
        payload = json.dumps({"context": context, "answer": answer_display})
        proc = subprocess.run(argv, input=payload.encode("utf-8"), capture_output=True)
        return proc.returncode == 0

    return verify


def cmd_query(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    try:
        breadth_graph = _load_graph(args.breadth, "breadth")
        depth_graph = _load_graph(args.depth, "depth")
    except graph_io.SchemaMismatch as exc:
        _fail(str(exc))
        return EXIT_PARSE
    query = load_query(args.query)
    verifier = _command_verifier(args.verifier) if args.verifier else None
    outcome = fusion.run_query(
        breadth_graph,
        depth_graph,
        query,
        config.hyperparams(),
        _embedder(config),
        parallel=args.parallel,
        verifier=verifier,
    )
    target = out / f"{query.question_id}.outcome.json"
    target.write_bytes(fusion.serialize_outcome(outcome))
    if outcome.abstained:
        _fail(f"{query.question_id}: no channel supports any answer (abstained)")
        return EXIT_ABSTAIN
    print(f"{query.question_id}: {outcome.map_answer}")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    record = fusion.deserialize_outcome(Path(args.outcome).read_bytes())
    print(f"question: {record['question_id']}")
    if record["abstained"]:
        print("outcome: abstained (no supporting evidence in either channel)")
        return EXIT_OK
    print(f"map answer: {record['map_answer']}")
    print(f"gate alpha (depth weight): {record['alpha']:.6f}")
    for stage in ("p_breadth", "p_depth", "p_fused", "p_calibrated"):
        dist = record.get(stage)
        if not dist:
            print(f"{stage}: channel abstained")
            continue
        probs = ", ".join(f"{a}={p:.4f}" for a, p in sorted(dist["probs"].items()))
        print(f"{stage}: {probs} (entropy {dist['entropy']:.4f})")
    chain = record.get("chain", [])
    print(f"evidence chain ({len(chain)} edge(s)):")
    for edge in chain:
        print(
            f"  [{edge['channel']}] {edge['src']} -{edge['relation']}-> {edge['dst']}"
            f"  (delta {edge['delta']:.6f})"
        )
    return EXIT_OK


def cmd_verify_theorem(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    scenario = config.scenario()
    if args.seed is not None:
        scenario = theorem.SyntheticScenario(
            answer_count=scenario.answer_count,
            sharpness_breadth=scenario.sharpness_breadth,
            sharpness_depth=scenario.sharpness_depth,
            calibrated=scenario.calibrated,
            trials=scenario.trials,
            rng_seed=args.seed,
        )
    report = theorem.estimate_risks(scenario)
    text = theorem.format_report(scenario, report)
    table = theorem.risk_table([(scenario, report)])
    (out / "risk_report.txt").write_text(text, encoding="utf-8")
    (out / "risk_report.tsv").write_text(table, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from . import report as report_mod

    config = load_config(args.config)
    out = _out_dir(args, config)
    written: list[Path] = []
    for path_str in args.inputs:
        path = Path(path_str)
        stem = path.stem.removesuffix(".outcome")
        data = path.read_bytes()
        head = data.lstrip()[:1]
        if head == b"{":
            record = fusion.deserialize_outcome(data)
            written.extend(report_mod.write_outcome_report(record, out, stem))
        else:
            written.extend(report_mod.write_risk_report(data.decode("utf-8"), out, stem))
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracefuse",
        description="dual-graph evidence engine over agent execution traces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key-value config file")
        p.add_argument("--out", help="output directory")

    p_ingest = sub.add_parser("ingest", help="parse and validate trace files")
    p_ingest.add_argument("traces", nargs="+")
    p_ingest.add_argument("--extractor", help="command converting raw logs to trace lines")
    common(p_ingest)
    p_ingest.set_defaults(func=cmd_ingest)

    p_build = sub.add_parser("build", help="build graph pairs from ingested traces")
    p_build.add_argument("traces", nargs="+")
    p_build.add_argument("--mode", choices=("signal", "subject"))
    p_build.add_argument("--aliases", help="JSON file mapping alias -> canonical term")
    common(p_build)
    p_build.set_defaults(func=cmd_build)

    p_query = sub.add_parser("query", help="run a query against a graph pair")
    p_query.add_argument("--breadth", required=True)
    p_query.add_argument("--depth", required=True)
    p_query.add_argument("--query", required=True)
    p_query.add_argument("--parallel", action="store_true")
    p_query.add_argument("--verifier", help="command accepting/rejecting evidence paths")
    common(p_query)
    p_query.set_defaults(func=cmd_query)

    p_explain = sub.add_parser("explain", help="render a fusion outcome as text")
    p_explain.add_argument("outcome")
    p_explain.set_defaults(func=cmd_explain)

    p_verify = sub.add_parser("verify-theorem", help="run the fusion bound checks")
    p_verify.add_argument("--seed", type=int)
    common(p_verify)
    p_verify.set_defaults(func=cmd_verify_theorem)

    p_report = sub.add_parser("report", help="figures and tables from outcomes")
    p_report.add_argument("inputs", nargs="+")
    common(p_report)
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail(f"config: {exc}")
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        _fail(str(exc))
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
