"""Breadth semantic graph: stable background anchors with weighted relations.

Nodes are entities (normalized terms), spans (artifact/note payloads) and
symbols; edges carry a confidence in (0, 1]. Retrieval smooths each node
embedding one hop over its neighborhood, scores nodes by cosine against
the query, and enumerates simple paths outward from seed nodes.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping

import numpy as np

from .embedding import EmbeddingProvider, cosine, fnv1a_64, tokenize
from .trace import Trace

NODE_KINDS = ("entity", "span", "symbol")
RELATIONS = ("mentions", "defines", "aliases", "cites", "supports", "derived_from")

ANSWER_MARK_PREFIX = "answer_support:"

# terms are lowercase alphanumeric tokens minus this closed list
STOPWORDS = frozenset(
    "a an the and or of for to in on at by as is are was were be been "
    "with from into after before between over under it its this that "
    "these those we our their".split()
)

DEFAULT_RELATION_CONFIDENCE = {
    "mentions": 0.6,
    "defines": 0.8,
    "aliases": 0.9,
    "cites": 0.8,
    "derived_from": 0.8,
}
SUPPORTS_SCALE = 0.7


@dataclass(frozen=True)
class BreadthNode:
    node_id: str
    kind: str
    label: str
    text: str
    source_event: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in NODE_KINDS:
            raise ValueError(f"bad breadth node kind {self.kind!r}")
        if not self.label:
            raise ValueError("breadth node label must be non-empty")


@dataclass(frozen=True)
class BreadthEdge:
    src: str
    dst: str
    relation: str
    confidence: float

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise ValueError(f"bad breadth relation {self.relation!r}")
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside (0, 1]")


@dataclass(frozen=True)
class BreadthGraph:
    """Immutable after build; query operations are pure."""

    nodes: tuple[BreadthNode, ...]
    edges: tuple[BreadthEdge, ...]
    # explicit display-string marks carried over from trace annotations
    answer_marks: Mapping[str, frozenset[str]] = field(default_factory=dict)
    # per-query resolution of marks/labels to answer ids (see support module)
    answer_support: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = {n.node_id for n in self.nodes}
        if len(ids) != len(self.nodes):
            raise ValueError("duplicate node_id in breadth graph")
        for edge in self.edges:
            if edge.src not in ids or edge.dst not in ids:
                raise ValueError(f"edge endpoint missing: {edge.src}->{edge.dst}")

    @cached_property
    def node_map(self) -> dict[str, BreadthNode]:
        return {n.node_id: n for n in self.nodes}

    @cached_property
    def neighbors(self) -> dict[str, tuple[tuple[str, float], ...]]:
        """Undirected adjacency; parallel edges keep their max confidence."""
        best: dict[str, dict[str, float]] = {n.node_id: {} for n in self.nodes}
        for edge in self.edges:
            for a, b in ((edge.src, edge.dst), (edge.dst, edge.src)):
                if edge.confidence > best[a].get(b, 0.0):
                    best[a][b] = edge.confidence
        return {
            v: tuple(sorted(conf.items())) for v, conf in best.items()
        }

    @cached_property
    def edge_refs(self) -> dict[tuple[str, str], tuple[tuple[str, str, str, float], ...]]:
        """Undirected lookup of (src, dst, relation, confidence) per node pair.

        A relation stored in both directions is one undirected edge; the max
        confidence wins, mirroring the build-time collapse rule.
        """
        best: dict[tuple[str, str, str], float] = {}
        for edge in self.edges:
            key = (min(edge.src, edge.dst), max(edge.src, edge.dst), edge.relation)
            if edge.confidence > best.get(key, 0.0):
                best[key] = edge.confidence
        refs: dict[tuple[str, str], list[tuple[str, str, str, float]]] = {}
        for (a, b, relation), confidence in best.items():
            refs.setdefault((a, b), []).append((a, b, relation, confidence))
        return {k: tuple(sorted(v)) for k, v in refs.items()}

    def with_answer_support(self, support: Mapping[str, frozenset[str]]) -> "BreadthGraph":
        return replace(self, answer_support=dict(support))


def extract_terms(text: str) -> list[str]:
    """Distinct normalized terms of ``text`` in first-occurrence order."""
    seen: list[str] = []
    for token in tokenize(text):
        if token not in STOPWORDS and token not in seen:
            seen.append(token)
    return seen


def span_label(text: str, value: float | str | None, unit: str | None) -> str:
    """Canonical content label: normalized text plus the carried value.

    Values convert to canonical units when known, so equivalent claims from
    different traces share one label (and merge in subject mode).
    """
    from . import units

    base = " ".join(tokenize(text))
    if value is None:
        return base
    if isinstance(value, float) and unit is not None and units.is_known_unit(unit):
        value, unit = units.normalize_unit(value, unit)
    rendered = value
    if isinstance(value, float) and value.is_integer():
        rendered = int(value)
    suffix = f"{rendered}" if unit is None else f"{rendered} {unit}"
    return f"{base} = {suffix}"


def span_node_id(label: str) -> str:
    return "s:" + format(fnv1a_64(label.encode("utf-8")), "016x")


def parse_answer_mark(text: str) -> str | None:
    if text.startswith(ANSWER_MARK_PREFIX):
        return text[len(ANSWER_MARK_PREFIX):].strip()
    return None


def _validator_pass_rates(trace: Trace) -> dict[str, float]:
    """Pass rate per artifact event id, over validators consuming it."""
    counts: dict[str, list[int]] = {}
    for event in trace.events:
        if event.kind != "validator":
            continue
        for ref in event.inputs:
            total_ok = counts.setdefault(ref, [0, 0])
            total_ok[0] += 1
            if event.status == "ok":
                total_ok[1] += 1
    return {ref: ok / total for ref, (total, ok) in counts.items()}


def build_breadth_graph(
    trace: Trace,
    alias_table: Mapping[str, str] | None = None,
    relation_confidence: Mapping[str, float] | None = None,
    supports_scale: float = SUPPORTS_SCALE,
) -> BreadthGraph:
    """Deterministic construction from an admissible trace.

    One entity node per distinct normalized term, one span node per
    artifact/note event (annotation notes excepted), mentions edges for
    within-event co-occurrence, aliases edges from the alias table, and
    supports edges from validator-passed artifacts to their terms.
    """
    conf = dict(DEFAULT_RELATION_CONFIDENCE)
    if relation_confidence:
        conf.update(relation_confidence)
    pass_rates = _validator_pass_rates(trace)

    nodes: dict[str, BreadthNode] = {}
    edges: dict[tuple[str, str, str], float] = {}
    marks: dict[str, set[str]] = {}
    event_nodes: dict[str, str] = {}  # event_id -> span node id

    def add_edge(src: str, dst: str, relation: str, confidence: float) -> None:
        key = (src, dst, relation)
        if confidence > edges.get(key, 0.0):
            edges[key] = confidence

    def ensure_entity(term: str) -> str:
        node_id = "t:" + term
        if node_id not in nodes:
            nodes[node_id] = BreadthNode(node_id=node_id, kind="entity", label=term, text=term)
        return node_id

    annotations: list[tuple[str, tuple[str, ...]]] = []
    for event in trace.events:
        if event.kind not in ("artifact", "note"):
            continue
        mark = parse_answer_mark(event.text) if event.kind == "note" else None
        if mark is not None:
            annotations.append((mark, event.inputs))
            continue
        label = span_label(event.text, event.value, event.unit)
        node_id = span_node_id(label)
        existing = nodes.get(node_id)
        if existing is None or event.event_id < (existing.source_event or ""):
            nodes[node_id] = BreadthNode(
                node_id=node_id,
                kind="span",
                label=label,
                text=event.text,
                source_event=event.event_id,
            )
        event_nodes[event.event_id] = node_id
        terms = extract_terms(event.text)
        pass_rate = pass_rates.get(event.event_id, 0.0) if event.kind == "artifact" else 0.0
        for term in terms:
            entity_id = ensure_entity(term)
            add_edge(node_id, entity_id, "mentions", conf["mentions"])
            if pass_rate > 0.0:
                add_edge(node_id, entity_id, "supports", supports_scale * pass_rate)

    if alias_table:
        for variant, canonical in sorted(alias_table.items()):
            variant_id = "t:" + variant.lower()
            canonical_id = "t:" + canonical.lower()
            if variant_id in nodes and canonical_id in nodes and variant_id != canonical_id:
                add_edge(variant_id, canonical_id, "aliases", conf["aliases"])

    for display, refs in annotations:
        for ref in refs:
            node_id = event_nodes.get(ref)
            if node_id is not None:
                marks.setdefault(node_id, set()).add(display)

    return BreadthGraph(
        nodes=tuple(sorted(nodes.values(), key=lambda n: n.node_id)),
        edges=tuple(
            BreadthEdge(src=s, dst=d, relation=r, confidence=c)
            for (s, d, r), c in sorted(edges.items())
        ),
        answer_marks={k: frozenset(v) for k, v in sorted(marks.items())},
    )


class MergeConflict(ValueError):
    def __init__(self, label: str, node_a: str, node_b: str) -> None:
        super().__init__(
            f"label {label!r} carries conflicting kinds (nodes {node_a!r} and {node_b!r})"
        )
        self.label = label
        self.node_a = node_a
        self.node_b = node_b


def merge_breadth_graphs(graphs: list[BreadthGraph]) -> BreadthGraph:
    """Subject-mode union: nodes unify by canonical label, edges keep the
    max confidence per parallel relation. Input order never matters."""
    grouped: dict[str, list[BreadthNode]] = {}
    for graph in graphs:
        for node in graph.nodes:
            grouped.setdefault(node.label, []).append(node)
    by_label: dict[str, BreadthNode] = {}
    for label in sorted(grouped):
        group = sorted(grouped[label], key=lambda n: (n.node_id, n.text, n.source_event or ""))
        kinds = {n.kind for n in group}
        if len(kinds) > 1:
            clashing = sorted({n.node_id for n in group})
            raise MergeConflict(label, clashing[0], clashing[1])
        by_label[label] = group[0]
    rename: dict[str, str] = {}
    for graph in graphs:
        for node in graph.nodes:
            rename[node.node_id] = by_label[node.label].node_id

    edges: dict[tuple[str, str, str], float] = {}
    for graph in graphs:
        for edge in graph.edges:
            src, dst = rename[edge.src], rename[edge.dst]
            if src == dst:
                continue
            key = (src, dst, edge.relation)
            if edge.confidence > edges.get(key, 0.0):
                edges[key] = edge.confidence
    marks: dict[str, set[str]] = {}
    for graph in graphs:
        for node_id, displays in graph.answer_marks.items():
            marks.setdefault(rename[node_id], set()).update(displays)
    return BreadthGraph(
        nodes=tuple(sorted(by_label.values(), key=lambda n: n.node_id)),
        edges=tuple(
            BreadthEdge(src=s, dst=d, relation=r, confidence=c)
            for (s, d, r), c in sorted(edges.items())
        ),
        answer_marks={k: frozenset(v) for k, v in sorted(marks.items())},
    )


class Smoother:
    """One-hop neighborhood smoothing with per-node caching."""

    def __init__(self, graph: BreadthGraph, embedder: EmbeddingProvider) -> None:
        self.graph = graph
        self.embedder = embedder
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, node_id: str) -> np.ndarray:
        cached = self._cache.get(node_id)
        if cached is not None:
            return cached
        vec = smoothed_embedding(self.graph, node_id, self.embedder)
        self._cache[node_id] = vec
        return vec


def smoothed_embedding(
    graph: BreadthGraph, node_id: str, embedder: EmbeddingProvider
) -> np.ndarray:
    """Node embedding averaged with immediate neighbors, confidence-weighted.

    Self weight is fixed at 1 so the rule has no free hyperparameter; the
    result is re-normalized to unit length. A zero weighted sum falls back
    to the raw embedding.
    """
    node = graph.node_map[node_id]
    own = embedder.embed(node.text)
    neighborhood = graph.neighbors.get(node_id, ())
    if not neighborhood:
        return own
    total = own.copy()
    weight = 1.0
    for other_id, confidence in neighborhood:
        total += confidence * embedder.embed(graph.node_map[other_id].text)
        weight += confidence
    total /= weight
    norm = float(np.linalg.norm(total))
    if norm == 0.0:
        return own
    return total / norm


def breadth_score(
    graph: BreadthGraph,
    query_text: str,
    node_id: str,
    embedder: EmbeddingProvider,
    smoother: Smoother | None = None,
) -> float:
    smoothed = smoother(node_id) if smoother else smoothed_embedding(graph, node_id, embedder)
    return cosine(embedder.embed(query_text), smoothed)


def seed_nodes(
    graph: BreadthGraph,
    query_text: str,
    k: int,
    embedder: EmbeddingProvider,
    seed_terms: tuple[str, ...] | None = None,
    smoother: Smoother | None = None,
) -> list[str]:
    """Top-k node ids by breadth score, ties broken by ascending node id.

    Explicit seed terms pre-seed their matching entity nodes before the
    score ranking fills the remainder.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    smoother = smoother or Smoother(graph, embedder)
    chosen: list[str] = []
    if seed_terms:
        wanted = {term.lower() for term in seed_terms}
        for node in graph.nodes:
            if node.kind == "entity" and node.label in wanted and node.node_id not in chosen:
                chosen.append(node.node_id)
                if len(chosen) == k:
                    return chosen
    scored = sorted(
        (
            (-breadth_score(graph, query_text, n.node_id, embedder, smoother), n.node_id)
            for n in graph.nodes
            if n.node_id not in chosen
        ),
    )
    chosen.extend(node_id for _, node_id in scored[: k - len(chosen)])
    return chosen


EdgeRef = tuple[str, str, str, str]  # (channel, src, dst, relation)


def breadth_edge_ref(a: str, b: str, relation: str) -> EdgeRef:
    # undirected: canonicalize endpoint order so reverse traversal dedupes
    return ("breadth", min(a, b), max(a, b), relation)


@dataclass(frozen=True)
class BreadthPath:
    nodes: tuple[str, ...]
    edges: tuple[EdgeRef, ...]
    score: float  # log-additive path score with drift penalty applied


def offtopic_deficit(query_vec: np.ndarray, node_vec: np.ndarray) -> float:
    sim = cosine(query_vec, node_vec)
    return max(0.0, 1.0 - sim)


def enumerate_breadth_paths(
    graph: BreadthGraph,
    seeds: list[str],
    query_text: str,
    max_length: int,
    beam: int | None,
    embedder: EmbeddingProvider,
    lambda_off: float,
    smoother: Smoother | None = None,
) -> list[BreadthPath]:
    """Simple paths from seeds, best-first by partial log-additive score.

    Paths are capped at ``max_length`` edges; a beam of ``None`` retains
    everything, otherwise at most ``beam`` paths survive per supported
    answer (unsupported terminals form their own group). Deterministic.
    """
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    smoother = smoother or Smoother(graph, embedder)
    query_vec = embedder.embed(query_text)

    def drift(node_id: str) -> float:
        return offtopic_deficit(query_vec, smoother(node_id))

    complete: list[BreadthPath] = []
    # heap entries: (-score, nodes, edges)
    frontier: list[tuple[float, tuple[str, ...], tuple[EdgeRef, ...]]] = []
    for seed in sorted(set(seeds)):
        if seed not in graph.node_map:
            continue
        base = -lambda_off * drift(seed)
        if not graph.neighbors.get(seed):
            complete.append(BreadthPath(nodes=(seed,), edges=(), score=base))
        else:
            heapq.heappush(frontier, (-base, (seed,), ()))
    while frontier:
        neg_score, nodes, edges = heapq.heappop(frontier)
        score = -neg_score
        tail = nodes[-1]
        for other, confidence in graph.neighbors.get(tail, ()):
            if other in nodes:
                continue
            pair = (min(tail, other), max(tail, other))
            for src, dst, relation, conf in graph.edge_refs[pair]:
                ref = breadth_edge_ref(src, dst, relation)
                extended = score + float(np.log(conf)) - lambda_off * drift(other)
                new_nodes = nodes + (other,)
                new_edges = edges + (ref,)
                complete.append(BreadthPath(nodes=new_nodes, edges=new_edges, score=extended))
                if len(new_edges) < max_length:
                    heapq.heappush(frontier, (-extended, new_nodes, new_edges))

    if beam is not None:
        groups: dict[str | None, list[BreadthPath]] = {}
        for path in complete:
            support = graph.answer_support.get(path.nodes[-1], frozenset())
            for answer in support or (None,):
                groups.setdefault(answer, []).append(path)
        kept: dict[tuple[tuple[str, ...], tuple[EdgeRef, ...]], BreadthPath] = {}
        for answer in sorted(groups, key=lambda a: (a is None, a)):
            ranked = sorted(groups[answer], key=lambda p: (-p.score, p.nodes))
            for path in ranked[:beam]:
                kept[(path.nodes, path.edges)] = path
        complete = list(kept.values())
    return sorted(complete, key=lambda p: (-p.score, p.nodes))
