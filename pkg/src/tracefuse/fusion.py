"""Entropy-gated fusion of per-channel answer distributions.

Scored paths from each graph become answer distributions via max-shifted
log-sum-exp aggregation. Channel entropies drive a softmin gate; the
channels fuse as a log-linear (geometric) mixture, a global calibration
step reshapes the result, and the MAP answer is reported together with a
minimal evidence chain obtained by leave-one-out pruning.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import exp, inf, log
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

from . import breadth as breadth_mod
from . import depth as depth_mod
from .breadth import BreadthGraph, EdgeRef, Smoother, breadth_edge_ref
from .depth import DepthGraph, EmptyOpSequence, extract_query_ops, lcs_typed, path_ops
from .embedding import EmbeddingProvider, ReferenceEmbedder
from .query import Query, resolve_breadth_support, resolve_depth_support

if TYPE_CHECKING:
    from .trace import Trace

OUTCOME_SCHEMA = "tracefuse-outcome.v1"


class NoSupportingPaths(RuntimeError):
    """A channel produced no path supporting any candidate answer."""


class BothChannelsEmpty(RuntimeError):
    """Neither channel supports any answer; the engine abstains."""


@dataclass(frozen=True)
class HyperParams:
    lambda_off: float = 1.0      # breadth drift penalty weight
    lambda_ord: float = 1.0      # depth order penalty weight
    tau: float = 0.5             # path reliability exponent
    gamma: float = 1.0           # calibration temperature
    beta: float = 0.0            # calibration entropy penalty
    delta: float = 0.05          # chain pruning budget
    l_breadth: int = 5
    l_depth: int = 6
    k: int = 8                   # seed count
    beam: int = 64
    epsilon_floor: float = 1e-12

    def __post_init__(self) -> None:
        if self.lambda_off < 0 or self.lambda_ord < 0 or self.beta < 0:
            raise ValueError("penalty weights must be non-negative")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.gamma <= 0 or self.delta <= 0 or self.epsilon_floor <= 0:
            raise ValueError("gamma, delta and epsilon_floor must be positive")
        if self.l_breadth < 1 or self.l_depth < 1 or self.k < 1 or self.beam < 1:
            raise ValueError("path caps, seed count and beam must be >= 1")

    def as_dict(self) -> dict[str, float | int]:
        return {
            "lambda_off": self.lambda_off,
            "lambda_ord": self.lambda_ord,
            "tau": self.tau,
            "gamma": self.gamma,
            "beta": self.beta,
            "delta": self.delta,
            "l_breadth": self.l_breadth,
            "l_depth": self.l_depth,
            "k": self.k,
            "beam": self.beam,
            "epsilon_floor": self.epsilon_floor,
        }


@dataclass(frozen=True)
class ScoredPath:
    channel: str               # breadth | depth
    nodes: tuple[str, ...]
    edges: tuple[EdgeRef, ...]
    answer: str
    score: float               # log domain


@dataclass(frozen=True)
class AnswerDistribution:
    probs: Mapping[str, float]
    entropy: float

    @classmethod
    def from_probs(cls, probs: Mapping[str, float]) -> "AnswerDistribution":
        return cls(probs=dict(probs), entropy=shannon_entropy(probs))


@dataclass(frozen=True)
class FusionOutcome:
    question_id: str
    hyperparams: HyperParams
    abstained: bool
    p_breadth: AnswerDistribution | None
    p_depth: AnswerDistribution | None
    alpha: float | None
    p_fused: AnswerDistribution | None
    p_calibrated: AnswerDistribution | None
    map_answer: str | None
    chain: tuple[EdgeRef, ...] = ()
    edge_marginals: Mapping[EdgeRef, float] = field(default_factory=dict)


# --- path scoring -----------------------------------------------------------

def offtopic_penalty(
    nodes: Sequence[str], query_text: str, smoother: Smoother, embedder: EmbeddingProvider
) -> float:
    """Accumulated cosine deficit of the path's nodes against the query."""
    query_vec = embedder.embed(query_text)
    return sum(breadth_mod.offtopic_deficit(query_vec, smoother(node)) for node in nodes)


def _breadth_confidences(graph: BreadthGraph) -> dict[EdgeRef, float]:
    best: dict[EdgeRef, float] = {}
    for edge in graph.edges:
        ref = breadth_edge_ref(edge.src, edge.dst, edge.relation)
        if edge.confidence > best.get(ref, 0.0):
            best[ref] = edge.confidence
    return best


def score_breadth_path(
    graph: BreadthGraph,
    nodes: Sequence[str],
    edges: Sequence[EdgeRef],
    query_text: str,
    lambda_off: float,
    embedder: EmbeddingProvider,
    smoother: Smoother | None = None,
) -> float:
    """Sum of log edge confidences minus the weighted off-topic penalty."""
    smoother = smoother or Smoother(graph, embedder)
    confidences = _breadth_confidences(graph)
    total = sum(log(confidences[ref]) for ref in edges)
    return total - lambda_off * offtopic_penalty(nodes, query_text, smoother, embedder)


def score_depth_path(
    graph: DepthGraph,
    edges: Sequence[depth_mod.DepthEdge],
    nodes: Sequence[str],
    query_ops: Sequence[depth_mod.OpItem],
    lambda_ord: float,
) -> float:
    """Sum of log edge confidences minus the weighted order mismatch."""
    if not query_ops:
        raise EmptyOpSequence("query requires at least one operation")
    total = sum(log(edge.confidence) for edge in edges)
    overlap = lcs_typed(list(query_ops), path_ops(graph, nodes))
    return total - lambda_ord * (1.0 - overlap / len(query_ops))


# --- distributions ----------------------------------------------------------

def answer_distribution(
    paths: Sequence[ScoredPath], answer_ids: Sequence[str]
) -> AnswerDistribution:
    """Log-sum-exp aggregation of path scores into a distribution over answers.

    Answers with no supporting path receive probability exactly 0; flooring
    happens only inside the fusion step.
    """
    grouped: dict[str, list[float]] = {}
    for path in paths:
        if path.answer not in answer_ids:
            raise ValueError(f"path answer {path.answer!r} not in the answer set")
        grouped.setdefault(path.answer, []).append(path.score)
    if not grouped:
        raise NoSupportingPaths("no path supports any candidate answer")
    shift = max(score for scores in grouped.values() for score in scores)
    weights = {
        answer: sum(exp(score - shift) for score in scores)
        for answer, scores in grouped.items()
    }
    total = sum(weights.values())
    probs = {answer: weights.get(answer, 0.0) / total for answer in answer_ids}
    return AnswerDistribution.from_probs(probs)


def shannon_entropy(probs: Mapping[str, float]) -> float:
    """Natural-log Shannon entropy with the 0 * log 0 = 0 convention."""
    return -sum(p * log(p) for p in probs.values() if p > 0.0) + 0.0


def entropy_gate(h_breadth: float, h_depth: float) -> float:
    """Softmin-of-entropies weight on the depth channel."""
    wd = exp(-h_depth)
    wb = exp(-h_breadth)
    return wd / (wd + wb)


def _softmax(scores: Mapping[str, float]) -> dict[str, float]:
    finite = [s for s in scores.values() if s > -inf]
    shift = max(finite)
    weights = {a: exp(s - shift) if s > -inf else 0.0 for a, s in scores.items()}
    total = sum(weights.values())
    return {a: w / total for a, w in weights.items()}


def fuse(
    p_breadth: AnswerDistribution | None,
    p_depth: AnswerDistribution | None,
    alpha: float,
    epsilon_floor: float = 1e-12,
) -> AnswerDistribution:
    """Log-linear mixture with the channel weights (1 - alpha, alpha).

    Probabilities are raised to ``epsilon_floor`` before taking logs. When
    one channel abstained (None), the other is returned unchanged; callers
    record the gate as degenerate in that case.
    """
    if p_breadth is None and p_depth is None:
        raise BothChannelsEmpty("no channel produced a distribution")
    if p_breadth is None:
        return p_depth  # type: ignore[return-value]
    if p_depth is None:
        return p_breadth
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if set(p_breadth.probs) != set(p_depth.probs):
        raise ValueError("channel distributions cover different answer sets")
    scores = {
        a: alpha * log(max(p_depth.probs[a], epsilon_floor))
        + (1.0 - alpha) * log(max(p_breadth.probs[a], epsilon_floor))
        for a in p_breadth.probs
    }
    return AnswerDistribution.from_probs(_softmax(scores))


def calibrate(
    p_fused: AnswerDistribution,
    gamma: float,
    beta: float,
    h_breadth: float,
    h_depth: float,
) -> AnswerDistribution:
    """Temperature-and-penalty reshaping of the fused distribution.

    The entropy penalty term is constant across answers, so it cancels in
    the softmax; it is kept literal anyway.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    penalty = beta * (h_breadth + h_depth)
    scores = {
        a: (log(p) / gamma if p > 0.0 else -inf) - penalty
        for a, p in p_fused.probs.items()
    }
    return AnswerDistribution.from_probs(_softmax(scores))


def select_answer(p_calibrated: AnswerDistribution, answer_ids: Sequence[str]) -> str:
    """MAP answer; exact ties break toward the ascending answer id."""
    best_id: str | None = None
    best_p = -inf
    for answer_id in sorted(answer_ids):
        p = p_calibrated.probs[answer_id]
        if p > best_p:
            best_id = answer_id
            best_p = p
    assert best_id is not None
    return best_id


# --- channels ----------------------------------------------------------------

def breadth_channel_paths(
    graph: BreadthGraph,
    query: Query,
    hp: HyperParams,
    embedder: EmbeddingProvider,
    smoother: Smoother | None = None,
) -> list[ScoredPath]:
    smoother = smoother or Smoother(graph, embedder)
    seeds = breadth_mod.seed_nodes(
        graph, query.text, hp.k, embedder, query.seed_terms, smoother
    )
    raw = breadth_mod.enumerate_breadth_paths(
        graph, seeds, query.text, hp.l_breadth, hp.beam, embedder, hp.lambda_off, smoother
    )
    scored: list[ScoredPath] = []
    for path in raw:
        support = graph.answer_support.get(path.nodes[-1])
        if not support:
            continue
        for answer in sorted(support):
            scored.append(
                ScoredPath(
                    channel="breadth",
                    nodes=path.nodes,
                    edges=path.edges,
                    answer=answer,
                    score=path.score,
                )
            )
    return scored


def depth_edge_ref(edge: depth_mod.DepthEdge) -> EdgeRef:
    return ("depth", edge.src, edge.dst, edge.relation)


def depth_channel_paths(
    graph: DepthGraph, query: Query, hp: HyperParams
) -> list[ScoredPath]:
    query_ops = extract_query_ops(query.text, query.op_override)
    scored: list[ScoredPath] = []
    for target in sorted(graph.answer_support):
        answers = sorted(graph.answer_support[target])
        for path in depth_mod.enumerate_admissible_paths(graph, target, hp.l_depth):
            score = score_depth_path(graph, path.edges, path.nodes, query_ops, hp.lambda_ord)
            refs = tuple(depth_edge_ref(edge) for edge in path.edges)
            for answer in answers:
                scored.append(
                    ScoredPath(
                        channel="depth",
                        nodes=path.nodes,
                        edges=refs,
                        answer=answer,
                        score=score,
                    )
                )
    return scored


# --- pipeline, chain extraction and the full run ------------------------------

def _channel_distribution(
    paths: Sequence[ScoredPath], answer_ids: Sequence[str]
) -> AnswerDistribution | None:
    try:
        return answer_distribution(paths, answer_ids)
    except NoSupportingPaths:
        return None


def _fuse_stage(
    p_b: AnswerDistribution | None,
    p_d: AnswerDistribution | None,
    hp: HyperParams,
) -> tuple[AnswerDistribution, AnswerDistribution, float]:
    """(fused, calibrated, alpha) from the per-channel distributions."""
    if p_b is None and p_d is None:
        raise BothChannelsEmpty("no channel produced a distribution")
    if p_b is None:
        alpha = 1.0
    elif p_d is None:
        alpha = 0.0
    else:
        alpha = entropy_gate(p_b.entropy, p_d.entropy)
    fused = fuse(p_b, p_d, alpha, hp.epsilon_floor)
    calibrated = calibrate(
        fused,
        hp.gamma,
        hp.beta,
        p_b.entropy if p_b else 0.0,
        p_d.entropy if p_d else 0.0,
    )
    return fused, calibrated, alpha


def _calibrated_prob(
    breadth_paths: Sequence[ScoredPath],
    depth_paths: Sequence[ScoredPath],
    answer_ids: Sequence[str],
    hp: HyperParams,
    answer: str,
    excluded: frozenset[EdgeRef],
) -> float:
    """P-tilde(answer) after removing the excluded edges; 0 when all support dies."""
    kept_b = [p for p in breadth_paths if excluded.isdisjoint(p.edges)]
    kept_d = [p for p in depth_paths if excluded.isdisjoint(p.edges)]
    p_b = _channel_distribution(kept_b, answer_ids)
    p_d = _channel_distribution(kept_d, answer_ids)
    if p_b is None and p_d is None:
        return 0.0
    _, calibrated, _ = _fuse_stage(p_b, p_d, hp)
    return calibrated.probs[answer]


def minimal_evidence_chain(
    map_answer: str,
    breadth_paths: Sequence[ScoredPath],
    depth_paths: Sequence[ScoredPath],
    answer_ids: Sequence[str],
    hp: HyperParams,
    original_prob: float,
    parallel: bool = False,
) -> tuple[tuple[EdgeRef, ...], dict[EdgeRef, float]]:
    """Greedy ascending leave-one-out pruning within the budget ``delta``.

    Edges on paths supporting the MAP answer are scored by the drop in the
    calibrated MAP probability when each is removed alone; pruning commits
    edges in ascending order while the recomputed cumulative drop stays
    within the budget, and stops before the first prune that would exceed
    it. Surviving edges return in path order.
    """
    ordered: list[EdgeRef] = []
    for path in sorted(
        (p for p in [*breadth_paths, *depth_paths] if p.answer == map_answer),
        key=lambda p: (p.channel, -p.score, p.nodes),
    ):
        for ref in path.edges:
            if ref not in ordered:
                ordered.append(ref)
    if not ordered:
        return (), {}

    def prob_without(excluded: frozenset[EdgeRef]) -> float:
        return _calibrated_prob(
            breadth_paths, depth_paths, answer_ids, hp, map_answer, excluded
        )

    singles = [frozenset((ref,)) for ref in ordered]
    if parallel:
        with ThreadPoolExecutor() as pool:
            drops = list(pool.map(prob_without, singles))
    else:
        drops = [prob_without(single) for single in singles]
    marginals = {ref: original_prob - p for ref, p in zip(ordered, drops)}

    pruned: set[EdgeRef] = set()
    for ref in sorted(ordered, key=lambda r: (marginals[r], r)):
        trial = pruned | {ref}
        cumulative_drop = original_prob - prob_without(frozenset(trial))
        if cumulative_drop > hp.delta:
            break
        pruned = trial
    chain = tuple(ref for ref in ordered if ref not in pruned)
    return chain, marginals


PathVerifier = Callable[[str, str], bool]


def _stitch_context(path: ScoredPath) -> str:
    return " -> ".join(path.nodes)


def run_query_on_trace(
    source: Trace,
    query: Query,
    hp: HyperParams | None = None,
    embedder: EmbeddingProvider | None = None,
    alias_table: dict[str, str] | None = None,
    **kwargs,
) -> FusionOutcome:
    """Build both graphs from an admissible trace and run the query."""
    from .breadth import build_breadth_graph
    from .depth import build_depth_graph
    from .trace import validate_trace

    violations = validate_trace(source)
    if violations:
        raise ValueError(f"trace is not admissible: {violations[0]}")
    breadth_graph = build_breadth_graph(source, alias_table=alias_table)
    depth_graph, _ = build_depth_graph(source)
    return run_query(breadth_graph, depth_graph, query, hp, embedder, **kwargs)


def run_query(
    breadth_graph: BreadthGraph,
    depth_graph: DepthGraph,
    query: Query,
    hp: HyperParams | None = None,
    embedder: EmbeddingProvider | None = None,
    *,
    parallel: bool = False,
    verifier: PathVerifier | None = None,
) -> FusionOutcome:
    """Full deterministic pipeline from labeled graphs to a fusion outcome.

    Channels may be evaluated concurrently; results are bit-identical to
    sequential execution because every stage is a pure function.
    """
    hp = hp or HyperParams()
    embedder = embedder or ReferenceEmbedder()
    labeled_b = breadth_graph.with_answer_support(
        resolve_breadth_support(breadth_graph, query)
    )
    labeled_d = depth_graph.with_answer_support(resolve_depth_support(depth_graph, query))

    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            future_b = pool.submit(breadth_channel_paths, labeled_b, query, hp, embedder)
            future_d = pool.submit(depth_channel_paths, labeled_d, query, hp)
            paths_b = future_b.result()
            paths_d = future_d.result()
    else:
        paths_b = breadth_channel_paths(labeled_b, query, hp, embedder)
        paths_d = depth_channel_paths(labeled_d, query, hp)

    if verifier is not None:
        display_of = {a.answer_id: a.display for a in query.answers}
        paths_b = [p for p in paths_b if verifier(_stitch_context(p), display_of[p.answer])]
        paths_d = [p for p in paths_d if verifier(_stitch_context(p), display_of[p.answer])]

    answer_ids = query.answer_ids
    p_b = _channel_distribution(paths_b, answer_ids)
    p_d = _channel_distribution(paths_d, answer_ids)
    if p_b is None and p_d is None:
        return FusionOutcome(
            question_id=query.question_id,
            hyperparams=hp,
            abstained=True,
            p_breadth=None,
            p_depth=None,
            alpha=None,
            p_fused=None,
            p_calibrated=None,
            map_answer=None,
        )
    fused, calibrated, alpha = _fuse_stage(p_b, p_d, hp)
    map_answer = select_answer(calibrated, answer_ids)
    chain, marginals = minimal_evidence_chain(
        map_answer,
        paths_b,
        paths_d,
        answer_ids,
        hp,
        calibrated.probs[map_answer],
        parallel=parallel,
    )
    return FusionOutcome(
        question_id=query.question_id,
        hyperparams=hp,
        abstained=False,
        p_breadth=p_b,
        p_depth=p_d,
        alpha=alpha,
        p_fused=fused,
        p_calibrated=calibrated,
        map_answer=map_answer,
        chain=chain,
        edge_marginals=marginals,
    )


# --- canonical outcome serialization -----------------------------------------

def _distribution_json(dist: AnswerDistribution | None) -> dict | None:
    if dist is None:
        return None
    return {"probs": dict(sorted(dist.probs.items())), "entropy": dist.entropy}


def serialize_outcome(outcome: FusionOutcome) -> bytes:
    record = {
        "schema": OUTCOME_SCHEMA,
        "question_id": outcome.question_id,
        "hyperparams": outcome.hyperparams.as_dict(),
        "abstained": outcome.abstained,
        "p_breadth": _distribution_json(outcome.p_breadth),
        "p_depth": _distribution_json(outcome.p_depth),
        "alpha": outcome.alpha,
        "p_fused": _distribution_json(outcome.p_fused),
        "p_calibrated": _distribution_json(outcome.p_calibrated),
        "map_answer": outcome.map_answer,
        "chain": [
            {
                "channel": ref[0],
                "src": ref[1],
                "dst": ref[2],
                "relation": ref[3],
                "delta": outcome.edge_marginals[ref],
            }
            for ref in outcome.chain
        ],
    }
    return (json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def deserialize_outcome(data: bytes) -> dict:
    record = json.loads(data.decode("utf-8"))
    if record.get("schema") != OUTCOME_SCHEMA:
        raise ValueError(f"not a {OUTCOME_SCHEMA} record")
    return record
