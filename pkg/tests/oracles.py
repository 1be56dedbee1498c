"""Independent oracles used to cross-check the production implementations.

Everything here recomputes results through a different algorithmic route:
brute-force subsequence search instead of the LCS dynamic program,
recursive DFS instead of best-first path enumeration, and a high-precision
mpmath evaluation of the distribution/fusion/calibration pipeline. A
seeded generator for random-but-admissible traces lives here too.
"""

from __future__ import annotations

import itertools
import random
from typing import Sequence

import mpmath

from tracefuse import trace, units

mpmath.mp.dps = 50


def random_valid_trace(rng: random.Random, run_id: str = "r1") -> trace.Trace:
    """Random trace whose input references always point strictly backward."""
    events: list[trace.TraceEvent] = []
    made: list[str] = []
    for index in range(rng.randint(2, 14)):
        eid = f"e{index:02d}"
        kind = rng.choice(["action", "artifact", "validator"])
        candidates = [e for e in made if rng.random() < 0.5]
        inputs = tuple(rng.sample(candidates, min(len(candidates), rng.randint(0, 2))))
        extra: dict = {}
        if kind == "action":
            extra.update(tool="t", op_type=rng.choice(["search", "parse", "compute"]))
        elif kind == "validator":
            extra.update(op_type="verify")
        elif rng.random() < 0.5:
            extra.update(value=float(rng.randint(0, 9)), unit=rng.choice(["steps", "acre"]))
        events.append(
            trace.TraceEvent(
                event_id=eid,
                run_id=run_id,
                timestamp=index + 1,
                kind=kind,
                params_digest="d",
                text=f"event {eid}",
                inputs=inputs,
                status=rng.choice(["ok", "fail"]) if kind == "validator" else "ok",
                branch_id="main",
                **extra,
            )
        )
        made.append(eid)
    return trace.Trace(run_id, "q1", tuple(events))


# --- typed LCS by brute force -------------------------------------------------

def _items_match(a, b) -> bool:
    return a[0] == b[0] and units.units_compatible(a[1], b[1])


def _greedy_embeds(sub: Sequence, seq: Sequence) -> bool:
    position = 0
    for item in sub:
        while position < len(seq) and not _items_match(item, seq[position]):
            position += 1
        if position == len(seq):
            return False
        position += 1
    return True


def brute_force_lcs(a: Sequence, b: Sequence) -> int:
    """Max length over all subsequences of ``a`` embeddable in ``b``."""
    for length in range(min(len(a), len(b)), 0, -1):
        for indices in itertools.combinations(range(len(a)), length):
            if _greedy_embeds([a[i] for i in indices], b):
                return length
    return 0


# --- exhaustive simple-path enumeration ----------------------------------------

def exhaustive_breadth_paths(
    pair_edges: dict[tuple[str, str], list[tuple[str, str, str]]],
    seeds: Sequence[str],
    max_length: int,
) -> set[tuple[tuple[str, ...], tuple[tuple[str, str, str], ...]]]:
    """All simple undirected paths of <= max_length edges from the seeds.

    ``pair_edges`` maps an unordered node pair to its parallel edge refs
    (src, dst, relation). Isolated seeds yield one zero-length path.
    """
    adjacency: dict[str, set[str]] = {}
    for (a, b) in pair_edges:
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)
    found: set[tuple[tuple[str, ...], tuple[tuple[str, str, str], ...]]] = set()

    def walk(nodes: tuple[str, ...], edges: tuple[tuple[str, str, str], ...]) -> None:
        tail = nodes[-1]
        for neighbor in adjacency.get(tail, ()):
            if neighbor in nodes:
                continue
            for ref in pair_edges[(min(tail, neighbor), max(tail, neighbor))]:
                path = (nodes + (neighbor,), edges + (ref,))
                found.add(path)
                if len(path[1]) < max_length:
                    walk(*path)

    for seed in set(seeds):
        if not adjacency.get(seed):
            found.add(((seed,), ()))
        else:
            walk((seed,), ())
    return found


def exhaustive_depth_paths(
    edges: Sequence[tuple[str, str, str]], target: str, max_length: int
) -> set[tuple[str, ...]]:
    """Node sequences of all directed paths of <= max_length edges into target."""
    incoming: dict[str, list[tuple[str, str, str]]] = {}
    for src, dst, relation in edges:
        incoming.setdefault(dst, []).append((src, dst, relation))
    found: set[tuple[str, ...]] = set()

    def walk(nodes: tuple[str, ...], length: int) -> None:
        for src, _, _ in incoming.get(nodes[0], ()):
            if src in nodes:
                continue
            extended = (src,) + nodes
            found.add(extended)
            if length + 1 < max_length:
                walk(extended, length + 1)

    if not incoming.get(target):
        return {(target,)}
    walk((target,), 0)
    return found


# --- high-precision fusion pipeline --------------------------------------------

def hp_distribution(scores_by_answer: dict[str, list[float]], answer_ids: Sequence[str]):
    weights = {
        answer: sum(mpmath.e ** mpmath.mpf(score) for score in scores)
        for answer, scores in scores_by_answer.items()
    }
    total = sum(weights.values())
    return {answer: weights.get(answer, mpmath.mpf(0)) / total for answer in answer_ids}


def hp_entropy(probs) -> mpmath.mpf:
    return -sum(p * mpmath.log(p) for p in probs.values() if p > 0)


def hp_gate(h_breadth, h_depth) -> mpmath.mpf:
    wd = mpmath.e ** (-h_depth)
    wb = mpmath.e ** (-h_breadth)
    return wd / (wd + wb)


def hp_fuse(p_breadth, p_depth, alpha, floor):
    floor = mpmath.mpf(floor)
    weights = {
        a: (mpmath.e ** (
            alpha * mpmath.log(max(p_depth[a], floor))
            + (1 - alpha) * mpmath.log(max(p_breadth[a], floor))
        ))
        for a in p_breadth
    }
    total = sum(weights.values())
    return {a: w / total for a, w in weights.items()}


def hp_calibrate(p_fused, gamma, beta, h_breadth, h_depth):
    weights = {}
    for a, p in p_fused.items():
        if p > 0:
            weights[a] = mpmath.e ** (mpmath.log(p) / gamma - beta * (h_breadth + h_depth))
        else:
            weights[a] = mpmath.mpf(0)
    total = sum(weights.values())
    return {a: w / total for a, w in weights.items()}


def hp_pipeline_map_prob(
    breadth_paths,
    depth_paths,
    answer_ids: Sequence[str],
    hp,
    answer: str,
    excluded: frozenset = frozenset(),
) -> float:
    """Calibrated probability of ``answer`` recomputed end to end in mpmath.

    ``breadth_paths``/``depth_paths`` are ScoredPath sequences; paths that
    use an excluded edge are dropped before aggregation, mirroring the
    leave-one-out semantics.
    """
    def grouped(paths):
        out: dict[str, list[float]] = {}
        for path in paths:
            if excluded.isdisjoint(path.edges):
                out.setdefault(path.answer, []).append(path.score)
        return out

    scores_b = grouped(breadth_paths)
    scores_d = grouped(depth_paths)
    p_b = hp_distribution(scores_b, answer_ids) if scores_b else None
    p_d = hp_distribution(scores_d, answer_ids) if scores_d else None
    if p_b is None and p_d is None:
        return 0.0
    if p_b is None:
        fused = p_d
        h_b, h_d = mpmath.mpf(0), hp_entropy(p_d)
    elif p_d is None:
        fused = p_b
        h_b, h_d = hp_entropy(p_b), mpmath.mpf(0)
    else:
        h_b, h_d = hp_entropy(p_b), hp_entropy(p_d)
        fused = hp_fuse(p_b, p_d, hp_gate(h_b, h_d), hp.epsilon_floor)
    calibrated = hp_calibrate(fused, mpmath.mpf(hp.gamma), mpmath.mpf(hp.beta), h_b, h_d)
    return float(calibrated[answer])
