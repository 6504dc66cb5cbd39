from math import comb
from typing import Callable, Iterator, List, Sequence

import numpy as np

from exactk.core.errors import ContractViolation, InfeasibleError
from exactk.graph.constraint import ConstraintGraph


BRUTE_FORCE_LIMIT = 10 ** 6


def greedy_node_weight(graph: ConstraintGraph, weights: Sequence[float], k: int) -> List[int]:
    """Take the heaviest remaining node, then drop it and every node not adjacent to it."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (graph.n,):
        raise ContractViolation(f"expected {graph.n} node weights, got shape {weights.shape}")
    if not np.isfinite(weights).all():
        raise ContractViolation("node weights must be finite")
    if not 0 < k <= graph.n:
        raise ContractViolation(f"K={k} must be in 1..{graph.n}")

    alive = np.ones(graph.n, dtype=bool)
    card: List[int] = []
    for step in range(k):
        if alive.sum() < k - step:
            raise InfeasibleError(
                f"greedy selection left {int(alive.sum())} nodes with {k - step} still to pick"
            )
        node = int(np.argmax(np.where(alive, weights, -np.inf)))
        card.append(node)
        alive &= graph.adjacency[node]
        alive[node] = False
    return card


def k_cliques(graph: ConstraintGraph, k: int) -> Iterator[List[int]]:
    """All k-cliques as ascending node lists, in lexicographic order."""

    def extend(clique: List[int], candidates: np.ndarray) -> Iterator[List[int]]:
        if len(clique) == k:
            yield list(clique)
            return
        need = k - len(clique)
        for pos, node in enumerate(candidates):
            if len(candidates) - pos < need:
                return
            rest = candidates[pos + 1:]
            yield from extend(clique + [int(node)], rest[graph.adjacency[node, rest]])

    yield from extend([], np.arange(graph.n))


def brute_force_best_card(graph: ConstraintGraph, score_fn: Callable[[List[int]], float], k: int) -> List[int]:
    if comb(graph.n, k) > BRUTE_FORCE_LIMIT:
        raise ContractViolation(f"C({graph.n},{k}) exceeds the enumeration limit of {BRUTE_FORCE_LIMIT}")

    best: List[int] = []
    best_score = -np.inf
    for card in k_cliques(graph, k):
        score = float(score_fn(card))
        if not best or score > best_score:
            best, best_score = card, score
    if not best:
        raise InfeasibleError(f"graph over {graph.n} nodes has no {k}-clique")
    return best


def random_clique(graph: ConstraintGraph, k: int, rng: np.random.Generator, attempts: int = 100) -> List[int]:
    """Uniformly random feasible extension until k nodes; restarts on dead ends."""
    for _ in range(attempts):
        alive = np.ones(graph.n, dtype=bool)
        card: List[int] = []
        while len(card) < k:
            feasible = np.flatnonzero(alive)
            if feasible.size == 0:
                break
            node = int(rng.choice(feasible))
            card.append(node)
            alive &= graph.adjacency[node]
            alive[node] = False
        if len(card) == k:
            return card
    raise InfeasibleError(f"no random {k}-clique found in {attempts} attempts")
