from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from exactk.core.errors import ConfigurationError, ContractViolation


GRAPH_CACHE_SIZE = 4096


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute edit distance, compared character by character."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)

    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def ned(a: str, b: str) -> float:
    """Levenshtein distance over the longer length; ned("", "") is 0."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


@dataclass(frozen=True)
class Constraint:
    kind: str = "none"
    tau: Optional[float] = None

    KINDS = ("none", "min_ned")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown constraint {self.kind!r}; expected one of {', '.join(self.KINDS)}")
        if self.kind == "min_ned":
            if self.tau is None or not 0.0 <= self.tau <= 1.0:
                raise ConfigurationError(f"min_ned needs tau in [0, 1], got {self.tau}")
        elif self.tau is not None:
            raise ConfigurationError("tau is only meaningful for min_ned")

    @classmethod
    def none(cls) -> "Constraint":
        return cls()

    @classmethod
    def min_ned(cls, tau: float) -> "Constraint":
        return cls("min_ned", tau)

    def describe(self) -> str:
        return self.kind if self.kind == "none" else f"{self.kind}(tau={self.tau})"


@dataclass(frozen=True, eq=False)
class ConstraintGraph:
    adjacency: np.ndarray
    item_ids: Tuple[int, ...]

    def __post_init__(self) -> None:
        adj = self.adjacency
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] != len(self.item_ids):
            raise ContractViolation(f"adjacency shape {adj.shape} does not match {len(self.item_ids)} items")
        if not np.array_equal(adj, adj.T):
            raise ContractViolation("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ContractViolation("adjacency must not contain self-loops")

    @property
    def n(self) -> int:
        return len(self.item_ids)

    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    def is_complete(self) -> bool:
        return self.edge_count() == self.n * (self.n - 1) // 2

    def is_clique(self, nodes: Iterable[int]) -> bool:
        nodes = list(nodes)
        if len(set(nodes)) != len(nodes):
            return False
        sub = self.adjacency[np.ix_(nodes, nodes)]
        return bool(sub.sum() == len(nodes) * (len(nodes) - 1))

    def items(self, nodes: Iterable[int]) -> Tuple[int, ...]:
        return tuple(self.item_ids[node] for node in nodes)


def complete_graph(item_ids: Sequence[int]) -> ConstraintGraph:
    n = len(item_ids)
    return ConstraintGraph(~np.eye(n, dtype=bool), tuple(item_ids))


def build_graph(item_ids: Sequence[int], constraint: Constraint,
                titles: Optional[Mapping[int, str]] = None) -> ConstraintGraph:
    if len(item_ids) < 2:
        raise ContractViolation(f"build_graph needs at least 2 items, got {len(item_ids)}")
    if constraint.kind == "none":
        return complete_graph(item_ids)

    if titles is None:
        raise ConfigurationError("min_ned constraint requested but items have no titles")
    missing = [item for item in item_ids if item not in titles]
    if missing:
        raise ConfigurationError(f"min_ned constraint requested but items {missing[:5]} have no titles")

    n = len(item_ids)
    adjacency = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            ok = ned(titles[item_ids[i]], titles[item_ids[j]]) >= constraint.tau
            adjacency[i, j] = adjacency[j, i] = ok
    return ConstraintGraph(adjacency, tuple(item_ids))


def is_feasible_extension(graph: ConstraintGraph, chosen: Iterable[int], candidate: int) -> bool:
    chosen = list(chosen)
    if not graph.is_clique(chosen):
        raise ContractViolation(f"chosen nodes {chosen} do not form a clique")
    if candidate in chosen:
        return False
    return bool(all(graph.adjacency[candidate, node] for node in chosen))


class GraphBuilder:
    """Builds the constraint graph over a sample's candidate set, keeping the
    ``cache_size`` most recently used graphs."""

    def __init__(self, constraint: Optional[Constraint] = None, titles: Optional[Mapping[int, str]] = None,
                 cache_size: int = GRAPH_CACHE_SIZE) -> None:
        if cache_size < 1:
            raise ConfigurationError(f"graph cache size must be positive, got {cache_size}")
        self.constraint = constraint or Constraint.none()
        self.titles = titles
        self.cache_size = cache_size
        self._cache: "OrderedDict[Tuple[int, ...], ConstraintGraph]" = OrderedDict()
        if self.constraint.kind != "none" and titles is None:
            raise ConfigurationError("min_ned constraint requested but items have no titles")

    def __call__(self, sample) -> ConstraintGraph:
        return self.for_items(sample.candidates)

    def for_items(self, item_ids: Sequence[int]) -> ConstraintGraph:
        key = tuple(item_ids)
        graph = self._cache.get(key)
        if graph is not None:
            self._cache.move_to_end(key)
            return graph
        graph = build_graph(key, self.constraint, self.titles)
        self._cache[key] = graph
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return graph
