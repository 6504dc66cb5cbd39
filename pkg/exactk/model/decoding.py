import csv
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

from exactk.core.errors import ContractViolation, InfeasibleError
from exactk.data.samples import Sample
from exactk.graph.constraint import ConstraintGraph
from exactk.model.policy import DecodeState, Encoded, PolicyModel
from exactk.numcore.tensor import no_grad


SAMPLE_ATTEMPTS = 10
ATTENTION_HEADER = ("layer", "head", "node_i", "node_j", "weight")


def _viable(state: DecodeState, graph: ConstraintGraph, remaining: int) -> np.ndarray:
    """Feasible nodes that still leave ``remaining - 1`` feasible nodes after being picked."""
    viable = state.mask.copy()
    if remaining > 1:
        left = (graph.adjacency[viable] & state.mask).sum(axis=1)
        viable[viable] = left >= remaining - 1
    return viable


def _prepare(policy: PolicyModel, sample: Sample, graph: ConstraintGraph, encoded: Optional[Encoded]) -> Encoded:
    if graph.n != sample.n:
        raise ContractViolation(f"graph has {graph.n} nodes, sample has {sample.n} candidates")
    if policy.config.k > sample.n:
        raise ContractViolation(f"K={policy.config.k} exceeds {sample.n} candidates")
    return encoded if encoded is not None else policy.encode_sample(sample)


def greedy_decode(policy: PolicyModel, sample: Sample, graph: ConstraintGraph,
                  encoded: Optional[Encoded] = None) -> List[int]:
    """Repeated argmax of the pointer distribution, lowest node index on ties."""
    k = policy.config.k
    with no_grad():
        encoded = _prepare(policy, sample, graph, encoded)
        state = policy.initial_state(encoded)
        for step in range(k):
            viable = _viable(state, graph, k - step)
            if not viable.any():
                raise InfeasibleError(f"greedy decode stalled after prefix {list(state.prefix)}")
            log_probs = policy.step_log_probs(state, encoded).data
            node = int(np.argmax(np.where(viable, state.log_prob + log_probs, -np.inf)))
            state = policy.advance_state(state, node, graph, encoded, float(log_probs[node]))
    return list(state.prefix)


def beam_search(policy: PolicyModel, sample: Sample, graph: ConstraintGraph, beam_size: Optional[int] = None,
                encoded: Optional[Encoded] = None) -> List[int]:
    """Keep the ``beam_size`` best prefixes by summed log-probability; ties go to the smaller prefix."""
    k = policy.config.k
    beam_size = policy.config.beam_size if beam_size is None else beam_size
    if beam_size < 1:
        raise ContractViolation(f"beam size must be positive, got {beam_size}")

    with no_grad():
        encoded = _prepare(policy, sample, graph, encoded)
        beams: List[DecodeState] = [policy.initial_state(encoded)]
        for step in range(k):
            expansions: List[Tuple[float, Tuple[int, ...], DecodeState, float]] = []
            for state in beams:
                viable = _viable(state, graph, k - step)
                if not viable.any():
                    continue
                log_probs = policy.step_log_probs(state, encoded).data
                for node in np.flatnonzero(viable):
                    lp = float(log_probs[node])
                    expansions.append((state.log_prob + lp, state.prefix + (int(node),), state, lp))
            if not expansions:
                raise InfeasibleError(f"every beam died at step {step + 1} of {k}")
            expansions.sort(key=lambda e: (-e[0], e[1]))
            beams = [
                policy.advance_state(parent, prefix[-1], graph, encoded, lp)
                for _, prefix, parent, lp in expansions[:beam_size]
            ]
    return list(beams[0].prefix)


def sample_card(policy: PolicyModel, sample: Sample, graph: ConstraintGraph, rng: np.random.Generator,
                encoded: Optional[Encoded] = None, attempts: int = SAMPLE_ATTEMPTS) -> Tuple[List[int], List[float]]:
    """Ancestral sample of a K-clique and its per-step log-probabilities; dead ends are resampled."""
    k = policy.config.k
    with no_grad():
        encoded = _prepare(policy, sample, graph, encoded)
        for _ in range(attempts):
            state = policy.initial_state(encoded)
            step_log_probs: List[float] = []
            while len(state.prefix) < k and state.mask.any():
                log_probs = policy.step_log_probs(state, encoded).data
                probs = np.where(state.mask, np.exp(log_probs), 0.0)
                node = int(rng.choice(encoded.n, p=probs / probs.sum()))
                step_log_probs.append(float(log_probs[node]))
                state = policy.advance_state(state, node, graph, encoded, step_log_probs[-1])
            if len(state.prefix) == k:
                return list(state.prefix), step_log_probs
    raise InfeasibleError(f"sampling hit a dead end {attempts} times for user {sample.user_id}")


def sequence_log_prob(policy: PolicyModel, sample: Sample, graph: ConstraintGraph, nodes: Sequence[int],
                      encoded: Optional[Encoded] = None) -> float:
    """Chain-rule log P(nodes) recomputed one decode step at a time."""
    with no_grad():
        encoded = _prepare(policy, sample, graph, encoded)
        state = policy.initial_state(encoded)
        for node in nodes:
            if not state.mask[node]:
                return float("-inf")
            state = policy.advance_state(state, int(node), graph, encoded)
    return state.log_prob


def attention_rows(policy: PolicyModel, sample: Sample) -> List[Tuple[int, int, int, int, float]]:
    weights: List[np.ndarray] = []
    with no_grad():
        policy.encode_sample(sample, weights)
    heads = policy.config.heads
    rows = []
    for index, matrix in enumerate(weights):
        layer, head = divmod(index, heads)
        for i, j in np.ndindex(*matrix.shape):
            rows.append((layer, head, i, j, float(matrix[i, j])))
    return rows


def write_attention_csv(rows: Sequence[Tuple[int, int, int, int, float]], path: str) -> None:
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ATTENTION_HEADER)
        for layer, head, i, j, weight in rows:
            writer.writerow([layer, head, i, j, repr(weight)])
    os.replace(tmp_path, path)
