import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Protocol, Sequence

import numpy as np

from exactk.core.errors import ConfigurationError, InfeasibleError
from exactk.data.samples import Sample, demonstrations
from exactk.data.world import OracleWorld
from exactk.evaluation.metrics import hr_at_k, precision
from exactk.graph.constraint import ConstraintGraph, GraphBuilder
from exactk.graph.search import brute_force_best_card, greedy_node_weight
from exactk.model.decoding import beam_search
from exactk.model.policy import PolicyModel
from exactk.reward.estimator import RewardModel


logger = logging.getLogger(__name__)

METHODS = ("policy_beam", "greedy_baseline", "brute_force_oracle")

# Best published MovieLens (K=4, N=20) figures, for context only.
REFERENCE_P_AT_4 = 0.4743
REFERENCE_HR_AT_4 = 0.2611


class NodeWeights(Protocol):
    def node_weights(self, sample: Sample) -> np.ndarray:
        ...


@dataclass
class EvalReport:
    method: str
    n: int
    p_at_k: float
    hr_at_k: float
    mean_reward: float
    oracle_ratio: Optional[float]
    infeasible_count: int
    excluded: int = 0
    beam_size: Optional[int] = None


def _oracle_best(world: OracleWorld, sample: Sample, graph: ConstraintGraph, k: int) -> List[int]:
    return brute_force_best_card(graph, lambda nodes: world.utility(sample.user_id, graph.items(nodes)), k)


def evaluate(method: str, samples: Sequence[Sample], graph_builder: GraphBuilder, k: int,
             policy: Optional[PolicyModel] = None, reward_model: Optional[RewardModel] = None,
             node_weights: Optional[NodeWeights] = None, world: Optional[OracleWorld] = None,
             beam_size: Optional[int] = None) -> EvalReport:
    """Score one card-producing method on the clicked cards of ``samples``."""
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    if method == "policy_beam" and policy is None:
        raise ConfigurationError("policy_beam needs a trained policy")
    if method == "greedy_baseline" and node_weights is None:
        raise ConfigurationError("greedy_baseline needs a node-weight scorer")
    if method == "brute_force_oracle" and world is None:
        raise ConfigurationError("brute_force_oracle needs an oracle dataset (no world was loaded)")

    clicked = demonstrations(samples)
    predicted, truth, positives, rewards, ratios = [], [], [], [], []
    infeasible = 0
    for sample in clicked:
        graph = graph_builder(sample)
        best = None
        try:
            if method == "policy_beam":
                nodes = beam_search(policy, sample, graph, beam_size)
            elif method == "greedy_baseline":
                nodes = greedy_node_weight(graph, node_weights.node_weights(sample), k)
            else:
                nodes = best = _oracle_best(world, sample, graph, k)
        except InfeasibleError as exc:
            infeasible += 1
            logger.debug("%s: user %d infeasible: %s", method, sample.user_id, exc)
            continue

        card = graph.items(nodes)
        predicted.append(card)
        truth.append(sample.card)
        positives.append(sample.positive_item)
        if reward_model is not None:
            rewards.append(reward_model.reward(sample.user_id, card))
        if world is not None:
            best = best if best is not None else _oracle_best(world, sample, graph, k)
            optimum = world.card_ctr(sample.user_id, graph.items(best))
            ratios.append(world.card_ctr(sample.user_id, card) / optimum)

    if infeasible:
        logger.warning("%s: %d of %d samples had no feasible card", method, infeasible, len(clicked))
    if not predicted:
        return EvalReport(method, 0, math.nan, math.nan, math.nan, math.nan if world else None,
                          infeasible, len(samples) - len(clicked), beam_size)

    found = precision(predicted, positives)
    return EvalReport(
        method=method,
        n=len(predicted),
        p_at_k=found.value,
        hr_at_k=hr_at_k(predicted, truth, k),
        mean_reward=float(np.mean(rewards)) if rewards else math.nan,
        oracle_ratio=float(np.mean(ratios)) if ratios else None,
        infeasible_count=infeasible,
        excluded=len(samples) - len(clicked),
        beam_size=beam_size,
    )


def beam_sweep(policy: PolicyModel, samples: Sequence[Sample], graph_builder: GraphBuilder,
               sizes: Iterable[int] = range(1, 6), reward_model: Optional[RewardModel] = None,
               world: Optional[OracleWorld] = None) -> List[EvalReport]:
    reports = []
    for size in sizes:
        report = evaluate("policy_beam", samples, graph_builder, policy.config.k, policy=policy,
                          reward_model=reward_model, world=world, beam_size=size)
        logger.info("beam %d: P@K %.4f HR@K %.4f", size, report.p_at_k, report.hr_at_k)
        reports.append(report)
    return reports
