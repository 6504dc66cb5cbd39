"""Per-sample policy losses: behavior cloning and REINFORCE."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from exactk.core.errors import ContractViolation, DataError, InfeasibleError
from exactk.data.samples import Sample
from exactk.graph.constraint import ConstraintGraph
from exactk.model.decoding import greedy_decode, sample_card
from exactk.model.policy import Encoded, PolicyModel
from exactk.numcore.tensor import Tensor, scale, stack
from exactk.reward.estimator import RewardModel


SL_MODES = ("teacher_forced", "policy_sampled")


@dataclass
class RLResult:
    loss: Tensor
    reward: float
    card: List[int]
    buffer_rewards: List[float] = field(default_factory=list)


def select_best(rewards: Sequence[float]) -> int:
    """Index of the highest reward; the earliest wins ties."""
    if not rewards:
        raise ContractViolation("select_best: empty buffer")
    return int(np.argmax(np.asarray(rewards, dtype=np.float64)))


def sl_loss_along(policy: PolicyModel, encoded: Encoded, graph: ConstraintGraph, feed: Sequence[int],
                  targets: Sequence[int]) -> Tensor:
    """-(1/K) sum_t log p(target_t) with the decoder fed ``feed``; masked targets contribute nothing."""
    terms = [t for t in policy.target_log_probs(encoded, graph, feed, targets) if t is not None]
    return scale(stack(terms).sum(), -1.0 / len(targets))


def sl_loss(policy: PolicyModel, sample: Sample, graph: ConstraintGraph, mode: str = "teacher_forced",
            rng: Optional[np.random.Generator] = None, feed_mode: str = "sample",
            encoded: Optional[Encoded] = None) -> Tensor:
    if mode not in SL_MODES:
        raise ContractViolation(f"unknown SL mode {mode!r}; expected one of {', '.join(SL_MODES)}")
    if sample.label != 1:
        raise ContractViolation(f"sl_loss needs a clicked card, user {sample.user_id} has label {sample.label}")
    targets = sample.card_nodes()
    if not graph.is_clique(targets):
        raise DataError(f"demonstration {list(sample.card)} for user {sample.user_id} violates the constraint graph")
    if encoded is None:
        encoded = policy.encode_sample(sample)

    if mode == "teacher_forced":
        feed = targets
    elif feed_mode == "greedy":
        feed = greedy_decode(policy, sample, graph, encoded)
    else:
        if rng is None:
            raise ContractViolation("policy-sampled SL needs a random generator")
        feed, _ = sample_card(policy, sample, graph, rng, encoded)
    return sl_loss_along(policy, encoded, graph, feed, targets)


def rl_loss(policy: PolicyModel, sample: Sample, graph: ConstraintGraph, reward_model: RewardModel,
            hill_climbing: bool, m: int, rng: np.random.Generator, encoded: Optional[Encoded] = None) -> RLResult:
    """-R(A, u) * log P(A) for a sampled card A, or the best of ``m`` samples when hill climbing."""
    if m < 1:
        raise ContractViolation(f"hill-climb buffer size must be positive, got {m}")
    if encoded is None:
        encoded = policy.encode_sample(sample)

    buffer: List[List[int]] = []
    rewards: List[float] = []
    for _ in range(m if hill_climbing else 1):
        try:
            card, _ = sample_card(policy, sample, graph, rng, encoded)
        except InfeasibleError:
            continue
        buffer.append(card)
        rewards.append(reward_model.reward(sample.user_id, graph.items(card)))
    if not buffer:
        raise InfeasibleError(f"no feasible card sampled for user {sample.user_id}")

    best = select_best(rewards)
    card = buffer[best]
    terms = policy.target_log_probs(encoded, graph, card, card)
    loss = scale(stack(terms).sum(), -rewards[best])
    return RLResult(loss, rewards[best], card, rewards)
