"""Two-phase training: fit the reward estimator, then the policy on demonstrations.

Each policy update mixes the behavior-cloning loss L_S and the REINFORCE loss
L_R as ``alpha * L_S + (1 - alpha) * L_R``. Every sample draws two child seeds
from the step generator, one per branch, whatever alpha is, so runs that only
differ in alpha see identical random streams.
"""

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from exactk.core.errors import ConfigurationError, ContractViolation, DataError, InfeasibleError
from exactk.data.builders import split
from exactk.data.samples import Sample, demonstrations
from exactk.evaluation.harness import evaluate
from exactk.evaluation.report import format_cell
from exactk.graph.constraint import GraphBuilder
from exactk.model.policy import PolicyModel
from exactk.numcore.optim import Adam
from exactk.numcore.tensor import ComputationTape, Tensor, scale, stack
from exactk.reward.estimator import RewardModel
from exactk.reward.trainer import RewardTrainResult, train_reward, write_loss_curve
from exactk.training.config import TrainConfig
from exactk.training.losses import rl_loss, sl_loss


logger = logging.getLogger(__name__)

CURVE_HEADER = ("iter", "loss_sl", "loss_rl", "loss_total", "mean_reward", "p_at_k", "hr_at_k")
SEED_BOUND = 2 ** 32
INFEASIBLE_RATE_LIMIT = 0.01
REWARD_WINDOW = 50


@dataclass
class LossBreakdown:
    """Batch losses; parts that were not evaluated are nan."""

    loss: Optional[Tensor]
    loss_sl: float
    loss_rl: float
    loss_total: float
    mean_reward: float
    decodes: int = 0
    infeasible: int = 0
    rewards: List[float] = field(default_factory=list)


@dataclass
class CurveRow:
    iteration: int
    loss_sl: float
    loss_rl: float
    loss_total: float
    mean_reward: float
    p_at_k: Optional[float] = None
    hr_at_k: Optional[float] = None


@dataclass
class TrainingRun:
    policy: PolicyModel
    reward_model: Optional[RewardModel]
    curve: List[CurveRow]
    reward_result: Optional[RewardTrainResult] = None
    decodes: int = 0
    infeasible: int = 0
    skipped_demonstrations: int = 0

    @property
    def infeasible_rate(self) -> float:
        return self.infeasible / self.decodes if self.decodes else 0.0

    @property
    def infeasible_storm(self) -> bool:
        return self.infeasible_rate > INFEASIBLE_RATE_LIMIT


def _mean(terms: Sequence[Tensor]) -> Optional[Tensor]:
    return stack(terms).mean() if terms else None


def combined_loss(policy: PolicyModel, batch: Sequence[Sample], graph_builder: GraphBuilder,
                  reward_model: Optional[RewardModel], config: TrainConfig,
                  rng: np.random.Generator) -> LossBreakdown:
    """alpha * L_S + (1 - alpha) * L_R averaged over the batch, without touching the parameters."""
    config.validate()
    if config.uses_reward and reward_model is None:
        raise ConfigurationError(f"alpha={config.alpha} uses the reward signal but no reward model was given")

    sl_terms: List[Tensor] = []
    rl_terms: List[Tensor] = []
    rewards: List[float] = []
    decodes = infeasible = 0
    for sample in batch:
        sl_seed, rl_seed = rng.integers(0, SEED_BOUND, size=2)
        graph = graph_builder(sample)
        encoded = policy.encode_sample(sample)

        if config.uses_demonstrations:
            decodes += int(config.policy_sampling)
            try:
                sl_terms.append(sl_loss(policy, sample, graph, config.sl_mode, np.random.default_rng(sl_seed),
                                        config.policy_sampling_feed, encoded))
            except InfeasibleError as exc:
                infeasible += 1
                logger.debug("policy-sampled SL skipped: %s", exc)

        if config.uses_reward:
            decodes += 1
            try:
                result = rl_loss(policy, sample, graph, reward_model, config.hill_climbing, config.m,
                                 np.random.default_rng(rl_seed), encoded)
            except InfeasibleError as exc:
                infeasible += 1
                logger.debug("REINFORCE skipped: %s", exc)
                continue
            rl_terms.append(result.loss)
            rewards.append(result.reward)

    sl = _mean(sl_terms)
    rl = _mean(rl_terms)
    parts = []
    if sl is not None:
        parts.append(scale(sl, config.alpha))
    if rl is not None:
        parts.append(scale(rl, 1.0 - config.alpha))
    loss = parts[0] + parts[1] if len(parts) == 2 else (parts[0] if parts else None)

    return LossBreakdown(
        loss=loss,
        loss_sl=sl.item() if sl is not None else math.nan,
        loss_rl=rl.item() if rl is not None else math.nan,
        loss_total=loss.item() if loss is not None else math.nan,
        mean_reward=float(np.mean(rewards)) if rewards else math.nan,
        decodes=decodes,
        infeasible=infeasible,
        rewards=rewards,
    )


def combined_step(policy: PolicyModel, batch: Sequence[Sample], graph_builder: GraphBuilder,
                  reward_model: Optional[RewardModel], config: TrainConfig, rng: np.random.Generator,
                  optimizer: Adam) -> LossBreakdown:
    """combined_loss followed by one Adam update of the policy."""
    optimizer.zero_grad()
    with ComputationTape() as tape:
        breakdown = combined_loss(policy, batch, graph_builder, reward_model, config, rng)
    if breakdown.loss is not None:
        tape.backward(breakdown.loss)
        optimizer.step()
    return breakdown


def reward_trend(rows: Sequence[CurveRow], window: int = REWARD_WINDOW) -> Optional[Tuple[float, float]]:
    """Mean training reward over the first and the last ``window`` updates.

    Updates without a reward are ignored; None when fewer than ``window`` remain.
    """
    if window < 1:
        raise ContractViolation(f"reward window must be positive, got {window}")
    rewards = [row.mean_reward for row in rows if not math.isnan(row.mean_reward)]
    if len(rewards) < window:
        return None
    return float(np.mean(rewards[:window])), float(np.mean(rewards[-window:]))


def _feasible_demonstrations(samples: Sequence[Sample], graph_builder: GraphBuilder) -> List[Sample]:
    return [s for s in demonstrations(samples) if graph_builder(s).is_clique(s.card_nodes())]


def run_training(samples: Sequence[Sample], graph_builder: GraphBuilder, policy: PolicyModel, config: TrainConfig,
                 reward_model: Optional[RewardModel] = None, fit_reward: bool = True,
                 curve_path: Optional[str] = None, reward_curve_path: Optional[str] = None,
                 on_event: Optional[Callable[[str], None]] = None) -> TrainingRun:
    """Phase 1 fits ``reward_model`` on every labeled card (skipped when alpha is 1 or
    ``fit_reward`` is off); phase 2 trains ``policy`` on the clicked cards."""
    config.validate()
    notify = on_event or (lambda message: None)
    rng = np.random.default_rng(config.seed)

    train_part, holdout = list(samples), []
    if config.holdout > 0 and len(samples) >= 2:
        train_part, holdout = split(samples, 1.0 - config.holdout, rng)

    reward_result = None
    if config.uses_reward:
        if reward_model is None:
            raise ConfigurationError(f"alpha={config.alpha} needs a reward model")
        if fit_reward:
            notify(f"Phase 1: reward estimator on {len(train_part)} cards")
            reward_result = train_reward(
                reward_model, train_part, config.reward_epochs, config.batch_size, config.learning_rate,
                np.random.default_rng(rng.integers(0, SEED_BOUND)),
            )
            if reward_curve_path:
                write_loss_curve(reward_result.epoch_losses, reward_curve_path)
            notify(f"Phase 1 done: loss {reward_result.initial_loss:.4f} -> {reward_result.final_loss:.4f}")
    else:
        notify("Phase 1 skipped: alpha=1 trains on demonstrations only")

    demos = _feasible_demonstrations(train_part, graph_builder)
    skipped = len(demonstrations(train_part)) - len(demos)
    if skipped:
        logger.warning("skipped %d demonstrations that violate the constraint graph", skipped)
    if not demos:
        raise DataError("no feasible demonstrations to train the policy on")
    holdout_demos = _feasible_demonstrations(holdout, graph_builder)

    optimizer = Adam(policy.parameters(), config.learning_rate)
    batches_per_epoch = math.ceil(len(demos) / config.batch_size)
    total = batches_per_epoch * config.epochs
    curve: List[CurveRow] = []
    decodes = infeasible = 0
    notify(f"Phase 2: policy on {len(demos)} demonstrations, {total} updates")

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(demos))
        for start in range(0, len(order), config.batch_size):
            batch = [demos[i] for i in order[start:start + config.batch_size]]
            breakdown = combined_step(policy, batch, graph_builder, reward_model, config, rng, optimizer)
            decodes += breakdown.decodes
            infeasible += breakdown.infeasible
            row = CurveRow(len(curve) + 1, breakdown.loss_sl, breakdown.loss_rl, breakdown.loss_total,
                           breakdown.mean_reward)
            if holdout_demos and (row.iteration % config.eval_every == 0 or row.iteration == total):
                report = evaluate("policy_beam", holdout_demos, graph_builder, policy.config.k, policy=policy)
                row.p_at_k, row.hr_at_k = report.p_at_k, report.hr_at_k
            curve.append(row)
        last = curve[-1]
        notify(f"epoch {epoch}/{config.epochs}: loss {last.loss_total:.4f}, reward {last.mean_reward:.4f}")

    trend = reward_trend(curve)
    if trend is not None:
        notify(f"Phase 2 reward, {REWARD_WINDOW}-update average: {trend[0]:.4f} -> {trend[1]:.4f}")
    run = TrainingRun(policy, reward_model, curve, reward_result, decodes, infeasible, skipped)
    if run.infeasible:
        logger.warning("%d of %d decodes were infeasible (%.2f%%)", infeasible, decodes, 100 * run.infeasible_rate)
    if curve_path:
        write_curve(curve, curve_path)
    return run


def write_curve(rows: Sequence[CurveRow], path: str) -> None:
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for row in rows:
            writer.writerow([
                row.iteration,
                format_cell(row.loss_sl),
                format_cell(row.loss_rl),
                format_cell(row.loss_total),
                format_cell(row.mean_reward),
                format_cell(row.p_at_k),
                format_cell(row.hr_at_k),
            ])
    os.replace(tmp_path, path)
