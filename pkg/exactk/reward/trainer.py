import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from exactk.core.errors import ContractViolation, DataError
from exactk.data.samples import Sample
from exactk.numcore.optim import Adam
from exactk.numcore.tensor import ComputationTape, Tensor, log_softmax_lastdim, no_grad, stack, take
from exactk.reward.estimator import RewardModel


logger = logging.getLogger(__name__)

LOSS_CURVE_HEADER = ("epoch", "loss")


@dataclass
class RewardTrainResult:
    initial_loss: float
    final_loss: float
    accuracy: float
    epoch_losses: List[float] = field(default_factory=list)


def _batch_arrays(model: RewardModel, samples: Sequence[Sample]) -> Tuple[Tensor, Tensor, np.ndarray]:
    items = model.features.items(np.array([s.card for s in samples], dtype=np.int64))
    users = model.features.users(np.array([s.user_id for s in samples], dtype=np.int64))
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return items, users, labels


def cross_entropy(model: RewardModel, samples: Sequence[Sample]) -> Tensor:
    """Mean binary cross-entropy of the card labels, computed from logits."""
    items, users, labels = _batch_arrays(model, samples)
    logits = model.logits_batch(items, users)
    pairs = stack([Tensor(np.zeros(len(samples))), logits], axis=-1)
    picked = take(log_softmax_lastdim(pairs), (np.arange(len(samples)), labels))
    return -picked.mean()


def evaluate_reward(model: RewardModel, samples: Sequence[Sample]) -> Tuple[float, float]:
    """(loss, accuracy at threshold 0.5) over ``samples`` without recording."""
    with no_grad():
        loss = cross_entropy(model, samples).item()
        items, users, labels = _batch_arrays(model, samples)
        predicted = model.score_batch(items, users).data >= 0.5
    return loss, float((predicted == labels.astype(bool)).mean())


def train_reward(model: RewardModel, samples: Sequence[Sample], epochs: int = 10, batch_size: int = 32,
                 learning_rate: float = 0.001, rng: Optional[np.random.Generator] = None,
                 on_epoch: Optional[Callable[[int, float], None]] = None) -> RewardTrainResult:
    """Fit the estimator to clicked and skipped cards with Adam mini-batches."""
    if not samples:
        raise DataError("no labeled cards to train the reward model on")
    if epochs < 1 or batch_size < 1:
        raise ContractViolation(f"epochs and batch size must be positive, got {epochs} and {batch_size}")
    wrong = [s for s in samples if s.k != model.k]
    if wrong:
        raise ContractViolation(f"reward model scores {model.k}-item cards, sample card has {wrong[0].k}")
    labels = {s.label for s in samples}
    if len(labels) < 2:
        logger.warning("reward training data holds only label %d; the estimator will be one-sided", labels.pop())

    rng = rng or np.random.default_rng(0)
    initial_loss, _ = evaluate_reward(model, samples)
    optimizer = Adam(model.parameters(), learning_rate)
    epoch_losses: List[float] = []

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(samples))
        batch_losses = []
        for start in range(0, len(order), batch_size):
            batch = [samples[i] for i in order[start:start + batch_size]]
            optimizer.zero_grad()
            with ComputationTape() as tape:
                loss = cross_entropy(model, batch)
            tape.backward(loss)
            optimizer.step()
            batch_losses.append(loss.item() * len(batch))
        epoch_losses.append(sum(batch_losses) / len(samples))
        logger.debug("reward epoch %d loss %.6f", epoch, epoch_losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, epoch_losses[-1])

    final_loss, accuracy = evaluate_reward(model, samples)
    logger.info("reward model trained: loss %.4f -> %.4f, accuracy %.3f", initial_loss, final_loss, accuracy)
    return RewardTrainResult(initial_loss, final_loss, accuracy, epoch_losses)


def write_loss_curve(losses: Sequence[float], path: str) -> None:
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOSS_CURVE_HEADER)
        for epoch, loss in enumerate(losses, start=1):
            writer.writerow([epoch, repr(float(loss))])
    os.replace(tmp_path, path)
