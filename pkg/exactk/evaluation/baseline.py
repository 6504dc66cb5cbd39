"""Node weights for the greedy clique baseline."""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from exactk.core.errors import ConfigurationError, DataError
from exactk.data.samples import Sample
from exactk.model.features import FeatureTable
from exactk.numcore.module import Module
from exactk.numcore.optim import Adam
from exactk.numcore.tensor import ComputationTape, Tensor, log_softmax_lastdim, no_grad, sigmoid, stack, take


logger = logging.getLogger(__name__)


class PointwiseScorer(Module):
    """sigma(w^T [x_item * x_user] + b), one click probability per item."""

    def __init__(self, features: FeatureTable, rng: np.random.Generator) -> None:
        super().__init__()
        self.features = features
        self.adopt("features", features)
        self.w = self.glorot("w", (features.dim,), rng)
        self.b = self.zeros("b", (1,))

    def logits(self, users: Sequence[int], items: Sequence[int]) -> Tensor:
        crosses = self.features.items(items) * self.features.users(users)
        return crosses @ self.w + self.b

    def node_weights(self, sample: Sample) -> np.ndarray:
        with no_grad():
            users = [sample.user_id] * sample.n
            return sigmoid(self.logits(users, sample.candidates)).data


def item_labels(samples: Sequence[Sample]) -> List[Tuple[int, int, int]]:
    """(user, item, clicked) for every card slot; only the positive item is a click."""
    rows = []
    for sample in samples:
        for item in sample.card:
            rows.append((sample.user_id, item, int(item == sample.positive_item)))
    return rows


def train_pointwise(scorer: PointwiseScorer, samples: Sequence[Sample], epochs: int = 10, batch_size: int = 32,
                    learning_rate: float = 0.001, rng: Optional[np.random.Generator] = None) -> List[float]:
    """Per-item binary cross-entropy; returns the mean loss of every epoch."""
    rows = item_labels(samples)
    if not rows:
        raise DataError("no cards to fit the pointwise scorer on")
    if epochs < 1 or batch_size < 1:
        raise ConfigurationError(f"epochs and batch size must be positive, got {epochs} and {batch_size}")
    rng = rng or np.random.default_rng(0)
    users = np.array([r[0] for r in rows], dtype=np.int64)
    items = np.array([r[1] for r in rows], dtype=np.int64)
    labels = np.array([r[2] for r in rows], dtype=np.int64)

    optimizer = Adam(scorer.parameters(), learning_rate)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(rows))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            optimizer.zero_grad()
            with ComputationTape() as tape:
                z = scorer.logits(users[idx], items[idx])
                pairs = stack([Tensor(np.zeros(len(idx))), z], axis=-1)
                loss = -take(log_softmax_lastdim(pairs), (np.arange(len(idx)), labels[idx])).mean()
            tape.backward(loss)
            optimizer.step()
            total += loss.item() * len(idx)
        losses.append(total / len(rows))
    logger.info("pointwise scorer trained on %d item labels, final loss %.4f", len(rows), losses[-1])
    return losses
