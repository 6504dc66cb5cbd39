"""Card-level click estimator used as the reward signal.

The hidden layer reads three blocks: one user/item cross per card slot, the
card's item vectors, and the user vector. With tied slot weights the blocks
for all K slots share one matrix, so the score ignores the order of the card.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from exactk.core.errors import ConfigurationError, ContractViolation
from exactk.model.features import FeatureTable, features_from_manifest
from exactk.numcore.checkpoint import load_archive, save_archive
from exactk.numcore.module import Module
from exactk.numcore.tensor import Tensor, no_grad, relu, reshape, sigmoid, stack, take


logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "reward"
CROSS_MODES = ("elementwise", "inner")
DEFAULT_HIDDEN = 128


def reward_value(score: float) -> float:
    """Rescale a click probability to [-1, 1]."""
    return 2.0 * (score - 0.5)


class RewardModel(Module):
    def __init__(self, k: int, features: FeatureTable, rng: np.random.Generator, hidden: int = DEFAULT_HIDDEN,
                 cross: str = "elementwise", tied: bool = True) -> None:
        super().__init__()
        if cross not in CROSS_MODES:
            raise ConfigurationError(f"unknown reward cross {cross!r}; expected one of {', '.join(CROSS_MODES)}")
        if k < 1 or hidden < 1:
            raise ConfigurationError(f"reward model needs K >= 1 and hidden >= 1, got K={k}, hidden={hidden}")
        self.k = k
        self.hidden = hidden
        self.cross = cross
        self.tied = tied
        self.features = features
        self.adopt("features", features)

        f = features.dim
        cross_width = f if cross == "elementwise" else 1
        slots = 1 if tied else k
        self.W_cross = [self.glorot(f"W_R1_cross.{s}", (cross_width, hidden), rng) for s in range(slots)]
        self.W_item = [self.glorot(f"W_R1_item.{s}", (f, hidden), rng) for s in range(slots)]
        self.W_user = self.glorot("W_R1_user", (f, hidden), rng)
        self.b_R1 = self.zeros("b_R1", (hidden,))
        self.W_R2 = self.glorot("W_R2", (hidden, 1), rng)
        self.b_R2 = self.zeros("b_R2", (1,))

    def _crosses(self, items: Tensor, users: Tensor) -> Tensor:
        batch, k, f = items.shape
        crosses = items * reshape(users, (batch, 1, f))
        if self.cross == "inner":
            crosses = reshape(crosses.sum(axis=2), (batch, k, 1))
        return crosses

    def logits_batch(self, items: Tensor, users: Tensor) -> Tensor:
        """Pre-sigmoid scores for B cards: items (B, K, f), users (B, f) -> (B,)."""
        f = self.features.dim
        if items.ndim != 3 or items.shape[1:] != (self.k, f) or users.shape != (items.shape[0], f):
            raise ContractViolation(
                f"reward model expects items (B, {self.k}, {f}) and users (B, {f}), "
                f"got {items.shape} and {users.shape}"
            )
        crosses = self._crosses(items, users)
        if self.tied:
            pre = (crosses @ self.W_cross[0]).sum(axis=1) + (items @ self.W_item[0]).sum(axis=1)
        else:
            parts: List[Tensor] = []
            for slot in range(self.k):
                parts.append(take(crosses, (slice(None), slot)) @ self.W_cross[slot])
                parts.append(take(items, (slice(None), slot)) @ self.W_item[slot])
            pre = stack(parts).sum(axis=0)
        hidden = relu(pre + users @ self.W_user + self.b_R1)
        return reshape(hidden @ self.W_R2 + self.b_R2, (items.shape[0],))

    def score_batch(self, items: Tensor, users: Tensor) -> Tensor:
        return sigmoid(self.logits_batch(items, users))

    def score_card(self, item_features: Tensor, user_features: Tensor) -> Tensor:
        """P(click | card, user) for one card: item_features (K, f), user_features (f,)."""
        if item_features.ndim != 2 or item_features.shape[0] != self.k:
            raise ContractViolation(f"score_card expects {self.k} items, got features of shape {item_features.shape}")
        f = item_features.shape[1]
        items = reshape(item_features, (1, self.k, f))
        users = reshape(user_features, (1, user_features.shape[-1]))
        return take(self.score_batch(items, users), 0)

    def score(self, user: int, card: Sequence[int]) -> float:
        if len(card) != self.k:
            raise ContractViolation(f"reward model scores {self.k}-item cards, got {len(card)} items")
        with no_grad():
            return self.score_card(self.features.items(list(card)), self.features.users(user)).item()

    def reward(self, user: int, card: Sequence[int]) -> float:
        return reward_value(self.score(user, card))

    def save(self, path: str) -> None:
        manifest = {
            "kind": CHECKPOINT_KIND,
            "k": str(self.k),
            "hidden": str(self.hidden),
            "cross": self.cross,
            "tied": str(self.tied).lower(),
        }
        manifest.update(self.features.describe())
        save_archive(path, self.state_dict(), manifest)
        logger.debug("saved reward checkpoint %s", path)

    @classmethod
    def load(cls, path: str, features: Optional[FeatureTable] = None) -> "RewardModel":
        arrays, manifest = load_archive(path)
        if manifest.get("kind") != CHECKPOINT_KIND:
            raise ConfigurationError(f"{path}: archive holds {manifest.get('kind')!r}, not a reward model")
        model = cls(
            int(manifest["k"]),
            features_from_manifest(manifest, features),
            np.random.default_rng(0),
            hidden=int(manifest["hidden"]),
            cross=manifest["cross"],
            tied=manifest["tied"] == "true",
        )
        model.load_state_dict(arrays)
        return model
