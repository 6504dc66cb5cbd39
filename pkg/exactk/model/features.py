from typing import Dict, Optional, Sequence, Union

import numpy as np

from exactk.core.errors import ConfigurationError, ContractViolation
from exactk.numcore.module import Module
from exactk.numcore.tensor import Tensor, take


Ids = Union[int, Sequence[int], np.ndarray]

MODES = ("dense", "ids")
EMBEDDING_SCALE = 0.1


class FeatureTable(Module):
    """User and item feature lookup.

    ``dense`` serves fixed vectors (the oracle world's latent factors);
    ``ids`` learns one embedding row per user and item.
    """

    def __init__(self, mode: str, user_vectors: np.ndarray, item_vectors: np.ndarray) -> None:
        super().__init__()
        if mode not in MODES:
            raise ConfigurationError(f"unknown feature mode {mode!r}; expected one of {', '.join(MODES)}")
        user_vectors = np.asarray(user_vectors, dtype=np.float64)
        item_vectors = np.asarray(item_vectors, dtype=np.float64)
        if user_vectors.ndim != 2 or item_vectors.ndim != 2 or user_vectors.shape[1] != item_vectors.shape[1]:
            raise ContractViolation(
                f"feature tables must be 2-d with equal widths, got {user_vectors.shape} and {item_vectors.shape}"
            )
        self.mode = mode
        if mode == "ids":
            self._users = self.add_param("user_embedding", user_vectors)
            self._items = self.add_param("item_embedding", item_vectors)
        else:
            self._users = Tensor(user_vectors)
            self._items = Tensor(item_vectors)

    @classmethod
    def dense(cls, user_vectors: np.ndarray, item_vectors: np.ndarray) -> "FeatureTable":
        return cls("dense", user_vectors, item_vectors)

    @classmethod
    def embeddings(cls, n_users: int, n_items: int, dim: int, rng: np.random.Generator) -> "FeatureTable":
        users = rng.normal(0.0, EMBEDDING_SCALE, size=(n_users, dim))
        items = rng.normal(0.0, EMBEDDING_SCALE, size=(n_items, dim))
        return cls("ids", users, items)

    @property
    def dim(self) -> int:
        return self._users.shape[1]

    @property
    def n_users(self) -> int:
        return self._users.shape[0]

    @property
    def n_items(self) -> int:
        return self._items.shape[0]

    def _lookup(self, table: Tensor, ids: Ids, what: str) -> Tensor:
        index = np.asarray(ids, dtype=np.int64)
        if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
            raise ContractViolation(f"{what} id out of range 0..{table.shape[0] - 1}: {ids}")
        return take(table, index)

    def users(self, ids: Ids) -> Tensor:
        return self._lookup(self._users, ids, "user")

    def items(self, ids: Ids) -> Tensor:
        return self._lookup(self._items, ids, "item")

    def describe(self) -> Dict[str, str]:
        return {
            "features.mode": self.mode,
            "features.n_users": str(self.n_users),
            "features.n_items": str(self.n_items),
            "features.dim": str(self.dim),
        }


def features_from_manifest(manifest: Dict[str, str], dense: Optional[FeatureTable] = None) -> FeatureTable:
    """Rebuild the table a checkpoint was saved with; dense tables must be supplied by the caller."""
    mode = manifest.get("features.mode")
    if mode == "dense":
        if dense is None or dense.mode != "dense":
            raise ConfigurationError("checkpoint uses dense features; supply the oracle world they came from")
        if str(dense.dim) != manifest.get("features.dim"):
            raise ConfigurationError(f"feature width {dense.dim} != checkpoint width {manifest.get('features.dim')}")
        return dense
    if mode == "ids":
        shape_users = (int(manifest["features.n_users"]), int(manifest["features.dim"]))
        shape_items = (int(manifest["features.n_items"]), int(manifest["features.dim"]))
        return FeatureTable("ids", np.zeros(shape_users), np.zeros(shape_items))
    raise ConfigurationError(f"checkpoint manifest has unknown feature mode {mode!r}")
