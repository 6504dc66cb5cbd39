from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from exactk.core.errors import ContractViolation, DataError
from exactk.numcore.checkpoint import load_archive, save_archive


TITLE_STEMS = (
    "hat", "scarf", "glove", "umbrella", "coat", "boots", "socks", "belt",
    "jacket", "sweater", "mittens", "beanie", "raincoat", "sandals",
)
TITLE_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class OracleWorld:
    """Synthetic ground truth: latent user/item vectors and a pairwise synergy term."""

    user_vectors: np.ndarray
    item_vectors: np.ndarray
    beta: float = 0.0
    temperature: float = 1.0
    titles: Optional[List[str]] = None

    def __post_init__(self) -> None:
        self.user_vectors = np.asarray(self.user_vectors, dtype=np.float64)
        self.item_vectors = np.asarray(self.item_vectors, dtype=np.float64)
        if self.user_vectors.ndim != 2 or self.item_vectors.ndim != 2:
            raise ContractViolation("latent vectors must be 2-d (rows = users / items)")
        if self.user_vectors.shape[1] != self.item_vectors.shape[1]:
            raise ContractViolation(
                f"user dim {self.user_vectors.shape[1]} != item dim {self.item_vectors.shape[1]}"
            )
        if not np.isfinite(self.beta):
            raise ContractViolation("beta must be finite")
        if not self.temperature > 0:
            raise ContractViolation(f"temperature must be positive, got {self.temperature}")
        if self.titles is not None and len(self.titles) != self.n_items:
            raise ContractViolation(f"{len(self.titles)} titles for {self.n_items} items")

    @property
    def dim(self) -> int:
        return self.user_vectors.shape[1]

    @property
    def n_users(self) -> int:
        return self.user_vectors.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_vectors.shape[0]

    def title_map(self) -> Optional[Dict[int, str]]:
        if self.titles is None:
            return None
        return dict(enumerate(self.titles))

    def affinity(self, user: int, items: Sequence[int]) -> np.ndarray:
        return self.item_vectors[list(items)] @ self.user_vectors[user]

    def utility(self, user: int, card: Sequence[int]) -> float:
        """U(A,u) = sum_i <z_u, z_ai> + beta * sum_{i<j} <z_ai, z_aj>."""
        vectors = self.item_vectors[list(card)]
        individual = float((vectors @ self.user_vectors[user]).sum())
        gram = vectors @ vectors.T
        pairwise = float(np.triu(gram, k=1).sum())
        return individual + self.beta * pairwise

    def card_ctr(self, user: int, card: Sequence[int]) -> float:
        z = self.utility(user, card) / self.temperature
        return float(1.0 / (1.0 + np.exp(-z))) if z >= 0 else float(np.exp(z) / (1.0 + np.exp(z)))

    @classmethod
    def random(cls, n_users: int, n_items: int, dim: int, rng: np.random.Generator,
               beta: float = 0.1, temperature: float = 1.0, with_titles: bool = True) -> "OracleWorld":
        users = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_users, dim))
        items = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_items, dim))
        titles = None
        if with_titles:
            titles = []
            for _ in range(n_items):
                stem = TITLE_STEMS[int(rng.integers(len(TITLE_STEMS)))]
                tag = "".join(rng.choice(list(TITLE_LETTERS), size=2))
                titles.append(f"{stem} {tag}")
        return cls(users, items, beta, temperature, titles)

    def save(self, path: str) -> None:
        manifest = {
            "kind": "oracle_world",
            "beta": repr(float(self.beta)),
            "temperature": repr(float(self.temperature)),
        }
        if self.titles is not None:
            manifest["titles"] = "|".join(self.titles)
        save_archive(path, {"user_vectors": self.user_vectors, "item_vectors": self.item_vectors}, manifest)

    @classmethod
    def load(cls, path: str) -> "OracleWorld":
        arrays, manifest = load_archive(path)
        if manifest.get("kind") != "oracle_world":
            raise DataError(f"{path}: archive does not hold an oracle world")
        titles = manifest["titles"].split("|") if "titles" in manifest else None
        return cls(
            arrays["user_vectors"],
            arrays["item_vectors"],
            float(manifest["beta"]),
            float(manifest["temperature"]),
            titles,
        )
