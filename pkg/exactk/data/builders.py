import logging
from collections import defaultdict
from math import floor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from exactk.core.errors import ContractViolation, DataError, SampleParseError
from exactk.data.samples import DatasetSpec, Sample
from exactk.data.world import OracleWorld
from exactk.graph.constraint import Constraint, build_graph
from exactk.graph.search import random_clique


logger = logging.getLogger(__name__)

POSITIVE_RATING = 5
CLICK_POOL = 5

T = TypeVar("T")


def _fill_candidates(card: Sequence[int], catalog: np.ndarray, n: int, rng: np.random.Generator) -> Tuple[int, ...]:
    pool = np.setdiff1d(catalog, np.asarray(card))
    fill = rng.choice(pool, size=n - len(card), replace=False)
    return tuple(int(i) for i in rng.permutation(np.concatenate([np.asarray(card), fill])))


def build_from_implicit_feedback(ratings: Iterable[Tuple[int, int, float]], spec: DatasetSpec,
                                 rng: np.random.Generator) -> List[Sample]:
    """Positive card per 5-star event plus one negative card, each with N candidates."""
    spec.validate()
    by_user: Dict[int, Dict[int, float]] = defaultdict(dict)
    for user, item, rating in ratings:
        by_user[int(user)][int(item)] = float(rating)
    if not by_user:
        raise DataError("no ratings to build samples from")

    catalog = np.array(sorted({item for known in by_user.values() for item in known}))
    if len(catalog) < spec.n:
        raise DataError(f"catalog has {len(catalog)} items, fewer than N={spec.n}")

    samples: List[Sample] = []
    skipped = 0
    for user in sorted(by_user):
        known = by_user[user]
        if len(known) < spec.n:
            skipped += 1
            continue
        positives = sorted(item for item, rating in known.items() if rating >= POSITIVE_RATING)
        pool = np.setdiff1d(catalog, np.array(positives, dtype=catalog.dtype))
        if len(pool) < spec.k:
            skipped += 1
            continue

        for item in positives:
            others = rng.choice(pool, size=spec.k - 1, replace=False)
            card = tuple(int(i) for i in rng.permutation(np.concatenate([[item], others])))
            samples.append(Sample(user, card, _fill_candidates(card, catalog, spec.n, rng), 1, item))

            negative = tuple(int(i) for i in rng.choice(pool, size=spec.k, replace=False))
            samples.append(Sample(user, negative, _fill_candidates(negative, catalog, spec.n, rng), 0, None))

    if skipped:
        logger.warning("skipped %d users with fewer than N=%d known items", skipped, spec.n)
    return samples


def generate_oracle_dataset(world: OracleWorld, spec: DatasetSpec, n_users: int, rng: np.random.Generator,
                            constraint: Optional[Constraint] = None) -> List[Sample]:
    """One clicked and one non-clicked card per user, picked from random feasible cards by utility."""
    spec.validate()
    if n_users > world.n_users:
        raise ContractViolation(f"world has {world.n_users} users, {n_users} requested")
    if spec.n > world.n_items:
        raise ContractViolation(f"world has {world.n_items} items, fewer than N={spec.n}")
    constraint = constraint or Constraint.none()
    titles = world.title_map()

    samples: List[Sample] = []
    for user in range(n_users):
        candidates = tuple(int(i) for i in rng.choice(world.n_items, size=spec.n, replace=False))
        graph = build_graph(candidates, constraint, titles)
        cards = [graph.items(random_clique(graph, spec.k, rng)) for _ in range(CLICK_POOL)]
        utilities = [world.utility(user, card) for card in cards]
        clicked = cards[int(np.argmax(utilities))]
        skipped = cards[int(np.argmin(utilities))]

        ordered = sorted(clicked)
        positive = ordered[int(np.argmax(world.affinity(user, ordered)))]
        samples.append(Sample(user, clicked, candidates, 1, positive))
        samples.append(Sample(user, skipped, candidates, 0, None))
    return samples


def split(samples: Sequence[T], ratio: float, rng: np.random.Generator) -> Tuple[List[T], List[T]]:
    """Random partition; floor(ratio * n) go to train, the remainder to test."""
    if not samples:
        raise DataError("cannot split an empty sample list")
    if not 0.0 < ratio < 1.0:
        raise ContractViolation(f"split ratio must be in (0, 1), got {ratio}")
    order = rng.permutation(len(samples))
    n_train = floor(ratio * len(samples))
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]


def read_ratings(path: str) -> List[Tuple[int, int, float]]:
    """MovieLens-style ``user item rating [timestamp]`` rows, tab or space separated."""
    ratings: List[Tuple[int, int, float]] = []
    with open(path, "r", encoding="utf-8") as f:
        for number, row in enumerate(f, start=1):
            fields = row.split()
            if not fields:
                continue
            if len(fields) < 3:
                raise SampleParseError(f"expected at least 3 columns, got {len(fields)}", number, path)
            try:
                ratings.append((int(fields[0]), int(fields[1]), float(fields[2])))
            except ValueError:
                raise SampleParseError(f"unparseable rating row {row.strip()!r}", number, path) from None
    return ratings


def synthetic_ratings(world: OracleWorld, rng: np.random.Generator, per_user: int = 40,
                      top_share: float = 0.15) -> List[Tuple[int, int, float]]:
    """Star ratings for random user/item pairs, 5 stars for each user's top ``top_share`` by affinity."""
    if per_user > world.n_items:
        raise ContractViolation(f"{per_user} ratings per user exceed {world.n_items} items")
    ratings: List[Tuple[int, int, float]] = []
    for user in range(world.n_users):
        items = np.sort(rng.choice(world.n_items, size=per_user, replace=False))
        ranks = np.argsort(np.argsort(-world.affinity(user, items)))
        stars = 5 - np.minimum(4, (ranks / (top_share * per_user)).astype(int))
        ratings.extend((user, int(item), float(star)) for item, star in zip(items, stars))
    return ratings
