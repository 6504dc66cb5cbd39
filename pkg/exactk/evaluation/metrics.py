import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from exactk.core.errors import ContractViolation


logger = logging.getLogger(__name__)


@dataclass
class Precision:
    value: float
    n: int
    excluded: int = 0


def hr_at_k(predicted: Sequence[Sequence[int]], truth: Sequence[Sequence[int]], k: int) -> float:
    """Mean fraction of each ground-truth card recovered by the predicted card."""
    if len(predicted) != len(truth):
        raise ContractViolation(f"hr_at_k: {len(predicted)} predicted cards for {len(truth)} ground-truth cards")
    if not predicted:
        raise ContractViolation("hr_at_k: no cards to score")
    for card in list(predicted) + list(truth):
        if len(card) != k:
            raise ContractViolation(f"hr_at_k: card {list(card)} does not have K={k} items")
    hits = sum(len(set(a) & set(b)) for a, b in zip(predicted, truth))
    return hits / k / len(predicted)


def precision(predicted: Sequence[Sequence[int]], positives: Sequence[Optional[int]]) -> Precision:
    if len(predicted) != len(positives):
        raise ContractViolation(f"p_at_k: {len(predicted)} predicted cards for {len(positives)} positive items")
    scored = [(card, item) for card, item in zip(predicted, positives) if item is not None]
    excluded = len(predicted) - len(scored)
    if excluded:
        logger.warning("p_at_k: excluded %d samples without a positive item", excluded)
    if not scored:
        raise ContractViolation("p_at_k: no sample carries a positive item")
    hits = sum(1 for card, item in scored if item in card)
    return Precision(hits / len(scored), len(scored), excluded)


def p_at_k(predicted: Sequence[Sequence[int]], positives: Sequence[Optional[int]]) -> float:
    """Share of samples whose clicked item appears in the predicted card."""
    return precision(predicted, positives).value
