import logging

import pytest

from exactk.core.errors import ContractViolation
from exactk.evaluation.metrics import hr_at_k, p_at_k, precision

@pytest.mark.parametrize("predicted, truth, k, expected", [
    ([[1, 2]], [[1, 2]], 2, 1.0),
    ([[1, 2]], [[2, 1]], 2, 1.0),
    ([[1, 2]], [[1, 3]], 2, 0.5),
    ([[1, 2]], [[3, 4]], 2, 0.0),
    ([[1, 2], [3, 4]], [[1, 5], [4, 3]], 2, 0.75),
    ([[1, 2, 3, 4]], [[4, 9, 8, 1]], 4, 0.5),
    ([[1, 2, 3, 4]], [[5, 6, 7, 1]], 4, 0.25),
    ([[1, 2, 3]], [[1, 2, 3]], 3, 1.0),
    ([[1, 2, 3], [4, 5, 6]], [[1, 7, 8], [9, 10, 11]], 3, 1 / 6),
    ([[7]], [[7]], 1, 1.0),
])
def test_hr_at_k_hand_computed(predicted, truth, k, expected):
    assert hr_at_k(predicted, truth, k) == expected

@pytest.mark.parametrize("predicted, positives, expected", [
    ([[1, 2]], [1], 1.0),
    ([[1, 2]], [3], 0.0),
    ([[1, 2], [3, 4]], [2, 5], 0.5),
    ([[1, 2], [3, 4], [5, 6]], [2, 9, 5], 2 / 3),
    ([[1, 2, 3, 4]] * 4, [1, 2, 3, 9], 0.75),
])
def test_p_at_k_hand_computed(predicted, positives, expected):
    assert p_at_k(predicted, positives) == expected

@pytest.mark.parametrize("predicted, truth, k", [
    ([[1, 2]], [[1, 2], [3, 4]], 2),
    ([], [], 2),
    ([[1, 2, 3]], [[1, 2]], 2),
])
def test_hr_at_k_contracts(predicted, truth, k):
    with pytest.raises(ContractViolation):
        hr_at_k(predicted, truth, k)

def test_precision_excludes_missing_positives(caplog):
    with caplog.at_level(logging.WARNING, logger="exactk"):
        found = precision([[1, 2], [3, 4]], [2, None])
    assert (found.value, found.n, found.excluded) == (1.0, 1, 1)
    assert "excluded 1" in caplog.text

def test_precision_contracts():
    with pytest.raises(ContractViolation):
        precision([[1, 2]], [None])
    with pytest.raises(ContractViolation):
        precision([[1, 2]], [1, 2])
