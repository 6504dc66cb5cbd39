from typing import Callable, Dict, Mapping

import numpy as np

from exactk.numcore.tensor import ComputationTape, Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float((diff / scale).max()) if diff.size else 0.0


def numeric_gradient(loss_fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` with respect to every entry of ``param``."""
    grad = np.zeros_like(param.data)
    with no_grad():
        for idx in np.ndindex(*param.shape):
            original = param.data[idx]
            param.data[idx] = original + h
            upper = loss_fn().item()
            param.data[idx] = original - h
            lower = loss_fn().item()
            param.data[idx] = original
            grad[idx] = (upper - lower) / (2.0 * h)
    return grad


def analytic_gradients(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
    for param in params.values():
        param.grad = None
    with ComputationTape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    return {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }


def check_gradients(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5) -> Dict[str, float]:
    """Per-parameter max relative error between tape gradients and central differences."""
    analytic = analytic_gradients(loss_fn, params)
    return {
        name: relative_error(analytic[name], numeric_gradient(loss_fn, p, h))
        for name, p in params.items()
    }
