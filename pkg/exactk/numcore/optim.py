from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from exactk.core.errors import ContractViolation
from exactk.numcore.tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Mapping[str, Tensor]) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ContractViolation(f"adam_step: no gradient for {', '.join(missing[:5])}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step

    for name, param in params.items():
        grad = param.grad
        if grad.shape != param.shape:
            raise ContractViolation(f"adam_step: {name} gradient shape {grad.shape} != {param.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.data = param.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        param.grad = np.zeros_like(param.data)


class Adam:
    def __init__(self, params: Mapping[str, Tensor], learning_rate: float = 0.001) -> None:
        self.params = dict(params)
        self.state = AdamState(learning_rate=learning_rate)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = np.zeros_like(param.data)

    def step(self) -> None:
        adam_step(self.state, self.params)
