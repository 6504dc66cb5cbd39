from collections import OrderedDict
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from exactk.core.errors import ContractViolation
from exactk.numcore.tensor import Tensor


def glorot_uniform(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out))."""
    fan_in = shape[0]
    fan_out = shape[-1] if len(shape) > 1 else 1
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


class Module:
    """Owns named parameters; subclasses register them in construction order."""

    def __init__(self) -> None:
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ContractViolation(f"parameter {name!r} registered twice")
        param = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = param
        return param

    def glorot(self, name: str, shape: Tuple[int, ...], rng: np.random.Generator) -> Tensor:
        return self.add_param(name, glorot_uniform(shape, rng))

    def zeros(self, name: str, shape: Tuple[int, ...]) -> Tensor:
        return self.add_param(name, np.zeros(shape))

    def ones(self, name: str, shape: Tuple[int, ...]) -> Tensor:
        return self.add_param(name, np.ones(shape))

    def adopt(self, prefix: str, other: "Module") -> None:
        for name, param in other.params.items():
            full = f"{prefix}.{name}"
            if full in self.params:
                raise ContractViolation(f"parameter {full!r} registered twice")
            param.name = full
            self.params[full] = param

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.params)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = np.zeros_like(param.data)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = [name for name in self.params if name not in state]
        unexpected = [name for name in state if name not in self.params]
        if missing or unexpected:
            raise ContractViolation(
                f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}"
            )
        for name, param in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ContractViolation(f"{name}: stored shape {value.shape} != parameter shape {param.shape}")
            param.data = value.copy()

    def fill(self, value: float, names: Iterable[str] = ()) -> None:
        """Overwrite parameters (all, or those named) with a constant."""
        targets = list(names) or list(self.params)
        for name in targets:
            self.params[name].data = np.full_like(self.params[name].data, value)
