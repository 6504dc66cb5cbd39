from typing import List, Optional, Tuple

import numpy as np

from exactk.numcore.module import Module
from exactk.numcore.tensor import (
    Tensor,
    concat,
    layer_norm,
    relu,
    sigmoid,
    softmax_lastdim,
    tanh,
    take,
)


LSTMState = Tuple[Tensor, Tensor]


class MultiHeadSelfAttention(Module):
    """M heads of softmax(E E^T / sqrt(d_k)) E with E = H W_h, concatenated and projected by W_O."""

    def __init__(self, d_h: int, d_k: int, heads: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.d_k = d_k
        self.head_weights = [self.glorot(f"W_h{i}", (d_h, d_k), rng) for i in range(heads)]
        self.W_O = self.glorot("W_O", (heads * d_k, d_h), rng)

    def __call__(self, h: Tensor, attention: Optional[List[np.ndarray]] = None) -> Tensor:
        outputs = []
        for W in self.head_weights:
            e = h @ W
            weights = softmax_lastdim((e @ e.T) * (1.0 / np.sqrt(self.d_k)))
            if attention is not None:
                attention.append(weights.data.copy())
            outputs.append(weights @ e)
        return concat(outputs, axis=-1) @ self.W_O


class FeedForward(Module):
    def __init__(self, d_h: int, d_ff: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.W_F1 = self.glorot("W_F1", (d_h, d_ff), rng)
        self.b_F1 = self.zeros("b_F1", (d_ff,))
        self.W_F2 = self.glorot("W_F2", (d_ff, d_h), rng)
        self.b_F2 = self.zeros("b_F2", (d_h,))

    def __call__(self, h: Tensor) -> Tensor:
        return relu(h @ self.W_F1 + self.b_F1) @ self.W_F2 + self.b_F2


class EncoderLayer(Module):
    """MHSA then FF, each followed by skip-connection and layer normalization."""

    def __init__(self, d_h: int, d_k: int, heads: int, d_ff: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.attention = MultiHeadSelfAttention(d_h, d_k, heads, rng)
        self.feed_forward = FeedForward(d_h, d_ff, rng)
        self.adopt("mhsa", self.attention)
        self.adopt("ff", self.feed_forward)
        self.ln1_gain = self.ones("ln1_gain", (d_h,))
        self.ln1_bias = self.zeros("ln1_bias", (d_h,))
        self.ln2_gain = self.ones("ln2_gain", (d_h,))
        self.ln2_bias = self.zeros("ln2_bias", (d_h,))

    def __call__(self, h: Tensor, attention: Optional[List[np.ndarray]] = None) -> Tensor:
        h = layer_norm(h + self.attention(h, attention), self.ln1_gain, self.ln1_bias)
        return layer_norm(h + self.feed_forward(h), self.ln2_gain, self.ln2_bias)


class LSTMCell(Module):
    """Standard input/forget/cell/output gates over [x; h]."""

    def __init__(self, input_size: int, units: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.units = units
        self.W = self.glorot("W", (input_size + units, 4 * units), rng)
        self.b = self.zeros("b", (4 * units,))

    def zero_state(self) -> LSTMState:
        return Tensor(np.zeros(self.units)), Tensor(np.zeros(self.units))

    def __call__(self, x: Tensor, state: LSTMState) -> LSTMState:
        h, c = state
        z = concat([x, h]) @ self.W + self.b
        u = self.units
        i = sigmoid(take(z, slice(0, u)))
        f = sigmoid(take(z, slice(u, 2 * u)))
        g = tanh(take(z, slice(2 * u, 3 * u)))
        o = sigmoid(take(z, slice(3 * u, 4 * u)))
        c_next = f * c + i * g
        return o * tanh(c_next), c_next
