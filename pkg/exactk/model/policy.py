"""Attention encoder and recurrent pointer decoder over a candidate set.

The encoder embeds every candidate together with the user and refines the
node embeddings with stacked multi-head self-attention layers. The decoder
emits one node per step: a stack of LSTM cells tracks the prefix, a glimpse
reads all node embeddings, and a pointer scores the nodes that can still
extend the prefix to a clique.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from exactk.core.errors import ConfigurationError, ContractViolation, InfeasibleError
from exactk.data.samples import Sample
from exactk.graph.constraint import ConstraintGraph
from exactk.model.config import ModelConfig
from exactk.model.features import FeatureTable, features_from_manifest
from exactk.model.layers import EncoderLayer, LSTMCell, LSTMState
from exactk.numcore.checkpoint import load_archive, save_archive
from exactk.numcore.module import Module
from exactk.numcore.tensor import (
    Tensor,
    concat,
    log_softmax_lastdim,
    masked_fill,
    relu,
    reshape,
    softmax_lastdim,
    take,
    tanh,
)


logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "policy"


@dataclass
class Encoded:
    """Encoder output for one candidate set plus the per-node decoder keys."""

    h: Tensor
    glimpse_keys: Tensor
    pointer_keys: Tensor

    @property
    def n(self) -> int:
        return self.h.shape[0]


@dataclass
class DecodeState:
    layers: Tuple[LSTMState, ...]
    prefix: Tuple[int, ...]
    mask: np.ndarray
    log_prob: float = 0.0

    @property
    def top(self) -> Tensor:
        return self.layers[-1][0]

    @property
    def feasible(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


class PolicyModel(Module):
    def __init__(self, config: ModelConfig, features: FeatureTable, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config.validate()
        self.features = features
        self.adopt("features", features)
        c = config

        self.W_I = self.glorot("W_I", (2 * features.dim, c.d_x), rng)
        self.b_I = self.zeros("b_I", (c.d_x,))
        self.W_E = self.glorot("W_E", (c.d_x, c.d_h), rng)
        self.b_E = self.zeros("b_E", (c.d_h,))

        self.encoder: List[EncoderLayer] = []
        for layer in range(c.layers):
            block = EncoderLayer(c.d_h, c.d_k, c.heads, c.d_ff, rng)
            self.adopt(f"encoder.{layer}", block)
            self.encoder.append(block)

        self.decoder: List[LSTMCell] = []
        for layer in range(c.layers):
            cell = LSTMCell(c.d_h if layer == 0 else c.rnn_units, c.rnn_units, rng)
            self.adopt(f"decoder.{layer}", cell)
            self.decoder.append(cell)

        self.W_D1 = self.glorot("W_D1", (c.rnn_units, c.d_h), rng)
        self.W_D2 = self.glorot("W_D2", (c.d_h, c.d_h), rng)
        self.v_D1 = self.glorot("v_D1", (c.d_h,), rng)
        self.W_D3 = self.glorot("W_D3", (c.rnn_units + c.d_h, c.d_h), rng)
        self.W_D4 = self.glorot("W_D4", (c.d_h, c.d_h), rng)
        self.v_D2 = self.glorot("v_D2", (c.d_h,), rng)

    # --- encoder ----------------------------------------------------------

    def embed_input(self, item_features: Tensor, user_features: Tensor) -> Tensor:
        """x_i = ReLU(W_I [x_item; x_user] + b_I) for every candidate row."""
        width = self.features.dim
        if item_features.ndim != 2 or item_features.shape[1] != width or user_features.shape != (width,):
            raise ContractViolation(
                f"embed_input: expected items (N, {width}) and user ({width},), "
                f"got {item_features.shape} and {user_features.shape}"
            )
        n = item_features.shape[0]
        users = take(reshape(user_features, (1, width)), np.zeros(n, dtype=np.int64))
        return relu(concat([item_features, users], axis=-1) @ self.W_I + self.b_I)

    def encode(self, x: Tensor, attention: Optional[List[np.ndarray]] = None) -> Tensor:
        """Node embeddings H; ``attention`` collects one N x N weight matrix per layer and head."""
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != self.config.d_x:
            raise ContractViolation(f"encode: expected inputs (N, {self.config.d_x}), got {x.shape}")
        h = x @ self.W_E + self.b_E
        for layer in self.encoder:
            h = layer(h, attention)
        return h

    def prepare(self, h: Tensor) -> Encoded:
        return Encoded(h, h @ self.W_D2, h @ self.W_D4)

    def encode_sample(self, sample: Sample, attention: Optional[List[np.ndarray]] = None) -> Encoded:
        x = self.embed_input(self.features.items(sample.candidates), self.features.users(sample.user_id))
        return self.prepare(self.encode(x, attention))

    # --- decoder ----------------------------------------------------------

    def _run_cells(self, x: Tensor, layers: Sequence[LSTMState]) -> Tuple[LSTMState, ...]:
        states = []
        for cell, state in zip(self.decoder, layers):
            state = cell(x, state)
            states.append(state)
            x = state[0]
        return tuple(states)

    def initial_state(self, encoded: Encoded) -> DecodeState:
        """d_1 from a zero input and zero recurrent state; every node feasible."""
        start = Tensor(np.zeros(self.config.d_h))
        layers = self._run_cells(start, [cell.zero_state() for cell in self.decoder])
        return DecodeState(layers, (), np.ones(encoded.n, dtype=bool), 0.0)

    def step_logits(self, state: DecodeState, encoded: Encoded) -> Tensor:
        if state.mask.shape != (encoded.n,):
            raise ContractViolation(f"decode: mask shape {state.mask.shape} does not match {encoded.n} nodes")
        if not state.mask.any():
            raise InfeasibleError(f"no feasible node extends prefix {list(state.prefix)}")
        d = state.top
        glimpse = softmax_lastdim(tanh(d @ self.W_D1 + encoded.glimpse_keys) @ self.v_D1)
        d_hat = concat([d, glimpse @ encoded.h])
        logits = tanh(d_hat @ self.W_D3 + encoded.pointer_keys) @ self.v_D2
        return masked_fill(logits, state.mask)

    def decode_step(self, state: DecodeState, encoded: Encoded) -> Tensor:
        return softmax_lastdim(self.step_logits(state, encoded))

    def step_log_probs(self, state: DecodeState, encoded: Encoded) -> Tensor:
        return log_softmax_lastdim(self.step_logits(state, encoded))

    def advance_state(self, state: DecodeState, node: int, graph: ConstraintGraph, encoded: Encoded,
                      step_log_prob: Optional[float] = None) -> DecodeState:
        if graph.n != encoded.n:
            raise ContractViolation(f"graph has {graph.n} nodes, encoder output has {encoded.n}")
        if not 0 <= node < encoded.n or not state.mask[node]:
            raise ContractViolation(f"node {node} is masked after prefix {list(state.prefix)}")
        if step_log_prob is None:
            step_log_prob = float(self.step_log_probs(state, encoded).data[node])

        layers = self._run_cells(take(encoded.h, node), state.layers)
        mask = state.mask & graph.adjacency[node]
        mask[node] = False
        return DecodeState(layers, state.prefix + (node,), mask, state.log_prob + step_log_prob)

    def target_log_probs(self, encoded: Encoded, graph: ConstraintGraph, feed: Sequence[int],
                         targets: Sequence[int]) -> List[Optional[Tensor]]:
        """log p(target_t) at states advanced along ``feed``; None where the target is masked."""
        if len(feed) < len(targets) - 1:
            raise ContractViolation(f"{len(feed)} fed nodes cannot drive {len(targets)} steps")
        state = self.initial_state(encoded)
        terms: List[Optional[Tensor]] = []
        for step, target in enumerate(targets):
            log_probs = self.step_log_probs(state, encoded)
            terms.append(take(log_probs, target) if state.mask[target] else None)
            if step + 1 < len(targets):
                node = feed[step]
                state = self.advance_state(state, node, graph, encoded, float(log_probs.data[node]))
        return terms

    # --- persistence ------------------------------------------------------

    def save(self, path: str) -> None:
        manifest = {"kind": CHECKPOINT_KIND}
        manifest.update(self.config.to_manifest())
        manifest.update(self.features.describe())
        save_archive(path, self.state_dict(), manifest)
        logger.debug("saved policy checkpoint %s (%d tensors)", path, len(self.params))

    @classmethod
    def load(cls, path: str, features: Optional[FeatureTable] = None) -> "PolicyModel":
        arrays, manifest = load_archive(path)
        if manifest.get("kind") != CHECKPOINT_KIND:
            raise ConfigurationError(f"{path}: archive holds {manifest.get('kind')!r}, not a policy")
        config = ModelConfig.from_manifest(manifest)
        model = cls(config, features_from_manifest(manifest, features), np.random.default_rng(0))
        model.load_state_dict(arrays)
        return model
