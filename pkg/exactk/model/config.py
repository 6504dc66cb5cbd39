from dataclasses import asdict, dataclass, fields
from typing import Dict, Mapping

from exactk.core.errors import ConfigurationError


@dataclass(frozen=True)
class ModelConfig:
    """Policy hyperparameters. ``heads`` is M and ``layers`` is L in both encoder and decoder."""

    k: int = 4
    n: int = 20
    feature_dim: int = 16
    d_x: int = 32
    d_h: int = 32
    d_k: int = 16
    heads: int = 2
    layers: int = 2
    d_ff: int = 32
    rnn_units: int = 32
    beam_size: int = 3

    def validate(self) -> "ModelConfig":
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ConfigurationError(f"model setting {f.name} must be a positive integer, got {value!r}")
        if self.k > self.n:
            raise ConfigurationError(f"K must be <= N (K={self.k}, N={self.n})")
        return self

    def to_manifest(self) -> Dict[str, str]:
        return {f"model.{key}": str(value) for key, value in asdict(self).items()}

    @classmethod
    def from_manifest(cls, manifest: Mapping[str, str]) -> "ModelConfig":
        try:
            values = {f.name: int(manifest[f"model.{f.name}"]) for f in fields(cls)}
        except KeyError as exc:
            raise ConfigurationError(f"checkpoint manifest lacks {exc.args[0]}") from None
        return cls(**values).validate()
