import os
from typing import Any, Dict, Optional, Set

from exactk.core.errors import ConfigurationError, DataError
from exactk.model.config import ModelConfig
from exactk.training.config import TrainConfig


SEED_ENV = "EXACTK_SEED"

MODEL_KEYS = ("feature_dim", "d_x", "d_h", "d_k", "heads", "layers", "d_ff", "rnn_units", "beam_size")

DEFAULT_SETTINGS: Dict[str, Any] = {
    # policy
    "feature_dim": 16,
    "d_x": 32,
    "d_h": 32,
    "d_k": 16,
    "heads": 2,
    "layers": 2,
    "d_ff": 32,
    "rnn_units": 32,
    "beam_size": 3,
    # training
    "alpha": 0.5,
    "m": 5,
    "epochs": 10,
    "batch_size": 32,
    "learning_rate": 0.001,
    "seed": 0,
    "policy_sampling": True,
    "hill_climbing": True,
    "policy_sampling_feed": "sample",
    "eval_every": 10,
    "holdout": 0.1,
    # reward estimator
    "reward_epochs": 10,
    "reward_hidden": 128,
    "reward_cross": "elementwise",
    "reward_tied": True,
}

TRUE_WORDS = {"true", "on", "yes", "1"}
FALSE_WORDS = {"false", "off", "no", "0"}


def coerce(key: str, raw: Any) -> Any:
    """Convert ``raw`` to the type of the key's default value."""
    if key not in DEFAULT_SETTINGS:
        raise ConfigurationError(f"unknown setting {key!r}")
    default = DEFAULT_SETTINGS[key]
    if not isinstance(raw, str):
        raw = str(raw).lower() if isinstance(raw, bool) else str(raw)
    text = raw.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in TRUE_WORDS:
                return True
            if text.lower() in FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        kind = "boolean" if isinstance(default, bool) else type(default).__name__
        raise ConfigurationError(f"setting {key!r}: cannot read {text!r} as {kind}") from None
    return text


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


class Settings:
    """Flat ``key=value`` run configuration over built-in defaults."""

    def __init__(self, path: Optional[str] = None) -> None:
        self.path = path
        self.data: Dict[str, Any] = dict(DEFAULT_SETTINGS)
        self.explicit: Set[str] = set()
        if path:
            self.load()

    def load(self) -> None:
        if not self.path:
            return
        if not os.path.isfile(self.path):
            raise DataError(f"config file not found: {self.path}")
        seen: Dict[str, int] = {}
        with open(self.path, "r", encoding="utf-8") as f:
            for number, row in enumerate(f, start=1):
                line = row.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                if not sep or not key:
                    raise ConfigurationError(f"{self.path}:{number}: expected key=value, got {line!r}")
                if key in seen:
                    raise ConfigurationError(f"{self.path}:{number}: {key!r} already set on line {seen[key]}")
                try:
                    self.data[key] = coerce(key, value)
                except ConfigurationError as exc:
                    raise ConfigurationError(f"{self.path}:{number}: {exc}") from None
                seen[key] = number
                self.explicit.add(key)

    def save(self) -> None:
        if not self.path:
            raise ConfigurationError("settings have no file path to save to")
        tmp_path = self.path + ".tmp"
        with open(tmp_path, "w", encoding="utf-8") as f:
            for key in DEFAULT_SETTINGS:
                f.write(f"{key}={_render(self.data[key])}\n")
        os.replace(tmp_path, self.path)

    def override(self, key: str, value: Any) -> None:
        """Apply a command-line value; ``None`` leaves the current value alone."""
        if value is None:
            return
        self.data[key] = coerce(key, value)
        self.explicit.add(key)

    def get(self, key: str) -> Any:
        if key not in self.data:
            raise ConfigurationError(f"unknown setting {key!r}")
        return self.data[key]

    def resolve_seed(self, flag: Optional[int] = None) -> int:
        """--seed, then the config file, then $EXACTK_SEED, then 0."""
        if flag is not None:
            return int(flag)
        if "seed" in self.explicit:
            return int(self.data["seed"])
        env = os.environ.get(SEED_ENV, "").strip()
        if env:
            try:
                return int(env)
            except ValueError:
                raise ConfigurationError(f"{SEED_ENV}={env!r} is not an integer") from None
        return int(DEFAULT_SETTINGS["seed"])

    @property
    def alpha(self) -> float:
        return float(self.data["alpha"])

    @property
    def beam_size(self) -> int:
        return int(self.data["beam_size"])

    def model_config(self, k: int, n: int) -> ModelConfig:
        values = {key: self.data[key] for key in MODEL_KEYS}
        return ModelConfig(k=k, n=n, **values).validate()

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        names = [key for key in DEFAULT_SETTINGS if key not in MODEL_KEYS]
        values = {key: self.data[key] for key in names}
        values["seed"] = self.resolve_seed(seed)
        return TrainConfig(**values).validate()

    def snapshot(self) -> Dict[str, str]:
        return {key: _render(self.data[key]) for key in DEFAULT_SETTINGS}
