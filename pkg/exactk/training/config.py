from dataclasses import asdict, dataclass
from typing import Dict

from exactk.core.errors import ConfigurationError
from exactk.reward.estimator import CROSS_MODES, DEFAULT_HIDDEN


FEED_MODES = ("sample", "greedy")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    m: int = 5
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0
    policy_sampling: bool = True
    hill_climbing: bool = True
    policy_sampling_feed: str = "sample"
    eval_every: int = 10
    holdout: float = 0.1
    reward_epochs: int = 10
    reward_hidden: int = DEFAULT_HIDDEN
    reward_cross: str = "elementwise"
    reward_tied: bool = True

    def validate(self) -> "TrainConfig":
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in [0, 1], got {self.alpha}")
        for name in ("m", "epochs", "batch_size", "eval_every", "reward_epochs", "reward_hidden"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.holdout < 1.0:
            raise ConfigurationError(f"holdout must be in [0, 1), got {self.holdout}")
        if self.policy_sampling_feed not in FEED_MODES:
            raise ConfigurationError(
                f"policy_sampling_feed must be one of {', '.join(FEED_MODES)}, got {self.policy_sampling_feed!r}"
            )
        if self.reward_cross not in CROSS_MODES:
            raise ConfigurationError(f"reward_cross must be one of {', '.join(CROSS_MODES)}, got {self.reward_cross!r}")
        return self

    @property
    def uses_reward(self) -> bool:
        return self.alpha < 1.0

    @property
    def uses_demonstrations(self) -> bool:
        return self.alpha > 0.0

    @property
    def sl_mode(self) -> str:
        return "policy_sampled" if self.policy_sampling else "teacher_forced"

    def snapshot(self) -> Dict[str, object]:
        return asdict(self)
