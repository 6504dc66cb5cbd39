"""Ablation grid and alpha sweep, sharing one phase-1 reward estimator."""

import csv
import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from exactk.data.samples import Sample
from exactk.data.world import OracleWorld
from exactk.evaluation.harness import EvalReport, evaluate
from exactk.evaluation.report import format_cell
from exactk.graph.constraint import GraphBuilder
from exactk.model.policy import PolicyModel
from exactk.reward.estimator import RewardModel
from exactk.reward.trainer import train_reward
from exactk.training.config import TrainConfig
from exactk.training.trainer import run_training


logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
ABLATION_HEADER = (
    "row", "setting", "alpha", "policy_sampling", "hill_climbing", "p_at_k", "hr_at_k", "mean_reward", "oracle_ratio",
)
ALPHA_HEADER = ("alpha", "p_at_k", "hr_at_k", "mean_reward", "oracle_ratio")

PolicyFactory = Callable[[], PolicyModel]


@dataclass(frozen=True)
class AblationSetting:
    row: int
    name: str
    alpha: float
    policy_sampling: bool
    hill_climbing: bool


@dataclass
class SweepRow:
    setting: AblationSetting
    report: EvalReport
    train_reward: float


def ablation_settings(mixed_alpha: float = 0.5) -> List[AblationSetting]:
    return [
        AblationSetting(1, "RL w/o hill-climbing", 0.0, False, False),
        AblationSetting(2, "RL w/ hill-climbing", 0.0, False, True),
        AblationSetting(3, "SL w/o policy-sampling", 1.0, False, False),
        AblationSetting(4, "SL w/ policy-sampling", 1.0, True, False),
        AblationSetting(5, "RL w/o hill-climbing + SL w/ policy-sampling", mixed_alpha, True, False),
        AblationSetting(6, "RL w/ hill-climbing + SL w/o policy-sampling", mixed_alpha, False, True),
        AblationSetting(7, "RL w/ hill-climbing + SL w/ policy-sampling", mixed_alpha, True, True),
    ]


def alpha_settings(alphas: Sequence[float], base: TrainConfig) -> List[AblationSetting]:
    return [
        AblationSetting(row, f"alpha={alpha}", alpha, base.policy_sampling, base.hill_climbing)
        for row, alpha in enumerate(alphas, start=1)
    ]


def fit_shared_reward(reward_model: RewardModel, train: Sequence[Sample], config: TrainConfig) -> RewardModel:
    train_reward(reward_model, train, config.reward_epochs, config.batch_size, config.learning_rate,
                 np.random.default_rng(config.seed))
    return reward_model


def run_settings(settings: Sequence[AblationSetting], train: Sequence[Sample], test: Sequence[Sample],
                 graph_builder: GraphBuilder, make_policy: PolicyFactory, reward_model: RewardModel,
                 config: TrainConfig, world: Optional[OracleWorld] = None,
                 on_event: Optional[Callable[[str], None]] = None) -> List[SweepRow]:
    """Train a fresh policy per setting against the already fitted ``reward_model``."""
    notify = on_event or (lambda message: None)
    rows = []
    for setting in settings:
        notify(f"[{setting.row}/{len(settings)}] {setting.name}")
        row_config = replace(
            config, alpha=setting.alpha, policy_sampling=setting.policy_sampling, hill_climbing=setting.hill_climbing,
        ).validate()
        run = run_training(train, graph_builder, make_policy(), row_config, reward_model, fit_reward=False)
        report = evaluate("policy_beam", test, graph_builder, run.policy.config.k, policy=run.policy,
                          reward_model=reward_model, world=world)
        rewards = [r.mean_reward for r in run.curve if not math.isnan(r.mean_reward)]
        rows.append(SweepRow(setting, report, float(np.mean(rewards)) if rewards else math.nan))
        logger.info("%s: P@K %.4f HR@K %.4f", setting.name, report.p_at_k, report.hr_at_k)
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str, kind: str = "ablation") -> None:
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ABLATION_HEADER if kind == "ablation" else ALPHA_HEADER)
        for row in rows:
            s, r = row.setting, row.report
            metrics = [format_cell(v) for v in (r.p_at_k, r.hr_at_k, r.mean_reward, r.oracle_ratio)]
            if kind == "ablation":
                writer.writerow([s.row, s.name, repr(s.alpha), str(s.policy_sampling).lower(),
                                 str(s.hill_climbing).lower()] + metrics)
            else:
                writer.writerow([repr(s.alpha)] + metrics)
    os.replace(tmp_path, path)
