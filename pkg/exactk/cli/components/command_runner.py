import logging
import os
import time
from argparse import Namespace
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.live import Live

from exactk.cli.components.dataset_loader import (
    DATA_COMMAND, TEST_FILE, TRAIN_FILE, WORLD_FILE, Dataset, constraint_from, load_dataset,
)
from exactk.cli.components.output_formatter import OutputFormatter
from exactk.cli.components.training_log import TrainingLog
from exactk.core.errors import ConfigurationError, InfeasibleError
from exactk.core.manifest import RunManifest, artifact_version
from exactk.core.settings import Settings
from exactk.data.builders import (
    build_from_implicit_feedback, generate_oracle_dataset, read_ratings, split, synthetic_ratings,
)
from exactk.data.samples import DatasetSpec, write_samples
from exactk.data.world import OracleWorld
from exactk.evaluation.baseline import PointwiseScorer, train_pointwise
from exactk.evaluation.harness import METHODS, beam_sweep, evaluate
from exactk.evaluation.report import report_table, write_report_csv
from exactk.model.decoding import attention_rows, write_attention_csv
from exactk.model.policy import PolicyModel
from exactk.reward.estimator import RewardModel
from exactk.training.config import TrainConfig
from exactk.training.experiments import (
    DEFAULT_ALPHAS, ablation_settings, alpha_settings, fit_shared_reward, run_settings, write_sweep_csv,
)
from exactk.training.trainer import INFEASIBLE_RATE_LIMIT, TrainingRun, run_training


logger = logging.getLogger(__name__)

POLICY_FILE = "policy.exka"
REWARD_FILE = "reward.exka"
CURVE_FILE = "curve.csv"
REWARD_CURVE_FILE = "reward_curve.csv"
SWEEP_KINDS = ("ablation", "alpha", "beam")


def manifest_beside(path: str) -> str:
    """``report.csv`` -> ``report.manifest.json`` in the same directory."""
    return os.path.splitext(os.path.basename(path))[0] + ".manifest.json"


def parse_alphas(text: Optional[str]) -> List[float]:
    if not text:
        return list(DEFAULT_ALPHAS)
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"--alphas expects comma-separated numbers, got {text!r}") from None


class CommandRunner:
    """Runs one subcommand. Library errors propagate; the interface maps them to exit codes."""

    def __init__(self, console: Console) -> None:
        self.console = console
        self.started = time.monotonic()

    # --- shared helpers ---------------------------------------------------

    def _settings(self, args: Namespace) -> Settings:
        return Settings(getattr(args, "config", None))

    def _write_manifest(self, command: str, seed: int, config: Dict, inputs: Dict[str, str],
                        outputs: Dict[str, str], directory: str, name: Optional[str] = None) -> None:
        manifest = RunManifest(
            command=command,
            seed=seed,
            config=config,
            inputs=inputs,
            outputs=outputs,
            version=artifact_version(),
            duration_seconds=round(time.monotonic() - self.started, 3),
        )
        path = manifest.write(directory, name) if name else manifest.write(directory)
        outputs = dict(outputs, manifest=path)
        OutputFormatter.print_outputs(self.console, outputs)

    def _load_policy(self, path: Optional[str], data: Dataset) -> PolicyModel:
        if not path:
            raise ConfigurationError("a policy checkpoint is required (--policy)")
        return PolicyModel.load(path, data.dense_features())

    def _load_reward(self, path: Optional[str], data: Dataset) -> Optional[RewardModel]:
        if not path:
            return None
        return RewardModel.load(path, data.dense_features())

    def _reward_model(self, data: Dataset, config: TrainConfig, dim: int, rng: np.random.Generator) -> RewardModel:
        return RewardModel(data.k, data.features(dim, rng), rng, hidden=config.reward_hidden,
                           cross=config.reward_cross, tied=config.reward_tied)

    def _live(self, log: TrainingLog) -> Live:
        return Live(log, console=self.console, transient=False, vertical_overflow="visible")

    def _check_storm(self, run: TrainingRun) -> None:
        if run.infeasible_storm:
            raise InfeasibleError(
                f"infeasible decode rate {run.infeasible_rate:.2%} ({run.infeasible} of {run.decodes}) "
                f"exceeds {INFEASIBLE_RATE_LIMIT:.0%}"
            )

    # --- gen-data ---------------------------------------------------------

    def gen_data(self, args: Namespace) -> int:
        seed = Settings().resolve_seed(args.seed)
        spec = DatasetSpec(args.k, args.n, args.split, seed)
        spec.validate()
        constraint = constraint_from({"constraint": args.constraint, "tau": args.tau})
        if args.mode == "implicit" and constraint.kind != "none":
            raise ConfigurationError("implicit-feedback data has no item titles; use --constraint none")
        rng = np.random.default_rng(seed)

        world = None
        with OutputFormatter.spinner(self.console, f"Generating {args.mode} dataset..."):
            if args.mode == "oracle":
                world = OracleWorld.random(args.users, args.items, args.dim, rng, args.beta, args.temperature)
                samples = generate_oracle_dataset(world, spec, args.users, rng, constraint)
            else:
                if args.ratings:
                    ratings = read_ratings(args.ratings)
                else:
                    source = OracleWorld.random(args.users, args.items, args.dim, rng, args.beta,
                                                args.temperature, with_titles=False)
                    ratings = synthetic_ratings(source, rng)
                samples = build_from_implicit_feedback(ratings, spec, rng)
            train, test = split(samples, spec.split_ratio, rng)

        os.makedirs(args.out, exist_ok=True)
        outputs = {"train": os.path.join(args.out, TRAIN_FILE), "test": os.path.join(args.out, TEST_FILE)}
        write_samples(train, outputs["train"])
        write_samples(test, outputs["test"])
        if world is not None:
            outputs["world"] = os.path.join(args.out, WORLD_FILE)
            world.save(outputs["world"])

        config = {
            "mode": args.mode,
            "k": args.k,
            "n": args.n,
            "users": args.users,
            "items": args.items,
            "dim": args.dim,
            "beta": args.beta,
            "temperature": args.temperature,
            "constraint": constraint.kind,
            "tau": constraint.tau,
            "split": args.split,
            "n_users": max(s.user_id for s in samples) + 1,
            "n_items": max(max(s.candidates) for s in samples) + 1,
            "train_samples": len(train),
            "test_samples": len(test),
        }
        inputs = {"ratings": args.ratings} if args.ratings else {}
        logger.info("%d train / %d test samples (K=%d, N=%d, %s)", len(train), len(test), args.k, args.n,
                    constraint.describe())
        self._write_manifest(DATA_COMMAND, seed, config, inputs, outputs, args.out)
        return 0

    # --- train ------------------------------------------------------------

    def train(self, args: Namespace) -> int:
        settings = self._settings(args)
        settings.override("alpha", args.alpha)
        settings.override("policy_sampling", args.policy_sampling)
        settings.override("hill_climbing", args.hill_climbing)
        settings.override("policy_sampling_feed", args.feed)
        settings.override("epochs", args.epochs)
        config = settings.train_config(args.seed)
        data = load_dataset(args.data)
        model_config = settings.model_config(data.k, data.n)

        rng = np.random.default_rng(config.seed)
        policy = PolicyModel(model_config, data.features(model_config.feature_dim, rng), rng)
        reward_model = self._reward_model(data, config, model_config.feature_dim, rng) if config.uses_reward else None

        os.makedirs(args.out, exist_ok=True)
        outputs = {"policy": os.path.join(args.out, POLICY_FILE), "curve": os.path.join(args.out, CURVE_FILE)}
        if reward_model is not None:
            outputs["reward"] = os.path.join(args.out, REWARD_FILE)
            outputs["reward_curve"] = os.path.join(args.out, REWARD_CURVE_FILE)

        log = TrainingLog(f"Training alpha={config.alpha} on {len(data.train)} samples")
        with self._live(log):
            try:
                run = run_training(
                    data.train, data.graph_builder(), policy, config, reward_model,
                    curve_path=outputs["curve"], reward_curve_path=outputs.get("reward_curve"), on_event=log.add,
                )
            except Exception:
                log.fail()
                raise
            log.complete()

        self._check_storm(run)
        policy.save(outputs["policy"])
        if reward_model is not None:
            reward_model.save(outputs["reward"])
        if run.skipped_demonstrations:
            OutputFormatter.print_warning(
                self.console, f"{run.skipped_demonstrations} demonstrations violated the constraint graph"
            )

        snapshot = settings.snapshot()
        snapshot["seed"] = str(config.seed)
        self._write_manifest("train", config.seed, snapshot, data.inputs, outputs, args.out)
        return 0

    # --- eval -------------------------------------------------------------

    def _node_weights(self, data: Dataset, config: TrainConfig, dim: int):
        rng = np.random.default_rng(config.seed)
        scorer = PointwiseScorer(data.features(dim, rng), rng)
        with OutputFormatter.spinner(self.console, "Fitting pointwise baseline..."):
            train_pointwise(scorer, data.train, config.epochs, config.batch_size, config.learning_rate, rng)
        return scorer

    def eval(self, args: Namespace) -> int:
        methods = args.method or ["policy_beam"]
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown method {unknown[0]!r}; valid methods: {', '.join(METHODS)}")
        settings = self._settings(args)
        settings.override("beam_size", args.beam_size)
        config = settings.train_config(args.seed)
        data = load_dataset(args.data)
        model_config = settings.model_config(data.k, data.n)

        policy = self._load_policy(args.policy, data) if "policy_beam" in methods else None
        reward_model = self._load_reward(args.reward, data)
        scorer = self._node_weights(data, config, model_config.feature_dim) if "greedy_baseline" in methods else None

        reports = []
        builder = data.graph_builder()
        for method in methods:
            with OutputFormatter.spinner(self.console, f"Evaluating {method}..."):
                reports.append(evaluate(
                    method, data.test, builder, data.k, policy=policy, reward_model=reward_model,
                    node_weights=scorer, world=data.world,
                    beam_size=settings.beam_size if method == "policy_beam" else None,
                ))

        write_report_csv(reports, args.report)
        OutputFormatter.print_table(self.console, report_table(reports, f"Test split, K={data.k}"))
        for report in reports:
            if report.excluded:
                logger.info("%s: %d unclicked cards not scored", report.method, report.excluded)

        inputs = dict(data.inputs)
        inputs.update({name: path for name, path in (("policy", args.policy), ("reward", args.reward)) if path})
        config_out = {"methods": ",".join(methods), "beam_size": settings.beam_size}
        self._write_manifest("eval", config.seed, config_out, inputs, {"report": args.report},
                             os.path.dirname(os.path.abspath(args.report)), manifest_beside(args.report))
        return 0

    # --- export-attention -------------------------------------------------

    def export_attention(self, args: Namespace) -> int:
        data = load_dataset(args.data)
        samples = data.split_named(args.split)
        if not 0 <= args.sample_index < len(samples):
            raise ConfigurationError(
                f"sample index {args.sample_index} out of range for the {args.split} split ({len(samples)} samples)"
            )
        policy = self._load_policy(args.policy, data)
        rows = attention_rows(policy, samples[args.sample_index])
        write_attention_csv(rows, args.out)
        logger.info("%d attention weights for user %d", len(rows), samples[args.sample_index].user_id)

        inputs = dict(data.inputs, policy=args.policy)
        config = {"split": args.split, "sample_index": args.sample_index}
        self._write_manifest("export-attention", 0, config, inputs, {"attention": args.out},
                             os.path.dirname(os.path.abspath(args.out)), manifest_beside(args.out))
        return 0

    # --- sweep ------------------------------------------------------------

    def sweep(self, args: Namespace) -> int:
        if args.kind not in SWEEP_KINDS:
            raise ConfigurationError(f"unknown sweep {args.kind!r}; expected one of {', '.join(SWEEP_KINDS)}")
        settings = self._settings(args)
        settings.override("epochs", args.epochs)
        config = settings.train_config(args.seed)
        data = load_dataset(args.data)
        model_config = settings.model_config(data.k, data.n)
        builder = data.graph_builder()
        inputs = dict(data.inputs)

        if args.kind == "beam":
            if args.max_beam < 1:
                raise ConfigurationError(f"--max-beam must be at least 1, got {args.max_beam}")
            policy = self._load_policy(args.policy, data)
            reward_model = self._load_reward(args.reward, data)
            with OutputFormatter.spinner(self.console, f"Beam sizes 1..{args.max_beam}..."):
                reports = beam_sweep(policy, data.test, builder, range(1, args.max_beam + 1), reward_model, data.world)
            write_report_csv(reports, args.out, by_beam=True)
            OutputFormatter.print_table(self.console, report_table(reports, "Beam size sweep", by_beam=True))
            inputs.update({name: path for name, path in (("policy", args.policy), ("reward", args.reward)) if path})
            sweep_config: Dict = {"kind": "beam", "max_beam": args.max_beam}
        else:
            if args.kind == "ablation":
                settings_rows = ablation_settings(config.alpha)
            else:
                settings_rows = alpha_settings(parse_alphas(args.alphas), config)
            rng = np.random.default_rng(config.seed)
            reward_model = self._reward_model(data, config, model_config.feature_dim, rng)
            make_policy: Callable[[], PolicyModel] = lambda: self._fresh_policy(data, model_config, config.seed)

            log = TrainingLog(f"{args.kind} sweep over {len(settings_rows)} settings")
            with self._live(log):
                log.add("Fitting shared reward estimator")
                fit_shared_reward(reward_model, data.train, config)
                rows = run_settings(settings_rows, data.train, data.test, builder, make_policy, reward_model,
                                    config, data.world, on_event=log.add)
                log.complete()
            write_sweep_csv(rows, args.out, args.kind)
            self._print_sweep(rows, args.kind)
            sweep_config = {"kind": args.kind, "alphas": ",".join(repr(s.alpha) for s in settings_rows)}

        sweep_config.update(settings.snapshot())
        self._write_manifest("sweep", config.seed, sweep_config, inputs, {"sweep": args.out},
                             os.path.dirname(os.path.abspath(args.out)), manifest_beside(args.out))
        return 0

    def _fresh_policy(self, data: Dataset, model_config, seed: int) -> PolicyModel:
        rng = np.random.default_rng(seed)
        return PolicyModel(model_config, data.features(model_config.feature_dim, rng), rng)

    def _print_sweep(self, rows: Sequence, kind: str) -> None:
        reports = [replace(row.report, method=row.setting.name) for row in rows]
        OutputFormatter.print_table(self.console, report_table(reports, f"{kind.capitalize()} sweep"))
