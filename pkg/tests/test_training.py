import math

import pytest
import numpy as np

from exactk.core.errors import ConfigurationError, ContractViolation, DataError
from exactk.data.builders import generate_oracle_dataset, split
from exactk.data.samples import DatasetSpec, Sample, demonstrations
from exactk.data.world import OracleWorld
from exactk.evaluation.baseline import PointwiseScorer, train_pointwise
from exactk.evaluation.harness import evaluate
from exactk.graph.constraint import ConstraintGraph, GraphBuilder, complete_graph
from exactk.model.config import ModelConfig
from exactk.model.decoding import sequence_log_prob
from exactk.model.features import FeatureTable
from exactk.model.policy import PolicyModel
from exactk.numcore.optim import Adam
from exactk.numcore.tensor import no_grad
from exactk.reward.estimator import RewardModel
from exactk.training.config import TrainConfig
from exactk.training.experiments import (
    ABLATION_HEADER, ALPHA_HEADER, ablation_settings, alpha_settings, fit_shared_reward, run_settings, write_sweep_csv,
)
from exactk.training.losses import rl_loss, select_best, sl_loss
from exactk.training.trainer import (
    CURVE_HEADER, CurveRow, TrainingRun, combined_loss, combined_step, reward_trend, run_training,
)

MODEL = ModelConfig(k=2, n=5, d_x=4, d_h=4, d_k=2, heads=1, layers=1, d_ff=4, rnn_units=4)

def tiny_config(**overrides):
    values = dict(epochs=1, batch_size=4, m=2, reward_epochs=1, reward_hidden=4, holdout=0.0, learning_rate=0.01)
    values.update(overrides)
    return TrainConfig(**values)

@pytest.fixture
def world():
    return OracleWorld.random(12, 20, 3, np.random.default_rng(6))

@pytest.fixture
def samples(world):
    return generate_oracle_dataset(world, DatasetSpec(2, 5), 12, np.random.default_rng(7))

@pytest.fixture
def features(world):
    return FeatureTable.dense(world.user_vectors, world.item_vectors)

def make_policy(features, seed=0):
    return PolicyModel(MODEL, features, np.random.default_rng(seed))

def make_reward(features, seed=0):
    return RewardModel(2, features, np.random.default_rng(seed), hidden=4)

@pytest.fixture
def demo(samples):
    return demonstrations(samples)[0]

def test_default_train_config():
    config = TrainConfig()
    assert (config.alpha, config.m, config.epochs, config.batch_size, config.learning_rate) == (0.5, 5, 10, 32, 0.001)
    assert config.uses_reward and config.uses_demonstrations
    assert config.sl_mode == "policy_sampled"

@pytest.mark.parametrize("overrides", [
    {"alpha": 1.5}, {"m": 0}, {"learning_rate": 0.0}, {"holdout": 1.0}, {"policy_sampling_feed": "beam"},
    {"reward_cross": "outer"},
])
def test_train_config_validation(overrides):
    with pytest.raises(ConfigurationError):
        TrainConfig(**overrides).validate()

def test_alpha_extremes_switch_branches_off():
    assert not TrainConfig(alpha=1.0).uses_reward
    assert not TrainConfig(alpha=0.0).uses_demonstrations
    assert TrainConfig(policy_sampling=False).sl_mode == "teacher_forced"

def test_select_best_prefers_earliest_tie():
    assert select_best([0.1, 0.7, 0.7, -0.2]) == 1
    with pytest.raises(ContractViolation):
        select_best([])

def test_teacher_forced_loss_is_mean_negative_log_likelihood(features, demo):
    policy = make_policy(features)
    graph = complete_graph(demo.candidates)
    with no_grad():
        loss = sl_loss(policy, demo, graph, "teacher_forced").item()
    expected = -sequence_log_prob(policy, demo, graph, demo.card_nodes()) / 2
    assert loss == pytest.approx(expected, abs=1e-12)
    assert loss > 0.0

def test_sl_loss_input_checks(features, demo):
    policy = make_policy(features)
    graph = complete_graph(demo.candidates)
    with pytest.raises(ContractViolation, match="clicked card"):
        sl_loss(policy, Sample(demo.user_id, demo.card, demo.candidates, 0, None), graph)
    with pytest.raises(ContractViolation, match="random generator"):
        sl_loss(policy, demo, graph, "policy_sampled")
    with pytest.raises(ContractViolation):
        sl_loss(policy, demo, graph, "imitation")
    empty = ConstraintGraph(np.zeros((5, 5), dtype=bool), demo.candidates)
    with pytest.raises(DataError, match="violates"):
        sl_loss(policy, demo, empty)

def test_policy_sampled_loss_is_finite(features, demo):
    policy = make_policy(features)
    graph = complete_graph(demo.candidates)
    with no_grad():
        sampled = sl_loss(policy, demo, graph, "policy_sampled", np.random.default_rng(1)).item()
        greedy = sl_loss(policy, demo, graph, "policy_sampled", feed_mode="greedy").item()
    assert math.isfinite(sampled) and sampled > 0.0
    assert math.isfinite(greedy) and greedy > 0.0

def test_rl_loss_scales_log_probability_by_reward(features, demo):
    policy, reward_model = make_policy(features), make_reward(features)
    graph = complete_graph(demo.candidates)
    with no_grad():
        result = rl_loss(policy, demo, graph, reward_model, False, 5, np.random.default_rng(2))
    assert len(result.buffer_rewards) == 1
    assert result.reward == pytest.approx(reward_model.reward(demo.user_id, graph.items(result.card)))
    log_p = sequence_log_prob(policy, demo, graph, result.card)
    assert result.loss.item() == pytest.approx(-result.reward * log_p, abs=1e-12)

def test_hill_climbing_keeps_the_best_of_the_buffer(features, demo):
    policy, reward_model = make_policy(features), make_reward(features)
    graph = complete_graph(demo.candidates)
    with no_grad():
        result = rl_loss(policy, demo, graph, reward_model, True, 6, np.random.default_rng(3))
    assert len(result.buffer_rewards) == 6
    assert result.reward == max(result.buffer_rewards)
    with pytest.raises(ContractViolation):
        rl_loss(policy, demo, graph, reward_model, True, 0, np.random.default_rng(3))

def test_combined_loss_mixes_both_branches(features, samples):
    policy, reward_model = make_policy(features), make_reward(features)
    batch = demonstrations(samples)[:3]
    with no_grad():
        mixed = combined_loss(policy, batch, GraphBuilder(), reward_model, tiny_config(alpha=0.25),
                              np.random.default_rng(0))
    assert mixed.loss_total == pytest.approx(0.25 * mixed.loss_sl + 0.75 * mixed.loss_rl, abs=1e-12)
    assert mixed.decodes == 6
    assert len(mixed.rewards) == 3

def test_alpha_one_ignores_the_reward(features, samples):
    batch = demonstrations(samples)[:3]
    with no_grad():
        sl_only = combined_loss(make_policy(features), batch, GraphBuilder(), None, tiny_config(alpha=1.0),
                                np.random.default_rng(0))
    assert math.isnan(sl_only.loss_rl) and math.isnan(sl_only.mean_reward)
    assert sl_only.loss_total == pytest.approx(sl_only.loss_sl)

def test_reward_branch_needs_a_reward_model(features, samples):
    with pytest.raises(ConfigurationError):
        combined_loss(make_policy(features), demonstrations(samples)[:1], GraphBuilder(), None, tiny_config(),
                      np.random.default_rng(0))

def test_alpha_does_not_shift_the_random_streams(features, samples):
    batch = demonstrations(samples)[:4]
    reward_model = make_reward(features)
    with no_grad():
        rl_only = combined_loss(make_policy(features), batch, GraphBuilder(), reward_model, tiny_config(alpha=0.0),
                                np.random.default_rng(5))
        mixed = combined_loss(make_policy(features), batch, GraphBuilder(), reward_model, tiny_config(alpha=0.5),
                              np.random.default_rng(5))
    assert math.isnan(rl_only.loss_sl)
    assert rl_only.rewards == mixed.rewards
    assert rl_only.loss_rl == mixed.loss_rl

def test_combined_step_updates_the_policy(features, samples):
    policy = make_policy(features)
    before = policy.state_dict()
    optimizer = Adam(policy.parameters(), 0.01)
    breakdown = combined_step(policy, demonstrations(samples)[:2], GraphBuilder(), None, tiny_config(alpha=1.0),
                              np.random.default_rng(0), optimizer)
    assert breakdown.loss is not None
    after = policy.state_dict()
    assert any(not np.array_equal(before[name], after[name]) for name in before)

def test_combined_loss_is_linear_in_alpha(features, samples):
    batch = demonstrations(samples)[:4]
    reward_model = make_reward(features)
    totals = {}
    with no_grad():
        for alpha in (0.0, 0.5, 1.0):
            breakdown = combined_loss(make_policy(features), batch, GraphBuilder(), reward_model,
                                      tiny_config(alpha=alpha), np.random.default_rng(5))
            totals[alpha] = breakdown.loss_total
    assert totals[0.5] == pytest.approx(0.5 * totals[0.0] + 0.5 * totals[1.0], abs=1e-9)

def test_policy_updates_leave_the_reward_model_alone(samples):
    policy = PolicyModel(MODEL, FeatureTable.embeddings(12, 20, 4, np.random.default_rng(1)), np.random.default_rng(0))
    reward_model = RewardModel(2, FeatureTable.embeddings(12, 20, 4, np.random.default_rng(2)),
                               np.random.default_rng(3), hidden=4)
    reward_model.zero_grad()
    before = reward_model.state_dict()
    optimizer = Adam(policy.parameters(), 0.01)
    breakdown = combined_step(policy, demonstrations(samples)[:3], GraphBuilder(), reward_model,
                              tiny_config(alpha=0.5), np.random.default_rng(0), optimizer)
    assert breakdown.loss is not None and len(breakdown.rewards) == 3
    for name, param in reward_model.parameters().items():
        assert not param.grad.any(), name
        np.testing.assert_array_equal(param.data, before[name])

def test_reward_trend_windows():
    rows = [CurveRow(i + 1, math.nan, 0.0, 0.0, float(i)) for i in range(6)]
    rows.append(CurveRow(7, 0.0, math.nan, 0.0, math.nan))
    assert reward_trend(rows, window=2) == (0.5, 4.5)
    assert reward_trend(rows[:1], window=2) is None
    with pytest.raises(ContractViolation):
        reward_trend(rows, window=0)

class LikedItemsReward:
    """+1 when every card item is liked, -1 when none is."""

    def __init__(self, liked):
        self.liked = set(liked)

    def reward(self, user, card):
        return 2.0 * sum(item in self.liked for item in card) / len(card) - 1.0

def test_training_reward_average_rises(features, demo):
    config = tiny_config(alpha=0.0, batch_size=1, learning_rate=0.05)
    reward_model = LikedItemsReward(demo.candidates[:2])
    run = run_training([demo] * 200, GraphBuilder(), make_policy(features), config, reward_model, fit_reward=False)
    assert len(run.curve) == 200
    first, last = reward_trend(run.curve)
    assert last > first

def test_run_training_writes_curves(tmp_path, features, samples):
    curve_path = tmp_path / "curve.csv"
    reward_path = tmp_path / "reward_curve.csv"
    events = []
    run = run_training(samples, GraphBuilder(), make_policy(features), tiny_config(), make_reward(features),
                       curve_path=str(curve_path), reward_curve_path=str(reward_path), on_event=events.append)
    assert len(run.curve) == 3
    assert [row.iteration for row in run.curve] == [1, 2, 3]
    assert all(row.p_at_k is None for row in run.curve)
    assert run.reward_result is not None
    lines = curve_path.read_text().splitlines()
    assert lines[0] == ",".join(CURVE_HEADER)
    assert len(lines) == 4
    assert reward_path.read_text().splitlines()[0] == "epoch,loss"
    assert events[0].startswith("Phase 1")
    assert run.infeasible == 0 and run.decodes > 0

def test_run_training_is_deterministic(features, samples):
    first = run_training(samples, GraphBuilder(), make_policy(features), tiny_config(epochs=2), make_reward(features))
    second = run_training(samples, GraphBuilder(), make_policy(features), tiny_config(epochs=2), make_reward(features))
    np.testing.assert_array_equal([r.loss_total for r in first.curve], [r.loss_total for r in second.curve])
    for name, value in first.policy.state_dict().items():
        np.testing.assert_array_equal(value, second.policy.state_dict()[name])

def test_alpha_one_skips_the_reward_phase(features, samples):
    events = []
    run = run_training(samples, GraphBuilder(), make_policy(features), tiny_config(alpha=1.0), on_event=events.append)
    assert run.reward_result is None
    assert "Phase 1 skipped" in events[0]
    assert all(math.isnan(row.mean_reward) for row in run.curve)

def test_holdout_rows_carry_metrics(features, samples):
    run = run_training(samples * 2, GraphBuilder(), make_policy(features), tiny_config(alpha=1.0, holdout=0.5))
    assert run.curve[-1].p_at_k is not None
    assert 0.0 <= run.curve[-1].hr_at_k <= 1.0

def test_run_training_needs_demonstrations(features, samples):
    unclicked = [s for s in samples if s.label == 0]
    with pytest.raises(DataError):
        run_training(unclicked, GraphBuilder(), make_policy(features), tiny_config(alpha=1.0))
    with pytest.raises(ConfigurationError):
        run_training(samples, GraphBuilder(), make_policy(features), tiny_config())

def test_infeasible_storm_threshold(features):
    policy = make_policy(features)
    assert not TrainingRun(policy, None, [], decodes=100, infeasible=1).infeasible_storm
    assert TrainingRun(policy, None, [], decodes=100, infeasible=2).infeasible_storm
    assert TrainingRun(policy, None, []).infeasible_rate == 0.0

def test_ablation_grid():
    settings = ablation_settings(0.3)
    assert [s.row for s in settings] == list(range(1, 8))
    assert [(s.alpha, s.policy_sampling, s.hill_climbing) for s in settings] == [
        (0.0, False, False), (0.0, False, True), (1.0, False, False), (1.0, True, False),
        (0.3, True, False), (0.3, False, True), (0.3, True, True),
    ]

def test_alpha_settings_follow_the_base_flags():
    settings = alpha_settings([0.0, 1.0], TrainConfig(policy_sampling=False))
    assert [s.name for s in settings] == ["alpha=0.0", "alpha=1.0"]
    assert not any(s.policy_sampling for s in settings)

def test_sweep_runs_and_writes_csv(tmp_path, world, features, samples):
    config = tiny_config()
    reward_model = fit_shared_reward(make_reward(features), samples, config)
    settings = alpha_settings([0.0, 1.0], config)
    rows = run_settings(settings, samples, samples, GraphBuilder(), lambda: make_policy(features), reward_model,
                        config, world=world)
    assert [row.setting.alpha for row in rows] == [0.0, 1.0]
    assert all(0.0 < row.report.oracle_ratio <= 1.0 + 1e-12 for row in rows)
    assert math.isnan(rows[1].train_reward)

    ablation_path = tmp_path / "ablation.csv"
    write_sweep_csv(rows, str(ablation_path))
    assert ablation_path.read_text().splitlines()[0] == ",".join(ABLATION_HEADER)
    alpha_path = tmp_path / "alpha.csv"
    write_sweep_csv(rows, str(alpha_path), kind="alpha")
    lines = alpha_path.read_text().splitlines()
    assert lines[0] == ",".join(ALPHA_HEADER)
    assert lines[1].startswith("0.0,")

@pytest.mark.slow
def test_trained_policy_beats_the_greedy_baseline():
    policy_p, policy_ratio, greedy_p, greedy_ratio = [], [], [], []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        world = OracleWorld.random(1250, 200, 8, rng)
        train, test = split(generate_oracle_dataset(world, DatasetSpec(3, 10), 1250, rng), 0.8, rng)
        features = FeatureTable.dense(world.user_vectors, world.item_vectors)
        config = TrainConfig(seed=seed)
        builder = GraphBuilder()
        run = run_training(train, builder, PolicyModel(ModelConfig(k=3, n=10), features, rng), config,
                           RewardModel(3, features, rng))
        learned = evaluate("policy_beam", test, builder, 3, policy=run.policy, world=world)
        scorer = PointwiseScorer(features, rng)
        train_pointwise(scorer, train, config.epochs, config.batch_size, config.learning_rate, rng)
        greedy = evaluate("greedy_baseline", test, builder, 3, node_weights=scorer, world=world)
        policy_p.append(learned.p_at_k)
        policy_ratio.append(learned.oracle_ratio)
        greedy_p.append(greedy.p_at_k)
        greedy_ratio.append(greedy.oracle_ratio)
    assert np.mean(policy_p) > np.mean(greedy_p)
    assert np.mean(policy_ratio) > np.mean(greedy_ratio)
