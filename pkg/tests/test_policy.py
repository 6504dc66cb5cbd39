import pytest
import numpy as np

from exactk.core.errors import ConfigurationError, ContractViolation, InfeasibleError
from exactk.data.samples import Sample
from exactk.graph.constraint import ConstraintGraph, complete_graph
from exactk.model.config import ModelConfig
from exactk.model.features import FeatureTable
from exactk.model.policy import PolicyModel
from exactk.numcore.gradcheck import check_gradients
from exactk.numcore.tensor import Tensor

def small_config(**overrides):
    values = dict(k=2, n=5, feature_dim=3, d_x=4, d_h=4, d_k=2, heads=2, layers=2, d_ff=4, rnn_units=4)
    values.update(overrides)
    return ModelConfig(**values)

@pytest.fixture
def rng():
    return np.random.default_rng(21)

@pytest.fixture
def features(rng):
    return FeatureTable.dense(rng.normal(size=(3, 3)), rng.normal(size=(10, 3)))

@pytest.fixture
def policy(features, rng):
    return PolicyModel(small_config(), features, rng)

@pytest.fixture
def sample():
    return Sample(user_id=1, card=(3, 7), candidates=(1, 3, 5, 7, 9), label=1, positive_item=7)

def test_default_config_values():
    config = ModelConfig()
    assert (config.beam_size, config.heads, config.layers, config.rnn_units, config.feature_dim) == (3, 2, 2, 32, 16)

@pytest.mark.parametrize("overrides", [{"k": 6}, {"heads": 0}, {"d_h": -1}])
def test_config_validation(overrides):
    with pytest.raises(ConfigurationError):
        small_config(**overrides).validate()

def test_config_manifest_round_trip():
    config = small_config(beam_size=4)
    assert ModelConfig.from_manifest(config.to_manifest()) == config

def test_embed_input_with_zero_weights_is_zero(policy, features, sample):
    policy.fill(0.0, ["W_I", "b_I"])
    x = policy.embed_input(features.items(sample.candidates), features.users(sample.user_id))
    np.testing.assert_array_equal(x.data, np.zeros((5, 4)))

def test_embed_input_relu_floor(policy, features, sample):
    policy.fill(-1e3, ["b_I"])
    x = policy.embed_input(features.items(sample.candidates), features.users(sample.user_id))
    assert x.shape == (5, policy.config.d_x)
    assert (x.data == 0.0).all()

def test_embed_input_rejects_wrong_width(policy):
    with pytest.raises(ContractViolation, match="embed_input"):
        policy.embed_input(Tensor(np.ones((5, 2))), Tensor(np.ones(3)))

def test_encoder_is_permutation_equivariant(policy, rng):
    for _ in range(100):
        x = rng.normal(size=(5, 4))
        perm = rng.permutation(5)
        h = policy.encode(Tensor(x)).data
        h_perm = policy.encode(Tensor(x[perm])).data
        assert np.abs(h_perm - h[perm]).max() < 1e-9

def test_single_node_attends_to_itself(policy, rng):
    weights = []
    policy.encode(Tensor(rng.normal(size=(1, 4))), weights)
    assert len(weights) == policy.config.layers * policy.config.heads
    for matrix in weights:
        np.testing.assert_allclose(matrix, [[1.0]])

def test_attention_rows_sum_to_one(policy, rng):
    weights = []
    policy.encode(Tensor(rng.normal(size=(5, 4)) * 3), weights)
    for matrix in weights:
        np.testing.assert_allclose(matrix.sum(axis=-1), 1.0, atol=1e-9)

def test_layer_parameters_are_distinct(policy):
    first = policy.params["encoder.0.mhsa.W_h0"]
    second = policy.params["encoder.1.mhsa.W_h0"]
    assert first is not second
    assert not np.array_equal(first.data, second.data)
    assert "decoder.1.W" in policy.params

def test_initial_state_runs_cells_on_zeros(policy, sample):
    encoded = policy.encode_sample(sample)
    state = policy.initial_state(encoded)
    x = Tensor(np.zeros(policy.config.d_h))
    for cell in policy.decoder:
        x, _ = cell(x, cell.zero_state())
    np.testing.assert_allclose(state.top.data, x.data)
    assert state.mask.all()
    assert state.prefix == ()

def test_single_feasible_node_gets_all_mass(policy, sample):
    encoded = policy.encode_sample(sample)
    state = policy.initial_state(encoded)
    state.mask = np.array([False, False, False, True, False])
    probs = policy.decode_step(state, encoded).data
    assert probs[3] == pytest.approx(1.0)
    assert probs[[0, 1, 2, 4]].max() < 1e-12

def test_zero_parameters_give_uniform_distribution(policy, sample):
    policy.fill(0.0)
    encoded = policy.encode_sample(sample)
    state = policy.initial_state(encoded)
    state.mask = np.array([True, False, True, True, False])
    probs = policy.decode_step(state, encoded).data
    np.testing.assert_allclose(probs, [1 / 3, 0.0, 1 / 3, 1 / 3, 0.0], atol=1e-12)

def test_masked_nodes_carry_no_mass(policy, sample, rng):
    encoded = policy.encode_sample(sample)
    for _ in range(100):
        state = policy.initial_state(encoded)
        state.mask = rng.random(5) < 0.5
        state.mask[rng.integers(5)] = True
        probs = policy.decode_step(state, encoded).data
        assert probs[~state.mask].max(initial=0.0) < 1e-12
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)

def test_empty_mask_is_infeasible(policy, sample):
    encoded = policy.encode_sample(sample)
    state = policy.initial_state(encoded)
    state.mask = np.zeros(5, dtype=bool)
    with pytest.raises(InfeasibleError):
        policy.decode_step(state, encoded)

def test_advance_on_complete_graph_masks_only_the_choice(policy, sample):
    encoded = policy.encode_sample(sample)
    graph = complete_graph(sample.candidates)
    state = policy.advance_state(policy.initial_state(encoded), 2, graph, encoded)
    assert state.prefix == (2,)
    assert state.mask.tolist() == [True, True, False, True, True]
    assert state.log_prob < 0.0

def test_advance_masks_isolated_node(policy, sample):
    adjacency = ~np.eye(5, dtype=bool)
    adjacency[4, :] = adjacency[:, 4] = False
    graph = ConstraintGraph(adjacency, sample.candidates)
    encoded = policy.encode_sample(sample)
    state = policy.advance_state(policy.initial_state(encoded), 0, graph, encoded)
    assert not state.mask[4]
    with pytest.raises(ContractViolation, match="masked"):
        policy.advance_state(state, 0, graph, encoded)

def test_target_log_probs_skip_masked_targets(policy, sample):
    encoded = policy.encode_sample(sample)
    graph = complete_graph(sample.candidates)
    terms = policy.target_log_probs(encoded, graph, feed=[1, 3], targets=[1, 1])
    assert terms[0] is not None
    assert terms[1] is None

def test_card_log_prob_gradients_match_finite_differences(features, sample):
    policy = PolicyModel(small_config(), features, np.random.default_rng(2))
    graph = complete_graph(sample.candidates)
    nodes = sample.card_nodes()

    def loss():
        encoded = policy.encode_sample(sample)
        terms = policy.target_log_probs(encoded, graph, nodes, nodes)
        return terms[0] + terms[1]

    errors = check_gradients(loss, policy.parameters())
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-3, worst

def test_save_and_load_dense_policy(tmp_path, policy, features, sample):
    path = str(tmp_path / "policy.exka")
    policy.save(path)
    loaded = PolicyModel.load(path, features)
    assert loaded.config == policy.config
    np.testing.assert_array_equal(loaded.encode_sample(sample).h.data, policy.encode_sample(sample).h.data)
    with pytest.raises(ConfigurationError, match="dense features"):
        PolicyModel.load(path)

def test_save_and_load_id_embedding_policy(tmp_path, rng, sample):
    features = FeatureTable.embeddings(3, 10, 3, rng)
    policy = PolicyModel(small_config(), features, rng)
    path = str(tmp_path / "policy.exka")
    policy.save(path)
    loaded = PolicyModel.load(path)
    assert loaded.features.mode == "ids"
    np.testing.assert_array_equal(loaded.params["features.item_embedding"].data, features.params["item_embedding"].data)
