import pytest
import io
import json
import os
from unittest.mock import patch

from rich.console import Console

from exactk.cli.components.command_runner import CommandRunner, manifest_beside, parse_alphas
from exactk.cli.components.dataset_loader import constraint_from, load_dataset
from exactk.cli.components.training_log import TrainingLog
from exactk.cli.interface import (
    EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_USAGE, ExactKInterface, exit_code_for,
)
from exactk.core.errors import (
    ConfigurationError, ContractViolation, DataError, InfeasibleError, SampleParseError,
)
from exactk.core.settings import SEED_ENV
from exactk.training.experiments import DEFAULT_ALPHAS

TINY_CONFIG = """\
feature_dim=4
d_x=4
d_h=4
d_k=2
heads=1
layers=1
d_ff=4
rnn_units=4
epochs=1
batch_size=8
m=2
holdout=0.0
reward_epochs=1
reward_hidden=4
"""

@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)

@pytest.fixture
def console():
    return Console(file=io.StringIO(), width=120)

@pytest.fixture
def interface(console):
    return ExactKInterface(console)

@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return str(path)

def gen_data(interface, out, *extra):
    argv = ["gen-data", "--k", "2", "--n", "5", "--users", "12", "--items", "20", "--dim", "3", "--seed", "1",
            "--out", str(out)]
    return interface.run(argv + list(extra))

@pytest.fixture
def data_dir(tmp_path, interface):
    out = tmp_path / "data"
    assert gen_data(interface, out) == EXIT_OK
    return str(out)

@pytest.fixture
def trained(tmp_path, interface, data_dir, config_path):
    out = tmp_path / "run"
    assert interface.run(["train", "--data", data_dir, "--config", config_path, "--out", str(out)]) == EXIT_OK
    return str(out)

def read_manifest(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)

def test_gen_data_writes_splits_world_and_manifest(data_dir):
    assert sorted(os.listdir(data_dir)) == ["manifest.json", "test.tsv", "train.tsv", "world.exka"]
    manifest = read_manifest(os.path.join(data_dir, "manifest.json"))
    assert manifest["command"] == "gen-data"
    assert manifest["seed"] == 1
    assert (manifest["config"]["train_samples"], manifest["config"]["test_samples"]) == (19, 5)
    dataset = load_dataset(data_dir)
    assert (dataset.mode, dataset.k, dataset.n) == ("oracle", 2, 5)
    assert len(dataset.train) == 19

def test_gen_data_is_reproducible(tmp_path, interface, data_dir):
    again = tmp_path / "again"
    assert gen_data(interface, again) == EXIT_OK
    for name in ("train.tsv", "test.tsv", "world.exka"):
        with open(os.path.join(data_dir, name), "rb") as a, open(again / name, "rb") as b:
            assert a.read() == b.read()

def test_train_writes_checkpoints_and_curves(trained):
    for name in ("policy.exka", "reward.exka", "curve.csv", "reward_curve.csv", "manifest.json"):
        assert os.path.exists(os.path.join(trained, name)), name
    manifest = read_manifest(os.path.join(trained, "manifest.json"))
    assert manifest["command"] == "train"
    assert manifest["config"]["d_h"] == "4"
    assert manifest["config"]["seed"] == "0"
    assert set(manifest["outputs"]) == {"policy", "curve", "reward", "reward_curve"}

def test_train_reruns_are_byte_identical(tmp_path, interface, data_dir, config_path, trained):
    rerun = tmp_path / "rerun"
    assert interface.run(["train", "--data", data_dir, "--config", config_path, "--out", str(rerun)]) == EXIT_OK
    for name in ("policy.exka", "reward.exka", "curve.csv"):
        with open(os.path.join(trained, name), "rb") as a, open(rerun / name, "rb") as b:
            assert a.read() == b.read(), name

def test_alpha_one_trains_without_reward(tmp_path, interface, data_dir, config_path):
    out = tmp_path / "sl"
    argv = ["train", "--data", data_dir, "--config", config_path, "--alpha", "1", "--policy-sampling", "off",
            "--out", str(out)]
    assert interface.run(argv) == EXIT_OK
    assert not (out / "reward.exka").exists()
    assert read_manifest(out / "manifest.json")["config"]["policy_sampling"] == "false"

def test_eval_reports_every_method(tmp_path, interface, data_dir, config_path, trained):
    report = tmp_path / "report.csv"
    argv = ["eval", "--data", data_dir, "--config", config_path, "--policy", os.path.join(trained, "policy.exka"),
            "--reward", os.path.join(trained, "reward.exka"), "--report", str(report),
            "--method", "policy_beam", "--method", "greedy_baseline", "--method", "brute_force_oracle"]
    assert interface.run(argv) == EXIT_OK
    lines = report.read_text().splitlines()
    assert lines[0].startswith("method,n,p_at_k")
    assert [line.split(",")[0] for line in lines[1:]] == ["policy_beam", "greedy_baseline", "brute_force_oracle"]
    manifest = read_manifest(tmp_path / "report.manifest.json")
    assert manifest["command"] == "eval"
    assert manifest["config"]["methods"] == "policy_beam,greedy_baseline,brute_force_oracle"

def test_export_attention(tmp_path, interface, data_dir, trained):
    out = tmp_path / "attention.csv"
    argv = ["export-attention", "--policy", os.path.join(trained, "policy.exka"), "--data", data_dir,
            "--sample-index", "1", "--out", str(out)]
    assert interface.run(argv) == EXIT_OK
    assert len(out.read_text().splitlines()) == 1 + 1 * 1 * 5 * 5
    assert (tmp_path / "attention.manifest.json").exists()

def test_export_attention_rejects_bad_index(tmp_path, interface, data_dir, trained):
    argv = ["export-attention", "--policy", os.path.join(trained, "policy.exka"), "--data", data_dir,
            "--sample-index", "99", "--out", str(tmp_path / "a.csv")]
    assert interface.run(argv) == EXIT_USAGE

def test_beam_sweep(tmp_path, interface, data_dir, config_path, trained):
    out = tmp_path / "beam.csv"
    argv = ["sweep", "--kind", "beam", "--data", data_dir, "--config", config_path, "--max-beam", "2",
            "--policy", os.path.join(trained, "policy.exka"), "--out", str(out)]
    assert interface.run(argv) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("beam_size,")
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]

def test_alpha_sweep(tmp_path, interface, data_dir, config_path):
    out = tmp_path / "alpha.csv"
    argv = ["sweep", "--kind", "alpha", "--alphas", "0,1", "--data", data_dir, "--config", config_path,
            "--out", str(out)]
    assert interface.run(argv) == EXIT_OK
    lines = out.read_text().splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == ["0.0", "1.0"]
    assert read_manifest(tmp_path / "alpha.manifest.json")["config"]["alphas"] == "0.0,1.0"

def test_ablation_sweep_has_seven_rows(tmp_path, interface, data_dir, config_path):
    out = tmp_path / "ablation.csv"
    argv = ["sweep", "--data", data_dir, "--config", config_path, "--out", str(out)]
    assert interface.run(argv) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 8
    assert lines[1].split(",")[:2] == ["1", "RL w/o hill-climbing"]

def test_implicit_pipeline_uses_id_embeddings(tmp_path, interface, config_path):
    data = tmp_path / "implicit"
    argv = ["gen-data", "--mode", "implicit", "--k", "2", "--n", "5", "--users", "10", "--items", "60",
            "--seed", "2", "--out", str(data)]
    assert interface.run(argv) == EXIT_OK
    assert not (data / "world.exka").exists()
    run = tmp_path / "run"
    argv = ["train", "--data", str(data), "--config", config_path, "--out", str(run)]
    assert interface.run(argv) == EXIT_OK
    report = tmp_path / "report.csv"
    argv = ["eval", "--data", str(data), "--config", config_path, "--policy", str(run / "policy.exka"),
            "--reward", str(run / "reward.exka"), "--report", str(report)]
    assert interface.run(argv) == EXIT_OK
    assert report.read_text().splitlines()[1].startswith("policy_beam,")

@pytest.mark.parametrize("argv", [
    [],
    ["launch"],
    ["gen-data"],
    ["gen-data", "--k", "two", "--out", "x"],
    ["train", "--data", "d", "--out", "o", "--policy-sampling", "maybe"],
])
def test_usage_errors_exit_2(interface, argv):
    assert interface.run(argv) == EXIT_USAGE

def test_invalid_dataset_shape_exits_2(tmp_path, interface):
    assert interface.run(["gen-data", "--k", "5", "--n", "5", "--out", str(tmp_path / "d")]) == EXIT_USAGE
    assert interface.run(["gen-data", "--constraint", "min_ned", "--out", str(tmp_path / "d")]) == EXIT_USAGE
    argv = ["gen-data", "--mode", "implicit", "--constraint", "min_ned", "--tau", "0.5", "--out", str(tmp_path / "d")]
    assert interface.run(argv) == EXIT_USAGE

def test_bad_alpha_exits_2(tmp_path, interface, data_dir):
    argv = ["train", "--data", data_dir, "--alpha", "2", "--out", str(tmp_path / "o")]
    assert interface.run(argv) == EXIT_USAGE

def test_unknown_method_exits_2(tmp_path, interface, data_dir):
    argv = ["eval", "--data", data_dir, "--method", "random", "--report", str(tmp_path / "r.csv")]
    assert interface.run(argv) == EXIT_USAGE

def test_eval_without_policy_exits_2(tmp_path, interface, data_dir):
    assert interface.run(["eval", "--data", data_dir, "--report", str(tmp_path / "r.csv")]) == EXIT_USAGE

def test_missing_data_exits_3(tmp_path, interface):
    argv = ["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]
    assert interface.run(argv) == EXIT_IO

@pytest.mark.parametrize("command", ["train", "sweep"])
def test_missing_config_exits_3(tmp_path, interface, data_dir, command):
    argv = [command, "--data", data_dir, "--config", str(tmp_path / "typo.cfg"), "--out", str(tmp_path / "o")]
    assert interface.run(argv) == EXIT_IO
    assert not (tmp_path / "o").exists()

def test_eval_with_missing_config_exits_3(tmp_path, interface, data_dir):
    argv = ["eval", "--data", data_dir, "--config", str(tmp_path / "typo.cfg"), "--method", "greedy_baseline",
            "--report", str(tmp_path / "r.csv")]
    assert interface.run(argv) == EXIT_IO
    assert not (tmp_path / "r.csv").exists()

def test_corrupt_samples_exit_3(tmp_path, interface, data_dir, config_path):
    with open(os.path.join(data_dir, "train.tsv"), "a", encoding="utf-8") as f:
        f.write("1\t1,2\tnot-ids\t1\t1\n")
    argv = ["train", "--data", data_dir, "--config", config_path, "--out", str(tmp_path / "o")]
    assert interface.run(argv) == EXIT_IO

def test_foreign_directory_exits_3(tmp_path, interface, trained):
    argv = ["train", "--data", trained, "--out", str(tmp_path / "o")]
    assert interface.run(argv) == EXIT_IO

def test_infeasible_run_exits_4(tmp_path, console):
    with patch.object(CommandRunner, "gen_data", side_effect=InfeasibleError("no clique")):
        interface = ExactKInterface(console)
        assert interface.run(["gen-data", "--out", str(tmp_path / "d")]) == EXIT_INFEASIBLE
    assert "no clique" in console.file.getvalue()

def test_unexpected_error_exits_1(tmp_path, console):
    with patch.object(CommandRunner, "gen_data", side_effect=RuntimeError("boom")):
        interface = ExactKInterface(console)
        assert interface.run(["gen-data", "--out", str(tmp_path / "d")]) == EXIT_FAILURE

@pytest.mark.parametrize("error, code", [
    (InfeasibleError("x"), EXIT_INFEASIBLE),
    (FloatingPointError("x"), EXIT_INFEASIBLE),
    (SampleParseError("x", 2), EXIT_IO),
    (DataError("x"), EXIT_IO),
    (FileNotFoundError("x"), EXIT_IO),
    (ConfigurationError("x"), EXIT_USAGE),
    (ContractViolation("x"), EXIT_USAGE),
    (KeyError("x"), EXIT_FAILURE),
])
def test_exit_code_for(error, code):
    assert exit_code_for(error) == code

def test_parse_alphas():
    assert parse_alphas(None) == list(DEFAULT_ALPHAS)
    assert parse_alphas("0, 0.5,1") == [0.0, 0.5, 1.0]
    with pytest.raises(ConfigurationError):
        parse_alphas("0,half")

def test_manifest_beside():
    assert manifest_beside("out/report.csv") == "report.manifest.json"

def test_constraint_from_config():
    assert constraint_from({"constraint": "none"}).kind == "none"
    assert constraint_from({"constraint": "min_ned", "tau": 0.4}).tau == 0.4
    with pytest.raises(ConfigurationError, match="--tau"):
        constraint_from({"constraint": "min_ned", "tau": None})

def test_training_log_renders_lines(console):
    log = TrainingLog("Training")
    log.add("Phase 1 done")
    log.complete()
    console.print(log)
    text = console.file.getvalue()
    assert "Phase 1 done" in text
    assert "Done" in text
