import json

import pytest

from exactk.core.errors import ConfigurationError, DataError, ExactKError, SampleParseError
from exactk.core.manifest import RunManifest, artifact_version
from exactk.core.settings import DEFAULT_SETTINGS, SEED_ENV, Settings, coerce

@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# small run\nalpha = 0.25\npolicy_sampling=off\nd_h=8  # wider\n\nepochs=3\n")
    return path

def test_defaults_without_a_file():
    settings = Settings()
    assert settings.data == DEFAULT_SETTINGS
    assert settings.alpha == 0.5
    assert settings.beam_size == 3

def test_load_reads_typed_values(config_file):
    settings = Settings(str(config_file))
    assert settings.get("alpha") == 0.25
    assert settings.get("policy_sampling") is False
    assert settings.get("d_h") == 8
    assert settings.get("epochs") == 3
    assert settings.explicit == {"alpha", "policy_sampling", "d_h", "epochs"}

def test_missing_file_is_a_data_error(tmp_path):
    with pytest.raises(DataError, match="absent.cfg"):
        Settings(str(tmp_path / "absent.cfg"))

@pytest.mark.parametrize("text, message", [
    ("colour=blue\n", "unknown setting"),
    ("alpha\n", "expected key=value"),
    ("epochs=ten\n", "cannot read"),
    ("hill_climbing=maybe\n", "boolean"),
    ("m=2\nm=3\n", "already set on line 1"),
])
def test_bad_config_lines(tmp_path, text, message):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigurationError, match=message):
        Settings(str(path))

def test_bad_line_is_located(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("alpha=0.1\n\nepochs=x\n")
    with pytest.raises(ConfigurationError, match="bad.cfg:3"):
        Settings(str(path))

@pytest.mark.parametrize("key, raw, expected", [
    ("alpha", "1", 1.0),
    ("epochs", " 4 ", 4),
    ("hill_climbing", "ON", True),
    ("policy_sampling", False, False),
    ("policy_sampling_feed", "greedy", "greedy"),
])
def test_coerce(key, raw, expected):
    value = coerce(key, raw)
    assert value == expected
    assert type(value) is type(expected)

def test_save_and_reload(tmp_path):
    path = tmp_path / "saved.cfg"
    settings = Settings()
    settings.path = str(path)
    settings.override("alpha", 0.75)
    settings.override("hill_climbing", "off")
    settings.save()
    reloaded = Settings(str(path))
    assert reloaded.data == settings.data
    assert not (tmp_path / "saved.cfg.tmp").exists()
    with pytest.raises(ConfigurationError):
        Settings().save()

def test_override_ignores_none():
    settings = Settings()
    settings.override("epochs", None)
    assert "epochs" not in settings.explicit
    settings.override("epochs", 2)
    assert settings.get("epochs") == 2

def test_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert Settings().resolve_seed() == 0
    monkeypatch.setenv(SEED_ENV, "41")
    assert Settings().resolve_seed() == 41
    path = tmp_path / "seeded.cfg"
    path.write_text("seed=7\n")
    assert Settings(str(path)).resolve_seed() == 7
    assert Settings(str(path)).resolve_seed(3) == 3

def test_bad_seed_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "abc")
    with pytest.raises(ConfigurationError, match=SEED_ENV):
        Settings().resolve_seed()

def test_model_and_train_configs(config_file, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    settings = Settings(str(config_file))
    model = settings.model_config(4, 20)
    assert (model.k, model.n, model.d_h) == (4, 20, 8)
    train = settings.train_config(seed=9)
    assert (train.alpha, train.policy_sampling, train.epochs, train.seed) == (0.25, False, 3, 9)
    with pytest.raises(ConfigurationError):
        settings.model_config(21, 20)

def test_snapshot_renders_strings():
    snapshot = Settings().snapshot()
    assert snapshot["alpha"] == "0.5"
    assert snapshot["hill_climbing"] == "true"
    assert set(snapshot) == set(DEFAULT_SETTINGS)

def test_manifest_write_and_read(tmp_path):
    manifest = RunManifest("train", 4, {"alpha": "0.5"}, {"data": "d/"}, {"policy": "p.exka"}, "v1", 1.5)
    path = manifest.write(str(tmp_path))
    assert path.endswith("manifest.json")
    assert json.loads(open(path, encoding="utf-8").read())["seed"] == 4
    assert RunManifest.read(path) == manifest

def test_artifact_version_is_a_string():
    assert isinstance(artifact_version(), str)
    assert artifact_version()

def test_error_hierarchy():
    error = SampleParseError("bad", 3)
    assert isinstance(error, DataError)
    assert isinstance(error, ExactKError)
    assert str(error) == "line 3: bad"
