import pytest
import yaml

from roadgen import config
from roadgen.config import ConfigError, RunConfig


def test_defaults():
    cfg = RunConfig()
    assert cfg.analysis.budget_seconds == 7200 and cfg.analysis.n_samples == 100
    assert cfg.simulator.v_max == pytest.approx(70 / 3.6)
    assert cfg.simulator.tolerance == 0.3
    assert (cfg.ga.select_f1, cfg.ga.select_f2, cfg.ga.epochs) == (300, 200, 50)


def test_dump_load_roundtrip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(RunConfig().dump())
    assert config.load(path) == RunConfig()


def test_partial_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 7\nga:\n  epochs: 5\n  mutation_range: [-0.5, 0.5]\n")
    cfg = config.load(path)
    assert cfg.seed == 7 and cfg.ga.epochs == 5 and cfg.ga.mutation_range == (-0.5, 0.5)
    assert cfg.ga_config().rng_seed == 7
    assert cfg.discriminator_config().seed == 7


@pytest.mark.parametrize("text", [
    "bogus: 1\n",
    "ga: {epochs: 2.5}\n",
    "simulator: {tolerance: 1.5}\n",
    "ga: {select_f1: 10, select_f2: 20}\n",
    "discriminator: {d_model: 10, n_heads: 3}\n",
    "geometry: 3\n",
    "seed: [\n",
])
def test_invalid(tmp_path, text):
    path = tmp_path / "c.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        config.load(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        config.load(tmp_path / "none.yaml")


def test_override_validates():
    cfg = config.override(RunConfig(), "analysis", budget_seconds=60.0, n_samples=None)
    assert cfg.analysis.budget_seconds == 60.0 and cfg.analysis.n_samples == 100
    with pytest.raises(ConfigError):
        config.override(RunConfig(), "analysis", budget_seconds=-1.0)


def test_paths_resolve_under_workdir():
    cfg = config.override(RunConfig(), "paths", workdir="/tmp/run")
    assert str(cfg.path("dataset")) == "/tmp/run/dataset.jsonl"


def test_dump_is_plain_yaml():
    data = yaml.safe_load(RunConfig().dump())
    assert set(data) == {"paths", "geometry", "simulator", "seeding", "discriminator", "ga", "analysis", "seed"}
