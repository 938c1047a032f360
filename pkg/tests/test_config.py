import json
import math
import textwrap

import numpy as np
import pytest

from ermfg.config import ConfigError, default_output_dir, load_config, parse_config
from ermfg.environments import default_resource_allocation
from ermfg.serialization import game_to_dict, save_game, write_policy_csv

from conftest import CONFIG_DIR

BASE = textwrap.dedent("""\
    game:
      builtin: resource_allocation
      horizon: 4
    beta: 2.0
    """)


def test_builtin_game_uses_library_defaults():
    cfg = parse_config(BASE)
    spec, rho = default_resource_allocation(4)
    assert cfg.game.horizon == 4 and cfg.beta == 2.0
    assert np.array_equal(cfg.rho.probs, rho.probs)
    assert np.array_equal(cfg.game.mu0, spec.mu0)
    assert cfg.convergence is None and cfg.deviation is None
    assert len(cfg.digest) == 64


def test_bundled_configs_load():
    for name in ("beta3", "beta0.1", "unregularized"):
        cfg = load_config(CONFIG_DIR / f"resource_allocation_{name}.yaml")
        assert cfg.game.n_states == 5 and cfg.game.horizon == 5
        assert np.allclose(cfg.game.mu0, [0.3, 0, 0.4, 0.1, 0.2])
    assert math.isnan(cfg.beta) and not cfg.solver.regularized


def test_negative_beta_error_names_line():
    text = BASE.replace("beta: 2.0", "beta: -1")
    with pytest.raises(ConfigError) as err:
        parse_config(text, "run.yaml")
    assert err.value.line == 4
    assert str(err.value).startswith("run.yaml:4:")


def test_yaml_syntax_error_names_line():
    with pytest.raises(ConfigError) as err:
        parse_config("game:\n  builtin: [unclosed\nbeta: 1\n", "bad.yaml")
    assert err.value.line is not None and "parse error" in str(err.value)


def test_monte_carlo_block_requires_seed():
    text = BASE + "deviation:\n  n_list: [4, 8]\n  mc_reps: 10\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, "run.yaml")
    assert "seed" in err.value.message and err.value.line == 5


def test_bad_n_list_and_damping():
    with pytest.raises(ConfigError) as err:
        parse_config(BASE + "convergence:\n  n_list: [4, -1]\n  mc_reps: 3\n  seed: 1\n")
    assert err.value.line == 6
    with pytest.raises(ConfigError):
        parse_config(BASE + "solver:\n  damping: 1.5\n")


def test_beta_required_when_regularized():
    with pytest.raises(ConfigError) as err:
        parse_config("game:\n  builtin: resource_allocation\n")
    assert "beta" in err.value.message


def test_invalid_game_reports_diagnostics():
    text = "game:\n  builtin: resource_allocation\n  mu0: [0.5, 0.6, 0, 0, 0]\nbeta: 1\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, "x.yaml")
    assert "mu0" in err.value.message and err.value.line == 1


def test_unknown_builtin_and_missing_file(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config("game:\n  builtin: traffic\nbeta: 1\n")
    assert err.value.line == 2
    with pytest.raises(ConfigError):
        parse_config("game:\n  file: nowhere.json\nbeta: 1\n", base=tmp_path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_game_and_reference_from_files(tmp_path):
    spec, rho = default_resource_allocation(3)
    save_game(spec, tmp_path / "g.json")
    write_policy_csv(tmp_path / "rho.csv", rho)
    (tmp_path / "run.yaml").write_text("game:\n  file: g.json\nrho:\n  file: rho.csv\nbeta: 0.5\n")
    cfg = load_config(tmp_path / "run.yaml")
    assert np.array_equal(cfg.rho.probs, rho.probs)
    assert np.array_equal(cfg.game.reward.L, spec.reward.L)


def test_json_config_and_uniform_reference():
    spec, _ = default_resource_allocation(2)
    doc = {"game": {"inline": game_to_dict(spec)}, "rho": "uniform", "beta": 1.0}
    cfg = parse_config(json.dumps(doc))
    assert np.allclose(cfg.rho.probs, 1 / 3)


def test_overrides():
    cfg = parse_config(BASE + "deviation:\n  n_list: [4]\n  mc_reps: 3\n  seed: 1\n")
    new = cfg.with_overrides(seed=9, beta=0.5)
    assert new.beta == 0.5 and new.deviation.seed == 9 and new.bounds.seed == 9
    with pytest.raises(ConfigError):
        cfg.with_overrides(beta=-1.0)


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("ERMFG_OUTPUT_DIR", str(tmp_path / "results"))
    assert default_output_dir() == tmp_path / "results"
    monkeypatch.delenv("ERMFG_OUTPUT_DIR")
    assert default_output_dir().name == "ermfg-out"
