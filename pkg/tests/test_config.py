import pytest

from mmdiv.config import ConfigError, load_config, parse_config

MINIMAL = {
    "model": {
        "states": ["base"],
        "generator": [[0.0]],
        "beta": 1.5,
        "discount": 0.1,
        "regime": {"base": {"mu": 1.0}},
    },
    "clock": {"kind": "deterministic", "delta": 1.0},
}


def doc(**overrides):
    import copy
    d = copy.deepcopy(MINIMAL)
    for key, val in overrides.items():
        section, _, field = key.partition(".")
        if field:
            d.setdefault(section, {})[field] = val
        else:
            d[section] = val
    return d


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.spec.n_states == 1
        assert cfg.n_nodes == 257 and cfg.n_paths == 20000
        assert cfg.seed == 0 and cfg.x_max is None
        assert cfg.clock.kind == "deterministic"

    def test_two_state_with_jumps(self):
        d = doc()
        d["model"] = {
            "states": ["a", "b"],
            "generator": [[-0.5, 0.5], [0.5, -0.5]],
            "beta": 1.3,
            "discount": [0.08, 0.12],
            "regime": {
                "a": {"mu": 1.0, "sigma": 0.5},
                "b": {"mu": -0.5, "sigma": 1.0, "jump_rate": 0.2,
                      "jump_law": {"kind": "exp_down", "mean": 1.0}},
            },
        }
        cfg = parse_config(d)
        assert cfg.spec.regimes[1].jump_law.mean == 1.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key 'volatility'"):
            parse_config(doc(**{"model.volatility": 1.0}))

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(doc(extras={"a": 1}))

    def test_negative_n_paths_names_field(self):
        with pytest.raises(ConfigError, match="n_paths"):
            parse_config(doc(mc={"n_paths": -5}))

    def test_duplicate_states(self):
        d = doc()
        d["model"]["states"] = ["base", "base"]
        d["model"]["generator"] = [[0.0, 0.0], [0.0, 0.0]]
        d["model"]["regime"] = {"base": {"mu": 1.0}}
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(d)

    def test_small_grid_rejected(self):
        with pytest.raises(ConfigError, match="n_nodes"):
            parse_config(doc(grid={"n_nodes": 8}))

    def test_beta_not_above_one_rejected(self):
        with pytest.raises(ConfigError, match="beta"):
            parse_config(doc(**{"model.beta": 1.0}))

    def test_missing_regime_table(self):
        d = doc()
        del d["model"]["regime"]["base"]
        with pytest.raises(ConfigError, match="regime"):
            parse_config(d)

    def test_jump_rate_without_law(self):
        d = doc()
        d["model"]["regime"]["base"]["jump_rate"] = 0.5
        with pytest.raises(ConfigError, match="jump_law"):
            parse_config(d)

    def test_bad_clock(self):
        with pytest.raises(ConfigError, match="clock"):
            parse_config(doc(clock={"kind": "weibull"}))

    def test_generator_shape_checked(self):
        d = doc()
        d["model"]["generator"] = [[0.0, 0.0]]
        with pytest.raises(ConfigError, match="generator"):
            parse_config(d)

    def test_error_list_collects_multiple(self):
        d = doc(mc={"n_paths": -1, "dt": -2})
        with pytest.raises(ConfigError) as exc:
            parse_config(d)
        assert len(exc.value.errors) >= 2


class TestLoad:
    def test_load_repo_configs(self):
        from pathlib import Path
        root = Path(__file__).resolve().parent.parent / "configs"
        for name in ("drift_up", "drift_down", "zero", "two_state"):
            cfg = load_config(str(root / f"{name}.toml"))
            assert cfg.n_paths > 0

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("configs/nope.toml")

    def test_parse_error_reports_path(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[model\n")
        with pytest.raises(ConfigError, match="bad.toml"):
            load_config(str(bad))
