"""
Unit tests for configuration resolution
"""
import pytest

from config import SynthConfig, TrainConfig, build_config, flag_name, load_config_file
from errors import ConfigError


class TestBuildConfig:
    """Test config precedence and validation"""

    def test_defaults(self):
        """No sources leaves the documented defaults"""
        cfg = build_config(TrainConfig)
        assert cfg.k == 10
        assert cfg.lam == 0.05
        assert cfg.use_transition is True

    def test_precedence(self, tmp_path, monkeypatch):
        """flags > config file > environment > defaults"""
        monkeypatch.setenv("DDMP_K", "7")
        monkeypatch.setenv("DDMP_EPOCHS", "3")
        monkeypatch.setenv("DDMP_LAM", "0.2")
        path = tmp_path / "run.cfg"
        path.write_text("k = 9\nepochs = 4\n", encoding="utf-8")

        cfg = build_config(TrainConfig, {"k": "12"}, path)
        assert cfg.k == 12
        assert cfg.epochs == 4
        assert cfg.lam == 0.2
        assert cfg.batch_size == 256

    def test_base_is_overridden_by_file(self, tmp_path):
        """A stored config sits below the config file"""
        path = tmp_path / "run.cfg"
        path.write_text("n-draws = 3\n", encoding="utf-8")
        cfg = build_config(TrainConfig, config_file=path, base={"n_draws": 20, "k": 4})
        assert cfg.n_draws == 3
        assert cfg.k == 4

    def test_none_overrides_ignored(self):
        """Flags left unset do not clear values"""
        assert build_config(TrainConfig, {"k": None}, base={"k": 3}).k == 3

    def test_unknown_keys_ignored(self):
        """Keys of other models are dropped"""
        cfg = build_config(SynthConfig, {"epochs": "5", "classes": "3"})
        assert cfg.classes == 3

    def test_error_names_flag(self):
        """An out-of-range q is reported against --q"""
        with pytest.raises(ConfigError) as exc:
            build_config(TrainConfig, {"q": "1.5"})
        assert "--q" in str(exc.value)

    def test_error_uses_kebab_case(self):
        """Field names with underscores become dashed flags"""
        with pytest.raises(ConfigError) as exc:
            build_config(TrainConfig, {"batch_size": "0"})
        assert "--batch-size" in str(exc.value)

    @pytest.mark.parametrize("raw,expected", [("true", True), ("0", False), ("yes", True), ("false", False)])
    def test_bool_parsing(self, raw, expected):
        """String booleans from files and env vars"""
        assert build_config(TrainConfig, {"use_transition": raw}).use_transition is expected

    def test_odd_time_dim(self):
        """The time embedding needs an even width"""
        with pytest.raises(ConfigError) as exc:
            build_config(TrainConfig, {"time_dim": "7"})
        assert "--time-dim" in str(exc.value)

    def test_hidden_dim_divisibility(self):
        """hidden_dim has to split evenly into tokens"""
        with pytest.raises(ConfigError):
            build_config(TrainConfig, {"hidden_dim": "10", "n_tokens": "4"})

    def test_beta_order(self):
        """beta_start may not exceed beta_end"""
        with pytest.raises(ConfigError):
            build_config(TrainConfig, {"beta_start": "0.05", "beta_end": "0.01"})

    def test_synth_classes_bounded_by_n(self):
        """More classes than instances is rejected"""
        with pytest.raises(ConfigError):
            build_config(SynthConfig, {"n": "3", "classes": "4"})


class TestConfigFile:
    """Test the flat config file reader"""

    def test_keys_normalized(self, tmp_path):
        """Dashed and upper-case keys map to field names"""
        path = tmp_path / "a.cfg"
        path.write_text("# comment\nBATCH-SIZE = 32\nlam=0.1\n", encoding="utf-8")
        assert load_config_file(path) == {"batch_size": "32", "lam": "0.1"}

    def test_missing_file(self, tmp_path):
        """A missing config file is a config error"""
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "absent.cfg")

    def test_flag_name(self):
        assert flag_name("use_complementarity") == "--use-complementarity"
