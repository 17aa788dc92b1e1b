import pytest

from carbonrl.config import ConfigError, RunConfig


class TestDefaults:
    def test_defaults_validate(self):
        cfg = RunConfig.defaults()
        cfg.validate()
        env_cfg = cfg.env_config()
        assert env_cfg.epsilon == 0.1
        assert env_cfg.comm.k_rate == 1000e6
        assert env_cfg.infer.t_dc == pytest.approx(9.4608e7)
        assert env_cfg.constraints.t_trans_th == pytest.approx(5e-4)
        assert env_cfg.ranges.bandwidth.lo == 15e6
        trainer = cfg.trainer_config()
        assert trainer.batch_size == 512
        assert trainer.total_steps == 30000
        actor = cfg.actor_config()
        assert actor.t_snn == 10 and actor.hidden_sizes == (256, 256)

    def test_none_path_gives_defaults(self):
        assert RunConfig.load(None).values == RunConfig.defaults().values


class TestLoading:
    def test_overrides(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text(
            "[trainer]\nbatch_size = 64\ncritic_hidden = 32, 16\n"
            "[channel]\nepsilon = 0.05\n[snn]\nencoder_trainable = false\n"
        )
        cfg = RunConfig.load(p)
        assert cfg.trainer_config().batch_size == 64
        assert cfg.trainer_config().critic_hidden == (32, 16)
        assert cfg.env_config().epsilon == 0.05
        assert cfg.actor_config().encoder_trainable is False

    def test_unknown_section(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match="unknown section"):
            RunConfig.load(p)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[trainer]\nbatchsize = 64\n")
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.load(p)

    def test_bad_value(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[trainer]\nbatch_size = many\n")
        with pytest.raises(ConfigError):
            RunConfig.load(p)

    def test_bad_range_value(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[state_ranges]\nm = 5\n")
        with pytest.raises(ConfigError):
            RunConfig.load(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            RunConfig.load(tmp_path / "absent.ini")

    def test_invalid_policy(self):
        cfg = RunConfig.defaults()
        cfg.set("run", "policy", "ppo")
        with pytest.raises(ConfigError, match="policy"):
            cfg.validate()


class TestResolvedRoundTrip:
    def test_resolved_reloads_identically(self, tmp_path):
        cfg = RunConfig.defaults()
        cfg.set("trainer", "batch_size", 128)
        cfg.set("state_ranges", "m", (3.0, 9.0))
        path = cfg.write_resolved(tmp_path)
        again = RunConfig.load(path)
        assert again.values == cfg.values

    def test_resolved_mentions_units(self, tmp_path):
        text = RunConfig.defaults().resolved_text()
        assert "gCO2/kWh" in text
        assert "[MHz]" in text

    def test_out_root_env(self, tmp_path, monkeypatch):
        from carbonrl.config import OUT_ROOT_ENV_VAR

        cfg = RunConfig.defaults()
        cfg.set("run", "out_dir", "sub/run1")
        monkeypatch.setenv(OUT_ROOT_ENV_VAR, str(tmp_path))
        assert cfg.out_dir() == tmp_path / "sub/run1"
        cfg.set("run", "out_dir", str(tmp_path / "abs"))
        assert cfg.out_dir() == tmp_path / "abs"
