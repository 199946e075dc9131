"""
Testes de configuração: ambiente, arquivo chave=valor e schemas de experimento
"""

import logging
import os
from unittest.mock import patch

import pytest

from spicer.config import Config, configure_logging, get_config, merge_settings, parse_key_value_file
from spicer.exceptions import ConfigError
from spicer.models.enums import CsmMode, LossNorm, MaskKind
from spicer.models.schemas import ExperimentConfig, TrainConfig, TvConfig, build_experiment_config


class TestEnvironmentConfig:
    """Testes da configuração lida do ambiente."""

    def test_default_values(self):
        config = Config()
        assert config.numerics.precision == "f64"
        assert config.acquisition.mask_presets == {4: 24, 6: 24, 8: 8, 10: 5}
        assert config.validate()

    @patch.dict(os.environ, {"SPICER_PRECISION": "f32", "SPICER_WORKERS": "3", "SPICER_LOG_JSON": "true"})
    def test_config_from_env(self):
        config = Config()
        assert config.numerics.precision == "f32"
        assert config.training.workers == 3
        assert config.logging.json_output is True

    @patch.dict(os.environ, {"SPICER_PRECISION": "f16"})
    def test_invalid_env_rejected(self):
        get_config.cache_clear()
        try:
            with pytest.raises(ConfigError):
                get_config()
        finally:
            get_config.cache_clear()

    def test_get_config_singleton(self):
        assert get_config() is get_config()

    def test_configure_logging_sets_level(self):
        configure_logging("WARNING", json_output=True)
        root = logging.getLogger()
        assert root.level == logging.WARNING
        assert len(root.handlers) >= 1
        configure_logging("INFO", json_output=False)


class TestKeyValueFile:
    """Testes do arquivo de experimento."""

    def test_parse_with_comments(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("# desk\nh = 32\nmask-kind = random  # comentário\n\nlambda=0.05\n")
        assert parse_key_value_file(path) == {"h": "32", "mask_kind": "random", "lambda": "0.05"}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("h 32\n")
        with pytest.raises(ConfigError, match=":1:"):
            parse_key_value_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_key_value_file(tmp_path / "nada.cfg")

    def test_flags_override_file(self):
        merged = merge_settings({"h": "32", "r": "4"}, {"h": 64, "r": None, "seed": 9})
        assert merged == {"h": 64, "r": "4", "seed": 9}


class TestSchemas:
    """Testes dos schemas Pydantic."""

    def test_experiment_defaults(self):
        exp = ExperimentConfig()
        assert exp.kernel_hw == (5, 4)
        assert exp.csm_mode == CsmMode.LEARNED
        assert exp.loss_norm == LossNorm.L2

    def test_string_values_are_coerced(self):
        exp = build_experiment_config({"h": "32", "w": "32", "mask_kind": "random", "lambda": "0.2", "acs": "8"})
        assert exp.h == 32
        assert exp.mask_kind == MaskKind.RANDOM
        assert exp.lambda_smooth == pytest.approx(0.2)

    @pytest.mark.parametrize("values", [
        {"acs": 300},
        {"h": 31},
        {"csm_mode": "magic"},
        {"grappa_kernel": "5"},
        {"lr_schedule": "abc"},
        {"unknown": 1},
    ])
    def test_invalid_experiment(self, values):
        with pytest.raises(ConfigError):
            build_experiment_config(values)

    def test_train_config_from_experiment(self):
        train = build_experiment_config({"lr_schedule": "0:1e-3,10:1e-4", "features": "8,16,32", "h": 64}).to_train_config()
        assert train.lr_schedule == [(0, 1e-3), (10, 1e-4)]
        assert train.features == (8, 16, 32)
        assert train.depth == 2
        assert train.lr_at(9) == 1e-3
        assert train.lr_at(10) == 1e-4

    def test_tv_config_tau(self):
        exp = ExperimentConfig(tv_iters=7)
        assert exp.to_tv_config(0.05) == TvConfig(tau=0.05, outer_iters=7)
        with pytest.raises(ValueError):
            TvConfig(tau=0.0)

    def test_train_config_bounds(self):
        with pytest.raises(ValueError):
            TrainConfig(K=0)
        with pytest.raises(ValueError):
            TrainConfig(lr_schedule=[(0, -1.0)])
