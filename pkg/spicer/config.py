"""
spicer/config.py
Configurações centralizadas do SPICER
"""

import os
import logging
import logging.handlers
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog
from dotenv import load_dotenv

from spicer.exceptions import ConfigError
from spicer.models.enums import Precision

load_dotenv()

logger = logging.getLogger(__name__)


def _env_bool(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).lower() == "true"

# =================== Seções ===================

@dataclass
class PathsConfig:
    """Diretório base das execuções"""
    runs_dir: Path = field(default_factory=lambda: Path(os.getenv("SPICER_RUNS_DIR", "runs")))


@dataclass
class NumericsConfig:
    """Configurações numéricas"""
    precision: str = field(default_factory=lambda: os.getenv("SPICER_PRECISION", Precision.F64.value))
    fft_workers: int = field(default_factory=lambda: int(os.getenv("SPICER_FFT_WORKERS", "1")))
    rss_floor: float = 1e-12


@dataclass
class LoggingConfig:
    """Configurações de logging"""
    level: str = field(default_factory=lambda: os.getenv("SPICER_LOG_LEVEL", "INFO"))
    json_output: bool = field(default_factory=lambda: _env_bool("SPICER_LOG_JSON"))
    log_file: Optional[str] = field(default_factory=lambda: os.getenv("SPICER_LOG_FILE") or None)
    max_bytes: int = 10 * 1024 * 1024  # 10MB
    backup_count: int = 3


@dataclass
class TrainingDefaults:
    """Valores padrão do treinamento vindos do ambiente"""
    workers: int = field(default_factory=lambda: int(os.getenv("SPICER_WORKERS", "1")))


@dataclass
class AcquisitionDefaults:
    """Valores padrão da simulação"""
    coil_width_factor: float = 0.6
    noise_factor: float = 0.01
    # R -> linhas ACS
    mask_presets: Dict[int, int] = field(default_factory=lambda: {4: 24, 6: 24, 8: 8, 10: 5})

# =================== Configuração principal ===================

@dataclass
class Config:
    """Configuração principal do sistema"""
    paths: PathsConfig = field(default_factory=PathsConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    training: TrainingDefaults = field(default_factory=TrainingDefaults)
    acquisition: AcquisitionDefaults = field(default_factory=AcquisitionDefaults)

    def validate(self) -> bool:
        """Valida configurações"""
        errors = []

        if self.numerics.precision not in [p.value for p in Precision]:
            errors.append(f"Precisão desconhecida: {self.numerics.precision}")
        if self.numerics.fft_workers < 1:
            errors.append("SPICER_FFT_WORKERS deve ser >= 1")
        if self.training.workers < 1:
            errors.append("SPICER_WORKERS deve ser >= 1")
        if self.logging.level.upper() not in logging._nameToLevel:
            errors.append(f"Nível de log inválido: {self.logging.level}")

        if errors:
            for error in errors:
                logger.error(f"Configuration error: {error}")
            return False

        return True


@lru_cache(maxsize=1)
def get_config() -> Config:
    """Retorna instância singleton da configuração"""
    config = Config()
    if not config.validate():
        raise ConfigError("Configuração de ambiente inválida")
    return config

# =================== Logging ===================

def configure_logging(level: Optional[str] = None, json_output: Optional[bool] = None) -> None:
    """Configura o logging raiz através do structlog"""
    cfg = get_config().logging
    level = (level or cfg.level).upper()
    json_output = cfg.json_output if json_output is None else json_output

    renderer = structlog.processors.JSONRenderer() if json_output else structlog.dev.ConsoleRenderer(colors=False)
    formatter = structlog.stdlib.ProcessorFormatter(
        processor=renderer,
        foreign_pre_chain=[
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso"),
        ],
    )

    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if cfg.log_file:
        handlers.append(logging.handlers.RotatingFileHandler(
            cfg.log_file, maxBytes=cfg.max_bytes, backupCount=cfg.backup_count
        ))

    root = logging.getLogger()
    root.handlers.clear()
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel(level)

# =================== Arquivo de experimento ===================

def parse_key_value_file(path: Path) -> Dict[str, str]:
    """Lê arquivo plano `chave = valor` (linhas com # são comentários)"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Arquivo de configuração não encontrado: {path}")

    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: esperado 'chave = valor', obtido {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{lineno}: chave vazia")
        values[key] = value.strip()
    return values


def merge_settings(file_values: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Precedência: flags > arquivo > padrões (padrões ficam no schema)"""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged
