"""
models/enums.py
Enumerações do domínio
"""

from enum import Enum


class Precision(str, Enum):
    """Precisão numérica de dados e parâmetros"""
    F64 = "f64"
    F32 = "f32"


class PhantomKind(str, Enum):
    """Tipos de phantom sintético"""
    SHEPP_LOGAN = "shepp_logan"
    SMOOTH_RANDOM = "smooth_random"


class MaskKind(str, Enum):
    """Padrões de amostragem cartesiana"""
    EQUISPACED = "equispaced"
    RANDOM = "random"


class CsmMode(str, Enum):
    """Origem dos mapas de sensibilidade dentro do desenrolamento"""
    LEARNED = "learned"
    CLASSICAL = "classical"


class LossNorm(str, Enum):
    """Norma usada em cada termo cruzado da perda de reconstrução"""
    L2 = "l2"
    SQUARED = "squared"


class BaselineMethod(str, Enum):
    """Reconstruções clássicas disponíveis"""
    ZERO_FILLED = "zero_filled"
    TV = "tv"
    GRAPPA = "grappa"


class MetricRegion(str, Enum):
    """Região de avaliação das métricas"""
    FOV = "fov"
    FULL = "full"
