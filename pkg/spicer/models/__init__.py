"""
Modelos de domínio do SPICER
"""

from .enums import BaselineMethod, CsmMode, LossNorm, MaskKind, MetricRegion, PhantomKind, Precision
from .types import CoilSensitivities, MultiCoilKspace, SamplingMask, TrainingPair

__all__ = [
    "BaselineMethod", "CsmMode", "LossNorm", "MaskKind", "MetricRegion", "PhantomKind", "Precision",
    "CoilSensitivities", "MultiCoilKspace", "SamplingMask", "TrainingPair",
]
