"""
services/metrics.py
Métricas de qualidade (PSNR, SSIM, NMSE) restritas a uma região, e NMSE de mapas de sensibilidade
"""

import logging
import math
from typing import Dict, Optional

import numpy as np
from skimage.metrics import structural_similarity

from spicer.exceptions import MetricError, ShapeError
from spicer.models.types import CoilSensitivities

logger = logging.getLogger(__name__)

SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _prepare(test: np.ndarray, ref: np.ndarray, region: Optional[np.ndarray]):
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if test.shape != ref.shape:
        raise ShapeError(f"Imagens com formas diferentes: {test.shape} vs {ref.shape}")
    region = np.ones(ref.shape, dtype=bool) if region is None else np.asarray(region, dtype=bool)
    if region.shape != ref.shape:
        raise ShapeError(f"Região {region.shape} incompatível com imagem {ref.shape}")
    if not region.any():
        raise MetricError("Região de avaliação vazia")
    return test, ref, region


def psnr(test: np.ndarray, ref: np.ndarray, region: Optional[np.ndarray] = None) -> float:
    """10·log10(max(ref)² / mse) na região; +inf quando as imagens coincidem"""
    test, ref, region = _prepare(test, ref, region)
    peak = ref[region].max()
    if not np.any(ref[region]):
        raise MetricError("Referência nula na região")
    mse = float(np.mean((test[region] - ref[region]) ** 2))
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(peak ** 2 / mse))


def nmse(test: np.ndarray, ref: np.ndarray, region: Optional[np.ndarray] = None) -> float:
    """‖test − ref‖² / ‖ref‖² na região"""
    test, ref, region = _prepare(test, ref, region)
    denom = float(np.sum(ref[region] ** 2))
    if denom == 0.0:
        raise MetricError("Referência nula na região")
    return float(np.sum((test[region] - ref[region]) ** 2) / denom)


def ssim(
    test: np.ndarray,
    ref: np.ndarray,
    region: Optional[np.ndarray] = None,
    data_range: Optional[float] = None,
) -> float:
    """SSIM local (gaussiana 11×11, σ=1.5) promediado na região; faixa dinâmica = max(ref) na região"""
    test, ref, region = _prepare(test, ref, region)
    if data_range is None:
        data_range = float(ref[region].max())
    if data_range <= 0:
        raise MetricError("Faixa dinâmica nula para SSIM")
    _, local = structural_similarity(
        test,
        ref,
        data_range=data_range,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
        full=True,
    )
    return float(np.mean(local[region]))


def image_metrics(test: np.ndarray, ref: np.ndarray, region: Optional[np.ndarray] = None) -> Dict[str, float]:
    """PSNR/SSIM/NMSE sobre magnitudes"""
    test_mag, ref_mag = np.abs(test), np.abs(ref)
    return {
        "psnr": psnr(test_mag, ref_mag, region),
        "ssim": ssim(test_mag, ref_mag, region),
        "nmse": nmse(test_mag, ref_mag, region),
    }


def csm_nmse(est: CoilSensitivities, true: CoilSensitivities, fov: Optional[np.ndarray] = None) -> float:
    """NMSE dos mapas após remover a fase comum por pixel (os estimados carregam a fase do objeto)"""
    if est.maps.shape != true.maps.shape:
        raise ShapeError(f"Mapas com formas diferentes: {est.maps.shape} vs {true.maps.shape}")
    region = est.fov & true.fov if fov is None else np.asarray(fov, dtype=bool)
    if not region.any():
        raise MetricError("Região vazia para comparar mapas")
    common = np.sum(np.conj(true.maps) * est.maps, axis=0)
    phase = np.exp(-1j * np.angle(common))
    aligned = est.maps * phase[None]
    diff = np.abs(aligned - true.maps) ** 2
    denom = float(np.sum(np.abs(true.maps[:, region]) ** 2))
    if denom == 0.0:
        raise MetricError("Mapas de referência nulos na região")
    return float(np.sum(diff[:, region]) / denom)
