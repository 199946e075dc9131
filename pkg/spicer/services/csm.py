"""
services/csm.py
Estimação dos mapas de sensibilidade: ACS, imagens de baixa resolução, estimador clássico,
normalização RSS, suporte do FOV e estimador por rede P_φ
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from spicer.config import get_config
from spicer.exceptions import AcsError, CalibrationError, ConfigError
from spicer.ml.cnn import ActivationTape, CnnParams, channels_to_complex, cnn_backward, cnn_forward, complex_to_channels
from spicer.models.types import CoilSensitivities, MultiCoilKspace
from spicer.services.numerics import ifft2c, rss

logger = logging.getLogger(__name__)

DEFAULT_FOV_THRESHOLD = 0.1
_CLOSING = np.ones((3, 3), dtype=bool)


def _floor() -> float:
    return get_config().numerics.rss_floor

# =================== ACS ===================

def extract_acs(y: MultiCoilKspace) -> MultiCoilKspace:
    """Zera o k-space fora das linhas ACS; a máscara passa a ser só o bloco ACS"""
    if not y.mask.acs_lines:
        raise AcsError("Medida sem linhas ACS")
    acs_mask = y.mask.acs_only()
    rows = acs_mask.rows
    data = np.where(rows[None, :, None], y.data, 0).astype(y.data.dtype)
    return MultiCoilKspace(data, acs_mask, y.noise_sigma)


def acs_zero_filled(y_acs: MultiCoilKspace) -> np.ndarray:
    """p⁰ = F⁻¹(y_ACS), imagens de baixa resolução por bobina"""
    return ifft2c(y_acs.data)

# =================== FOV e normalização ===================

def fov_support(p0: np.ndarray, threshold_frac: float = DEFAULT_FOV_THRESHOLD) -> np.ndarray:
    """
    Pixels com RSS(p⁰) ≥ frac·max, com fechamento 3×3 para remover furos.
    A união com o limiar original preserva as bordas da imagem.
    """
    if not 0.0 < threshold_frac < 1.0:
        raise ConfigError(f"threshold_frac deve estar em (0, 1), obtido {threshold_frac}")
    r = rss(p0)
    peak = r.max()
    if peak <= 0:
        return np.zeros(r.shape, dtype=bool)
    raw = r >= threshold_frac * peak
    closed = ndimage.binary_closing(raw, structure=_CLOSING)
    return (closed | raw) & (r > _floor())


def rss_normalize(maps: np.ndarray, fov: np.ndarray) -> CoilSensitivities:
    """
    S_k = q_k / RSS(q) no FOV, zero fora.

    Pixels do FOV com RSS abaixo do piso (numerics.rss_floor, 1e-12) não são divididos:
    saem do suporte retornado e ficam zerados, com um aviso que informa quantos foram.
    Se nenhum pixel do FOV sobra, levanta CalibrationError com a contagem.
    """
    r = rss(maps)
    fov = fov.astype(bool)
    valid = fov & (r > _floor())
    dropped = int(np.count_nonzero(fov & ~valid))
    if dropped:
        if not valid.any():
            raise CalibrationError(f"RSS abaixo do piso em todos os {dropped} pixels do FOV")
        logger.warning(f"⚠️ RSS abaixo do piso em {dropped} pixels do FOV; removidos do suporte")
    safe = np.where(valid, r, 1.0).astype(np.real(maps).dtype)
    normalized = np.where(valid[None], maps / safe[None], 0).astype(maps.dtype)
    return CoilSensitivities(normalized, valid)


def rss_normalize_backward(q: np.ndarray, fov: np.ndarray, grad_maps: np.ndarray) -> np.ndarray:
    """Cotangente de q dado o cotangente dos mapas normalizados"""
    r = rss(q)
    safe = np.where(fov, r, 1.0)
    alpha = np.sum(np.real(np.conj(grad_maps) * q), axis=0)
    grad_q = grad_maps / safe[None] - q * (alpha / safe ** 3)[None]
    return np.where(fov[None], grad_q, 0)

# =================== Estimadores ===================

def estimate_csm_classical(y: MultiCoilKspace, fov_threshold: float = DEFAULT_FOV_THRESHOLD) -> CoilSensitivities:
    """Estimador de razão: p⁰_k / RSS(p⁰) sobre o FOV"""
    p0 = acs_zero_filled(extract_acs(y))
    if not np.any(p0):
        raise AcsError("Região ACS identicamente nula")
    fov = fov_support(p0, fov_threshold)
    if not fov.any():
        raise CalibrationError("FOV vazio após limiarização")
    return rss_normalize(p0, fov)


@dataclass
class CsmTrace:
    """Estado do estimador por rede necessário à retropropagação"""
    q: np.ndarray
    fov: np.ndarray
    scale: float
    tape: ActivationTape


def estimate_csm_network(
    y: MultiCoilKspace,
    phi: CnnParams,
    fov_threshold: float = DEFAULT_FOV_THRESHOLD,
    with_trace: bool = False,
):
    """
    Ŝ = normalize(P_φ(p⁰)): ACS → p⁰ → canais reais → rede → complexo → RSS no FOV de p⁰.
    A entrada da rede é p⁰ dividido pelo pico do RSS; a normalização final torna a escala irrelevante.
    """
    if phi.in_channels != 2 * y.n_coils or phi.out_channels != 2 * y.n_coils:
        raise ConfigError(
            f"P_φ espera {phi.in_channels}→{phi.out_channels} canais, medida tem {y.n_coils} bobinas"
        )
    p0 = acs_zero_filled(extract_acs(y))
    if not np.any(p0):
        raise AcsError("Região ACS identicamente nula")
    fov = fov_support(p0, fov_threshold)
    if not fov.any():
        raise CalibrationError("FOV vazio após limiarização")

    scale = float(rss(p0).max())
    net_in = complex_to_channels(p0 / scale).astype(phi.layers[0].kernel.dtype)
    net_out, tape = cnn_forward(phi, net_in)
    q = channels_to_complex(net_out).astype(y.data.dtype)
    S = rss_normalize(q, fov)
    if with_trace:
        return S, CsmTrace(q=q, fov=S.fov, scale=scale, tape=tape)
    return S


def csm_network_backward(trace: CsmTrace, phi: CnnParams, grad_maps: np.ndarray) -> CnnParams:
    """Gradiente em φ a partir do cotangente dos mapas"""
    grad_q = rss_normalize_backward(trace.q, trace.fov, grad_maps)
    grad_out = complex_to_channels(grad_q).astype(phi.layers[0].kernel.dtype)
    grad_phi, _ = cnn_backward(phi, trace.tape, grad_out)
    return grad_phi
