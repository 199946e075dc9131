"""
ml/losses.py
Perda de reconstrução cruzada no domínio das medidas e suavidade dos CSMs no FOV
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from spicer.exceptions import NumericError
from spicer.ml.engine import ModelParams, UnrollOptions, spicer_reconstruct, unroll_backward
from spicer.models.enums import LossNorm
from spicer.models.types import CoilSensitivities, MultiCoilKspace, TrainingPair
from spicer.services.numerics import fft2c, ifft2c

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.01

# =================== Termos ===================

def _cross_residual(x: np.ndarray, S: CoilSensitivities, target: MultiCoilKspace) -> np.ndarray:
    """P F (S x) − y do alvo, com S e máscara do alvo"""
    m = target.mask.array(dtype=np.real(target.data).dtype)[None]
    return m * fft2c(S.maps * x[None]) - target.data


def _norm_and_grad(r: np.ndarray, norm: LossNorm) -> Tuple[float, np.ndarray]:
    energy = float(np.real(np.vdot(r, r)))
    if LossNorm(norm) == LossNorm.SQUARED:
        return energy, 2.0 * r
    value = np.sqrt(energy)
    if value == 0.0:
        return 0.0, np.zeros_like(r)
    return float(value), r / value


def loss_smooth(S: CoilSensitivities) -> float:
    """‖D S‖² com diferenças progressivas, só sobre pares de pixels dentro do FOV"""
    value, _ = loss_smooth_and_grad(S)
    return value


def loss_smooth_and_grad(S: CoilSensitivities) -> Tuple[float, np.ndarray]:
    maps, fov = S.maps, S.fov
    grad = np.zeros_like(maps)
    value = 0.0

    w = (fov[:, 1:] & fov[:, :-1])[None]
    d = (maps[:, :, 1:] - maps[:, :, :-1]) * w
    value += float(np.sum(np.abs(d) ** 2))
    grad[:, :, 1:] += 2.0 * d
    grad[:, :, :-1] -= 2.0 * d

    w = (fov[1:, :] & fov[:-1, :])[None]
    d = (maps[:, 1:, :] - maps[:, :-1, :]) * w
    value += float(np.sum(np.abs(d) ** 2))
    grad[:, 1:, :] += 2.0 * d
    grad[:, :-1, :] -= 2.0 * d
    return value, grad

# =================== Perdas completas ===================

@dataclass
class LossBreakdown:
    total: float
    rec: float
    smooth: float


def total_loss_and_grad(
    pair: TrainingPair,
    params: ModelParams,
    lambda_smooth: float = DEFAULT_LAMBDA,
    options: UnrollOptions = UnrollOptions(),
    loss_norm: Union[str, LossNorm] = LossNorm.L2,
    need_grad: bool = True,
) -> Tuple[LossBreakdown, ModelParams]:
    """
    Loss = ‖A′x − y′‖ + ‖A x′ − y‖ + λ(‖DS‖² + ‖DS′‖²), com x, S de y e x′, S′ de y′.
    Só `pair.y` e `pair.y_prime` são lidos.
    """
    y, y_prime = pair.y, pair.y_prime
    x, S, trace = spicer_reconstruct(y, params, options)
    x_p, S_p, trace_p = spicer_reconstruct(y_prime, params, options)

    r1 = _cross_residual(x, S_p, y_prime)
    r2 = _cross_residual(x_p, S, y)
    v1, g1 = _norm_and_grad(r1, loss_norm)
    v2, g2 = _norm_and_grad(r2, loss_norm)
    rec = v1 + v2

    smooth, smooth_p = 0.0, 0.0
    gs = gs_p = None
    if lambda_smooth > 0:
        smooth, gs = loss_smooth_and_grad(S)
        smooth_p, gs_p = loss_smooth_and_grad(S_p)
    total = rec + lambda_smooth * (smooth + smooth_p)
    breakdown = LossBreakdown(total=total, rec=rec, smooth=smooth + smooth_p)

    if not np.isfinite(total):
        raise NumericError(f"Perda não finita: rec={rec}, smooth={smooth + smooth_p}")
    if not need_grad:
        return breakdown, None

    # r1 = P′F(S′ x) − y′
    G_u1 = ifft2c(y_prime.mask.array()[None] * g1)
    grad_x = np.sum(np.conj(S_p.maps) * G_u1, axis=0)
    grad_S_p = G_u1 * np.conj(x)[None]
    # r2 = P F(S x′) − y
    G_u2 = ifft2c(y.mask.array()[None] * g2)
    grad_x_p = np.sum(np.conj(S.maps) * G_u2, axis=0)
    grad_S = G_u2 * np.conj(x_p)[None]

    if gs is not None:
        grad_S = grad_S + lambda_smooth * gs
        grad_S_p = grad_S_p + lambda_smooth * gs_p

    grads = unroll_backward(trace, params, grad_x, grad_S)
    grads_p = unroll_backward(trace_p, params, grad_x_p, grad_S_p)
    summed = params.with_arrays([a + b for a, b in zip(grads.arrays(), grads_p.arrays())])
    return breakdown, summed


def loss_rec(
    pair: TrainingPair,
    params: ModelParams,
    options: UnrollOptions = UnrollOptions(),
    loss_norm: Union[str, LossNorm] = LossNorm.L2,
) -> float:
    """‖A′x − y′‖ + ‖A x′ − y‖ (predição cruzada)"""
    breakdown, _ = total_loss_and_grad(pair, params, 0.0, options, loss_norm, need_grad=False)
    return breakdown.rec


def total_loss(
    pair: TrainingPair,
    params: ModelParams,
    lambda_smooth: float = DEFAULT_LAMBDA,
    options: UnrollOptions = UnrollOptions(),
    loss_norm: Union[str, LossNorm] = LossNorm.L2,
) -> float:
    breakdown, _ = total_loss_and_grad(pair, params, lambda_smooth, options, loss_norm, need_grad=False)
    return breakdown.total
