"""
services/baselines.py
Reconstruções clássicas: zero-filled e TV por gradiente proximal
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from spicer.models.schemas import TvConfig
from spicer.models.types import CoilSensitivities, MultiCoilKspace
from spicer.services.metrics import psnr
from spicer.services.numerics import ifft2c, rss
from spicer.services.operators import ForwardModel, coil_combine

logger = logging.getLogger(__name__)

TV_DUAL_STEP = 1.0 / 8.0  # ‖D‖² ≤ 8 em 2D
MAX_BACKTRACKS = 20

# =================== Zero-filled ===================

def zero_filled_recon(y: MultiCoilKspace, S: Optional[CoilSensitivities] = None) -> np.ndarray:
    """Com S: Sᴴ F⁻¹ y; sem S: RSS das imagens por bobina (real, em dtype complexo)"""
    coils = ifft2c(y.data)
    if S is not None:
        return coil_combine(coils, S)
    return rss(coils).astype(coils.dtype)

# =================== TV anisotrópico ===================

def grad_h(x: np.ndarray) -> np.ndarray:
    d = np.zeros_like(x)
    d[:, :-1] = x[:, 1:] - x[:, :-1]
    return d


def grad_v(x: np.ndarray) -> np.ndarray:
    d = np.zeros_like(x)
    d[:-1, :] = x[1:, :] - x[:-1, :]
    return d


def grad_h_adjoint(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    out[:, :-1] -= d[:, :-1]
    out[:, 1:] += d[:, :-1]
    return out


def grad_v_adjoint(d: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d)
    out[:-1, :] -= d[:-1, :]
    out[1:, :] += d[:-1, :]
    return out


def tv_norm(x: np.ndarray) -> float:
    """Σ |D_h x| + |D_v x| (módulos complexos)"""
    return float(np.abs(grad_h(x)).sum() + np.abs(grad_v(x)).sum())


def prox_tv(
    v: np.ndarray,
    weight: float,
    n_iters: int = 20,
    dual: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    argmin_x ½‖x − v‖² + weight·TV(x) pelo dual projetado; |p| ≤ 1 ponto a ponto.
    Retorna também o dual para aquecer a próxima chamada.
    """
    if weight <= 0:
        return v.copy(), dual or (np.zeros_like(v), np.zeros_like(v))
    ph, pv = dual if dual is not None else (np.zeros_like(v), np.zeros_like(v))
    step = TV_DUAL_STEP / weight
    for _ in range(n_iters):
        x = v - weight * (grad_h_adjoint(ph) + grad_v_adjoint(pv))
        ph = ph + step * grad_h(x)
        pv = pv + step * grad_v(x)
        ph = ph / np.maximum(1.0, np.abs(ph))
        pv = pv / np.maximum(1.0, np.abs(pv))
    x = v - weight * (grad_h_adjoint(ph) + grad_v_adjoint(pv))
    return x, (ph, pv)


def tv_objective(x: np.ndarray, y: MultiCoilKspace, model: ForwardModel, tau: float) -> float:
    """½‖Ax − y‖² + τ‖Dx‖₁"""
    r = model.apply(x) - y.data
    return 0.5 * float(np.real(np.vdot(r, r))) + tau * tv_norm(x)


def tv_reconstruct(
    y: MultiCoilKspace,
    S: CoilSensitivities,
    cfg: TvConfig = TvConfig(),
    return_history: bool = False,
) -> Union[np.ndarray, Tuple[np.ndarray, List[float]]]:
    """
    Gradiente proximal: x ← prox_{step·τ·TV}(x − step·Aᴴ(Ax − y)), partindo de Aᴴy.
    Um candidato que aumenta o objetivo é rejeitado e o passo é reduzido à metade.
    """
    model = ForwardModel(S, y.mask)
    if cfg.step > 1.0:
        logger.warning(f"Passo TV {cfg.step} acima de 1/L (L ≤ 1 para operadores normalizados)")

    x = model.apply_adjoint(y.data)
    objective = tv_objective(x, y, model, cfg.tau)
    history = [objective]
    dual = None
    step = cfg.step

    for _ in range(cfg.outer_iters):
        grad = model.apply_adjoint(model.apply(x) - y.data)
        for _ in range(MAX_BACKTRACKS):
            candidate, cand_dual = prox_tv(x - step * grad, step * cfg.tau, cfg.prox_iters, dual)
            cand_obj = tv_objective(candidate, y, model, cfg.tau)
            if cand_obj <= objective:
                x, dual, objective = candidate, cand_dual, cand_obj
                break
            step *= 0.5
            dual = None
        history.append(objective)

    logger.debug(f"TV: τ={cfg.tau:.2e}, objetivo final {objective:.6e}, passo final {step:.3g}")
    if return_history:
        return x, history
    return x


def tune_tv_tau(
    samples: Sequence[Tuple[MultiCoilKspace, CoilSensitivities, np.ndarray, Optional[np.ndarray]]],
    cfg: TvConfig = TvConfig(),
    taus: Optional[Sequence[float]] = None,
) -> Tuple[float, List[Tuple[float, float]]]:
    """
    Busca em grade logarítmica (8 pontos) do τ com maior PSNR médio.
    Cada amostra é (y, S, referência, região).
    """
    taus = list(taus) if taus is not None else list(np.logspace(-4, -1, 8))
    scores = []
    for tau in taus:
        trial = cfg.model_copy(update={"tau": float(tau)})
        values = [
            psnr(np.abs(tv_reconstruct(y, S, trial)), np.abs(ref), region)
            for y, S, ref, region in samples
        ]
        scores.append((float(tau), float(np.mean(values))))
        logger.debug(f"τ={tau:.2e}: PSNR médio {scores[-1][1]:.2f} dB")
    best = max(scores, key=lambda item: item[1])
    logger.info(f"τ TV escolhido: {best[0]:.2e} ({best[1]:.2f} dB)")
    return best[0], scores
