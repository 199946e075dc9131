"""
services/grappa.py
GRAPPA: kernels lineares por offset, calibrados por mínimos quadrados com ridge no bloco ACS
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from spicer.exceptions import CalibrationError, ConfigError
from spicer.models.types import MultiCoilKspace, SamplingMask
from spicer.services.acquisition import accel_step

logger = logging.getLogger(__name__)


@dataclass
class GrappaKernel:
    """Pesos de um offset δ ∈ [1, R): (n_c·ky·kx) → n_c"""
    offset: int
    weights: np.ndarray
    residual: float
    n_equations: int


def _source_offsets(R: int, ky: int) -> List[int]:
    """Deslocamentos de linha das fontes relativos à linha adquirida imediatamente acima do alvo"""
    return [R * j for j in range(-((ky - 1) // 2), ky // 2 + 1)]


def minimum_acs(R: int, ky: int) -> int:
    return R * (ky - 1) + 1


def _sources(data: np.ndarray, base_row: int, src: List[int], kx: int) -> np.ndarray:
    """Matriz (W, n_c·ky·kx) das fontes para todas as posições de leitura; fora da grade = 0"""
    n_c, H, W = data.shape
    half = kx // 2
    rows = np.zeros((n_c, len(src), W + 2 * half), dtype=data.dtype)
    for j, dr in enumerate(src):
        r = base_row + dr
        if 0 <= r < H:
            rows[:, j, half:half + W] = data[:, r, :]
    windows = sliding_window_view(rows, kx, axis=2)  # (n_c, ky, W, kx)
    return windows.transpose(2, 0, 1, 3).reshape(W, -1)


def _check_pattern(mask: SamplingMask, R: int) -> None:
    outside_acs = set(mask.selected_lines) - set(mask.acs_lines)
    if any((r - mask.offset) % R for r in outside_acs):
        raise ConfigError("GRAPPA exige máscara equiespaçada (linhas fora do ACS a cada R)")


def grappa_calibrate(
    y: MultiCoilKspace,
    kernel_hw: Tuple[int, int] = (5, 4),
    ridge: float = 1e-6,
) -> Dict[int, GrappaKernel]:
    """Um kernel por offset δ, ajustado em todas as posições do ACS que cabem na geometria"""
    kx, ky = kernel_hw
    mask = y.mask
    R = accel_step(mask.accel_R)
    acs = list(mask.acs_lines)
    needed = minimum_acs(R, ky)
    if len(acs) < needed:
        raise CalibrationError(
            f"ACS com {len(acs)} linhas; kernel {kx}×{ky} com R={R} exige no mínimo {needed}"
        )
    src = _source_offsets(R, ky)
    a0, a1 = acs[0], acs[-1]
    half = kx // 2
    W = y.shape[1]
    inner = slice(half, W - half)

    kernels = {}
    for delta in range(1, R):
        A_blocks, B_blocks = [], []
        for t in range(a0, a1 + 1):
            base = t - delta
            if base + src[0] < a0 or base + src[-1] > a1:
                continue
            A_blocks.append(_sources(y.data, base, src, kx)[inner])
            B_blocks.append(y.data[:, t, inner].T)
        if not A_blocks:
            raise CalibrationError(
                f"Sem equações de calibração para δ={delta}; ACS mínimo para R={R}, ky={ky}: {needed}"
            )
        A = np.concatenate(A_blocks)
        B = np.concatenate(B_blocks)
        AhA = A.conj().T @ A
        lam = ridge * np.real(np.trace(AhA)) / AhA.shape[0]
        weights = np.linalg.solve(AhA + lam * np.eye(AhA.shape[0]), A.conj().T @ B)
        residual = float(np.linalg.norm(A @ weights - B) / max(np.linalg.norm(B), np.finfo(float).tiny))
        kernels[delta] = GrappaKernel(delta, weights, residual, A.shape[0])
        logger.debug(f"GRAPPA δ={delta}: {A.shape[0]} equações, resíduo relativo {residual:.2e}")
    return kernels


def grappa(
    y: MultiCoilKspace,
    kernel_hw: Tuple[int, int] = (5, 4),
    ridge: float = 1e-6,
) -> MultiCoilKspace:
    """Preenche as linhas ausentes; entradas adquiridas são copiadas sem alteração"""
    mask = y.mask
    H, W = mask.shape
    if len(mask.selected_lines) == H:
        return MultiCoilKspace(y.data.copy(), mask, y.noise_sigma)

    R = accel_step(mask.accel_R)
    _check_pattern(mask, R)
    kernels = grappa_calibrate(y, kernel_hw, ridge)
    kx, ky = kernel_hw
    src = _source_offsets(R, ky)

    out = y.data.copy()
    acquired = mask.rows
    for t in range(H):
        if acquired[t]:
            continue
        delta = (t - mask.offset) % R
        kernel = kernels[delta]
        out[:, t, :] = (_sources(y.data, t - delta, src, kx) @ kernel.weights).T

    filled = SamplingMask.full(H, W)
    logger.info(f"GRAPPA: {H - int(acquired.sum())} linhas preenchidas (R={R}, kernel {kx}×{ky})")
    return MultiCoilKspace(out, filled, y.noise_sigma)
