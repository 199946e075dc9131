"""
services/numerics.py
Aritmética complexa 2D: FFT centrada ortonormal, produto interno e geradores semeados
"""

import logging
from typing import Tuple, Union

import numpy as np
import scipy.fft

from spicer.config import get_config
from spicer.exceptions import NumericError, ShapeError
from spicer.models.enums import Precision

logger = logging.getLogger(__name__)

_AXES = (-2, -1)
_SEED_MASK = (1 << 64) - 1

# =================== Fourier ===================

def fft2c(img: np.ndarray) -> np.ndarray:
    """
    DFT 2D centrada e ortonormal sobre os dois últimos eixos.
    DC fica em (H//2, W//2); aceita (H, W) ou (n_c, H, W).
    """
    workers = get_config().numerics.fft_workers
    shifted = scipy.fft.ifftshift(img, axes=_AXES)
    out = scipy.fft.fft2(shifted, axes=_AXES, norm="ortho", workers=workers)
    return scipy.fft.fftshift(out, axes=_AXES)


def ifft2c(ksp: np.ndarray) -> np.ndarray:
    """Inversa exata de fft2c"""
    workers = get_config().numerics.fft_workers
    shifted = scipy.fft.ifftshift(ksp, axes=_AXES)
    out = scipy.fft.ifft2(shifted, axes=_AXES, norm="ortho", workers=workers)
    return scipy.fft.fftshift(out, axes=_AXES)

# =================== Produtos ===================

def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Σ a·conj(b) sobre todas as entradas"""
    if a.shape != b.shape:
        raise ShapeError(f"inner: formas incompatíveis {a.shape} vs {b.shape}")
    return complex(np.vdot(b, a))


def rss(c: np.ndarray) -> np.ndarray:
    """Raiz da soma dos quadrados ao longo do eixo das bobinas"""
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=0))


def real_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Re⟨a, b⟩, o produto interno real usado em todos os gradientes"""
    return float(np.real(np.vdot(b, a)))

# =================== Aleatoriedade ===================

def seeded_rng(seed: int) -> np.random.Generator:
    """Fluxo determinístico Philox (contador) para qualquer semente de 64 bits"""
    return np.random.Generator(np.random.Philox(int(seed) & _SEED_MASK))


def complex_normal(rng: np.random.Generator, shape: Union[int, Tuple[int, ...]], sigma: float = 1.0) -> np.ndarray:
    """Gaussiana complexa circular: partes real e imaginária N(0, σ²/2), real sorteada primeiro"""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * (sigma / np.sqrt(2.0))

# =================== Precisão ===================

def real_dtype(precision: Union[str, Precision]) -> np.dtype:
    return np.dtype(np.float32) if Precision(precision) == Precision.F32 else np.dtype(np.float64)


def complex_dtype(precision: Union[str, Precision]) -> np.dtype:
    return np.dtype(np.complex64) if Precision(precision) == Precision.F32 else np.dtype(np.complex128)


def assert_finite(array: np.ndarray, what: str) -> None:
    """Levanta NumericError se houver NaN/Inf"""
    if not np.all(np.isfinite(array)):
        raise NumericError(f"Valores não finitos em {what}")
