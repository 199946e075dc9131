"""
services/operators.py
Operadores lineares do modelo CS-PMRI: expansão/combinação por bobina, A, Aᴴ e gradiente de consistência
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from spicer.exceptions import ShapeError
from spicer.models.types import CoilSensitivities, MultiCoilKspace, SamplingMask
from spicer.services.numerics import fft2c, ifft2c

logger = logging.getLogger(__name__)

Maps = Union[CoilSensitivities, np.ndarray]


def _maps(S: Maps) -> np.ndarray:
    return S.maps if isinstance(S, CoilSensitivities) else S


def _mask_array(mask: SamplingMask, like: np.ndarray) -> np.ndarray:
    return mask.array(dtype=np.real(like).dtype)

# =================== Bobinas ===================

def coil_expand(x: np.ndarray, S: Maps) -> np.ndarray:
    """Imagem única → pilha por bobina, c_k = S_k ⊙ x"""
    maps = _maps(S)
    if x.shape != maps.shape[1:]:
        raise ShapeError(f"coil_expand: imagem {x.shape} vs mapas {maps.shape}")
    return maps * x[None]


def coil_combine(c: np.ndarray, S: Maps) -> np.ndarray:
    """Combinação adjunta Σ_k conj(S_k) ⊙ c_k"""
    maps = _maps(S)
    if c.shape != maps.shape:
        raise ShapeError(f"coil_combine: bobinas {c.shape} vs mapas {maps.shape}")
    return np.sum(np.conj(maps) * c, axis=0)

# =================== Modelo direto ===================

@dataclass(frozen=True)
class ForwardModel:
    """Composição A_k = P F S_k"""
    csm: CoilSensitivities
    mask: SamplingMask

    def __post_init__(self):
        if self.csm.shape != self.mask.shape:
            raise ShapeError(f"Mapas {self.csm.shape} incompatíveis com máscara {self.mask.shape}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        ksp = fft2c(coil_expand(x, self.csm))
        return ksp * _mask_array(self.mask, ksp)[None]

    def apply_adjoint(self, data: np.ndarray) -> np.ndarray:
        if data.shape != self.csm.maps.shape:
            raise ShapeError(f"adjoint: k-space {data.shape} vs mapas {self.csm.maps.shape}")
        masked = data * _mask_array(self.mask, data)[None]
        return coil_combine(ifft2c(masked), self.csm)

    def normal(self, x: np.ndarray) -> np.ndarray:
        """AᴴA x"""
        return self.apply_adjoint(self.apply(x))


def forward(x: np.ndarray, model: ForwardModel) -> MultiCoilKspace:
    """y_k = P F (S_k ⊙ x), sem ruído"""
    return MultiCoilKspace(model.apply(x), model.mask, 0.0)


def adjoint(y: Union[MultiCoilKspace, np.ndarray], model: ForwardModel) -> np.ndarray:
    """Σ_k conj(S_k) ⊙ F⁻¹(P y_k), com preenchimento por zeros"""
    data = y.data if isinstance(y, MultiCoilKspace) else y
    return model.apply_adjoint(data)

# =================== Consistência de dados ===================

def dc_residual(c: np.ndarray, y: MultiCoilKspace) -> np.ndarray:
    """P F c − y por bobina"""
    if c.shape != y.data.shape:
        raise ShapeError(f"dc: imagens {c.shape} vs k-space {y.data.shape}")
    m = _mask_array(y.mask, c)[None]
    return m * fft2c(c) - y.data


def dc_gradient(c: np.ndarray, y: MultiCoilKspace) -> np.ndarray:
    """F⁻¹ Pᴴ (P F c − y): gradiente de ½ Σ_k ‖P F c_k − y_k‖²"""
    m = _mask_array(y.mask, c)[None]
    return ifft2c(m * dc_residual(c, y))


def dc_objective(c: np.ndarray, y: MultiCoilKspace) -> float:
    """½ Σ_k ‖P F c_k − y_k‖²"""
    r = dc_residual(c, y)
    return 0.5 * float(np.vdot(r, r).real)


def masked_normal(g: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """F⁻¹ P F aplicado por bobina (autoadjunto)"""
    m = _mask_array(mask, g)[None]
    return ifft2c(m * fft2c(g))
