"""
ml/adam.py
Otimizador Adam com correção de viés, sobre listas de arrays
"""

import logging
from dataclasses import dataclass, field
from typing import Any, List, Sequence, Tuple

import numpy as np

from spicer.exceptions import NumericError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Momentos por parâmetro, espelhando a lista de arrays"""
    m: List[np.ndarray]
    v: List[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            **kwargs,
        )


def _as_arrays(obj: Any) -> List[np.ndarray]:
    return list(obj.arrays()) if hasattr(obj, "arrays") else list(obj)


def adam_step(params: Any, grads: Any, state: AdamState, lr: float) -> Tuple[Any, AdamState]:
    """
    Um passo de Adam. `params`/`grads` são listas de arrays ou objetos com
    arrays()/with_arrays(); o retorno preserva o tipo de `params`.
    """
    p_list = _as_arrays(params)
    g_list = _as_arrays(grads)
    if len(p_list) != len(g_list) or len(p_list) != len(state.m):
        raise ShapeError("Parâmetros, gradientes e estado Adam com tamanhos diferentes")
    for i, (p, g) in enumerate(zip(p_list, g_list)):
        if p.shape != g.shape:
            raise ShapeError(f"Gradiente {i}: forma {g.shape} vs parâmetro {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"Gradiente não finito no grupo de parâmetros {i}")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t

    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_list, g_list, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        new_p.append((p - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype))
        new_m.append(m)
        new_v.append(v)

    new_state = AdamState(new_m, new_v, t, b1, b2, state.eps)
    if hasattr(params, "with_arrays"):
        return params.with_arrays(new_p), new_state
    return new_p, new_state
