"""
Fixtures compartilhadas e utilitário de diferenças finitas
"""

import os
import sys
from typing import Callable, List, Sequence

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from spicer.ml.engine import ModelParams, UnrollOptions, init_model_params
from spicer.models.types import TrainingPair
from spicer.services.acquisition import make_coil_maps, make_mask, make_phantom, make_training_pair
from spicer.services.numerics import seeded_rng


def central_difference(f: Callable[[float], float], h: float = 1e-6) -> float:
    """(f(+h) − f(−h)) / 2h para uma função escalar do deslocamento"""
    return (f(h) - f(-h)) / (2.0 * h)


def relative_error(approx: Sequence[float], exact: Sequence[float]) -> float:
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = max(np.linalg.norm(exact), np.linalg.norm(approx), 1e-300)
    return float(np.linalg.norm(approx - exact) / scale)


def sample_indices(shape, count: int, rng: np.random.Generator) -> List[tuple]:
    """Até `count` índices distintos sorteados em um array"""
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(count, size), replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]


def perturbed_params(params: ModelParams, seed: int = 7, scale: float = 0.05) -> ModelParams:
    """Pesos das redes com ruído pequeno (camadas finais deixam de ser nulas); γ e τ intactos"""
    rng = seeded_rng(seed)
    arrays = params.arrays()
    n_net = len(arrays) - 2
    noisy = [a + scale * rng.standard_normal(a.shape).astype(a.dtype) for a in arrays[:n_net]]
    return params.with_arrays(noisy + [a.copy() for a in arrays[n_net:]])


@pytest.fixture
def rng():
    return seeded_rng(1234)


@pytest.fixture
def phantom_32():
    return make_phantom(32, 32, kind="shepp_logan")


@pytest.fixture
def coils_32():
    return make_coil_maps(4, 32, 32, seed=3)


@pytest.fixture
def tiny_pair() -> TrainingPair:
    """16×16, 2 bobinas, R=2, 6 linhas ACS, ruído leve"""
    x = make_phantom(16, 16, seed=5, kind="smooth_random")
    S = make_coil_maps(2, 16, 16, seed=6)
    return make_training_pair(x, S, accel_R=2, acs_count=6, noise_sigma=1e-3, seed=8)


@pytest.fixture
def tiny_options() -> UnrollOptions:
    return UnrollOptions()


@pytest.fixture
def tiny_params(tiny_options) -> ModelParams:
    """K=2, U-Net (4, 8), pesos finais não nulos"""
    params = init_model_params(2, 2, features=(4, 8), gamma_init=0.8, tau_init=0.2, seed=11, options=tiny_options)
    return perturbed_params(params)


@pytest.fixture
def equispaced_mask_32():
    return make_mask(32, 4, 8, width=32)


def gradient_samples(
    objective: Callable[[ModelParams], float],
    params: ModelParams,
    grads: ModelParams,
    rng: np.random.Generator,
    per_network: int = 20,
):
    """
    Pares (diferença finita, analítico) para todo γ, todo τ e `per_network`
    pesos sorteados de θ e de φ.
    """
    arrays = params.arrays()
    grad_arrays = grads.arrays()
    n_theta = sum(len(net.arrays()) for net in params.theta)
    n_phi = len(params.phi.arrays()) if params.phi is not None else 0

    targets = []
    for start, stop in ((0, n_theta), (n_theta, n_theta + n_phi)):
        if stop == start:
            continue
        weight_slots = [i for i in range(start, stop) if arrays[i].ndim == 4]
        for _ in range(per_network):
            slot = weight_slots[int(rng.integers(len(weight_slots)))]
            targets.append((slot, tuple(int(rng.integers(n)) for n in arrays[slot].shape)))
    for slot in (len(arrays) - 2, len(arrays) - 1):
        targets += [(slot, (k,)) for k in range(arrays[slot].size)]

    numeric, analytic = [], []
    for slot, idx in targets:
        def shifted(t, slot=slot, idx=idx):
            moved = [a.copy() for a in arrays]
            moved[slot][idx] += t
            return objective(params.with_arrays(moved))
        numeric.append(central_difference(shifted))
        analytic.append(float(grad_arrays[slot][idx]))
    return numeric, analytic
