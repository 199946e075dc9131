"""
services/acquisition.py
Simulação: phantoms, mapas de bobina, máscaras cartesianas, k-space ruidoso e pares de treino
"""

import logging
from typing import List, Optional, Union

import numpy as np
from skimage.data import shepp_logan_phantom
from skimage.transform import resize
from tqdm import tqdm

from spicer.config import get_config
from spicer.exceptions import ConfigError, ShapeError
from spicer.models.enums import MaskKind, PhantomKind
from spicer.models.types import CoilSensitivities, MultiCoilKspace, SamplingMask, TrainingPair
from spicer.services.csm import rss_normalize
from spicer.services.numerics import complex_normal, fft2c, seeded_rng
from spicer.services.operators import ForwardModel

logger = logging.getLogger(__name__)


def _grid(height: int, width: int):
    """Coordenadas normalizadas em [-1, 1]"""
    yy, xx = np.meshgrid(np.linspace(-1.0, 1.0, height), np.linspace(-1.0, 1.0, width), indexing="ij")
    return yy, xx

# =================== Phantoms ===================

def make_phantom(height: int, width: int, seed: int = 0, kind: Union[str, PhantomKind] = PhantomKind.SHEPP_LOGAN) -> np.ndarray:
    """Imagem complexa com magnitude em [0, 1]"""
    kind = PhantomKind(kind)
    if height < 8 or width < 8:
        raise ShapeError(f"Phantom muito pequeno: {height}×{width}")

    if kind == PhantomKind.SHEPP_LOGAN:
        if height < 32 or width < 32:
            raise ShapeError(f"Shepp-Logan exige pelo menos 32×32, obtido {height}×{width}")
        img = resize(shepp_logan_phantom(), (height, width), order=1, anti_aliasing=True, mode="constant")
        return np.clip(img, 0.0, 1.0).astype(np.complex128)

    return _smooth_random_phantom(height, width, seed)


def _smooth_random_phantom(height: int, width: int, seed: int) -> np.ndarray:
    rng = seeded_rng(seed)
    yy, xx = _grid(height, width)

    # suporte elíptico com leve rotação
    a, b = rng.uniform(0.6, 0.85, size=2)
    theta = rng.uniform(-0.3, 0.3)
    xr = xx * np.cos(theta) + yy * np.sin(theta)
    yr = -xx * np.sin(theta) + yy * np.cos(theta)
    support = (xr / a) ** 2 + (yr / b) ** 2 <= 1.0

    magnitude = np.full((height, width), rng.uniform(0.3, 0.5))
    for _ in range(int(rng.integers(4, 9))):
        cy, cx = rng.uniform(-0.5, 0.5, size=2)
        width_g = rng.uniform(0.1, 0.3)
        amp = rng.uniform(0.2, 0.6)
        magnitude += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width_g ** 2))

    # estruturas internas com bordas nítidas
    for _ in range(int(rng.integers(2, 4))):
        cy, cx = rng.uniform(-0.4, 0.4, size=2)
        ra, rb = rng.uniform(0.08, 0.25, size=2)
        inside = ((yy - cy) / ra) ** 2 + ((xx - cx) / rb) ** 2 <= 1.0
        magnitude = np.where(inside, magnitude + rng.uniform(-0.25, 0.25), magnitude)

    magnitude = np.clip(magnitude, 0.0, None) * support
    peak = magnitude.max()
    if peak > 0:
        magnitude = magnitude / peak

    px, py = rng.uniform(-np.pi / 4, np.pi / 4, size=2)
    phase = np.exp(1j * (px * xx + py * yy))
    return magnitude * phase

# =================== Mapas de bobina ===================

def make_coil_maps(n_c: int, height: int, width: int, seed: int = 0) -> CoilSensitivities:
    """Bobinas num anel: envelope gaussiano × polinômio de baixa ordem × fase suave, normalizado por RSS"""
    if n_c < 2 or n_c > 32:
        raise ConfigError(f"n_c deve estar em [2, 32], obtido {n_c}")
    rng = seeded_rng(seed)
    acq = get_config().acquisition

    rows = np.arange(height) - height / 2
    cols = np.arange(width) - width / 2
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    ny, nx = _grid(height, width)
    size = max(height, width)
    sigma = acq.coil_width_factor * size
    radius = size / 2
    rotation = rng.uniform(0, 2 * np.pi)

    maps = np.empty((n_c, height, width), dtype=np.complex128)
    for k in range(n_c):
        angle = rotation + 2 * np.pi * k / n_c
        cy, cx = radius * np.sin(angle), radius * np.cos(angle)
        envelope = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        a, b = rng.uniform(-0.2, 0.2, size=2)
        poly = 1.0 + a * nx + b * ny
        c1, c2, c3 = rng.uniform(-0.5, 0.5, size=3)
        phase = np.exp(1j * (angle + c1 * nx + c2 * ny + c3 * nx * ny))
        maps[k] = envelope * poly * phase

    return rss_normalize(maps, np.ones((height, width), dtype=bool))

# =================== Máscaras ===================

def accel_step(accel_R: float) -> int:
    """Passo inteiro round(R), arredondando metades para cima"""
    return max(int(np.floor(accel_R + 0.5)), 1)


def acs_block(height: int, acs_count: int) -> List[int]:
    """Bloco contíguo centrado em H//2"""
    start = height // 2 - acs_count // 2
    return list(range(start, start + acs_count))


def make_mask(
    height: int,
    accel_R: float,
    acs_count: int,
    kind: Union[str, MaskKind] = MaskKind.EQUISPACED,
    seed: int = 0,
    offset: int = 0,
    width: Optional[int] = None,
) -> SamplingMask:
    """Máscara cartesiana ao longo das linhas de fase, com bloco ACS centrado"""
    kind = MaskKind(kind)
    width = width or height
    if accel_R < 1:
        raise ConfigError(f"R deve ser >= 1, obtido {accel_R}")
    if acs_count > height or acs_count < 0:
        raise ConfigError(f"acs_count={acs_count} fora de [0, {height}]")
    step = accel_step(accel_R)
    if not 0 <= offset < step:
        raise ConfigError(f"offset={offset} deve estar em [0, {step})")

    acs = acs_block(height, acs_count)
    equispaced = set(range(offset, height, step)) | set(acs)

    if kind == MaskKind.EQUISPACED:
        selected = equispaced
    else:
        rng = seeded_rng(seed)
        candidates = np.array(sorted(set(range(height)) - set(acs)), dtype=np.int64)
        extra = len(equispaced) - len(acs)
        chosen = rng.choice(candidates, size=extra, replace=False) if extra > 0 else []
        selected = set(acs) | set(int(r) for r in chosen)

    mask = SamplingMask(height, width, tuple(selected), tuple(acs), kind, float(accel_R), offset)
    logger.debug(f"Máscara {kind.value}: R={accel_R}, ACS={acs_count}, taxa={mask.sampling_rate:.3f}")
    return mask


def mask_preset(height: int, accel_R: int, **kwargs) -> SamplingMask:
    """Família de máscaras com ACS padrão para R ∈ {4, 6, 8, 10}"""
    presets = get_config().acquisition.mask_presets
    if accel_R not in presets:
        raise ConfigError(f"Sem preset para R={accel_R}; disponíveis: {sorted(presets)}")
    return make_mask(height, accel_R, presets[accel_R], **kwargs)

# =================== K-space ===================

def simulate_kspace(
    x: np.ndarray,
    S: CoilSensitivities,
    mask: SamplingMask,
    noise_sigma: float,
    rng: np.random.Generator,
) -> MultiCoilKspace:
    """y_k = P F (S_k x) + P e_k, com e_k gaussiano complexo de desvio noise_sigma"""
    if x.shape != S.shape or S.shape != mask.shape:
        raise ShapeError(f"Formas incompatíveis: imagem {x.shape}, mapas {S.shape}, máscara {mask.shape}")
    data = ForwardModel(S, mask).apply(x)
    if noise_sigma > 0:
        noise = complex_normal(rng, data.shape, noise_sigma)
        data = data + noise * mask.array()[None]
    return MultiCoilKspace(data, mask, float(noise_sigma))


def make_training_pair(
    x: np.ndarray,
    S: CoilSensitivities,
    accel_R: float,
    acs_count: int,
    noise_sigma: float,
    seed: int,
    offset: int = 0,
    kind: Union[str, MaskKind] = MaskKind.EQUISPACED,
) -> TrainingPair:
    """Duas aquisições do mesmo objeto com offsets complementares e ACS compartilhado"""
    height, width = x.shape
    step = accel_step(accel_R)
    rng = seeded_rng(seed)
    offsets = (offset, (offset + step // 2) % step)
    mask_seeds = rng.integers(0, 2 ** 62, size=2)
    masks = [
        make_mask(height, accel_R, acs_count, kind, int(s), o, width)
        for s, o in zip(mask_seeds, offsets)
    ]
    y = simulate_kspace(x, S, masks[0], noise_sigma, rng)
    y_prime = simulate_kspace(x, S, masks[1], noise_sigma, rng)
    return TrainingPair(y, y_prime, ground_truth=x, true_csm=S, meta={"seed": int(seed)})


def default_noise_sigma(images: List[np.ndarray], factor: Optional[float] = None) -> float:
    """factor · max|F x| sobre o conjunto"""
    factor = get_config().acquisition.noise_factor if factor is None else factor
    return float(factor * max(np.abs(fft2c(x)).max() for x in images))


def build_dataset(
    n_pairs: int,
    height: int,
    width: int,
    n_c: int,
    accel_R: float,
    acs_count: int,
    seed: int,
    noise_sigma: Optional[float] = None,
    phantom: Union[str, PhantomKind] = PhantomKind.SMOOTH_RANDOM,
    mask_kind: Union[str, MaskKind] = MaskKind.EQUISPACED,
    progress: bool = False,
) -> List[TrainingPair]:
    """Gera n_pairs pares independentes; todas as sementes derivam de `seed`"""
    if n_pairs < 1:
        raise ConfigError("n_pairs deve ser >= 1")
    rng = seeded_rng(seed)
    seeds = rng.integers(0, 2 ** 62, size=(n_pairs, 3))

    images = [make_phantom(height, width, int(s[0]), phantom) for s in seeds]
    sigma = default_noise_sigma(images) if noise_sigma is None else float(noise_sigma)
    logger.info(f"Gerando {n_pairs} pares {height}×{width}, {n_c} bobinas, R={accel_R}, σ={sigma:.3e}")

    pairs = []
    for (s_img, s_csm, s_pair), x in tqdm(list(zip(seeds, images)), desc="Simulando", disable=not progress):
        S = make_coil_maps(n_c, height, width, int(s_csm))
        pairs.append(make_training_pair(x, S, accel_R, acs_count, sigma, int(s_pair), kind=mask_kind))
    return pairs
