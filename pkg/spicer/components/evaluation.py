"""
SPICER - Componente de Avaliação
Reconstrução por método, métricas sobre o split de teste e protocolos auxiliares
(CSMs plugados no TV, suavidade dos mapas em dados não vistos)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from spicer.components.metrics import PSNR_SENTINEL
from spicer.exceptions import ConfigError
from spicer.ml.engine import spicer_reconstruct
from spicer.ml.losses import loss_smooth
from spicer.ml.training import Checkpoint
from spicer.models.enums import BaselineMethod, MetricRegion
from spicer.models.schemas import ExperimentConfig, TvConfig
from spicer.models.types import CoilSensitivities, MultiCoilKspace, TrainingPair
from spicer.services.acquisition import build_dataset
from spicer.services.baselines import tune_tv_tau, tv_reconstruct, zero_filled_recon
from spicer.services.csm import estimate_csm_classical, estimate_csm_network, fov_support
from spicer.services.grappa import grappa
from spicer.services.metrics import csm_nmse, image_metrics
from spicer.services.numerics import complex_dtype

logger = logging.getLogger(__name__)

SPICER_METHOD = "spicer"
METHODS = tuple(m.value for m in BaselineMethod) + (SPICER_METHOD,)
METRIC_KEYS = ("psnr", "ssim", "nmse")

# Sementes derivadas por split: treino, teste e o fantoma reservado para ajustar τ
_SPLIT_OFFSETS = {"train": 0, "test": 1, "tuning": 2}


def split_seed(seed: int, split: str) -> int:
    if split not in _SPLIT_OFFSETS:
        raise ConfigError(f"Split desconhecido: {split}")
    return int(seed) + _SPLIT_OFFSETS[split]


@dataclass
class EvaluationCase:
    """Medida de teste com referência e região de avaliação"""
    index: int
    y: MultiCoilKspace
    reference: np.ndarray
    region: np.ndarray
    true_csm: Optional[CoilSensitivities] = None


def evaluation_region(reference: np.ndarray, region: Union[str, MetricRegion], fov_threshold: float) -> np.ndarray:
    if MetricRegion(region) == MetricRegion.FULL:
        return np.ones(reference.shape, dtype=bool)
    return fov_support(np.asarray(reference)[None], fov_threshold)


def cases_from_dataset(
    pairs: Sequence[TrainingPair],
    fov_threshold: float = 0.1,
    region: Union[str, MetricRegion] = MetricRegion.FOV,
) -> List[EvaluationCase]:
    """Usa a primeira medida de cada par; exige a imagem de referência"""
    if not pairs:
        raise ConfigError("Split de teste vazio")
    cases = []
    for i, pair in enumerate(pairs):
        if pair.ground_truth is None:
            raise ConfigError(f"Par {i} sem imagem de referência; não é possível avaliar")
        cases.append(EvaluationCase(
            index=i,
            y=pair.y,
            reference=pair.ground_truth,
            region=evaluation_region(pair.ground_truth, region, fov_threshold),
            true_csm=pair.true_csm,
        ))
    return cases


def tuning_cases(exp: ExperimentConfig, region: Union[str, MetricRegion] = MetricRegion.FOV) -> List[EvaluationCase]:
    """Fantoma reservado (semente própria) para a busca de τ do TV"""
    pairs = build_dataset(
        1, exp.h, exp.w, exp.nc, exp.r, exp.acs,
        seed=split_seed(exp.seed, "tuning"),
        noise_sigma=exp.noise,
        phantom=exp.phantom,
        mask_kind=exp.mask_kind,
    )
    return cases_from_dataset(pairs, exp.fov_threshold, region)


def reconstruct_with_checkpoint(y: MultiCoilKspace, ckpt: Checkpoint) -> Tuple[np.ndarray, CoilSensitivities]:
    """Caminho único de inferência: medida na precisão do checkpoint → (x, S)"""
    dtype = complex_dtype(ckpt.config.precision)
    y_cast = MultiCoilKspace(y.data.astype(dtype), y.mask, y.noise_sigma)
    x, S, _ = spicer_reconstruct(y_cast, ckpt.params, ckpt.options)
    return x.astype(np.complex128), S

# =================== Reconstrução por método ===================

class ReconstructionRunner:
    """Despacha uma medida para zero-filled, TV, GRAPPA ou SPICER"""

    def __init__(self, exp: ExperimentConfig, checkpoint: Optional[Checkpoint] = None, tv_tau: Optional[float] = None):
        self.exp = exp
        self.checkpoint = checkpoint
        self.tv_tau = tv_tau if tv_tau is not None else exp.tv_tau
        self.tv_history: Dict[int, List[float]] = {}

    @property
    def tv_config(self) -> TvConfig:
        return self.exp.to_tv_config(self.tv_tau)

    def ensure_tv_tau(self) -> float:
        """τ do config ou, na falta dele, busca em grade no fantoma reservado"""
        if self.tv_tau is None:
            samples = [
                (case.y, estimate_csm_classical(case.y, self.exp.fov_threshold), case.reference, case.region)
                for case in tuning_cases(self.exp)
            ]
            self.tv_tau, _ = tune_tv_tau(samples, self.exp.to_tv_config())
        return self.tv_tau

    def reconstruct(self, method: str, y: MultiCoilKspace, key: int = 0) -> np.ndarray:
        if method not in METHODS:
            raise ConfigError(f"Método desconhecido: {method} (opções: {', '.join(METHODS)})")

        if method == BaselineMethod.ZERO_FILLED.value:
            return zero_filled_recon(y)
        if method == BaselineMethod.TV.value:
            self.ensure_tv_tau()
            S = estimate_csm_classical(y, self.exp.fov_threshold)
            x, history = tv_reconstruct(y, S, self.tv_config, return_history=True)
            self.tv_history[key] = history
            return x
        if method == BaselineMethod.GRAPPA.value:
            filled = grappa(y, self.exp.kernel_hw, self.exp.grappa_ridge)
            return zero_filled_recon(filled)

        if self.checkpoint is None:
            raise ConfigError("Reconstrução SPICER exige um checkpoint (--checkpoint)")
        x, _ = reconstruct_with_checkpoint(y, self.checkpoint)
        return x

# =================== Métricas agregadas ===================

def evaluate_methods(
    cases: Sequence[EvaluationCase],
    runner: ReconstructionRunner,
    methods: Sequence[str] = METHODS,
) -> List[Dict[str, Any]]:
    """Uma linha por (método, caso) com PSNR/SSIM/NMSE sobre magnitudes"""
    if not cases:
        raise ConfigError("Split de teste vazio")
    records = []
    for method in methods:
        for case in cases:
            image = runner.reconstruct(method, case.y, case.index)
            values = image_metrics(image, case.reference, case.region)
            records.append({"method": method, "case": case.index, **values})
        logger.info(f"Avaliado: {method} ({len(cases)} casos)")
    return records


def _jsonable_stat(value: float) -> Any:
    if np.isnan(value) or np.isinf(value):
        return PSNR_SENTINEL
    return float(value)


def summarize(records: Sequence[Dict[str, Any]], region: Union[str, MetricRegion] = MetricRegion.FOV) -> List[Dict[str, Any]]:
    """Média ± desvio (populacional) por método; PSNR infinito vira o sentinela 'inf'"""
    if not records:
        raise ConfigError("Nenhum resultado para resumir")
    df = pd.DataFrame(list(records))
    rows = []
    for method, group in df.groupby("method", sort=False):
        row: Dict[str, Any] = {"method": str(method), "n_cases": int(len(group))}
        for key in METRIC_KEYS:
            values = group[key].astype(float).to_numpy()
            row[f"{key}_mean"] = _jsonable_stat(values.mean())
            row[f"{key}_std"] = _jsonable_stat(values.std())
        extra = [c for c in group.columns if c not in ("method", "case") + METRIC_KEYS]
        for key in extra:
            values = group[key].dropna().astype(float).to_numpy()
            if values.size:
                row[f"{key}_mean"] = _jsonable_stat(values.mean())
        row["region"] = MetricRegion(region).value
        rows.append(row)
    return rows

# =================== Protocolos auxiliares ===================

@dataclass
class PluginResult:
    rows: List[Dict[str, Any]]
    records: List[Dict[str, Any]] = field(default_factory=list)


def csm_plugin_tv(
    cases: Sequence[EvaluationCase],
    tv_cfg: TvConfig,
    checkpoint: Optional[Checkpoint] = None,
    region: Union[str, MetricRegion] = MetricRegion.FOV,
    fov_threshold: float = 0.1,
) -> PluginResult:
    """
    TV com três fontes de CSM: ACS clássico, rede P_φ treinada e mapas verdadeiros.
    Relata métricas de imagem e, quando há mapas verdadeiros, o NMSE dos CSMs.
    """
    records = []
    for case in cases:
        sources: Dict[str, CoilSensitivities] = {
            "classical": estimate_csm_classical(case.y, fov_threshold),
        }
        if checkpoint is not None and checkpoint.params.phi is not None:
            dtype = complex_dtype(checkpoint.config.precision)
            y_cast = MultiCoilKspace(case.y.data.astype(dtype), case.y.mask, case.y.noise_sigma)
            sources["learned"] = estimate_csm_network(y_cast, checkpoint.params.phi, checkpoint.config.fov_threshold)
        if case.true_csm is not None:
            sources["true"] = case.true_csm

        for name, S in sources.items():
            maps = CoilSensitivities(S.maps.astype(np.complex128), S.fov)
            x = tv_reconstruct(case.y, maps, tv_cfg)
            record = {"method": f"tv+csm_{name}", "case": case.index, **image_metrics(x, case.reference, case.region)}
            if case.true_csm is not None:
                record["csm_nmse"] = csm_nmse(maps, case.true_csm, maps.fov & case.region)
            records.append(record)
    logger.info(f"CSMs plugados no TV: {len(cases)} casos")
    return PluginResult(rows=summarize(records, region), records=records)


def heldout_smoothness(ys: Sequence[MultiCoilKspace], checkpoint: Checkpoint) -> float:
    """Média de ‖DS‖² (dentro do FOV) dos mapas estimados em medidas não vistas no treino"""
    if not ys:
        raise ConfigError("Nenhuma medida para medir a suavidade dos mapas")
    values = [loss_smooth(reconstruct_with_checkpoint(y, checkpoint)[1]) for y in ys]
    return float(np.mean(values))
