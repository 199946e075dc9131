"""
ml/training.py
Treino auto-supervisionado sobre pares de medidas e persistência de checkpoints (.spck)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from spicer.exceptions import ConfigError, FileFormatError, NumericError
from spicer.ml.adam import AdamState, adam_step
from spicer.ml.cnn import CnnParams, ConvLayer
from spicer.ml.engine import ModelParams, UnrollOptions, init_model_params
from spicer.ml.losses import LossBreakdown, total_loss_and_grad
from spicer.models.schemas import TrainConfig
from spicer.models.types import TrainingPair
from spicer.services.numerics import complex_dtype, real_dtype, seeded_rng
from spicer.services.storage import read_container, write_container

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SPCK"
_EPOCH_SEED_STRIDE = 1_000_003


@dataclass
class Checkpoint:
    """Parâmetros, estado do Adam e histórico de um treino"""
    params: ModelParams
    adam_state: AdamState
    config: TrainConfig
    epoch: int = 0
    loss_history: List[float] = field(default_factory=list)

    @property
    def options(self) -> UnrollOptions:
        return options_from_config(self.config)


def options_from_config(config: TrainConfig) -> UnrollOptions:
    return UnrollOptions(
        csm_mode=config.csm_mode,
        use_data_consistency=config.use_data_consistency,
        stop_csm_grad_in_loop=config.stop_csm_grad_in_loop,
        shared_weights=config.shared_weights,
        fov_threshold=config.fov_threshold,
    )


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Permutação Fisher-Yates semeada por (seed, época)"""
    rng = seeded_rng(seed * _EPOCH_SEED_STRIDE + epoch)
    order = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def cast_pair(pair: TrainingPair, precision) -> TrainingPair:
    """Só as medidas; referências não seguem para o treino"""
    dtype = complex_dtype(precision)
    y = type(pair.y)(pair.y.data.astype(dtype), pair.y.mask, pair.y.noise_sigma)
    y_prime = type(pair.y_prime)(pair.y_prime.data.astype(dtype), pair.y_prime.mask, pair.y_prime.noise_sigma)
    return TrainingPair(y, y_prime)

# =================== Treinador ===================

class SpicerTrainer:
    """Loop de treino: minibatches embaralhados, Adam e agenda de taxa de aprendizado"""

    def __init__(self, config: TrainConfig, progress: bool = True):
        self.config = config
        self.options = options_from_config(config)
        self.progress = progress

    def initialize(self, n_coils: int) -> Checkpoint:
        params = init_model_params(
            self.config.K,
            n_coils,
            self.config.features,
            self.config.gamma_init,
            self.config.tau_init,
            self.config.seed,
            self.options,
            dtype=real_dtype(self.config.precision),
        )
        return Checkpoint(params, AdamState.zeros_like(params.arrays()), self.config)

    def sample_loss_and_grad(self, pair: TrainingPair, params: ModelParams) -> Tuple[LossBreakdown, ModelParams]:
        return total_loss_and_grad(
            pair, params, self.config.lambda_smooth, self.options, self.config.loss_norm
        )

    def _batch_gradients(self, batch: Sequence[Tuple[int, TrainingPair]], params: ModelParams, executor):
        """Resultados em ordem de índice da amostra, qualquer que seja o paralelismo"""
        indexed = sorted(batch, key=lambda item: item[0])
        if executor is None:
            results = [self.sample_loss_and_grad(pair, params) for _, pair in indexed]
        else:
            results = list(executor.map(lambda item: self.sample_loss_and_grad(item[1], params), indexed))
        return [idx for idx, _ in indexed], results

    def fit(
        self,
        dataset: Sequence[TrainingPair],
        checkpoint: Optional[Checkpoint] = None,
        on_epoch: Optional[Callable[[Checkpoint], None]] = None,
    ) -> Checkpoint:
        """Treina até config.epochs épocas no total (retoma a partir do checkpoint, se dado)"""
        if not dataset:
            raise ConfigError("Dataset de treino vazio")
        pairs = [cast_pair(p, self.config.precision) for p in dataset]
        ckpt = checkpoint or self.initialize(pairs[0].y.n_coils)
        if ckpt.params.phi is not None and ckpt.params.phi.in_channels != 2 * pairs[0].y.n_coils:
            raise ConfigError("Checkpoint incompatível com o número de bobinas do dataset")

        params, state = ckpt.params, ckpt.adam_state
        history = list(ckpt.loss_history)
        bs = self.config.batch_size
        workers = self.config.workers
        executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

        start = ckpt.epoch
        logger.info(f"🚀 Treino: épocas {start + 1}..{self.config.epochs}, {len(pairs)} pares, batch={bs}")
        try:
            epochs = tqdm(range(start, self.config.epochs), desc="Treinando", disable=not self.progress)
            for epoch in epochs:
                lr = self.config.lr_at(epoch)
                order = epoch_order(len(pairs), self.config.seed, epoch)
                losses = []
                for b, begin in enumerate(range(0, len(order), bs)):
                    batch = [(int(i), pairs[int(i)]) for i in order[begin:begin + bs]]
                    indices, results = self._batch_gradients(batch, params, executor)

                    summed = None
                    for idx, (breakdown, grads) in zip(indices, results):
                        if not np.isfinite(breakdown.total):
                            raise NumericError(f"Perda não finita na amostra {idx}, época {epoch + 1}, passo {b}")
                        losses.append(breakdown.total)
                        arrays = grads.arrays()
                        summed = arrays if summed is None else [s + a for s, a in zip(summed, arrays)]
                    scale = 1.0 / len(batch)
                    summed = [s * scale for s in summed]
                    for a in summed:
                        if not np.all(np.isfinite(a)):
                            raise NumericError(
                                f"Gradiente não finito no lote com amostras {indices}, época {epoch + 1}, passo {b}"
                            )
                    params, state = adam_step(params, params.with_arrays(summed), state, lr)

                mean_loss = float(np.mean(losses))
                history.append(mean_loss)
                epochs.set_postfix(loss=f"{mean_loss:.4e}", lr=f"{lr:.0e}")
                logger.info(f"Época {epoch + 1}/{self.config.epochs}: perda média {mean_loss:.6e} (lr={lr:.1e})")
                ckpt = Checkpoint(params, state, self.config, epoch + 1, list(history))
                if on_epoch is not None:
                    on_epoch(ckpt)
        finally:
            if executor is not None:
                executor.shutdown()

        return Checkpoint(params, state, self.config, max(start, self.config.epochs), history)


def train(
    dataset: Sequence[TrainingPair],
    config: TrainConfig,
    checkpoint: Optional[Checkpoint] = None,
    progress: bool = False,
) -> Checkpoint:
    """Atalho funcional para SpicerTrainer.fit"""
    return SpicerTrainer(config, progress=progress).fit(dataset, checkpoint)

# =================== Checkpoints ===================

def _net_arrays(prefix: str, net: CnnParams) -> List[Tuple[str, np.ndarray]]:
    out = []
    for i, layer in enumerate(net.layers):
        out.append((f"{prefix}.layer{i}.kernel", layer.kernel.astype(np.float64)))
        out.append((f"{prefix}.layer{i}.bias", layer.bias.astype(np.float64)))
    return out


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    """Grava .spck; payload sempre em f64 little-endian"""
    params = ckpt.params
    arrays: List[Tuple[str, np.ndarray]] = []
    for k, net in enumerate(params.theta):
        arrays += _net_arrays(f"theta{k}", net)
    if params.phi is not None:
        arrays += _net_arrays("phi", params.phi)
    arrays += [("gamma", params.gamma), ("tau", params.tau)]
    for i, (m, v) in enumerate(zip(ckpt.adam_state.m, ckpt.adam_state.v)):
        arrays += [(f"adam.m{i}", m.astype(np.float64)), (f"adam.v{i}", v.astype(np.float64))]

    header = {
        "content": "checkpoint",
        "architecture": {
            "theta": [net.descriptor() for net in params.theta],
            "phi": params.phi.descriptor() if params.phi is not None else None,
        },
        "K": params.K,
        "features": list(ckpt.config.features),
        "lambda_smooth": ckpt.config.lambda_smooth,
        "epoch": ckpt.epoch,
        "loss_history": list(ckpt.loss_history),
        "config": ckpt.config.model_dump(mode="json"),
        "options": ckpt.options.to_dict(),
        "adam": {
            "step_count": ckpt.adam_state.step_count,
            "beta1": ckpt.adam_state.beta1,
            "beta2": ckpt.adam_state.beta2,
            "eps": ckpt.adam_state.eps,
        },
    }
    write_container(path, CHECKPOINT_MAGIC, header, arrays)
    logger.info(f"✅ Checkpoint gravado: {path} (época {ckpt.epoch})")


def _net_from(prefix: str, desc: Dict, arrays: Dict[str, np.ndarray], dtype) -> CnnParams:
    layers = [
        ConvLayer(arrays[f"{prefix}.layer{i}.kernel"].astype(dtype), arrays[f"{prefix}.layer{i}.bias"].astype(dtype))
        for i in range(len(desc["layers"]))
    ]
    return CnnParams(layers, desc["in_channels"], desc["out_channels"], tuple(desc["features"]), desc["residual"])


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Lê .spck e reconstrói parâmetros na precisão da configuração gravada"""
    header, arrays = read_container(path, CHECKPOINT_MAGIC)
    if header.get("content") != "checkpoint":
        raise FileFormatError(f"{path}: conteúdo '{header.get('content')}' não é um checkpoint")

    config = TrainConfig.model_validate(header["config"])
    dtype = real_dtype(config.precision)
    arch = header["architecture"]
    theta = [_net_from(f"theta{k}", desc, arrays, dtype) for k, desc in enumerate(arch["theta"])]
    phi = _net_from("phi", arch["phi"], arrays, dtype) if arch["phi"] is not None else None
    params = ModelParams(theta, phi, arrays["gamma"], arrays["tau"])

    n = len(params.arrays())
    adam = header["adam"]
    like = params.arrays()
    state = AdamState(
        m=[arrays[f"adam.m{i}"].astype(like[i].dtype) for i in range(n)],
        v=[arrays[f"adam.v{i}"].astype(like[i].dtype) for i in range(n)],
        step_count=int(adam["step_count"]),
        beta1=float(adam["beta1"]),
        beta2=float(adam["beta2"]),
        eps=float(adam["eps"]),
    )
    logger.info(f"Checkpoint carregado: {path} (época {header['epoch']})")
    return Checkpoint(params, state, config, int(header["epoch"]), [float(v) for v in header["loss_history"]])
