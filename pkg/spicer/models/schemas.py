"""
models/schemas.py
Schemas Pydantic para validação das configurações de experimento, treino e TV
"""

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from spicer.exceptions import ConfigError
from spicer.models.enums import CsmMode, LossNorm, MaskKind, PhantomKind, Precision

MAX_UNROLL = 16

# =================== Base ===================

class BaseSchema(BaseModel):
    """Schema base com configurações padrão"""
    model_config = ConfigDict(
        validate_assignment=True,
        extra="forbid",
        frozen=False,
    )


def _parse_schedule(value: Any) -> Any:
    """Aceita "0:1e-3,30:1e-4" além de listas de pares"""
    if isinstance(value, str):
        pairs = []
        for chunk in value.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            if ":" not in chunk:
                raise ValueError(f"entrada de agenda inválida: {chunk!r}")
            epoch, lr = chunk.split(":", 1)
            pairs.append((int(epoch), float(lr)))
        return pairs
    return value


def _parse_int_tuple(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(int(v) for v in value.replace("x", ",").split(",") if v.strip())
    return value

# =================== Treino ===================

class TrainConfig(BaseSchema):
    """Hiperparâmetros do treino auto-supervisionado"""
    epochs: int = Field(60, ge=1)
    batch_size: int = Field(1, ge=1)
    lr_schedule: List[Tuple[int, float]] = Field(default_factory=lambda: [(0, 1e-3), (30, 1e-4)])
    lambda_smooth: float = Field(0.01, ge=0.0)
    K: int = Field(8, ge=1, le=MAX_UNROLL)
    seed: int = 0
    precision: Precision = Precision.F64
    features: Tuple[int, ...] = (16, 32)
    gamma_init: float = 1.0
    tau_init: float = 0.1
    fov_threshold: float = Field(0.1, gt=0.0, lt=1.0)
    csm_mode: CsmMode = CsmMode.LEARNED
    use_data_consistency: bool = True
    stop_csm_grad_in_loop: bool = False
    shared_weights: bool = False
    loss_norm: LossNorm = LossNorm.L2
    workers: int = Field(1, ge=1)

    @field_validator("lr_schedule", mode="before")
    @classmethod
    def parse_schedule(cls, v):
        return _parse_schedule(v)

    @field_validator("features", mode="before")
    @classmethod
    def parse_features(cls, v):
        return _parse_int_tuple(v)

    @field_validator("lr_schedule")
    @classmethod
    def validate_schedule(cls, v):
        if not v:
            raise ValueError("agenda de taxa de aprendizado vazia")
        epochs = [e for e, _ in v]
        if epochs != sorted(epochs) or epochs[0] != 0:
            raise ValueError("agenda deve começar na época 0 e ser crescente")
        if any(lr <= 0 for _, lr in v):
            raise ValueError("taxas de aprendizado devem ser positivas")
        return [(int(e), float(lr)) for e, lr in v]

    @field_validator("features")
    @classmethod
    def validate_features(cls, v):
        if not v or any(f < 1 for f in v):
            raise ValueError("larguras de canal devem ser positivas")
        return tuple(v)

    @property
    def depth(self) -> int:
        return len(self.features) - 1

    def lr_at(self, epoch: int) -> float:
        """Taxa de aprendizado vigente na época (base 0)"""
        lr = self.lr_schedule[0][1]
        for start, value in self.lr_schedule:
            if epoch >= start:
                lr = value
        return lr

# =================== TV ===================

class TvConfig(BaseSchema):
    """Gradiente proximal com prox de TV anisotrópico"""
    tau: float = Field(1e-3, gt=0.0)
    outer_iters: int = Field(100, ge=1)
    step: float = Field(1.0, gt=0.0)
    prox_iters: int = Field(20, ge=1)

# =================== Experimento ===================

class ExperimentConfig(BaseSchema):
    """Configuração plana do experimento (arquivo chave=valor + flags)"""
    model_config = ConfigDict(validate_assignment=True, extra="forbid", populate_by_name=True)

    # simulação
    h: int = Field(64, ge=8)
    w: int = Field(64, ge=8)
    nc: int = Field(4, ge=2, le=32)
    r: float = Field(4.0, ge=1.0)
    acs: int = Field(12, ge=1)
    mask_kind: MaskKind = MaskKind.EQUISPACED
    phantom: PhantomKind = PhantomKind.SMOOTH_RANDOM
    noise: Optional[float] = Field(None, ge=0.0)
    n_train: int = Field(32, ge=1)
    n_test: int = Field(8, ge=1)
    seed: int = 0

    # treino
    K: int = Field(4, ge=1, le=MAX_UNROLL)
    lambda_smooth: float = Field(0.01, ge=0.0, alias="lambda")
    epochs: int = Field(60, ge=1)
    batch_size: int = Field(1, ge=1)
    lr_schedule: str = "0:1e-3,30:1e-4"
    features: str = "16,32"
    fov_threshold: float = Field(0.1, gt=0.0, lt=1.0)
    csm_mode: CsmMode = CsmMode.LEARNED
    use_data_consistency: bool = True
    stop_csm_grad_in_loop: bool = False
    shared_weights: bool = False
    loss_norm: LossNorm = LossNorm.L2
    workers: int = Field(1, ge=1)
    precision: Precision = Precision.F64

    # baselines
    tv_tau: Optional[float] = Field(None, gt=0.0)
    tv_iters: int = Field(100, ge=1)
    tv_prox_iters: int = Field(20, ge=1)
    grappa_kernel: str = "5x4"
    grappa_ridge: float = Field(1e-6, ge=0.0)

    # caminhos
    out: str = "runs/default"
    train_data: Optional[str] = None
    test_data: Optional[str] = None
    checkpoint: Optional[str] = None

    @model_validator(mode="after")
    def validate_ranges(self):
        if self.acs > self.h:
            raise ValueError(f"acs={self.acs} maior que h={self.h}")
        factor = 2 ** (len(_parse_int_tuple(self.features)) - 1)
        if self.h % factor or self.w % factor:
            raise ValueError(f"h e w devem ser divisíveis por {factor}")
        _parse_schedule(self.lr_schedule)
        kernel = _parse_int_tuple(self.grappa_kernel)
        if len(kernel) != 2 or min(kernel) < 1:
            raise ValueError(f"grappa_kernel inválido: {self.grappa_kernel}")
        return self

    @property
    def kernel_hw(self) -> Tuple[int, int]:
        kx, ky = _parse_int_tuple(self.grappa_kernel)
        return int(kx), int(ky)

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_schedule=self.lr_schedule,
            lambda_smooth=self.lambda_smooth,
            K=self.K,
            seed=self.seed,
            precision=self.precision,
            features=self.features,
            fov_threshold=self.fov_threshold,
            csm_mode=self.csm_mode,
            use_data_consistency=self.use_data_consistency,
            stop_csm_grad_in_loop=self.stop_csm_grad_in_loop,
            shared_weights=self.shared_weights,
            loss_norm=self.loss_norm,
            workers=self.workers,
        )

    def to_tv_config(self, tau: Optional[float] = None) -> TvConfig:
        return TvConfig(
            tau=tau or self.tv_tau or 1e-3,
            outer_iters=self.tv_iters,
            prox_iters=self.tv_prox_iters,
        )


def build_experiment_config(values: Dict[str, Any]) -> ExperimentConfig:
    """Valida um dicionário plano, convertendo erros de validação em ConfigError"""
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Configuração inválida: {problems}") from e
