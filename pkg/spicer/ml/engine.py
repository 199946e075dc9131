"""
ml/engine.py
Reconstrução desenrolada em K passos com CSMs estimados e retropropagação exata

    c⁰ = F⁻¹ y
    c^{k+1} = c^k − γ^k (∇g(c^k, y) + τ^k · S R^k_θ(Sᴴ c^k))
    x = Sᴴ c^K
"""

import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from spicer.exceptions import ConfigError, ShapeError, StaleTapeError
from spicer.ml.cnn import (
    ActivationTape,
    CnnParams,
    channels_to_complex,
    cnn_backward,
    cnn_forward,
    complex_to_channels,
    init_cnn,
)
from spicer.models.enums import CsmMode
from spicer.models.schemas import MAX_UNROLL
from spicer.models.types import CoilSensitivities, MultiCoilKspace
from spicer.services.csm import (
    CsmTrace,
    csm_network_backward,
    estimate_csm_classical,
    estimate_csm_network,
)
from spicer.services.numerics import ifft2c, seeded_rng
from spicer.services.operators import coil_combine, coil_expand, dc_gradient, masked_normal

logger = logging.getLogger(__name__)

_tokens = itertools.count(1)

# =================== Opções ===================

@dataclass(frozen=True)
class UnrollOptions:
    """Chaves de ablação do desenrolamento"""
    csm_mode: CsmMode = CsmMode.LEARNED
    use_data_consistency: bool = True
    stop_csm_grad_in_loop: bool = False
    shared_weights: bool = False
    fov_threshold: float = 0.1

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["csm_mode"] = CsmMode(self.csm_mode).value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UnrollOptions":
        data = dict(data)
        data["csm_mode"] = CsmMode(data.get("csm_mode", CsmMode.LEARNED))
        return cls(**data)

# =================== Parâmetros ===================

@dataclass
class ModelParams:
    """Todos os treináveis: {θ_k}, φ, {γ^k}, {τ^k}"""
    theta: List[CnnParams]
    phi: Optional[CnnParams]
    gamma: np.ndarray
    tau: np.ndarray
    token: int = field(default_factory=lambda: next(_tokens))

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        self.tau = np.asarray(self.tau, dtype=np.float64).reshape(-1)
        if self.gamma.size < 1 or self.gamma.size != self.tau.size:
            raise ShapeError("γ e τ devem ter o mesmo tamanho K ≥ 1")
        if len(self.theta) not in (1, self.gamma.size):
            raise ShapeError(f"{len(self.theta)} denoisers para K={self.gamma.size}")
        if not (np.all(np.isfinite(self.gamma)) and np.all(np.isfinite(self.tau))):
            raise ConfigError("γ e τ devem ser finitos")

    @property
    def K(self) -> int:
        return int(self.gamma.size)

    @property
    def shared(self) -> bool:
        return len(self.theta) == 1 and self.K > 1

    def denoiser(self, k: int) -> CnnParams:
        return self.theta[0] if len(self.theta) == 1 else self.theta[k]

    def arrays(self) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for net in self.theta:
            out.extend(net.arrays())
        if self.phi is not None:
            out.extend(self.phi.arrays())
        out.extend([self.gamma, self.tau])
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "ModelParams":
        arrays = list(arrays)
        cursor = 0
        theta = []
        for net in self.theta:
            n = len(net.layers) * 2
            theta.append(net.with_arrays(arrays[cursor:cursor + n]))
            cursor += n
        phi = None
        if self.phi is not None:
            n = len(self.phi.layers) * 2
            phi = self.phi.with_arrays(arrays[cursor:cursor + n])
            cursor += n
        if cursor + 2 != len(arrays):
            raise ShapeError("Quantidade de arrays incompatível com ModelParams")
        return ModelParams(theta, phi, arrays[cursor], arrays[cursor + 1])

    def copy(self) -> "ModelParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "ModelParams":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init_model_params(
    K: int,
    n_coils: int,
    features: Sequence[int] = (16, 32),
    gamma_init: float = 1.0,
    tau_init: float = 0.1,
    seed: int = 0,
    options: UnrollOptions = UnrollOptions(),
    dtype=np.float64,
) -> ModelParams:
    """R_θ sem resíduo (começa em zero); P_φ com resíduo (começa no estimador clássico)"""
    if not 1 <= K <= MAX_UNROLL:
        raise ConfigError(f"K deve estar em [1, {MAX_UNROLL}], obtido {K}")
    rng = seeded_rng(seed)
    n_theta = 1 if options.shared_weights else K
    theta = [init_cnn(2, 2, features, residual=False, rng=rng, dtype=dtype) for _ in range(n_theta)]
    phi = None
    if CsmMode(options.csm_mode) == CsmMode.LEARNED:
        phi = init_cnn(2 * n_coils, 2 * n_coils, features, residual=True, rng=rng, dtype=dtype)
    params = ModelParams(theta, phi, np.full(K, gamma_init), np.full(K, tau_init))
    logger.info(f"Modelo inicializado: K={K}, {n_coils} bobinas, {params.n_params()} parâmetros")
    return params

# =================== Forward ===================

@dataclass
class UnrollTrace:
    """Estados intermediários de uma passada direta"""
    token: int
    y: MultiCoilKspace
    csm: CoilSensitivities
    csm_trace: Optional[CsmTrace]
    c_states: List[np.ndarray]
    denoised: List[np.ndarray]
    tapes: List[ActivationTape]
    options: UnrollOptions


def spicer_reconstruct(
    y: MultiCoilKspace,
    params: ModelParams,
    options: UnrollOptions = UnrollOptions(),
    c_init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, CoilSensitivities, UnrollTrace]:
    """
    Executa os K passos e retorna (x, S, trace).
    `c_init` substitui o ponto de partida F⁻¹y (imagens por bobina, mesma forma de y).
    """
    mode = CsmMode(options.csm_mode)
    csm_trace = None
    if mode == CsmMode.LEARNED:
        if params.phi is None:
            raise ConfigError("Modo de CSM aprendido sem rede P_φ")
        S, csm_trace = estimate_csm_network(y, params.phi, options.fov_threshold, with_trace=True)
    else:
        S = estimate_csm_classical(y, options.fov_threshold)

    net_dtype = params.denoiser(0).layers[0].kernel.dtype
    if c_init is None:
        c = ifft2c(y.data)
    else:
        if np.shape(c_init) != y.data.shape:
            raise ShapeError(f"c_init {np.shape(c_init)} incompatível com y {y.data.shape}")
        c = np.asarray(c_init, dtype=y.data.dtype).copy()
    c_states = [c]
    denoised, tapes = [], []
    for k in range(params.K):
        z = coil_combine(c, S)
        out, tape = cnn_forward(params.denoiser(k), complex_to_channels(z).astype(net_dtype))
        r = channels_to_complex(out, squeeze=True).astype(c.dtype)
        step = params.tau[k] * coil_expand(r, S)
        if options.use_data_consistency:
            step = dc_gradient(c, y) + step
        c = (c - params.gamma[k] * step).astype(y.data.dtype)
        c_states.append(c)
        denoised.append(r)
        tapes.append(tape)

    x = coil_combine(c, S)
    trace = UnrollTrace(params.token, y, S, csm_trace, c_states, denoised, tapes, options)
    return x, S, trace

# =================== Backward ===================

def unroll_backward(
    trace: UnrollTrace,
    params: ModelParams,
    grad_x: np.ndarray,
    grad_csm: Optional[np.ndarray] = None,
) -> ModelParams:
    """
    Gradientes reversos de x (e opcionalmente de S, via grad_csm) em relação a todos os parâmetros.
    Convenção complexa: G = ∂L/∂Re + i ∂L/∂Im.
    """
    if trace.token != params.token:
        raise StaleTapeError("Trace não corresponde aos parâmetros atuais")
    opts = trace.options
    maps = trace.csm.maps
    y = trace.y
    K = params.K

    learned = trace.csm_trace is not None
    grad_S = np.zeros_like(maps) if grad_csm is None else np.array(grad_csm, dtype=maps.dtype)

    # x = Sᴴ c^K
    c_K = trace.c_states[-1]
    G = maps * grad_x[None]
    grad_S += c_K * np.conj(grad_x)[None]

    grad_gamma = np.zeros(K)
    grad_tau = np.zeros(K)
    theta_grads: List[Optional[List[np.ndarray]]] = [None] * len(params.theta)

    for k in range(K - 1, -1, -1):
        c = trace.c_states[k]
        r = trace.denoised[k]
        gamma, tau = params.gamma[k], params.tau[k]
        e = coil_expand(r, maps)

        dc = dc_gradient(c, y) if opts.use_data_consistency else None
        direction = tau * e if dc is None else dc + tau * e
        grad_gamma[k] = -float(np.real(np.vdot(direction, G)))
        grad_tau[k] = -gamma * float(np.real(np.vdot(e, G)))

        G_next = G
        if dc is not None:
            G_next = G_next - gamma * masked_normal(G, y.mask)

        # e = S r
        G_e = -gamma * tau * G
        G_r = coil_combine(G_e, maps)
        if not opts.stop_csm_grad_in_loop:
            grad_S += G_e * np.conj(r)[None]

        net = params.denoiser(k)
        g_out = complex_to_channels(G_r).astype(net.layers[0].kernel.dtype)
        net_grad, g_in = cnn_backward(net, trace.tapes[k], g_out)
        slot = 0 if len(params.theta) == 1 else k
        if theta_grads[slot] is None:
            theta_grads[slot] = net_grad.arrays()
        else:
            theta_grads[slot] = [a + b for a, b in zip(theta_grads[slot], net_grad.arrays())]

        # z = Sᴴ c
        G_z = channels_to_complex(g_in, squeeze=True)
        G_next = G_next + maps * G_z[None]
        if not opts.stop_csm_grad_in_loop:
            grad_S += c * np.conj(G_z)[None]

        G = G_next

    arrays: List[np.ndarray] = []
    for net, grads in zip(params.theta, theta_grads):
        arrays.extend(grads if grads is not None else [np.zeros_like(a) for a in net.arrays()])
    if params.phi is not None:
        if learned:
            arrays.extend(csm_network_backward(trace.csm_trace, params.phi, grad_S).arrays())
        else:
            arrays.extend(np.zeros_like(a) for a in params.phi.arrays())
    arrays.extend([grad_gamma, grad_tau])
    return params.with_arrays(arrays)
