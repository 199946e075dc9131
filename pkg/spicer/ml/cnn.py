"""
ml/cnn.py
U-Net reduzida em numpy com retropropagação exata

Arquitetura (features = (f0, f1, ..., fD)):
    nível l do codificador: conv(→f_l) ReLU conv(f_l→f_l) ReLU, seguido de média 2×2
    nível l do decodificador: upsample ×2 (vizinho mais próximo), concat com o skip,
                              conv(→f_l) ReLU conv(f_l→f_l) ReLU
    saída: conv 3×3 (f0→out) sem ativação, mais o resíduo da entrada quando residual=True
Com features vazio a rede é uma única convolução linear.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from spicer.exceptions import ShapeError, StaleTapeError

logger = logging.getLogger(__name__)

_tokens = itertools.count(1)

# =================== Conversão complexa ===================

def complex_to_channels(x: np.ndarray) -> np.ndarray:
    """(H,W) → (2,H,W); (n_c,H,W) → (2·n_c,H,W) na ordem re, im por bobina"""
    x = np.asarray(x)
    stack = x[None] if x.ndim == 2 else x
    out = np.empty((2 * stack.shape[0],) + stack.shape[1:], dtype=np.real(stack).dtype)
    out[0::2] = stack.real
    out[1::2] = stack.imag
    return out


def channels_to_complex(ch: np.ndarray, squeeze: bool = False) -> np.ndarray:
    """Inversa de complex_to_channels"""
    if ch.shape[0] % 2:
        raise ShapeError(f"Número ímpar de canais: {ch.shape[0]}")
    out = ch[0::2] + 1j * ch[1::2]
    if squeeze and out.shape[0] == 1:
        return out[0]
    return out

# =================== Parâmetros ===================

@dataclass
class ConvLayer:
    kernel: np.ndarray  # (out, in, 3, 3)
    bias: np.ndarray    # (out,)


@dataclass
class CnnParams:
    """Pesos de uma rede; cada instância recebe um token novo"""
    layers: List[ConvLayer]
    in_channels: int
    out_channels: int
    features: Tuple[int, ...]
    residual: bool = False
    token: int = field(default_factory=lambda: next(_tokens))

    def __post_init__(self):
        if self.layers[-1].kernel.shape[0] != self.out_channels:
            raise ShapeError("Última camada não corresponde a out_channels")
        for layer in self.layers:
            if layer.kernel.shape[2:] != (3, 3):
                raise ShapeError(f"Kernel deve ser 3×3, obtido {layer.kernel.shape}")

    @property
    def depth(self) -> int:
        return max(len(self.features) - 1, 0)

    @property
    def n_params(self) -> int:
        return sum(l.kernel.size + l.bias.size for l in self.layers)

    def arrays(self) -> List[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.kernel, layer.bias])
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "CnnParams":
        if len(arrays) != 2 * len(self.layers):
            raise ShapeError("Quantidade de arrays incompatível com as camadas")
        layers = [ConvLayer(arrays[2 * i], arrays[2 * i + 1]) for i in range(len(self.layers))]
        return CnnParams(layers, self.in_channels, self.out_channels, self.features, self.residual)

    def copy(self) -> "CnnParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "CnnParams":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def astype(self, dtype) -> "CnnParams":
        return self.with_arrays([a.astype(dtype) for a in self.arrays()])

    def descriptor(self) -> Dict[str, Any]:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "features": list(self.features),
            "residual": self.residual,
            "layers": [list(l.kernel.shape) for l in self.layers],
        }


def _layer_shapes(in_ch: int, out_ch: int, features: Sequence[int]) -> List[Tuple[int, int]]:
    """Pares (in, out) de cada convolução na ordem de execução"""
    shapes = []
    prev = in_ch
    for f in features:
        shapes += [(prev, f), (f, f)]
        prev = f
    for level in range(len(features) - 2, -1, -1):
        f = features[level]
        shapes += [(features[level + 1] + f, f), (f, f)]
    shapes.append((features[0] if features else in_ch, out_ch))
    return shapes


def init_cnn(
    in_channels: int,
    out_channels: int,
    features: Sequence[int] = (16, 32),
    residual: bool = False,
    rng: Optional[np.random.Generator] = None,
    dtype=np.float64,
) -> CnnParams:
    """Kaiming-uniforme nas camadas ocultas, zeros na camada final"""
    if residual and in_channels != out_channels:
        raise ShapeError("Resíduo exige in_channels == out_channels")
    rng = rng or np.random.default_rng(0)
    shapes = _layer_shapes(in_channels, out_channels, tuple(features))
    layers = []
    for i, (cin, cout) in enumerate(shapes):
        if i == len(shapes) - 1:
            kernel = np.zeros((cout, cin, 3, 3), dtype=dtype)
        else:
            bound = np.sqrt(6.0 / (cin * 9))
            kernel = rng.uniform(-bound, bound, size=(cout, cin, 3, 3)).astype(dtype)
        layers.append(ConvLayer(kernel, np.zeros(cout, dtype=dtype)))
    params = CnnParams(layers, in_channels, out_channels, tuple(features), residual)
    logger.debug(f"Rede criada: {params.n_params} parâmetros, features={tuple(features)}")
    return params

# =================== Primitivas ===================

def conv2d(x: np.ndarray, kernel: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """Correlação 3×3 com padding zero 'same': (C,H,W) → (O,H,W)"""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (C,H,W,3,3)
    out = np.tensordot(kernel, windows, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out += bias[:, None, None]
    return out


def conv2d_backward(x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Retorna (grad_input, grad_kernel, grad_bias)"""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(1, 2))
    grad_kernel = np.tensordot(grad_out, windows, axes=([1, 2], [1, 2]))
    grad_bias = grad_out.sum(axis=(1, 2))
    flipped = np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_input = conv2d(grad_out, flipped)
    return grad_input, grad_kernel, grad_bias


def avg_pool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def avg_pool2_backward(grad: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(grad, 2, axis=1), 2, axis=2) * 0.25


def upsample2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(grad: np.ndarray) -> np.ndarray:
    c, h, w = grad.shape
    return grad.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))

# =================== Forward / backward ===================

@dataclass
class ActivationTape:
    """Entradas e máscaras ReLU de cada convolução, na ordem do forward"""
    token: int
    inputs: List[np.ndarray] = field(default_factory=list)
    relu_masks: List[Optional[np.ndarray]] = field(default_factory=list)
    skip_channels: List[int] = field(default_factory=list)


def cnn_forward(params: CnnParams, x: np.ndarray) -> Tuple[np.ndarray, ActivationTape]:
    """Aplica a rede a uma pilha real (C,H,W)"""
    if x.ndim != 3 or x.shape[0] != params.in_channels:
        raise ShapeError(f"Entrada {x.shape} incompatível com {params.in_channels} canais")
    factor = 2 ** params.depth
    if x.shape[1] % factor or x.shape[2] % factor:
        raise ShapeError(f"H e W devem ser divisíveis por {factor}, obtido {x.shape[1:]}")

    tape = ActivationTape(token=params.token)
    layers = iter(params.layers)

    def conv_relu(h: np.ndarray) -> np.ndarray:
        layer = next(layers)
        tape.inputs.append(h)
        pre = conv2d(h, layer.kernel, layer.bias)
        mask = pre > 0
        tape.relu_masks.append(mask)
        return pre * mask

    h = x
    skips = []
    n_levels = len(params.features)
    for level in range(n_levels):
        h = conv_relu(conv_relu(h))
        if level < n_levels - 1:
            skips.append(h)
            h = avg_pool2(h)
    for level in range(n_levels - 2, -1, -1):
        skip = skips[level]
        tape.skip_channels.append(skip.shape[0])
        h = np.concatenate([upsample2(h), skip], axis=0)
        h = conv_relu(conv_relu(h))

    final = params.layers[-1]
    tape.inputs.append(h)
    tape.relu_masks.append(None)
    out = conv2d(h, final.kernel, final.bias)
    if params.residual:
        out = out + x
    return out, tape


def cnn_backward(params: CnnParams, tape: ActivationTape, grad_out: np.ndarray) -> Tuple[CnnParams, np.ndarray]:
    """Gradientes exatos de uma passada registrada em `tape`"""
    if tape.token != params.token:
        raise StaleTapeError("Tape não corresponde aos parâmetros atuais da rede")

    grads: List[Optional[ConvLayer]] = [None] * len(params.layers)
    idx = len(params.layers) - 1

    def back_conv(g: np.ndarray, relu: bool) -> np.ndarray:
        nonlocal idx
        if relu:
            g = g * tape.relu_masks[idx]
        layer = params.layers[idx]
        gin, gk, gb = conv2d_backward(tape.inputs[idx], layer.kernel, g)
        grads[idx] = ConvLayer(gk, gb)
        idx -= 1
        return gin

    g = back_conv(grad_out, relu=False)
    n_levels = len(params.features)
    skip_grads = [None] * max(n_levels - 1, 0)
    for i, level in enumerate(range(0, n_levels - 1)):
        g = back_conv(back_conv(g, True), True)
        n_skip = tape.skip_channels[len(tape.skip_channels) - 1 - i]
        skip_grads[level] = g[-n_skip:]
        g = upsample2_backward(g[:-n_skip])
    for level in range(n_levels - 1, -1, -1):
        if level < n_levels - 1:
            g = avg_pool2_backward(g) + skip_grads[level]
        g = back_conv(back_conv(g, True), True)

    if params.residual:
        g = g + grad_out
    arrays = []
    for layer in grads:
        arrays.extend([layer.kernel, layer.bias])
    return params.with_arrays(arrays), g
