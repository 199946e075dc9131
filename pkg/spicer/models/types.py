"""
models/types.py
Tipos de domínio: máscaras, k-space multi-bobina, mapas de sensibilidade e pares de treino
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from spicer.exceptions import ShapeError
from spicer.models.enums import MaskKind

# Imagem complexa única (H×W) e pilha multi-bobina (n_c×H×W) são ndarrays simples
ComplexImage = np.ndarray
MultiCoilImage = np.ndarray

MIN_SIZE = 8

# =================== Máscara ===================

@dataclass(frozen=True)
class SamplingMask:
    """Seletor de linhas de fase P com o bloco ACS registrado"""
    height: int
    width: int
    selected_lines: Tuple[int, ...]
    acs_lines: Tuple[int, ...]
    kind: MaskKind = MaskKind.EQUISPACED
    accel_R: float = 1.0
    offset: int = 0

    def __post_init__(self):
        selected = tuple(sorted(set(int(r) for r in self.selected_lines)))
        acs = tuple(sorted(set(int(r) for r in self.acs_lines)))
        object.__setattr__(self, "selected_lines", selected)
        object.__setattr__(self, "acs_lines", acs)

        if self.height < 1 or self.width < 1:
            raise ShapeError(f"Máscara com dimensões inválidas: {self.height}×{self.width}")
        if not selected:
            raise ShapeError("Máscara sem nenhuma linha selecionada")
        if selected[0] < 0 or selected[-1] >= self.height:
            raise ShapeError(f"Linhas fora de [0, {self.height})")
        if not set(acs) <= set(selected):
            raise ShapeError("Linhas ACS devem estar contidas nas linhas selecionadas")
        if acs and acs[-1] - acs[0] + 1 != len(acs):
            raise ShapeError("Bloco ACS deve ser contíguo")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def sampling_rate(self) -> float:
        return len(self.selected_lines) / self.height

    @property
    def rows(self) -> np.ndarray:
        """Vetor booleano (H,) das linhas adquiridas"""
        rows = np.zeros(self.height, dtype=bool)
        rows[list(self.selected_lines)] = True
        return rows

    def array(self, dtype=np.float64) -> np.ndarray:
        """Máscara densa (H, W), constante ao longo da leitura"""
        return np.repeat(self.rows[:, None], self.width, axis=1).astype(dtype)

    def acs_only(self) -> "SamplingMask":
        """Máscara contendo apenas o bloco ACS"""
        if not self.acs_lines:
            raise ShapeError("Máscara sem linhas ACS")
        return replace(self, selected_lines=self.acs_lines, accel_R=1.0, offset=0)

    def to_descriptor(self) -> Dict[str, Any]:
        return {
            "height": self.height,
            "width": self.width,
            "selected_lines": list(self.selected_lines),
            "acs_lines": list(self.acs_lines),
            "kind": MaskKind(self.kind).value,
            "accel_R": float(self.accel_R),
            "offset": int(self.offset),
        }

    @classmethod
    def from_descriptor(cls, data: Dict[str, Any]) -> "SamplingMask":
        return cls(
            height=int(data["height"]),
            width=int(data["width"]),
            selected_lines=tuple(data["selected_lines"]),
            acs_lines=tuple(data["acs_lines"]),
            kind=MaskKind(data.get("kind", MaskKind.EQUISPACED.value)),
            accel_R=float(data.get("accel_R", 1.0)),
            offset=int(data.get("offset", 0)),
        )

    @classmethod
    def full(cls, height: int, width: int) -> "SamplingMask":
        lines = tuple(range(height))
        return cls(height, width, lines, lines)

# =================== Sensibilidades ===================

@dataclass
class CoilSensitivities:
    """Mapas complexos por bobina (n_c×H×W) e suporte do FOV (H×W)"""
    maps: np.ndarray
    fov: np.ndarray

    def __post_init__(self):
        if self.maps.ndim != 3:
            raise ShapeError(f"Mapas devem ter 3 dimensões, obtido {self.maps.shape}")
        if self.fov.shape != self.maps.shape[1:]:
            raise ShapeError(f"FOV {self.fov.shape} incompatível com mapas {self.maps.shape}")
        self.fov = self.fov.astype(bool)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.maps.shape[1:]

# =================== K-space ===================

@dataclass
class MultiCoilKspace:
    """Medidas por bobina (n_c×H×W), exatamente zero fora das linhas da máscara"""
    data: np.ndarray
    mask: SamplingMask
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"K-space deve ter 3 dimensões, obtido {self.data.shape}")
        if self.data.shape[1:] != self.mask.shape:
            raise ShapeError(f"K-space {self.data.shape} incompatível com máscara {self.mask.shape}")
        if min(self.mask.shape) < MIN_SIZE:
            raise ShapeError(f"Dimensão mínima {MIN_SIZE}, obtido {self.mask.shape}")

    @property
    def n_coils(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

# =================== Par de treino ===================

@dataclass
class TrainingPair:
    """Duas aquisições do mesmo objeto; verdade-terreno só para avaliação"""
    y: MultiCoilKspace
    y_prime: MultiCoilKspace
    ground_truth: Optional[np.ndarray] = None
    true_csm: Optional[CoilSensitivities] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.y.data.shape != self.y_prime.data.shape:
            raise ShapeError(
                f"Par com formas diferentes: {self.y.data.shape} vs {self.y_prime.data.shape}"
            )

    def swapped(self) -> "TrainingPair":
        return TrainingPair(self.y_prime, self.y, self.ground_truth, self.true_csm, dict(self.meta))


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "operandos") -> None:
    """Levanta ShapeError quando as formas divergem"""
    if a.shape != b.shape:
        raise ShapeError(f"Formas incompatíveis entre {what}: {a.shape} vs {b.shape}")
