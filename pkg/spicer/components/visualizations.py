"""
SPICER - Componente de Visualizações
Imagens de magnitude, mapas de erro e curvas de perda gravados em PNG
"""

import io
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from spicer.exceptions import ShapeError  # noqa: E402
from spicer.services.storage import atomic_write_bytes  # noqa: E402

logger = logging.getLogger(__name__)

ERROR_MAP_FRACTION = 0.1


class VisualizationEngine:
    """Renderização determinística das saídas de reconstrução"""

    def __init__(self, error_fraction: float = ERROR_MAP_FRACTION):
        self.error_fraction = error_fraction
        self.colors = {
            "train": "#3b82f6",
            "marker": "#ef4444",
        }

    @staticmethod
    def _png_bytes(pixels: np.ndarray) -> bytes:
        buffer = io.BytesIO()
        Image.fromarray(pixels).save(buffer, format="PNG")
        return buffer.getvalue()

    def magnitude_to_uint8(self, image: np.ndarray, region: Optional[np.ndarray] = None) -> np.ndarray:
        """Escala min-max calculada dentro do FOV; fora dele os valores são apenas saturados"""
        mag = np.abs(np.asarray(image))
        if mag.ndim != 2:
            raise ShapeError(f"Imagem 2D esperada, recebido {mag.shape}")
        region = np.ones(mag.shape, dtype=bool) if region is None else np.asarray(region, dtype=bool)
        values = mag[region] if region.any() else mag.ravel()
        lo, hi = float(values.min()), float(values.max())
        if hi <= lo:
            return np.zeros(mag.shape, dtype=np.uint8)
        scaled = np.clip((mag - lo) / (hi - lo), 0.0, 1.0)
        return np.round(scaled * 255.0).astype(np.uint8)

    def error_to_uint8(self, test: np.ndarray, ref: np.ndarray) -> np.ndarray:
        """|test| − |ref| em módulo, saturado em `error_fraction` do máximo da referência"""
        test_mag, ref_mag = np.abs(test), np.abs(ref)
        if test_mag.shape != ref_mag.shape:
            raise ShapeError(f"Mapa de erro: {test_mag.shape} vs {ref_mag.shape}")
        limit = self.error_fraction * float(ref_mag.max())
        if limit <= 0:
            return np.zeros(ref_mag.shape, dtype=np.uint8)
        scaled = np.clip(np.abs(test_mag - ref_mag) / limit, 0.0, 1.0)
        return np.round(scaled * 255.0).astype(np.uint8)

    def save_magnitude(self, image: np.ndarray, path: Union[str, Path], region: Optional[np.ndarray] = None) -> Path:
        path = Path(path)
        atomic_write_bytes(path, self._png_bytes(self.magnitude_to_uint8(image, region)))
        logger.debug(f"PNG de magnitude: {path}")
        return path

    def save_error_map(self, test: np.ndarray, ref: np.ndarray, path: Union[str, Path]) -> Path:
        path = Path(path)
        atomic_write_bytes(path, self._png_bytes(self.error_to_uint8(test, ref)))
        logger.debug(f"PNG de erro: {path}")
        return path

    def save_loss_curve(
        self,
        history: Sequence[float],
        path: Union[str, Path],
        title: str = "Perda de treino",
        lr_changes: Optional[Dict[int, float]] = None,
    ) -> Path:
        """Perda média por época em escala log; linhas verticais nas trocas de taxa"""
        path = Path(path)
        fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
        try:
            epochs = np.arange(1, len(history) + 1)
            ax.plot(epochs, history, color=self.colors["train"], marker="o", markersize=3)
            if history and min(history) > 0:
                ax.set_yscale("log")
            for epoch in sorted(lr_changes or {}):
                if 0 < epoch < len(history):
                    ax.axvline(epoch + 0.5, color=self.colors["marker"], linestyle="--", linewidth=0.8)
            ax.set_xlabel("Época")
            ax.set_ylabel("Perda média")
            ax.set_title(title)
            ax.grid(True, alpha=0.3)
            buffer = io.BytesIO()
            fig.savefig(buffer, format="png", bbox_inches="tight", metadata={"Software": None})
        finally:
            plt.close(fig)
        atomic_write_bytes(path, buffer.getvalue())
        logger.debug(f"Curva de perda: {path}")
        return path
