# ML module for SPICER
"""
Rede convolucional, otimizador, desenrolamento, perdas e treino
"""

from .engine import ModelParams, UnrollOptions, init_model_params, spicer_reconstruct, unroll_backward
from .training import Checkpoint, SpicerTrainer, load_checkpoint, save_checkpoint, train

__all__ = [
    "ModelParams", "UnrollOptions", "init_model_params", "spicer_reconstruct", "unroll_backward",
    "Checkpoint", "SpicerTrainer", "load_checkpoint", "save_checkpoint", "train",
]
