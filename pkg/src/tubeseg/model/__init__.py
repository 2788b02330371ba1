"""Tube-predicting video model: config, parameters, blocks, full forward."""

from .blocks import axial_block_forward, global_block_forward, latent_block_forward
from .config import MemoryLayout, ModelConfig, init_memory, load_config, save_config
from .network import (
    ClipForward,
    backbone_forward,
    depth_head_forward,
    predict_tubes,
)
from .params import Parameters, init_params, load_params, save_params

__all__ = [
    "ClipForward",
    "MemoryLayout",
    "ModelConfig",
    "Parameters",
    "axial_block_forward",
    "backbone_forward",
    "depth_head_forward",
    "global_block_forward",
    "init_memory",
    "init_params",
    "latent_block_forward",
    "load_config",
    "load_params",
    "predict_tubes",
    "save_config",
    "save_params",
]
