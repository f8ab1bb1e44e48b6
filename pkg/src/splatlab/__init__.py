"""Gaussian splatting on the CPU with numpy.

Scenes are sets of anisotropic 3D Gaussians with spherical-harmonic colour.
They are rendered by a differentiable alpha-blending rasterizer and fitted to
posed images with Adam under an L1 + SSIM + total-variation objective.
Renders can be upscaled with a multi-scale residual super-resolution network.
"""

__version__ = "0.1.0"

from .camera import Camera
from .errors import SplatError
from .io import (
    Checkpoint,
    load_cameras,
    load_checkpoint,
    load_config,
    load_image,
    load_ply,
    save_checkpoint,
    save_image,
    save_ply,
)
from .losses import LossConfig, objective, p_ssim, sample_stochastic_patches, ssim, tv_loss
from .msrn import MSRNModel, load_weights, msrn_forward, random_model, save_weights
from .rasterizer import RasterConfig, render, render_backward
from .scene import GaussianSet, PointCloud, SHInitConfig, init_scene, prune, sh_variance_report
from .trainer import LearningRates, OptimizerState, TrainConfig, evaluate, psnr, train

__all__ = [
    "Camera",
    "Checkpoint",
    "GaussianSet",
    "LearningRates",
    "LossConfig",
    "MSRNModel",
    "OptimizerState",
    "PointCloud",
    "RasterConfig",
    "SHInitConfig",
    "SplatError",
    "TrainConfig",
    "evaluate",
    "init_scene",
    "load_cameras",
    "load_checkpoint",
    "load_config",
    "load_image",
    "load_ply",
    "load_weights",
    "msrn_forward",
    "objective",
    "p_ssim",
    "prune",
    "psnr",
    "random_model",
    "render",
    "render_backward",
    "sample_stochastic_patches",
    "save_checkpoint",
    "save_image",
    "save_ply",
    "save_weights",
    "sh_variance_report",
    "ssim",
    "train",
    "tv_loss",
]
