"""Salient object detection for overhead imagery, built from scratch.

The package bundles a small reverse-mode autodiff engine, the detector
(encoder, texture-semantic feature modulation, deep-supervised decoder),
its hybrid objective, the standard saliency metrics, a synthetic dataset
generator, and a training/evaluation harness with a CLI.
"""
from .autodiff import Tensor, finite_diff_check, no_grad
from .config import (
    NetworkConfig,
    RunConfig,
    desk_network_config,
    full_network_config,
    micro_network_config,
)
from .network import SaliencyNet, build_network

__all__ = [
    "NetworkConfig",
    "RunConfig",
    "SaliencyNet",
    "Tensor",
    "build_network",
    "desk_network_config",
    "finite_diff_check",
    "full_network_config",
    "micro_network_config",
    "no_grad",
]

__version__ = "0.1.0"
