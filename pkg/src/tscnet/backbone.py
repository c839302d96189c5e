"""Five-block feature extractor with per-block channel compression.

VGG-style layout: stacked 3x3 conv+ReLU blocks with 2x2 max pooling after
blocks 1 to 4, so level i lives at input_size / 2^(i-1). Each block output
runs through a 1x1 conv+ReLU that compresses it to the common width c.
Level 1 carries texture, level 5 carries semantics, levels 2-4 are the
modulated mid-levels.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import NetworkConfig
from .errors import ConfigError
from .nn import Conv2d, Module


class ConvBlock(Module):
    def __init__(self, rng, in_channels: int, width: int, n_convs: int, dtype):
        super().__init__()
        self.n_convs = n_convs
        for j in range(1, n_convs + 1):
            setattr(self, f"conv{j}", Conv2d(rng, in_channels if j == 1 else width,
                                             width, 3, padding=1, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        for j in range(1, self.n_convs + 1):
            x = ad.relu(getattr(self, f"conv{j}")(x))
        return x

    __call__ = forward


class Backbone(Module):
    """Produces the five compressed feature levels f1..f5."""

    def __init__(self, cfg: NetworkConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.input_size = cfg.input_size
        c = cfg.feature_channels
        in_ch = 3
        for i, (width, n_convs) in enumerate(zip(cfg.block_widths, cfg.convs_per_block), start=1):
            setattr(self, f"block{i}", ConvBlock(rng, in_ch, width, n_convs, dtype))
            setattr(self, f"compress{i}", Conv2d(rng, width, c, 1, dtype=dtype))
            in_ch = width

    def forward(self, image: Tensor) -> list[Tensor]:
        """image: 3 x S x S (already normalized) -> [f1, f2, f3, f4, f5]."""
        if image.ndim != 3 or image.shape[0] != 3:
            raise ConfigError(f"backbone expects a 3 x S x S image, got {image.shape}")
        s = image.shape[1]
        if s != image.shape[2] or s % 16:
            raise ConfigError(f"input size must be square and divisible by 16, got {image.shape[1:]}")
        features = []
        x = image
        for i in range(1, 6):
            x = getattr(self, f"block{i}")(x)
            features.append(ad.relu(getattr(self, f"compress{i}")(x)))
            if i < 5:
                x = ad.maxpool2x2(x)
        return features

    __call__ = forward
