"""Saliency prediction decoder: SP4 -> SP3 -> SP2 with lateral heads.

The two basic blocks run two 3x3 conv+ReLU layers, dropout, then a
doubling deconvolution; each emits a lateral saliency map from a 1x1 head
on its (post-deconv) output. The last block fuses by elementwise addition
and applies three convolutions, the final one mapping to a single channel
that the sigmoid turns into the output map.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError
from .nn import Conv2d, Deconv2d, Dropout, Module, ModuleDict


class BasicSPBlock(Module):
    """Two convs, dropout, deconv; used for SP4 and SP3."""

    def __init__(self, rng, channels: int, dropout_rate: float, dtype):
        super().__init__()
        self.conv1 = Conv2d(rng, channels, channels, 3, padding=1, dtype=dtype)
        self.conv2 = Conv2d(rng, channels, channels, 3, padding=1, dtype=dtype)
        self.dropout = Dropout(dropout_rate)
        self.deconv = Deconv2d(rng, channels, channels, dtype)
        self.head = Conv2d(rng, channels, 1, 1, dtype=dtype)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        x = ad.relu(self.conv1(x))
        x = self.dropout(ad.relu(self.conv2(x)))
        x = ad.relu(self.deconv(x))
        return x, ad.sigmoid(self.head(x))

    __call__ = forward


class FinalSPBlock(Module):
    """Three convolutions; the last one is the single-channel head."""

    def __init__(self, rng, channels: int, dtype):
        super().__init__()
        self.conv1 = Conv2d(rng, channels, channels, 3, padding=1, dtype=dtype)
        self.conv2 = Conv2d(rng, channels, channels, 3, padding=1, dtype=dtype)
        self.conv3 = Conv2d(rng, channels, 1, 3, padding=1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = ad.relu(self.conv1(x))
        x = ad.relu(self.conv2(x))
        return ad.sigmoid(self.conv3(x))

    __call__ = forward


def build_decoder(rng: np.random.Generator, channels: int, dropout_rate: float, dtype) -> ModuleDict:
    return ModuleDict({
        "4": BasicSPBlock(rng, channels, dropout_rate, dtype),
        "3": BasicSPBlock(rng, channels, dropout_rate, dtype),
        "2": FinalSPBlock(rng, channels, dtype),
    })


def decode(sp: ModuleDict, f2: Tensor, f3: Tensor, f4: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Run the cascade; returns (s2, s3, s4), each 1 x H x W in (0,1)."""
    x4, s4 = sp["4"](f4)
    if x4.shape != f3.shape:
        raise ContractError(f"decoder fusion mismatch: SP4 output {x4.shape} vs level-3 features {f3.shape}")
    x3, s3 = sp["3"](ad.add(x4, f3))
    if x3.shape != f2.shape:
        raise ContractError(f"decoder fusion mismatch: SP3 output {x3.shape} vs level-2 features {f2.shape}")
    s2 = sp["2"](ad.add(x3, f2))
    return s2, s3, s4
