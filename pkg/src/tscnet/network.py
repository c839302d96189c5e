"""Full detector: encoder, feature modulation stage, decoder.

forward() takes a raw image in [0,1], normalizes it, and returns the three
saliency maps (s2 at input resolution, s3 at input resolution, s4 at half).
With every modulation unit disabled the mid-level features feed the
decoder directly, so all maps come out at half their usual resolution and
the loss upsamples them against the ground truth.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .backbone import Backbone
from .config import NetworkConfig
from .decoder import build_decoder, decode
from .errors import ContractError
from .nn import Dropout, Module, seed_dropouts
from .tscm import build_tscm_stack

# Channel normalization applied to [0,1] images before the encoder.
NORM_MEAN = 0.5
NORM_STD = 0.25


def normalize_image(image: np.ndarray) -> np.ndarray:
    return (image - NORM_MEAN) / NORM_STD


class SaliencyNet(Module):
    def __init__(self, cfg: NetworkConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.fe = Backbone(cfg, rng, dtype)
        if cfg.tscm_enabled:
            self.tscm = build_tscm_stack(cfg, rng, dtype)
        self.sp = build_decoder(rng, cfg.feature_channels, cfg.dropout_rate, dtype)

    def forward(self, image) -> tuple[Tensor, Tensor, Tensor]:
        """image: 3 x S x S array or Tensor with values in [0,1]."""
        if isinstance(image, Tensor):
            x = image
            if not np.issubdtype(x.dtype, self.dtype):
                raise ContractError(f"image dtype {x.dtype} does not match model dtype {self.dtype}")
            x = ad.mul(ad.sub(x, NORM_MEAN), 1.0 / NORM_STD)
        else:
            x = Tensor(normalize_image(np.asarray(image, dtype=self.dtype)))
        f1, f2, f3, f4, f5 = self.fe(x)
        if self.cfg.tscm_enabled:
            vit = self.tscm["shared_vit"] if "shared_vit" in self.tscm else None
            f2 = self.tscm["2"](f2, f1, f5, vit)
            f3 = self.tscm["3"](f3, f1, f5, vit)
            f4 = self.tscm["4"](f4, f1, f5, vit)
        return decode(self.sp, f2, f3, f4)

    __call__ = forward

    def seed_dropout(self, rng: np.random.Generator) -> None:
        seed_dropouts(self, rng)

    def dropout_modules(self) -> list[Dropout]:
        return [m for m in self.modules() if isinstance(m, Dropout)]


def build_network(cfg: NetworkConfig, seed: int, dtype=np.float32) -> SaliencyNet:
    return SaliencyNet(cfg, seed=seed, dtype=dtype)
