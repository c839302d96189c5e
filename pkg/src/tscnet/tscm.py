"""Texture-semantic collaboration: the feature modulation stage.

Each mid-level map f_b (levels 2-4) is modulated by the level-5 semantic
map f_s and the level-1 texture map f_t, and comes out at twice its input
resolution:

  * position anchoring: joint channel attention from pooled descriptors of
    f_b and f_s, then a spatial gate derived from f_s, with a residual
    connection back onto f_b;
  * texture rendering: feature super-resolution of the anchored map with
    per-channel attention, queries from the pooled texture map, keys and
    values from the upsampled anchored map, blended by a learnable scalar
    that starts at zero;
  * region interaction: four-branch multi-scale perception, adaptive
    pooling to a fixed grid, a small transformer over the grid tokens, and
    bilinear upsampling back out.

The unit toggles mirror the ablation rows: a disabled unit contributes no
parameters and its data path degenerates as documented in forward().
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import NetworkConfig
from .errors import ContractError
from .nn import Conv2d, Linear, MiniViT, Module, ModuleDict, parameter


class PositionAnchorUnit(Module):
    """Channel and spatial anchoring of f_b driven by the semantic map."""

    def __init__(self, rng, channels: int, dtype):
        super().__init__()
        self.fc_reduce = Linear(rng, 2 * channels, channels, dtype)   # ReLU
        self.fc_gate = Linear(rng, channels, channels, dtype)         # sigmoid
        self.spatial_conv = Conv2d(rng, 2, 1, 7, padding=3, dtype=dtype)

    def channel_gate(self, f_b: Tensor, f_s: Tensor) -> Tensor:
        """Joint channel attention vector in (0,1)^c."""
        gb = ad.reshape(ad.global_avg_pool(f_b), (f_b.shape[0],))
        gs = ad.reshape(ad.global_avg_pool(f_s), (f_s.shape[0],))
        joint = ad.concat([gb, gs], axis=0)
        return ad.sigmoid(self.fc_gate(ad.relu(self.fc_reduce(joint))))

    def forward(self, f_b: Tensor, f_s: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (f_pau, f_jca); f_jca is reused by the region branch."""
        if f_b.shape[0] != f_s.shape[0]:
            raise ContractError(f"channel mismatch: f_b has {f_b.shape[0]}, f_s has {f_s.shape[0]}")
        c, h, w = f_b.shape
        gate = self.channel_gate(f_b, f_s)
        f_jca = ad.mul(f_b, ad.reshape(gate, (c, 1, 1)))

        savg = ad.mean_(f_s, axis=0, keepdims=True)
        smax = ad.max_(f_s, axis=0, keepdims=True)
        smap = ad.sigmoid(self.spatial_conv(ad.concat([savg, smax], axis=0)))
        smap = ad.bilinear_upsample(smap, h, w)
        return ad.add(f_b, ad.mul(f_jca, smap)), f_jca

    __call__ = forward


class TextureRenderUnit(Module):
    """Feature super-resolution of the anchored map guided by texture."""

    def __init__(self, rng, channels: int, dtype):
        super().__init__()
        self.proj_q = Conv2d(rng, channels, channels, 1, dtype=dtype)
        self.proj_k = Conv2d(rng, channels, channels, 1, dtype=dtype)
        self.proj_v = Conv2d(rng, channels, channels, 1, dtype=dtype)
        self.beta = parameter(np.zeros((), dtype=dtype))

    def forward(self, f_pau_up: Tensor, f_t: Tensor) -> Tensor:
        """f_pau_up: c x 2h x 2w (already upsampled); f_t: c x S x S."""
        _, th, tw = f_pau_up.shape
        t_down = ad.adaptive_avg_pool(f_t, th, tw)
        q = self.proj_q(t_down)
        k = self.proj_k(f_pau_up)
        v = self.proj_v(f_pau_up)
        f_sp = ad.channelwise_attention(q, k, v)
        return ad.add(f_pau_up, ad.mul(f_sp, self.beta))

    __call__ = forward


# Branch schedule of the multi-scale perception stage: branch 1 is a 1x1
# conv; branch j in {2,3,4} stacks 1xk, kx1 and a 3x3 conv dilated by k,
# with k = 2j - 1. All branches preserve the spatial size.
MSP_KERNELS = {2: 3, 3: 5, 4: 7}


class MspBranch(Module):
    def __init__(self, rng, channels: int, k: int, dtype):
        super().__init__()
        self.k = k
        pad = (k - 1) // 2
        self.conv1 = Conv2d(rng, channels, channels, (1, k), padding=(0, pad), dtype=dtype)
        self.conv2 = Conv2d(rng, channels, channels, (k, 1), padding=(pad, 0), dtype=dtype)
        self.conv3 = Conv2d(rng, channels, channels, 3, dilation=k, padding=k, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = ad.relu(self.conv1(x))
        x = ad.relu(self.conv2(x))
        return ad.relu(self.conv3(x))

    __call__ = forward


class MultiScalePerception(Module):
    def __init__(self, rng, channels: int, dtype):
        super().__init__()
        self.branch1 = Conv2d(rng, channels, channels, 1, dtype=dtype)
        for j, k in MSP_KERNELS.items():
            setattr(self, f"branch{j}", MspBranch(rng, channels, k, dtype))
        self.merge = Conv2d(rng, 4 * channels, channels, 1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        outs = [ad.relu(self.branch1(x))]
        for j in MSP_KERNELS:
            outs.append(getattr(self, f"branch{j}")(x))
        return ad.relu(self.merge(ad.concat(outs, axis=0)))

    __call__ = forward


class TscmLevel(Module):
    """One level's modulation block; the transformer is shared across levels."""

    def __init__(self, rng, cfg: NetworkConfig, dtype):
        super().__init__()
        c = cfg.feature_channels
        self.use_pau = cfg.use_pau
        self.use_tru = cfg.use_tru
        self.use_riu = cfg.use_riu
        self.grid = cfg.grid_size
        if cfg.use_pau:
            self.pau = PositionAnchorUnit(rng, c, dtype)
        if cfg.use_tru:
            self.tru = TextureRenderUnit(rng, c, dtype)
        if cfg.use_riu:
            self.msp = MultiScalePerception(rng, c, dtype)
        fuse_in = 2 * c if cfg.use_riu else c
        self.fuse = Conv2d(rng, fuse_in, c, 3, padding=1, dtype=dtype)

    def forward(self, f_b: Tensor, f_t: Tensor, f_s: Tensor, vit: MiniViT | None) -> Tensor:
        _, h, w = f_b.shape
        if self.use_pau:
            f_pau, f_jca = self.pau(f_b, f_s)
        else:
            f_pau, f_jca = f_b, f_b
        f_pau_up = ad.bilinear_upsample(f_pau, 2 * h, 2 * w)

        f_tru = self.tru(f_pau_up, f_t) if self.use_tru else f_pau_up

        if self.use_riu:
            f_msp = self.msp(ad.add(f_jca, f_b))
            pooled = ad.adaptive_avg_pool(f_msp, self.grid, self.grid)
            f_riu = ad.bilinear_upsample(vit(pooled), 2 * h, 2 * w)
            fused_in = ad.concat([f_tru, f_riu], axis=0)
        else:
            fused_in = f_tru
        return ad.relu(self.fuse(fused_in))

    __call__ = forward


def build_tscm_stack(cfg: NetworkConfig, rng: np.random.Generator, dtype) -> ModuleDict:
    """Levels 2-4 plus the shared transformer, keyed for checkpoint names."""
    stack = ModuleDict()
    for level in (2, 3, 4):
        stack[str(level)] = TscmLevel(rng, cfg, dtype)
    if cfg.use_riu:
        stack["shared_vit"] = MiniViT(rng, cfg.feature_channels, cfg.grid_size,
                                      cfg.vit_layers, cfg.vit_heads, cfg.vit_mlp_ratio, dtype)
    return stack
