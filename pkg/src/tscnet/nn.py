"""Layer building blocks on top of the autodiff tensor core.

Modules own named parameters; the full name of a parameter is the chain of
attribute (or dict-key) names down from the root module, joined with dots.
Checkpointing and gradient reports address parameters by these names.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape).astype(dtype)


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    """Base class providing parameter discovery and train/eval switching."""

    def __init__(self):
        self.training = True

    def _children(self):
        for name, value in vars(self).items():
            if name.startswith("_") or name == "training":
                continue
            yield name, value

    def named_parameters(self, prefix: str = ""):
        for name, value in self._children():
            full = prefix + name
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None


class ModuleDict(Module):
    """Module container keyed by strings; keys become name components."""

    def __init__(self, items: dict[str, Module] | None = None):
        super().__init__()
        self._items: dict[str, Module] = dict(items or {})

    def __getitem__(self, key: str) -> Module:
        return self._items[key]

    def __setitem__(self, key: str, value: Module) -> None:
        self._items[key] = value

    def __contains__(self, key: str) -> bool:
        return key in self._items

    def keys(self):
        return self._items.keys()

    def items(self):
        return self._items.items()

    def _children(self):
        yield from self._items.items()


class Conv2d(Module):
    def __init__(self, rng, in_channels: int, out_channels: int, kernel,
                 stride: int = 1, dilation: int = 1, padding=0, dtype=np.float32):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.stride = stride
        self.dilation = dilation
        self.padding = padding
        self.kernel = (kh, kw)
        fan_in = in_channels * kh * kw
        self.weight = parameter(he_normal(rng, (out_channels, in_channels, kh, kw), fan_in, dtype))
        self.bias = parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias,
                         stride=self.stride, dilation=self.dilation, padding=self.padding)

    __call__ = forward


class Deconv2d(Module):
    """Transposed conv fixed to kernel 4, stride 2, padding 1 (exact x2)."""

    def __init__(self, rng, in_channels: int, out_channels: int, dtype=np.float32):
        super().__init__()
        fan_in = in_channels * 16
        self.weight = parameter(he_normal(rng, (in_channels, out_channels, 4, 4), fan_in, dtype))
        self.bias = parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ad.deconv2d(x, self.weight, self.bias)

    __call__ = forward


class Linear(Module):
    def __init__(self, rng, in_features: int, out_features: int, dtype=np.float32):
        super().__init__()
        self.weight = parameter(he_normal(rng, (out_features, in_features), in_features, dtype))
        self.bias = parameter(np.zeros(out_features, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        """Rank-1 input applies w @ x + b; rank-2 applies it per row."""
        if x.ndim == 1:
            return ad.linear(x, self.weight, self.bias)
        return ad.add(ad.matmul(x, ad.transpose(self.weight, (1, 0))), self.bias)

    __call__ = forward


class Dropout(Module):
    """Inverted dropout with an explicitly seeded mask generator.

    Active only in training mode. The generator must be set (see
    Module.modules walkers in the harness) before a training forward.
    """

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng: np.random.Generator | None = None

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        if self.rng is None:
            raise ConfigError("dropout used in training mode without a seeded generator")
        keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype)
        return ad.mul(x, keep / (1.0 - self.rate))

    __call__ = forward


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gamma = parameter(np.ones(dim, dtype=dtype))
        self.beta = parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        mu = ad.mean_(x, axis=-1, keepdims=True)
        centered = ad.sub(x, mu)
        var = ad.mean_(ad.mul(centered, centered), axis=-1, keepdims=True)
        normed = ad.mul(centered, _rsqrt(ad.add(var, self.eps)))
        return ad.add(ad.mul(normed, self.gamma), self.beta)

    __call__ = forward


def _rsqrt(t: Tensor) -> Tensor:
    """1/sqrt(t) with its own backward, for layer norm."""
    from .autodiff.tensor import _accumulate, make_result

    out_data = 1.0 / np.sqrt(t.data)

    def backward(g):
        _accumulate(t, g * (-0.5) * out_data / t.data)

    return make_result(out_data, (t,), backward, "rsqrt")


class MultiHeadSelfAttention(Module):
    """Standard token self-attention over an (N, D) sequence."""

    def __init__(self, rng, dim: int, heads: int, dtype=np.float32):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"embed dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.q = Linear(rng, dim, dim, dtype)
        self.k = Linear(rng, dim, dim, dtype)
        self.v = Linear(rng, dim, dim, dtype)
        self.out = Linear(rng, dim, dim, dtype)

    def forward(self, tokens: Tensor) -> Tensor:
        n, d = tokens.shape
        h, hd = self.heads, self.head_dim

        def split(t):
            return ad.transpose(ad.reshape(t, (n, h, hd)), (1, 0, 2))  # h x n x hd

        q = split(self.q(tokens))
        k = split(self.k(tokens))
        v = split(self.v(tokens))
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(hd))
        attn = ad.softmax_lastdim(scores)
        mixed = ad.matmul(attn, v)  # h x n x hd
        merged = ad.reshape(ad.transpose(mixed, (1, 0, 2)), (n, d))
        return self.out(merged)

    __call__ = forward


class TransformerBlock(Module):
    """Pre-norm block: x + attn(ln(x)), then x + mlp(ln(x))."""

    def __init__(self, rng, dim: int, heads: int, mlp_ratio: int, dtype=np.float32):
        super().__init__()
        self.ln1 = LayerNorm(dim, dtype=dtype)
        self.attn = MultiHeadSelfAttention(rng, dim, heads, dtype)
        self.ln2 = LayerNorm(dim, dtype=dtype)
        self.mlp = Mlp(rng, dim, mlp_ratio * dim, dtype)

    def forward(self, tokens: Tensor) -> Tensor:
        tokens = ad.add(tokens, self.attn(self.ln1(tokens)))
        return ad.add(tokens, self.mlp(self.ln2(tokens)))

    __call__ = forward


class Mlp(Module):
    def __init__(self, rng, dim: int, hidden: int, dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(rng, dim, hidden, dtype)
        self.fc2 = Linear(rng, hidden, dim, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ad.relu(self.fc1(x)))

    __call__ = forward


class MiniViT(Module):
    """Fixed-grid transformer over G*G single-pixel patches of a C map.

    Input and output are C x G x G. Patch embedding is a 1x1 conv, the
    positional table has exactly G*G learnable rows, and a final projection
    maps tokens back to channels (zeroing it makes the whole unit emit
    zeros regardless of the positional table, which the tests exploit).
    """

    def __init__(self, rng, channels: int, grid: int, layers: int, heads: int,
                 mlp_ratio: int = 2, dtype=np.float32):
        super().__init__()
        self.grid = grid
        self.patch_embed = Conv2d(rng, channels, channels, 1, dtype=dtype)
        self.pos_embed = parameter(rng.normal(0.0, 0.02, size=(grid * grid, channels)).astype(dtype))
        for i in range(1, layers + 1):
            setattr(self, f"layer{i}", TransformerBlock(rng, channels, heads, mlp_ratio, dtype))
        self.n_layers = layers
        self.ln_out = LayerNorm(channels, dtype=dtype)
        self.out_proj = Linear(rng, channels, channels, dtype)

    def forward(self, x: Tensor) -> Tensor:
        c, g, g2 = x.shape
        if g != self.grid or g2 != self.grid:
            raise ConfigError(f"MiniViT built for grid {self.grid}, got {g}x{g2}")
        embedded = self.patch_embed(x)
        tokens = ad.transpose(ad.reshape(embedded, (c, g * g)), (1, 0))  # G^2 x C
        tokens = ad.add(tokens, self.pos_embed)
        for i in range(1, self.n_layers + 1):
            tokens = getattr(self, f"layer{i}")(tokens)
        tokens = self.out_proj(self.ln_out(tokens))
        return ad.reshape(ad.transpose(tokens, (1, 0)), (c, g, g))

    __call__ = forward


def seed_dropouts(root: Module, rng: np.random.Generator) -> None:
    for m in root.modules():
        if isinstance(m, Dropout):
            m.rng = rng
