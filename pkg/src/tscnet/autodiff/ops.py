"""Differentiable operations on Tensors.

Each op computes its forward result with numpy, then registers a backward
closure that routes the incoming gradient to its inputs. Elementwise ops
support numpy broadcasting; the backward pass sums gradients over the
broadcast axes. Non-Tensor operands are treated as constants.

Convolutions use an im2col layout (one GEMM per call); the sliding-window
reference used by the tests lives in the test suite, not here, so the two
routes stay independent.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, ShapeError, UnsupportedShapeError
from .tensor import Tensor, _accumulate, make_result


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _coerce_pair(a, b) -> tuple[Tensor, Tensor]:
    """Wrap constants with the dtype of the Tensor operand (no upcasting)."""
    if isinstance(a, Tensor):
        return a, (b if isinstance(b, Tensor) else as_tensor(b, dtype=a.dtype))
    if isinstance(b, Tensor):
        return as_tensor(a, dtype=b.dtype), b
    return as_tensor(a), as_tensor(b)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting expanded."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic --------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return make_result(out_data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a_t, b_t = _coerce_pair(a, b)
    out_data = a_t.data - b_t.data

    def backward(g):
        _accumulate(a_t, _unbroadcast(g, a_t.shape))
        _accumulate(b_t, _unbroadcast(-g, b_t.shape))

    return make_result(out_data, (a_t, b_t), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return make_result(out_data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a_t, b_t = _coerce_pair(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = a_t.data / b_t.data

    def backward(g):
        _accumulate(a_t, _unbroadcast(g / b_t.data, a_t.shape))
        _accumulate(b_t, _unbroadcast(-g * a_t.data / (b_t.data * b_t.data), b_t.shape))

    return make_result(out_data, (a_t, b_t), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, -g)

    return make_result(-a.data, (a,), backward, "neg")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data)

    return make_result(out_data, (a,), backward, "log")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes where the input was not clipped."""
    a = as_tensor(a)
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        _accumulate(a, g * mask)

    return make_result(out_data, (a,), backward, "clip")


# -- structural ops ----------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return make_result(out_data, (a,), backward, "reshape")


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out_data = np.ascontiguousarray(a.data.transpose(axes))

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return make_result(out_data, (a,), backward, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            _accumulate(t, g[tuple(index)])

    return make_result(out_data, tuple(tensors), backward, "concat")


# -- reductions --------------------------------------------------------------

def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return make_result(out_data, (a,), backward, "sum")


def mean_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis] if isinstance(axis, int) else int(np.prod([a.shape[i] for i in axis]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max_(a, axis: int, keepdims: bool = True) -> Tensor:
    """Max reduction; ties share the gradient evenly."""
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    mask = (a.data == m)
    counts = mask.sum(axis=axis, keepdims=True)
    out_data = m if keepdims else np.squeeze(m, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, mask * (g / counts))

    return make_result(out_data, (a,), backward, "max")


# -- activations -------------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0)
    positive = a.data > 0

    def backward(g):
        _accumulate(a, g * positive)

    return make_result(out_data, (a,), backward, "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return make_result(out_data, (a,), backward, "sigmoid")


def softmax_lastdim(a) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        _accumulate(a, out_data * (g - inner))

    return make_result(out_data, (a,), backward, "softmax")


def activation(a, kind: str) -> Tensor:
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "softmax-last-axis":
        return softmax_lastdim(a)
    raise ContractError(f"unknown activation kind '{kind}'")


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product, 2-D or batched 3-D with matching batch dims."""
    a, b = _coerce_pair(a, b)
    if a.ndim != b.ndim or a.ndim not in (2, 3):
        raise ShapeError(f"matmul needs matching 2-D or 3-D operands, got {a.shape} @ {b.shape}")
    if a.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul batch dims differ: {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.swapaxes(-1, -2))
        _accumulate(b, a.data.swapaxes(-1, -2) @ g)

    return make_result(out_data, (a, b), backward, "matmul")


def linear(x, weight, bias) -> Tensor:
    """y = weight @ x + bias for a rank-1 input vector."""
    x = as_tensor(x)
    weight = as_tensor(weight)
    bias = as_tensor(bias)
    if x.ndim != 1:
        raise ContractError(f"linear expects a rank-1 input, got shape {x.shape}")
    if weight.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ContractError(f"linear weight {weight.shape} incompatible with input {x.shape}")
    if bias.shape != (weight.shape[0],):
        raise ContractError(f"linear bias {bias.shape} incompatible with weight {weight.shape}")
    out_data = weight.data @ x.data + bias.data

    def backward(g):
        _accumulate(x, weight.data.T @ g)
        _accumulate(weight, np.outer(g, x.data))
        _accumulate(bias, g)

    return make_result(out_data, (x, weight, bias), backward, "linear")


# -- convolution -------------------------------------------------------------

def _pad4(padding) -> tuple[int, int, int, int]:
    if isinstance(padding, int):
        return padding, padding, padding, padding
    padding = tuple(int(p) for p in padding)
    if len(padding) == 2:
        ph, pw = padding
        return ph, ph, pw, pw
    if len(padding) == 4:
        return padding
    raise ContractError(f"padding must be int, (ph, pw) or (pt, pb, pl, pr), got {padding}")


def conv2d(x, weight, bias=None, stride: int = 1, dilation: int = 1, padding=0) -> Tensor:
    """2-D convolution on a C_in x H x W map.

    weight is C_out x C_in x kh x kw; padding is explicit per side. Output
    sizes follow H' = (H + pt + pb - dilation*(kh-1) - 1) // stride + 1.
    """
    x = as_tensor(x)
    weight = as_tensor(weight)
    bias_t = as_tensor(bias) if bias is not None else None
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 3-D input and 4-D weight, got {x.shape}, {weight.shape}")
    c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ContractError(f"conv2d channel mismatch: input has {c_in}, weight expects {c_in_w}")
    if stride < 1 or dilation < 1:
        raise ContractError("conv2d stride and dilation must be >= 1")
    pt, pb, pl, pr = _pad4(padding)
    h_out = (h + pt + pb - dilation * (kh - 1) - 1) // stride + 1
    w_out = (w + pl + pr - dilation * (kw - 1) - 1) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise ShapeError(f"conv2d output would be {h_out}x{w_out} for input {h}x{w}")

    xp = np.zeros((c_in, h + pt + pb, w + pl + pr), dtype=x.dtype)
    xp[:, pt:pt + h, pl:pl + w] = x.data

    cols = np.empty((c_in, kh, kw, h_out, w_out), dtype=x.dtype)
    for ky in range(kh):
        ys = ky * dilation
        for kx in range(kw):
            xs = kx * dilation
            cols[:, ky, kx] = xp[:, ys:ys + stride * (h_out - 1) + 1:stride,
                                 xs:xs + stride * (w_out - 1) + 1:stride]
    cols2 = cols.reshape(c_in * kh * kw, h_out * w_out)
    w2 = weight.data.reshape(c_out, c_in * kh * kw)
    out2 = w2 @ cols2
    if bias_t is not None:
        out2 = out2 + bias_t.data[:, None]
    out_data = out2.reshape(c_out, h_out, w_out)

    def backward(g):
        g2 = g.reshape(c_out, h_out * w_out)
        _accumulate(weight, (g2 @ cols2.T).reshape(weight.shape))
        if bias_t is not None:
            _accumulate(bias_t, g.sum(axis=(1, 2)))
        dcols = (w2.T @ g2).reshape(c_in, kh, kw, h_out, w_out)
        dxp = np.zeros_like(xp)
        for ky in range(kh):
            ys = ky * dilation
            for kx in range(kw):
                xs = kx * dilation
                dxp[:, ys:ys + stride * (h_out - 1) + 1:stride,
                    xs:xs + stride * (w_out - 1) + 1:stride] += dcols[:, ky, kx]
        _accumulate(x, dxp[:, pt:pt + h, pl:pl + w])

    parents = (x, weight) if bias_t is None else (x, weight, bias_t)
    return make_result(out_data, parents, backward, "conv2d")


def deconv2d(x, weight, bias=None, stride: int = 2) -> Tensor:
    """Transposed convolution that exactly doubles the spatial size.

    Fixed geometry: kernel 4x4, stride 2, padding 1. weight is
    C_in x C_out x 4 x 4. Any other configuration is rejected.
    """
    x = as_tensor(x)
    weight = as_tensor(weight)
    bias_t = as_tensor(bias) if bias is not None else None
    if stride != 2:
        raise ShapeError(f"deconv2d supports stride 2 only, got {stride}")
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2:] != (4, 4):
        raise ShapeError(f"deconv2d expects 3-D input and C_in x C_out x 4 x 4 weight, got {x.shape}, {weight.shape}")
    c_in, h, w = x.shape
    if weight.shape[0] != c_in:
        raise ContractError(f"deconv2d channel mismatch: input has {c_in}, weight expects {weight.shape[0]}")
    c_out = weight.shape[1]

    # Scatter into the full (pre-crop) output, then cut padding 1 per side.
    full = np.zeros((c_out, 2 * h + 2, 2 * w + 2), dtype=x.dtype)
    x2 = x.data.reshape(c_in, h * w)
    for ky in range(4):
        for kx in range(4):
            contrib = (weight.data[:, :, ky, kx].T @ x2).reshape(c_out, h, w)
            full[:, ky:ky + 2 * h - 1:2, kx:kx + 2 * w - 1:2] += contrib
    out_data = full[:, 1:1 + 2 * h, 1:1 + 2 * w]
    if bias_t is not None:
        out_data = out_data + bias_t.data[:, None, None]

    def backward(g):
        gfull = np.zeros((c_out, 2 * h + 2, 2 * w + 2), dtype=g.dtype)
        gfull[:, 1:1 + 2 * h, 1:1 + 2 * w] = g
        dx = np.zeros_like(x.data)
        dw = np.zeros_like(weight.data)
        for ky in range(4):
            for kx in range(4):
                patch = gfull[:, ky:ky + 2 * h - 1:2, kx:kx + 2 * w - 1:2]
                patch2 = patch.reshape(c_out, h * w)
                dx += (weight.data[:, :, ky, kx] @ patch2).reshape(c_in, h, w)
                dw[:, :, ky, kx] = x2 @ patch2.T
        _accumulate(x, dx)
        _accumulate(weight, dw)
        if bias_t is not None:
            _accumulate(bias_t, g.sum(axis=(1, 2)))

    parents = (x, weight) if bias_t is None else (x, weight, bias_t)
    return make_result(out_data, parents, backward, "deconv2d")


def maxpool2x2(x) -> Tensor:
    """2x2 max pooling with stride 2; ties share the gradient evenly."""
    x = as_tensor(x)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    xr = x.data.reshape(c, h // 2, 2, w // 2, 2)
    m = xr.max(axis=(2, 4), keepdims=True)
    mask = (xr == m)
    counts = mask.sum(axis=(2, 4), keepdims=True)
    out_data = m.reshape(c, h // 2, w // 2)

    def backward(g):
        gr = g.reshape(c, h // 2, 1, w // 2, 1)
        _accumulate(x, (mask * (gr / counts)).reshape(c, h, w))

    return make_result(out_data, (x,), backward, "maxpool2x2")


# -- pooling and resizing ----------------------------------------------------

def _avg_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Rows average the adaptive window [floor(i*n/o), ceil((i+1)*n/o))."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    for i in range(n_out):
        start = (i * n_in) // n_out
        stop = -(-(i + 1) * n_in // n_out)
        m[i, start:stop] = 1.0 / (stop - start)
    return m


def _lerp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Rows bilinearly interpolate with half-pixel centers, clamped borders."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    coords = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    coords = np.clip(coords, 0.0, n_in - 1)
    i0 = np.floor(coords).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = coords - i0
    for i in range(n_out):
        m[i, i0[i]] += 1.0 - frac[i]
        m[i, i1[i]] += frac[i]
    return m


def _separable_resize(x: Tensor, mat_h: np.ndarray | None, mat_w: np.ndarray | None, op: str) -> Tensor:
    """out[c] = mat_h @ x[c] @ mat_w.T; backward applies the transposes."""
    data = x.data
    if mat_h is not None:
        data = np.tensordot(mat_h, data, axes=(1, 1)).transpose(1, 0, 2)
    if mat_w is not None:
        data = np.tensordot(data, mat_w, axes=(2, 1))
    data = np.ascontiguousarray(data)

    def backward(g):
        if mat_h is not None:
            g = np.tensordot(mat_h.T, g, axes=(1, 1)).transpose(1, 0, 2)
        if mat_w is not None:
            g = np.tensordot(g, mat_w.T, axes=(2, 1))
        _accumulate(x, np.ascontiguousarray(g))

    return make_result(data, (x,), backward, op)


def global_avg_pool(x) -> Tensor:
    """C x H x W -> C x 1 x 1 mean."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects a 3-D map, got {x.shape}")
    _, h, w = x.shape
    return _separable_resize(x, _avg_matrix(h, 1, x.dtype), _avg_matrix(w, 1, x.dtype), "global_avg_pool")


def adaptive_avg_pool(x, out_h: int, out_w: int) -> Tensor:
    """Adaptive average pooling; output must not exceed the input size."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"adaptive_avg_pool expects a 3-D map, got {x.shape}")
    _, h, w = x.shape
    if out_h > h or out_w > w or out_h < 1 or out_w < 1:
        raise ShapeError(f"adaptive_avg_pool cannot go {h}x{w} -> {out_h}x{out_w}")
    mat_h = None if out_h == h else _avg_matrix(h, out_h, x.dtype)
    mat_w = None if out_w == w else _avg_matrix(w, out_w, x.dtype)
    if mat_h is None and mat_w is None:
        return _identity(x, "adaptive_avg_pool")
    return _separable_resize(x, mat_h, mat_w, "adaptive_avg_pool")


def bilinear_upsample(x, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation to a size at least as large as the input."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"bilinear_upsample expects a 3-D map, got {x.shape}")
    _, h, w = x.shape
    if out_h < h or out_w < w:
        raise ShapeError(f"bilinear_upsample cannot go {h}x{w} -> {out_h}x{out_w}")
    mat_h = None if out_h == h else _lerp_matrix(h, out_h, x.dtype)
    mat_w = None if out_w == w else _lerp_matrix(w, out_w, x.dtype)
    if mat_h is None and mat_w is None:
        return _identity(x, "bilinear_upsample")
    return _separable_resize(x, mat_h, mat_w, "bilinear_upsample")


def _identity(x: Tensor, op: str) -> Tensor:
    def backward(g):
        _accumulate(x, g)

    return make_result(x.data, (x,), backward, op)


def pool_resize(x, mode: str, out_h: int | None = None, out_w: int | None = None) -> Tensor:
    if mode == "global_avg":
        return global_avg_pool(x)
    if mode == "adaptive_avg":
        return adaptive_avg_pool(x, out_h, out_w)
    if mode == "bilinear_up":
        return bilinear_upsample(x, out_h, out_w)
    raise ContractError(f"unknown pool_resize mode '{mode}'")


# -- attention ---------------------------------------------------------------

def channelwise_attention(q, k, v) -> Tensor:
    """Per-channel self-attention on square C x H x W maps.

    For each channel c: A_c = softmax(q_c k_c^T / sqrt(W)), out_c = A_c v_c.
    The attention maps live in a single C x H x H intermediate, so the peak
    allocation is C*H*H elements instead of the (H*W)^2 of attention over
    flattened pixels.
    """
    q = as_tensor(q)
    k = as_tensor(k)
    v = as_tensor(v)
    if not (q.shape == k.shape == v.shape) or q.ndim != 3:
        raise ShapeError(f"channelwise_attention needs equal 3-D shapes, got {q.shape}, {k.shape}, {v.shape}")
    _, h, w = q.shape
    if h != w:
        raise UnsupportedShapeError(f"channelwise_attention requires square maps, got {h}x{w}")
    scores = matmul(q, transpose(k, (0, 2, 1)))
    attn = softmax_lastdim(mul(scores, 1.0 / math.sqrt(w)))
    return matmul(attn, v)


def standard_attention_reference(q, k, v) -> Tensor:
    """Attention over flattened pixels; benchmark baseline only.

    Materialises the (H*W) x (H*W) score map, which is exactly what the
    channel-wise variant avoids. Not used by the network.
    """
    q = as_tensor(q)
    k = as_tensor(k)
    v = as_tensor(v)
    if not (q.shape == k.shape == v.shape) or q.ndim != 3:
        raise ShapeError(f"standard attention needs equal 3-D shapes, got {q.shape}, {k.shape}, {v.shape}")
    c, h, w = q.shape
    q2 = transpose(reshape(q, (c, h * w)), (1, 0))
    k2 = reshape(k, (c, h * w))
    v2 = transpose(reshape(v, (c, h * w)), (1, 0))
    scores = matmul(q2, k2)                      # (h*w) x (h*w)
    attn = softmax_lastdim(mul(scores, 1.0 / math.sqrt(c)))
    out = matmul(attn, v2)
    return reshape(transpose(out, (1, 0)), (c, h, w))


# -- operator sugar on Tensor -------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(self, other)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(self, other)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
