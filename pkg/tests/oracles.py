"""Independent brute-force reference implementations used as test oracles.

Everything here is written as literal loops straight from the definitions,
deliberately ignoring how the library computes the same quantities, so a
bug would have to appear in two unrelated routes to go unnoticed.
"""
from __future__ import annotations

import numpy as np


# -- convolution ---------------------------------------------------------------

def naive_conv2d(x, w, b=None, stride=1, dilation=1, padding=(0, 0, 0, 0)):
    """Four-deep sliding-window convolution, O(out * kernel) loops."""
    c_in, h, wdt = x.shape
    c_out, _, kh, kw = w.shape
    pt, pb, pl, pr = padding
    xp = np.zeros((c_in, h + pt + pb, wdt + pl + pr), dtype=np.float64)
    xp[:, pt:pt + h, pl:pl + wdt] = x
    h_out = (h + pt + pb - dilation * (kh - 1) - 1) // stride + 1
    w_out = (wdt + pl + pr - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((c_out, h_out, w_out), dtype=np.float64)
    for o in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                acc = 0.0
                for c in range(c_in):
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += w[o, c, ky, kx] * xp[c, i * stride + ky * dilation,
                                                        j * stride + kx * dilation]
                out[o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def naive_adaptive_avg(x, out_h, out_w):
    """Per-window mean with the floor/ceil window rule."""
    c, h, w = x.shape
    out = np.zeros((c, out_h, out_w), dtype=np.float64)
    for ch in range(c):
        for i in range(out_h):
            ys, ye = (i * h) // out_h, -(-(i + 1) * h // out_h)
            for j in range(out_w):
                xs, xe = (j * w) // out_w, -(-(j + 1) * w // out_w)
                out[ch, i, j] = x[ch, ys:ye, xs:xe].mean()
    return out


def naive_bilinear_up(x, out_h, out_w):
    """Half-pixel-center bilinear interpolation by explicit loops."""
    c, h, w = x.shape
    out = np.zeros((c, out_h, out_w), dtype=np.float64)
    for i in range(out_h):
        cy = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1)
        y0 = int(np.floor(cy))
        y1 = min(y0 + 1, h - 1)
        fy = cy - y0
        for j in range(out_w):
            cx = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1)
            x0 = int(np.floor(cx))
            x1 = min(x0 + 1, w - 1)
            fx = cx - x0
            for ch in range(c):
                out[ch, i, j] = ((1 - fy) * (1 - fx) * x[ch, y0, x0]
                                 + (1 - fy) * fx * x[ch, y0, x1]
                                 + fy * (1 - fx) * x[ch, y1, x0]
                                 + fy * fx * x[ch, y1, x1])
    return out


def naive_channelwise_attention(q, k, v):
    """Literal three-nested-loop per-channel attention."""
    c, h, w = q.shape
    out = np.zeros_like(q, dtype=np.float64)
    for ch in range(c):
        scores = np.zeros((h, h), dtype=np.float64)
        for r in range(h):
            for s in range(h):
                scores[r, s] = float(np.dot(q[ch, r], k[ch, s])) / np.sqrt(w)
        for r in range(h):
            row = np.exp(scores[r] - scores[r].max())
            row /= row.sum()
            for col in range(w):
                out[ch, r, col] = float(np.dot(row, v[ch, :, col]))
    return out


# -- losses ---------------------------------------------------------------------

def bce_oracle(pred, gt, clamp=1e-7):
    total = 0.0
    flat_p, flat_g = pred.reshape(-1), gt.reshape(-1)
    for p, g in zip(flat_p, flat_g):
        p = min(max(p, clamp), 1.0 - clamp)
        total += -(g * np.log(p) + (1.0 - g) * np.log(1.0 - p))
    return total / flat_p.size


def iou_oracle(pred, gt, eps=1.0):
    inter = 0.0
    union = 0.0
    for p, g in zip(pred.reshape(-1), gt.reshape(-1)):
        inter += p * g
        union += p + g - p * g
    return 1.0 - (inter + eps) / (union + eps)


# -- metrics ----------------------------------------------------------------------

THRESHOLDS = [i / 255.0 for i in range(256)]


def mae_oracle(pred, gt):
    total = 0.0
    for p, g in zip(pred.reshape(-1), gt.reshape(-1)):
        total += abs(p - g)
    return total / pred.size


def f_measure_oracle(pred, gt, beta_sq=0.3):
    gt_bin = gt >= 0.5
    n_fg = int(gt_bin.sum())
    if n_fg == 0:
        return 0.0
    scores = []
    for t in THRESHOLDS:
        tp = fp = 0
        for p, g in zip(pred.reshape(-1), gt_bin.reshape(-1)):
            if p >= t:
                if g:
                    tp += 1
                else:
                    fp += 1
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / n_fg
        denom = beta_sq * precision + recall
        scores.append((1 + beta_sq) * precision * recall / denom if denom > 0 else 0.0)
    return sum(scores) / len(scores)


def _mean_loop(values):
    return sum(values) / len(values) if values else 0.0


def _var_loop(values, mean):
    if len(values) < 2:
        return 0.0
    return sum((v - mean) ** 2 for v in values) / (len(values) - 1)


def _object_oracle(values):
    if not values:
        return 0.0
    x = _mean_loop(values)
    sigma = np.sqrt(_var_loop(values, x))
    return 2.0 * x / (x * x + 1.0 + sigma + 1e-15)


def _ssim_oracle(p_vals, g_vals):
    n = len(p_vals)
    if n == 0:
        return 0.0
    x = _mean_loop(p_vals)
    y = _mean_loop(g_vals)
    sx = _var_loop(p_vals, x)
    sy = _var_loop(g_vals, y)
    sxy = 0.0
    if n > 1:
        sxy = sum((p - x) * (g - y) for p, g in zip(p_vals, g_vals)) / (n - 1)
    num = 4.0 * x * y * sxy
    den = (x * x + y * y) * (sx + sy)
    if num != 0.0:
        return num / (den + 1e-15)
    return 1.0 if den == 0.0 else 0.0


def s_measure_oracle(pred, gt, alpha=0.5):
    h, w = gt.shape
    gt_bin = gt >= 0.5
    fg = [float(pred[i, j]) for i in range(h) for j in range(w) if gt_bin[i, j]]
    bg = [1.0 - float(pred[i, j]) for i in range(h) for j in range(w) if not gt_bin[i, j]]
    mu = len(fg) / (h * w)
    if mu == 0.0:
        return min(max(1.0 - _mean_loop([float(v) for v in pred.reshape(-1)]), 0.0), 1.0)
    if mu == 1.0:
        return min(max(_mean_loop([float(v) for v in pred.reshape(-1)]), 0.0), 1.0)
    s_object = mu * _object_oracle(fg) + (1.0 - mu) * _object_oracle(bg)

    rows = [i for i in range(h) for j in range(w) if gt_bin[i, j]]
    cols = [j for i in range(h) for j in range(w) if gt_bin[i, j]]
    cy = int(round(_mean_loop(rows)))
    cx = int(round(_mean_loop(cols)))
    s_region = 0.0
    for ys, xs in (((0, cy), (0, cx)), ((0, cy), (cx, w)), ((cy, h), (0, cx)), ((cy, h), (cx, w))):
        p_vals, g_vals = [], []
        for i in range(*ys):
            for j in range(*xs):
                p_vals.append(float(pred[i, j]))
                g_vals.append(float(gt_bin[i, j]))
        weight = len(p_vals) / (h * w)
        if weight:
            s_region += weight * _ssim_oracle(p_vals, g_vals)
    return min(max(alpha * s_object + (1.0 - alpha) * s_region, 0.0), 1.0)


def e_measure_oracle(pred, gt):
    h, w = gt.shape
    gt_bin = gt >= 0.5
    n = h * w
    n_fg = int(gt_bin.sum())
    scores = []
    for t in THRESHOLDS:
        fm = pred >= t
        if n_fg == 0:
            enhanced_sum = sum(1.0 - float(fm[i, j]) for i in range(h) for j in range(w))
        elif n_fg == n:
            enhanced_sum = sum(float(fm[i, j]) for i in range(h) for j in range(w))
        else:
            mu_g = n_fg / n
            mu_f = float(fm.sum()) / n
            enhanced_sum = 0.0
            for i in range(h):
                for j in range(w):
                    dg = float(gt_bin[i, j]) - mu_g
                    df = float(fm[i, j]) - mu_f
                    align = 2.0 * dg * df / (dg * dg + df * df + 1e-15)
                    enhanced_sum += (align + 1.0) ** 2 / 4.0
        scores.append(min(max(enhanced_sum / n, 0.0), 1.0))
    return sum(scores) / len(scores)
