"""Saliency evaluation measures: S-measure, mean F, mean E, MAE.

Conventions pinned here (and shared with the brute-force test oracles):

  * thresholds are the 256 values t = i/255 for i in 0..255 and a pixel is
    kept when pred >= t, so the t = 0 map is all foreground;
  * F-beta uses beta^2 = 0.3 with 0/0 -> 0, and an empty ground truth
    scores 0 at every threshold;
  * the S-measure combines the object and region terms with alpha = 0.5,
    sample statistics use the n-1 normalization (0 when n < 2), the region
    split is at the rounded foreground centroid, and an empty or full
    ground truth degenerates to 1 - mean(pred) or mean(pred);
  * the E-measure alignment term is averaged over pixels (not n-1), the
    empty / full ground truth cases use 1 - FM and FM, and every
    per-threshold value is clamped to [0,1].
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

THRESHOLDS = np.arange(256) / 255.0
F_BETA_SQ = 0.3
S_ALPHA = 0.5
EPS = 1e-15


def _validate(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    return pred, gt


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _validate(pred, gt)
    return float(np.abs(pred - gt).mean())


def f_measure_mean(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _validate(pred, gt)
    gt_bool = gt >= 0.5
    n_fg = int(gt_bool.sum())
    if n_fg == 0:
        return 0.0
    scores = []
    for t in THRESHOLDS:
        binarized = pred >= t
        tp = float(np.logical_and(binarized, gt_bool).sum())
        n_pos = float(binarized.sum())
        precision = tp / n_pos if n_pos > 0 else 0.0
        recall = tp / n_fg
        denom = F_BETA_SQ * precision + recall
        scores.append((1 + F_BETA_SQ) * precision * recall / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


# -- S-measure ----------------------------------------------------------------

def _sample_std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    return 2.0 * x / (x * x + 1.0 + _sample_std(values) + EPS)

def _ssim_like(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    x, y = float(p.mean()), float(g.mean())
    if n > 1:
        sx = float(((p - x) ** 2).sum() / (n - 1))
        sy = float(((g - y) ** 2).sum() / (n - 1))
        sxy = float(((p - x) * (g - y)).sum() / (n - 1))
    else:
        sx = sy = sxy = 0.0
    num = 4.0 * x * y * sxy
    den = (x * x + y * y) * (sx + sy)
    if num != 0.0:
        return num / (den + EPS)
    return 1.0 if den == 0.0 else 0.0


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = S_ALPHA) -> float:
    pred, gt = _validate(pred, gt)
    gt_bool = gt >= 0.5
    mu = float(gt_bool.mean())
    if mu == 0.0:
        return float(np.clip(1.0 - pred.mean(), 0.0, 1.0))
    if mu == 1.0:
        return float(np.clip(pred.mean(), 0.0, 1.0))

    s_object = mu * _object_score(pred[gt_bool]) + (1.0 - mu) * _object_score((1.0 - pred)[~gt_bool])

    rows, cols = np.nonzero(gt_bool)
    cy = int(round(rows.mean()))
    cx = int(round(cols.mean()))
    h, w = gt.shape
    s_region = 0.0
    for rs, cs in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                   (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        p_part = pred[rs, cs]
        weight = p_part.size / (h * w)
        if weight:
            s_region += weight * _ssim_like(p_part, gt[rs, cs].astype(np.float64))

    return float(np.clip(alpha * s_object + (1.0 - alpha) * s_region, 0.0, 1.0))


# -- E-measure ----------------------------------------------------------------

def _e_measure_at(binarized: np.ndarray, gt_bool: np.ndarray) -> float:
    if not gt_bool.any():
        enhanced = 1.0 - binarized.astype(np.float64)
    elif gt_bool.all():
        enhanced = binarized.astype(np.float64)
    else:
        d_gt = gt_bool.astype(np.float64) - gt_bool.mean()
        d_fm = binarized.astype(np.float64) - binarized.mean()
        align = 2.0 * d_gt * d_fm / (d_gt * d_gt + d_fm * d_fm + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(np.clip(enhanced.mean(), 0.0, 1.0))


def e_measure_mean(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _validate(pred, gt)
    gt_bool = gt >= 0.5
    return float(np.mean([_e_measure_at(pred >= t, gt_bool) for t in THRESHOLDS]))


# -- dataset aggregation -------------------------------------------------------

@dataclass
class MetricsReport:
    """Per-image metric rows plus their arithmetic means."""
    image_ids: list[str] = field(default_factory=list)
    s_alpha: list[float] = field(default_factory=list)
    f_mean: list[float] = field(default_factory=list)
    e_mean: list[float] = field(default_factory=list)
    mae: list[float] = field(default_factory=list)

    def add(self, image_id: str, pred: np.ndarray, gt: np.ndarray) -> None:
        self.image_ids.append(image_id)
        self.s_alpha.append(s_measure(pred, gt))
        self.f_mean.append(f_measure_mean(pred, gt))
        self.e_mean.append(e_measure_mean(pred, gt))
        self.mae.append(mae(pred, gt))

    @property
    def means(self) -> dict[str, float]:
        return {
            "s_alpha": float(np.mean(self.s_alpha)) if self.s_alpha else float("nan"),
            "f_mean": float(np.mean(self.f_mean)) if self.f_mean else float("nan"),
            "e_mean": float(np.mean(self.e_mean)) if self.e_mean else float("nan"),
            "mae": float(np.mean(self.mae)) if self.mae else float("nan"),
        }

    def to_csv(self) -> str:
        lines = ["image_id,s_alpha,f_mean,e_mean,mae"]
        for i, image_id in enumerate(self.image_ids):
            lines.append(f"{image_id},{self.s_alpha[i]:.9g},{self.f_mean[i]:.9g},"
                         f"{self.e_mean[i]:.9g},{self.mae[i]:.9g}")
        m = self.means
        lines.append(f"MEAN,{m['s_alpha']:.9g},{m['f_mean']:.9g},{m['e_mean']:.9g},{m['mae']:.9g}")
        return "\n".join(lines) + "\n"
