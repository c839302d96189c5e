"""Hybrid deep-supervision objective: per-map BCE plus IoU, summed over maps.

Predictions are clamped to [1e-7, 1 - 1e-7] before the logs; the IoU term
is smoothed with epsilon 1. BCE is averaged over pixels so its magnitude
does not depend on resolution. Maps whose size differs from the ground
truth are bilinearly upsampled first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError

CLAMP_EPS = 1e-7
IOU_EPS = 1.0


@dataclass
class LossReport:
    """Per-level loss terms; total equals their sum."""
    bce: dict[int, float]
    iou: dict[int, float]
    total: float

    def csv_row(self, step: int) -> str:
        vals = [self.bce[2], self.bce[3], self.bce[4], self.iou[2], self.iou[3], self.iou[4], self.total]
        return ",".join([str(step)] + [f"{v:.9g}" for v in vals])

    CSV_HEADER = "step,bce2,bce3,bce4,iou2,iou3,iou4,total"


def _check_sizes(pred: Tensor, gt: np.ndarray) -> None:
    if pred.shape[-2:] != gt.shape[-2:]:
        raise ContractError(f"prediction {pred.shape} does not match ground truth {gt.shape}")


def bce_loss(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Mean binary cross entropy of a map in (0,1) against a {0,1} mask."""
    _check_sizes(pred, gt)
    gt = gt.reshape(pred.shape).astype(pred.dtype)
    p = ad.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    pos = ad.mul(ad.log(p), gt)
    negt = ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - gt)
    return ad.neg(ad.mean_(ad.add(pos, negt)))


def iou_loss(pred: Tensor, gt: np.ndarray) -> Tensor:
    """1 - (sum(p*g) + eps) / (sum(p + g - p*g) + eps) with eps = 1."""
    _check_sizes(pred, gt)
    gt = gt.reshape(pred.shape).astype(pred.dtype)
    prod = ad.mul(pred, gt)
    inter = ad.sum_(prod)
    union = ad.sub(ad.add(ad.sum_(pred), float(gt.sum())), inter)
    return ad.sub(1.0, ad.div(ad.add(inter, IOU_EPS), ad.add(union, IOU_EPS)))


def total_loss(s2: Tensor, s3: Tensor, s4: Tensor, gt: np.ndarray) -> tuple[Tensor, LossReport]:
    """Sum of BCE + IoU over the three maps against a full-size mask.

    Only maps whose spatial size differs from gt are upsampled.
    """
    gt = np.asarray(gt)
    gh, gw = gt.shape[-2:]
    terms_bce: dict[int, Tensor] = {}
    terms_iou: dict[int, Tensor] = {}
    for level, pred in ((2, s2), (3, s3), (4, s4)):
        if pred.shape[-2:] != (gh, gw):
            pred = ad.bilinear_upsample(pred, gh, gw)
        terms_bce[level] = bce_loss(pred, gt)
        terms_iou[level] = iou_loss(pred, gt)
    total = terms_bce[2]
    for t in (terms_iou[2], terms_bce[3], terms_iou[3], terms_bce[4], terms_iou[4]):
        total = ad.add(total, t)
    report = LossReport(
        bce={i: terms_bce[i].item() for i in (2, 3, 4)},
        iou={i: terms_iou[i].item() for i in (2, 3, 4)},
        total=total.item(),
    )
    return total, report
