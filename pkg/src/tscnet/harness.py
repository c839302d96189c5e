"""Training, evaluation, inference and gradient-check orchestration.

Optimization is single threaded and fully seeded: the epoch shuffle,
augmentation choice and dropout masks all derive from the run seed, so a
repeated run produces bit-identical checkpoints and logs. The effective
batch is realized as gradient accumulation over single-image passes.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from . import data as dataio
from .autodiff import Tensor, finite_diff_check, no_grad
from .config import RunConfig, lr_at_epoch, micro_network_config
from .errors import DataError, NumericsError
from .losses import LossReport, total_loss
from .metrics import MetricsReport
from .network import SaliencyNet, build_network
from .optim import Adam


@dataclass
class TrainResult:
    steps: int = 0
    epochs: int = 0
    checkpoint_path: str = ""
    log_path: str = ""
    reports: list[LossReport] = field(default_factory=list)

    @property
    def first_total(self) -> float:
        return self.reports[0].total if self.reports else float("nan")

    @property
    def final_total(self) -> float:
        return self.reports[-1].total if self.reports else float("nan")


def _mean_report(reports: list[LossReport]) -> LossReport:
    return LossReport(
        bce={i: float(np.mean([r.bce[i] for r in reports])) for i in (2, 3, 4)},
        iou={i: float(np.mean([r.iou[i] for r in reports])) for i in (2, 3, 4)},
        total=float(np.mean([r.total for r in reports])),
    )


def train(cfg: RunConfig, net: SaliencyNet | None = None) -> TrainResult:
    """Run the optimization loop; writes a checkpoint and a CSV loss log.

    On a non-finite loss the last good parameter state is saved next to the
    final checkpoint path with suffix '.last_good' and NumericsError is
    raised.
    """
    pairs = dataio.read_manifest(cfg.manifest)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_path = os.path.join(cfg.out_dir, "model.ckpt")
    log_path = os.path.join(cfg.out_dir, "train_log.csv")

    if net is None:
        net = build_network(cfg.network, seed=cfg.seed)
    net.train()
    net.seed_dropout(np.random.default_rng((cfg.seed, 0xD0)))
    params = net.parameters()
    opt = Adam(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    result = TrainResult(checkpoint_path=ckpt_path, log_path=log_path)
    log_lines = [LossReport.CSV_HEADER]
    step = 0
    try:
        for epoch in range(cfg.epochs):
            lr = lr_at_epoch(cfg, epoch)
            order = np.random.default_rng((cfg.seed, 1, epoch)).permutation(len(pairs))
            for start in range(0, len(order), cfg.batch):
                batch = order[start:start + cfg.batch]
                opt.zero_grad()
                batch_reports = []
                for idx in batch:
                    sample = dataio.load_sample(*pairs[idx])
                    if cfg.augment:
                        sample = dataio.augment(sample, (cfg.seed, 2, epoch, int(idx)))
                    s2, s3, s4 = net.forward(sample.image)
                    loss, report = total_loss(s2, s3, s4, sample.mask)
                    loss.backward()
                    batch_reports.append(report)
                opt.step(lr, grad_scale=1.0 / len(batch))
                step += 1
                mean = _mean_report(batch_reports)
                log_lines.append(mean.csv_row(step))
                result.reports.append(mean)
                if cfg.max_steps and step >= cfg.max_steps:
                    raise _StopTraining
            result.epochs = epoch + 1
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                ckpt.save(os.path.join(cfg.out_dir, f"model_epoch{epoch + 1:04d}.ckpt"), params)
    except _StopTraining:
        pass
    except NumericsError:
        ckpt.save(ckpt_path + ".last_good", params)
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")
        raise

    result.steps = step
    ckpt.save(ckpt_path, params)
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + "\n")
    return result


class _StopTraining(Exception):
    pass


def predict(net: SaliencyNet, image: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eval-mode forward; returns the three maps as plain H x W arrays."""
    net.eval()
    with no_grad():
        s2, s3, s4 = net.forward(image)
    return s2.data[0], s3.data[0], s4.data[0]


def evaluate(cfg: RunConfig, checkpoint_path: str, manifest_path: str,
             report_path: str | None = None) -> MetricsReport:
    """Per-image metrics over a manifest; the mean row closes the CSV."""
    pairs = dataio.read_manifest(manifest_path)
    net = build_network(cfg.network, seed=cfg.seed)
    ckpt.load_into(checkpoint_path, net.parameters())
    report = MetricsReport()
    for image_path, mask_path in pairs:
        sample = dataio.load_sample(image_path, mask_path)
        pred = predict(net, sample.image)[0]
        if pred.shape != sample.mask.shape:
            pred = _resize_map(pred, sample.mask.shape)
        report.add(sample.sample_id, pred, sample.mask)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    return report


def _resize_map(pred: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    from .autodiff import bilinear_upsample
    with no_grad():
        return bilinear_upsample(Tensor(pred[None]), shape[0], shape[1]).data[0]


def infer(cfg: RunConfig, checkpoint_path: str, image_path: str, out_dir: str,
          laterals: bool = False) -> list[str]:
    """Write the saliency map(s) for one image as 8-bit grayscale PNGs."""
    net = build_network(cfg.network, seed=cfg.seed)
    ckpt.load_into(checkpoint_path, net.parameters())
    image = dataio.load_image(image_path)
    if image.shape[1] != cfg.network.input_size or image.shape[2] != cfg.network.input_size:
        raise DataError(
            f"{image_path} is {image.shape[1]}x{image.shape[2]}, "
            f"the configured input size is {cfg.network.input_size}")
    s2, s3, s4 = predict(net, image)
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(image_path))[0]
    written = []
    outputs = [("s2", s2)] + ([("s3", s3), ("s4", s4)] if laterals else [])
    for tag, saliency in outputs:
        path = os.path.join(out_dir, f"{stem}_{tag}.png")
        dataio.save_map(path, saliency)
        written.append(path)
    return written


# -- gradient check -----------------------------------------------------------

GRADCHECK_THRESHOLD = 1e-4


def run_gradcheck(epsilon: float = 1e-5, seed: int = 3, threshold: float = GRADCHECK_THRESHOLD):
    """Finite-difference check of the whole micro network in float64.

    Every parameter is randomized first: the texture-blend scalar so the
    attention projections receive real gradient signal, and all bias
    vectors so no preactivation sits exactly on a relu kink (zero-filled
    biases put dead units exactly at zero, where the one-sided slope and
    the subgradient legitimately disagree at any epsilon).
    """
    cfg = micro_network_config()
    net = build_network(cfg, seed=seed, dtype=np.float64)
    net.eval()
    params = net.parameters()
    rng = np.random.default_rng((seed, 11))
    for name, p in params.items():
        if name.endswith(".beta") and p.ndim == 0:
            p.data = np.asarray(rng.uniform(0.2, 0.6), dtype=np.float64)
        elif name.endswith(".bias"):
            p.data = rng.uniform(-0.1, 0.1, size=p.shape)

    synth = dataio.SynthConfig(size=cfg.input_size, count_range=(2, 4),
                               size_range=(0.08, 0.2), seed=seed)
    image, mask, _ = dataio.generate_image(synth, np.random.default_rng((seed, 12)))
    image = image.astype(np.float64)

    def f() -> Tensor:
        s2, s3, s4 = net.forward(image)
        loss, _ = total_loss(s2, s3, s4, mask)
        return loss

    started = time.perf_counter()
    report = finite_diff_check(f, params, epsilon=epsilon)
    elapsed = time.perf_counter() - started
    passed = report.worst < threshold
    return report, elapsed, passed
