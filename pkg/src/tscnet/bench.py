"""Benchmark of channel-wise attention against flattened-pixel attention.

Reports instrumented peak intermediate allocations (exact element counts)
and median wall times. For square C x H x H inputs the channel-wise score
maps hold C*H^2 elements against (H*H)^2 for the standard form, an exact
ratio of H^2 / C. Standard rows whose score map would exceed the memory
cap are skipped.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    channelwise_attention,
    no_grad,
    standard_attention_reference,
    track_allocations,
)

DEFAULT_MEMORY_CAP = 1 << 28   # elements of the standard score map


@dataclass
class BenchRow:
    channels: int
    height: int
    channelwise_elems: int
    channelwise_ms: float
    standard_elems: int | None
    standard_ms: float | None
    skipped: bool = False

    @property
    def ratio(self) -> float | None:
        if self.standard_elems is None:
            return None
        return self.standard_elems / self.channelwise_elems

    def format(self) -> str:
        if self.skipped:
            return (f"c={self.channels:<4} h={self.height:<4} "
                    f"channelwise {self.channelwise_elems:>12} elems {self.channelwise_ms:9.3f} ms   "
                    f"standard skipped (cap)")
        return (f"c={self.channels:<4} h={self.height:<4} "
                f"channelwise {self.channelwise_elems:>12} elems {self.channelwise_ms:9.3f} ms   "
                f"standard {self.standard_elems:>12} elems {self.standard_ms:9.3f} ms   "
                f"ratio {self.ratio:g}")


def _measure(fn, repeats: int) -> tuple[int, float]:
    """Peak tracked allocation and median wall time over repeats."""
    times = []
    peak = 0
    for _ in range(repeats):
        with no_grad(), track_allocations() as tracker:
            start = time.perf_counter()
            fn()
            times.append(time.perf_counter() - start)
        peak = max(peak, tracker.peak)
    return peak, float(np.median(times)) * 1e3


def bench_attention(sizes: list[tuple[int, int]], repeats: int = 5,
                    memory_cap: int = DEFAULT_MEMORY_CAP) -> list[BenchRow]:
    rows = []
    for c, h in sizes:
        rng = np.random.default_rng((c, h))
        q = Tensor(rng.standard_normal((c, h, h)).astype(np.float32))
        k = Tensor(rng.standard_normal((c, h, h)).astype(np.float32))
        v = Tensor(rng.standard_normal((c, h, h)).astype(np.float32))
        cw_peak, cw_ms = _measure(lambda: channelwise_attention(q, k, v), repeats)
        if (h * h) ** 2 > memory_cap:
            rows.append(BenchRow(c, h, cw_peak, cw_ms, None, None, skipped=True))
            continue
        std_peak, std_ms = _measure(lambda: standard_attention_reference(q, k, v), repeats)
        rows.append(BenchRow(c, h, cw_peak, cw_ms, std_peak, std_ms))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    return "\n".join(r.format() for r in rows)
