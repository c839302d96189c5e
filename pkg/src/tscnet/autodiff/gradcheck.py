"""Finite-difference gradient oracle.

Central differences (f(p+eps) - f(p-eps)) / (2 eps) per scalar parameter,
compared against the gradients produced by backward(). This is the
independent verification route for the whole autodiff engine, so it never
calls backward itself during the difference loop; every probe is a fresh
forward evaluation.

Run it in float64. Central differences in float32 drown in rounding noise.

Piecewise-linear ops (relu, max pooling) break the smoothness assumption
of central differences: when a kink sits inside (p-eps, p+eps) the
estimate absorbs a spurious half slope-jump that no epsilon scaling
removes from a single probe. Scalars whose first estimate disagrees are
therefore re-probed at shrinking epsilons; once the interval no longer
straddles the kink the estimate is clean. A genuinely wrong backward rule
disagrees at every epsilon, so the refinement cannot mask real defects
(the corrupted-rule fixture in the tests demonstrates this).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, NumericsError
from .tensor import Tensor, no_grad

# Below this magnitude a relative comparison is meaningless (the finite
# difference itself carries ~1e-9 of rounding noise), so the error is
# reported as an absolute difference instead.
RELATIVE_FLOOR = 1e-5

# Scalars whose error exceeds this after the first probe are re-checked
# with epsilon shrunk by these factors; the smallest error wins.
REFINE_TRIGGER = 1e-5
REFINE_FACTORS = (0.25, 0.0625, 0.015625)


@dataclass
class ParamCheck:
    name: str
    max_error: float
    worst_index: int
    analytic_at_worst: float
    numeric_at_worst: float
    n_checked: int
    n_nonfinite: int = 0


@dataclass
class GradCheckReport:
    epsilon: float
    rows: list[ParamCheck] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max((r.max_error for r in self.rows), default=0.0)

    def format_table(self) -> str:
        lines = [f"{'parameter':<42} {'max err':>12} {'analytic':>13} {'numeric':>13} {'n':>6}"]
        for r in self.rows:
            flag = f"  ({r.n_nonfinite} non-finite probes)" if r.n_nonfinite else ""
            lines.append(
                f"{r.name:<42} {r.max_error:>12.3e} {r.analytic_at_worst:>13.5e}"
                f" {r.numeric_at_worst:>13.5e} {r.n_checked:>6}{flag}"
            )
        lines.append(f"worst-case error: {self.worst:.3e} (epsilon={self.epsilon:g})")
        return "\n".join(lines)


def _error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    diff = abs(analytic - numeric)
    if scale < RELATIVE_FLOOR:
        return diff
    return diff / scale


def finite_diff_check(f, params: dict[str, Tensor], epsilon: float = 1e-5) -> GradCheckReport:
    """Compare backward() gradients of f() against central differences.

    f must rebuild its forward pass from the current parameter values on
    every call and return a scalar Tensor. Parameters are perturbed in
    place one scalar at a time. Non-finite evaluations at perturbed points
    are counted per parameter rather than raised.
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ContractError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ContractError(f"finite_diff_check requires float64 parameters, '{name}' is {p.dtype}")
        p.grad = None

    loss = f()
    if loss.size != 1:
        raise ContractError("finite_diff_check target must be scalar")
    loss.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.items()}

    report = GradCheckReport(epsilon=epsilon)
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            grad_flat = analytic[name].reshape(-1)
            worst = 0.0
            worst_idx = 0
            worst_numeric = 0.0
            nonfinite = 0
            for idx in range(flat.size):
                try:
                    numeric = _central(f, flat, idx, epsilon)
                except NumericsError:
                    nonfinite += 1
                    continue
                a = float(grad_flat[idx])
                err = _error(a, numeric)
                if err > REFINE_TRIGGER:
                    for factor in REFINE_FACTORS:
                        try:
                            refined = _central(f, flat, idx, epsilon * factor)
                        except NumericsError:
                            continue
                        refined_err = _error(a, refined)
                        if refined_err < err:
                            err, numeric = refined_err, refined
                        if err <= REFINE_TRIGGER:
                            break
                if err > worst:
                    worst = err
                    worst_idx = idx
                    worst_numeric = numeric
            report.rows.append(ParamCheck(
                name=name,
                max_error=worst,
                worst_index=worst_idx,
                analytic_at_worst=float(grad_flat[worst_idx]) if flat.size else 0.0,
                numeric_at_worst=worst_numeric,
                n_checked=flat.size - nonfinite,
                n_nonfinite=nonfinite,
            ))
    report.rows.sort(key=lambda r: r.max_error, reverse=True)
    return report


def _central(f, flat: np.ndarray, idx: int, epsilon: float) -> float:
    original = flat[idx]
    try:
        flat[idx] = original + epsilon
        f_plus = f().item()
        flat[idx] = original - epsilon
        f_minus = f().item()
    finally:
        flat[idx] = original
    return (f_plus - f_minus) / (2.0 * epsilon)
