"""Central-finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import ParamStore


class NumericError(ArithmeticError):
    """Non-finite values met where finite numbers were required."""


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    worst_analytic: float
    worst_numeric: float
    n_checked: int


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-12)


def grad_check(params: ParamStore, loss_fn: Callable[[], float],
               backward_fn: Callable[[], float], h: float = 1e-5,
               max_coords: int = 500, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``backward_fn`` runs a full forward+backward at the current
    parameter values, accumulating into ``params.grads`` and returning
    the loss; ``loss_fn`` evaluates the loss only.  Both must be
    deterministic (dropout disabled).  For models with more than
    ``max_coords`` coordinates, a seeded random subsample is checked.
    """
    params.zero_grads()
    base = backward_fn()
    if not np.isfinite(base):
        raise NumericError("loss is not finite")
    analytic = {name: g.copy() for name, g in params.grads.items()}
    if any(not np.all(np.isfinite(g)) for g in analytic.values()):
        raise NumericError("analytic gradient contains non-finite values")

    coords = []
    for name, value in params.values.items():
        coords.extend((name, i) for i in range(value.size))
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in picks]

    worst = GradCheckReport(-1.0, "", -1, 0.0, 0.0, len(coords))
    for name, idx in coords:
        flat = params.values[name].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        lp = loss_fn()
        flat[idx] = orig - h
        lm = loss_fn()
        flat[idx] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise NumericError(f"non-finite loss while perturbing {name}[{idx}]")
        numeric = (lp - lm) / (2.0 * h)
        a = analytic[name].reshape(-1)[idx]
        rel = relative_error(a, numeric)
        if rel > worst.max_rel_error:
            worst = GradCheckReport(rel, name, idx, float(a), float(numeric),
                                    len(coords))
    return worst
