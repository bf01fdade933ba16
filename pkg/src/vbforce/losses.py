"""Composite regression loss: a root-mean-square distance term plus a
gradient-difference term that penalizes mismatched consecutive-sample
slopes, each shaped by a scalar rho function.

Every loss returns ``(value, gradient_wrt_estimate)`` with the gradient
computed analytically; subgradient 0 is chosen at the absolute-value
kinks and at a zero per-sample RMS error.

Batches are (n, N) arrays (N = 6 force components).  The difference
term needs temporal adjacency, so callers pass ``segments``: a list of
(start, stop) index ranges that are contiguous in time.  Differences
are never taken across segment boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LossConfig:
    """Weights and rho shaping of the composite loss.

    alpha=1 reduces the composite exactly to the RMS term.  rho="log"
    applies ln(x^gamma + epsilon) with gamma_rmse on the RMS term and
    gamma_gdl on the difference term; rho="linear" applies identity.
    """

    alpha: float = 0.75
    rho: str = "linear"              # "linear" | "log"
    gamma_rmse: float = 2.0
    gamma_gdl: float = 1.0
    epsilon: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0,1], got {self.alpha}")
        if self.rho not in ("linear", "log"):
            raise ValueError(f"unknown rho {self.rho!r}")
        if self.rho == "log" and self.epsilon <= 0:
            raise ValueError("epsilon must be positive for the log rho")


def rho_log(x, gamma: float, epsilon: float):
    """ln(x^gamma + epsilon) and its derivative, elementwise; x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("rho_log requires x >= 0")
    xg = x ** gamma
    value = np.log(xg + epsilon)
    with np.errstate(divide="ignore", invalid="ignore"):
        deriv = np.where(x > 0, gamma * x ** (gamma - 1) / (xg + epsilon), 0.0)
    if gamma == 1.0:
        deriv = 1.0 / (xg + epsilon)   # finite at x=0
    return value, deriv


def rho_linear(x):
    x = np.asarray(x, dtype=float)
    return x.copy(), np.ones_like(x)


def _apply_rho(x, rho: str, gamma: float, epsilon: float):
    if rho == "log":
        return rho_log(x, gamma, epsilon)
    return rho_linear(x)


def _check_shapes(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 2:
        raise ValueError(f"expected matching (n,N) batches, got {y.shape} vs {y_hat.shape}")
    return y, y_hat


def loss_rmse(y, y_hat, rho: str = "linear", gamma: float = 2.0,
              epsilon: float = 0.01):
    """Sum over samples of rho(per-sample RMS error)."""
    y, y_hat = _check_shapes(y, y_hat)
    n_comp = y.shape[1]
    err = y_hat - y
    x = np.sqrt(np.mean(err ** 2, axis=1))
    value, deriv = _apply_rho(x, rho, gamma, epsilon)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(x > 0, deriv / (n_comp * np.maximum(x, 1e-300)), 0.0)
    grad = scale[:, None] * err
    return float(value.sum()), grad


def _segment_list(n: int, segments):
    if segments is None:
        return [(0, n)]
    out = []
    for start, stop in segments:
        if stop - start < 2:
            raise ValueError(f"segment ({start},{stop}) shorter than 2 samples")
        out.append((int(start), int(stop)))
    return out


def loss_gdl(y, y_hat, rho: str = "linear", gamma: float = 1.0,
             epsilon: float = 0.01, segments=None):
    """Sum over samples of rho(sum_j ||dY| - |dYhat||), differences taken
    within each contiguous segment starting from its second sample."""
    y, y_hat = _check_shapes(y, y_hat)
    total = 0.0
    grad = np.zeros_like(y_hat)
    for start, stop in _segment_list(len(y), segments):
        dy = np.diff(y[start:stop], axis=0)
        dyh = np.diff(y_hat[start:stop], axis=0)
        inner = np.abs(dy) - np.abs(dyh)
        x = np.abs(inner).sum(axis=1)
        value, deriv = _apply_rho(x, rho, gamma, epsilon)
        total += float(value.sum())
        # d|inner|/d dyh = -sign(inner)*sign(dyh); subgradient 0 at ties
        d_dyh = -np.sign(inner) * np.sign(dyh) * deriv[:, None]
        grad[start + 1:stop] += d_dyh
        grad[start:stop - 1] -= d_dyh
    return total, grad


def loss_composite(y, y_hat, config: LossConfig, segments=None):
    """alpha * rmse_term + (1-alpha) * gdl_term.

    With alpha=1 the result is the rmse term bitwise (the gdl term is
    not evaluated at all).  Returns (value, gradient, rmse_value,
    gdl_value).
    """
    v_rmse, g_rmse = loss_rmse(y, y_hat, rho=config.rho,
                               gamma=config.gamma_rmse, epsilon=config.epsilon)
    if config.alpha == 1.0:
        return v_rmse, g_rmse, v_rmse, 0.0
    v_gdl, g_gdl = loss_gdl(y, y_hat, rho=config.rho, gamma=config.gamma_gdl,
                            epsilon=config.epsilon, segments=segments)
    value = config.alpha * v_rmse + (1.0 - config.alpha) * v_gdl
    grad = config.alpha * g_rmse + (1.0 - config.alpha) * g_gdl
    return value, grad, v_rmse, v_gdl
