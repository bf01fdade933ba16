"""Small convolutional regression network over space-time stacks.

Structure: a stack of (3x3 conv, ReLU, 2x2 max-pool) blocks, two
fully-connected ReLU layers with train-time dropout, and a 6-wide
linear regression head.  Feature vectors for the recurrent stage are
the tanh of the second fully-connected layer's pre-activation, so they
lie strictly inside (-1, 1).

All passes are float64 and analytic; nothing here depends on an
autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .params import ParamStore, glorot_uniform


@dataclass
class CnnConfig:
    input_size: int = 32
    in_channels: int = 3
    conv_widths: tuple[int, ...] = (8, 16, 32)
    fc_widths: tuple[int, int] = (64, 64)
    n_outputs: int = 6
    dropout: float = 0.5             # drop probability on FC outputs, train mode

    def __post_init__(self):
        if self.input_size % (2 ** len(self.conv_widths)) != 0:
            raise ValueError("input_size must be divisible by 2^n_conv_blocks")

    @property
    def feature_dim(self) -> int:
        return self.fc_widths[1]


class FeatureCnn:
    """Convolutional force regressor and feature extractor."""

    def __init__(self, config: CnnConfig, seed: int = 0):
        self.config = config
        self.params = ParamStore(seed=seed)
        rng = np.random.default_rng(seed)
        c_in = config.in_channels
        for i, width in enumerate(config.conv_widths):
            fan_in, fan_out = 9 * c_in, 9 * width
            self.params.add(f"conv{i}_w", glorot_uniform(rng, (3, 3, c_in, width), fan_in, fan_out))
            self.params.add(f"conv{i}_b", np.zeros(width))
            c_in = width
        side = config.input_size // (2 ** len(config.conv_widths))
        flat = side * side * c_in
        dims = (flat, *config.fc_widths)
        for i in range(2):
            self.params.add(f"fc{i}_w", glorot_uniform(rng, (dims[i], dims[i + 1]),
                                                       dims[i], dims[i + 1]))
            self.params.add(f"fc{i}_b", np.zeros(dims[i + 1]))
        self.params.add("head_w", glorot_uniform(rng, (dims[2], config.n_outputs),
                                                 dims[2], config.n_outputs))
        self.params.add("head_b", np.zeros(config.n_outputs))

    # -- passes ------------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        """Regress forces from (B,S,S,C) stacks; returns (y_hat, cache).

        Eval mode is deterministic.  Train mode applies inverted dropout
        after each fully-connected ReLU, drawn from ``rng``.
        """
        p = self.params
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1] != cfg.input_size or x.shape[3] != cfg.in_channels:
            raise ValueError(f"expected (B,{cfg.input_size},{cfg.input_size},"
                             f"{cfg.in_channels}), got {x.shape}")
        if train and cfg.dropout > 0 and rng is None:
            raise ValueError("train-mode forward needs an rng for dropout")

        h = np.ascontiguousarray(x)
        conv_cache = []
        for i, width in enumerate(cfg.conv_widths):
            in_shape = h.shape
            cols = kernels.im2col(h, 3, 3, 1, 1)
            pre = cols @ p[f"conv{i}_w"].reshape(-1, width) + p[f"conv{i}_b"]
            pre = pre.reshape(in_shape[0], in_shape[1], in_shape[2], width)
            act = np.maximum(pre, 0.0)
            h, arg = kernels.maxpool2x2(np.ascontiguousarray(act))
            conv_cache.append((in_shape, cols, pre, act.shape, arg))

        b = h.shape[0]
        flat = h.reshape(b, -1)
        fc_cache = []
        a = flat
        for i in range(2):
            pre = a @ p[f"fc{i}_w"] + p[f"fc{i}_b"]
            act = np.maximum(pre, 0.0)
            if train and cfg.dropout > 0:
                mask = (rng.random(act.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
            else:
                mask = None
            out = act * mask if mask is not None else act
            fc_cache.append((a, pre, mask))
            a = out
        y_hat = a @ p["head_w"] + p["head_b"]
        cache = {"conv": conv_cache, "fc": fc_cache, "head_in": a,
                 "pool_out_shape": h.shape}
        return y_hat, cache

    def features(self, x: np.ndarray) -> np.ndarray:
        """tanh of the second FC pre-activation, dropout disabled."""
        _, cache = self.forward(x, train=False)
        pre_fc2 = cache["fc"][1][1]
        return np.tanh(pre_fc2)

    def backward(self, d_y: np.ndarray, cache) -> np.ndarray:
        """Accumulate parameter gradients; returns gradient wrt the input."""
        p = self.params
        cfg = self.config
        d_y = np.asarray(d_y, dtype=np.float64)

        head_in = cache["head_in"]
        p.grads["head_w"] += head_in.T @ d_y
        p.grads["head_b"] += d_y.sum(axis=0)
        d = d_y @ p["head_w"].T
        for i in (1, 0):
            a, pre, mask = cache["fc"][i]
            if mask is not None:
                d = d * mask
            d = d * (pre > 0)
            p.grads[f"fc{i}_w"] += a.T @ d
            p.grads[f"fc{i}_b"] += d.sum(axis=0)
            d = d @ p[f"fc{i}_w"].T

        d_h = d.reshape(cache["pool_out_shape"])
        for i in range(len(cfg.conv_widths) - 1, -1, -1):
            in_shape, cols, pre, act_shape, arg = cache["conv"][i]
            d_act = kernels.maxpool2x2_backward(np.ascontiguousarray(d_h), arg, act_shape)
            d_pre = (d_act * (pre > 0)).reshape(-1, cfg.conv_widths[i])
            w = p[f"conv{i}_w"]
            p.grads[f"conv{i}_w"] += (cols.T @ d_pre).reshape(w.shape)
            p.grads[f"conv{i}_b"] += d_pre.sum(axis=0)
            d_cols = np.ascontiguousarray(d_pre @ w.reshape(-1, w.shape[3]).T)
            d_h = kernels.col2im(d_cols, in_shape, 3, 3, 1, 1)
        return d_h
