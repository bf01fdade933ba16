"""Recurrent stage: two stacked LSTM layers with coupled input/forget
gates, optional peephole connections, per-layer dropout, and a shared
linear readout at every step.

Gate equations (per step, elementwise):

    z = tanh(Wz x + Rz h_prev + bz)                 block input
    f = sigma(Wf x + Rf h_prev + pf*c_prev + bf)    forget gate
    i = 1 - f                                       coupled input gate
    c = f*c_prev + i*z
    o = sigma(Wo x + Ro h_prev + po*c + bo)         output gate
    h = o*tanh(c)

The coupling means the input gate is never stored or parameterized on
its own.  Backward passes are exact, including the contribution of the
peepholes across time steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParamStore, glorot_uniform


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class CifgLayer:
    """Name prefix + sizes of one recurrent layer inside a ParamStore."""

    prefix: str
    input_dim: int
    cell_size: int
    peepholes: bool = True

    def init(self, params: ParamStore, rng: np.random.Generator) -> None:
        d, h = self.input_dim, self.cell_size
        for gate in ("z", "f", "o"):
            params.add(f"{self.prefix}_W{gate}", glorot_uniform(rng, (d, h), d, h))
            params.add(f"{self.prefix}_R{gate}", glorot_uniform(rng, (h, h), h, h))
            bias = np.ones(h) if gate == "f" else np.zeros(h)  # +1 stabilizes early BPTT
            params.add(f"{self.prefix}_b{gate}", bias)
        if self.peepholes:
            params.add(f"{self.prefix}_pf", np.zeros(h))
            params.add(f"{self.prefix}_po", np.zeros(h))


def cifg_step(x, h_prev, c_prev, params: ParamStore, layer: CifgLayer):
    """One recurrent step; returns (h, c, cache)."""
    pfx = layer.prefix
    x = np.asarray(x, dtype=np.float64)
    a_z = x @ params[f"{pfx}_Wz"] + h_prev @ params[f"{pfx}_Rz"] + params[f"{pfx}_bz"]
    a_f = x @ params[f"{pfx}_Wf"] + h_prev @ params[f"{pfx}_Rf"] + params[f"{pfx}_bf"]
    if layer.peepholes:
        a_f = a_f + c_prev * params[f"{pfx}_pf"]
    z = np.tanh(a_z)
    f = sigmoid(a_f)
    c = f * c_prev + (1.0 - f) * z
    a_o = x @ params[f"{pfx}_Wo"] + h_prev @ params[f"{pfx}_Ro"] + params[f"{pfx}_bo"]
    if layer.peepholes:
        a_o = a_o + c * params[f"{pfx}_po"]
    o = sigmoid(a_o)
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (x, h_prev, c_prev, z, f, o, c, tanh_c)
    return h, c, cache


def cifg_step_backward(d_h, d_c_in, cache, params: ParamStore, layer: CifgLayer):
    """Exact adjoint of one step.

    ``d_h`` is the total gradient at this step's h (readout plus
    recurrence); ``d_c_in`` the gradient flowing back through c from the
    following step.  Returns (d_x, d_h_prev, d_c_prev) and accumulates
    parameter gradients.
    """
    pfx = layer.prefix
    x, h_prev, c_prev, z, f, o, c, tanh_c = cache

    d_o = d_h * tanh_c
    d_c = d_h * o * (1.0 - tanh_c ** 2) + d_c_in
    d_a_o = d_o * o * (1.0 - o)
    if layer.peepholes:
        d_c = d_c + d_a_o * params[f"{pfx}_po"]
    d_f = d_c * (c_prev - z)
    d_z = d_c * (1.0 - f)
    d_c_prev = d_c * f
    d_a_f = d_f * f * (1.0 - f)
    if layer.peepholes:
        d_c_prev = d_c_prev + d_a_f * params[f"{pfx}_pf"]
    d_a_z = d_z * (1.0 - z ** 2)

    g = params.grads
    g[f"{pfx}_Wz"] += x.T @ d_a_z
    g[f"{pfx}_Rz"] += h_prev.T @ d_a_z
    g[f"{pfx}_bz"] += d_a_z.sum(axis=0)
    g[f"{pfx}_Wf"] += x.T @ d_a_f
    g[f"{pfx}_Rf"] += h_prev.T @ d_a_f
    g[f"{pfx}_bf"] += d_a_f.sum(axis=0)
    g[f"{pfx}_Wo"] += x.T @ d_a_o
    g[f"{pfx}_Ro"] += h_prev.T @ d_a_o
    g[f"{pfx}_bo"] += d_a_o.sum(axis=0)
    if layer.peepholes:
        g[f"{pfx}_pf"] += (d_a_f * c_prev).sum(axis=0)
        g[f"{pfx}_po"] += (d_a_o * c).sum(axis=0)

    d_x = d_a_z @ params[f"{pfx}_Wz"].T + d_a_f @ params[f"{pfx}_Wf"].T \
        + d_a_o @ params[f"{pfx}_Wo"].T
    d_h_prev = d_a_z @ params[f"{pfx}_Rz"].T + d_a_f @ params[f"{pfx}_Rf"].T \
        + d_a_o @ params[f"{pfx}_Ro"].T
    return d_x, d_h_prev, d_c_prev


@dataclass
class LstmConfig:
    input_dim: int
    cell_sizes: tuple[int, int] = (64, 64)
    n_outputs: int = 6
    dropout: tuple[float, float] = (0.25, 0.25)   # per-layer output drop prob
    peepholes: bool = True


class LstmStack:
    """Two stacked coupled-gate layers plus a shared linear head.

    The window's force estimate is the last step's output (many-to-one
    readout); all per-step outputs are returned so the difference term
    of the loss can see consecutive in-window estimates.
    """

    def __init__(self, config: LstmConfig, seed: int = 0):
        self.config = config
        self.params = ParamStore(seed=seed)
        rng = np.random.default_rng(seed)
        self.layers = [
            CifgLayer("l0", config.input_dim, config.cell_sizes[0], config.peepholes),
            CifgLayer("l1", config.cell_sizes[0], config.cell_sizes[1], config.peepholes),
        ]
        for layer in self.layers:
            layer.init(self.params, rng)
        h2 = config.cell_sizes[1]
        self.params.add("head_w", glorot_uniform(rng, (h2, config.n_outputs),
                                                 h2, config.n_outputs))
        self.params.add("head_b", np.zeros(config.n_outputs))

    def forward(self, phi: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        """Run a (T,B,D) window batch; states start at zero.

        Returns (y (T,B,6), cache).  Dropout masks are drawn per step
        and per layer in train mode (inverted scaling).
        """
        phi = np.asarray(phi, dtype=np.float64)
        if phi.ndim == 2:
            phi = phi[:, None, :]
        t_steps, batch, dim = phi.shape
        if t_steps < 1:
            raise ValueError("empty input window")
        if dim != self.config.input_dim:
            raise ValueError(f"input width {dim} != configured {self.config.input_dim}")
        if train and any(d > 0 for d in self.config.dropout) and rng is None:
            raise ValueError("train-mode forward needs an rng for dropout")

        p = self.params
        states = [(np.zeros((batch, l.cell_size)), np.zeros((batch, l.cell_size)))
                  for l in self.layers]
        y = np.empty((t_steps, batch, self.config.n_outputs))
        steps = []
        for t in range(t_steps):
            x = phi[t]
            per_layer = []
            for k, layer in enumerate(self.layers):
                h_prev, c_prev = states[k]
                h, c, cache = cifg_step(x, h_prev, c_prev, p, layer)
                drop = self.config.dropout[k]
                if train and drop > 0:
                    mask = (rng.random(h.shape) >= drop) / (1.0 - drop)
                else:
                    mask = None
                out = h * mask if mask is not None else h
                per_layer.append((cache, mask, out))
                states[k] = (h, c)
                x = out
            y[t] = x @ p["head_w"] + p["head_b"]
            steps.append(per_layer)
        return y, {"steps": steps, "shape": (t_steps, batch)}

    def backward(self, d_y: np.ndarray, cache) -> None:
        """Backpropagation through time over the whole window batch."""
        p = self.params
        t_steps, batch = cache["shape"]
        d_y = np.asarray(d_y, dtype=np.float64)
        d_h_next = [np.zeros((batch, l.cell_size)) for l in self.layers]
        d_c_next = [np.zeros((batch, l.cell_size)) for l in self.layers]
        for t in range(t_steps - 1, -1, -1):
            per_layer = cache["steps"][t]
            _, mask1, out1 = per_layer[1]
            p.grads["head_w"] += out1.T @ d_y[t]
            p.grads["head_b"] += d_y[t].sum(axis=0)
            d_out = d_y[t] @ p["head_w"].T
            for k in (1, 0):
                layer = self.layers[k]
                step_cache, mask, _ = per_layer[k]
                d_h = (d_out * mask if mask is not None else d_out) + d_h_next[k]
                d_x, d_h_prev, d_c_prev = cifg_step_backward(
                    d_h, d_c_next[k], step_cache, p, layer)
                d_h_next[k] = d_h_prev
                d_c_next[k] = d_c_prev
                d_out = d_x
