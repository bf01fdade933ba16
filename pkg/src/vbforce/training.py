"""RMSProp optimizer and the two-stage training procedures.

Stage 1 trains the convolutional regressor on individual space-time
stacks (batches are shuffled *contiguous pairs*, so the
gradient-difference loss term always sees a valid predecessor).
Stage 2 trains the recurrent stack on windows of per-instant feature
vectors; the window composition per input case is:

    case I    normalized tool data only            (4 wide)
    case II   video feature vectors only           (feature_dim wide)
    case III  [video || tool] concatenation        (feature_dim+4 wide)

Both loops are bit-reproducible for a given (data, config, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .losses import LossConfig, loss_composite
from .metrics import mre
from .nnet import CnnConfig, FeatureCnn, LstmConfig, LstmStack, NumericError
from .nnet.params import ParamStore

CASE_I, CASE_II, CASE_III = "I", "II", "III"
TOOL_DIM = 4

#: acquisition-scale stage defaults (learning rate, batch size, ...)
CNN_STAGE_DEFAULTS = {"lr": 1e-5, "batch": 50, "alpha": 0.8, "dropout": 0.5}
LSTM_STAGE_DEFAULTS = {"lr": 0.0025, "batch": 512, "time_steps": 64,
                       "cells_tool_only": 64, "cells_with_video": 256,
                       "dropout_tool_only": 0.75, "dropout_with_video": 0.25}


@dataclass
class TrainConfig:
    """Everything one training run needs; see the flat key=value config
    file keys in :func:`parse_config`."""

    stage: str = "lstm"              # "cnn" | "lstm"
    case: str = CASE_III
    loss: str = "A"                  # "A" (0.75 RMSE + 0.25 GDL) | "B" (RMSE only)
    learning_rate: float = 0.0025
    batch_size: int = 512
    iterations: int = 1000
    time_steps: int = 64
    dropout: tuple[float, float] = (0.25, 0.25)
    seed: int = 0
    rmsprop_beta: float = 0.9
    rmsprop_eps: float = 1e-8
    feature_dim: int = 64
    input_size: int = 32
    cells: tuple[int, int] = (64, 64)
    peepholes: bool = True
    delta: int = 15
    causal: bool = False
    log_interval: int = 250
    mre_interval: int = 1000
    mre_delta: float = 1e-3
    loss_all_steps: bool = True      # loss on every in-window step vs final only

    def __post_init__(self):
        if self.stage not in ("cnn", "lstm"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.case not in (CASE_I, CASE_II, CASE_III):
            raise ValueError(f"unknown case {self.case!r}")
        if self.loss not in ("A", "B"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be > 0 and batch_size >= 1")
        if self.stage == "lstm" and self.time_steps < 1:
            raise ValueError("time_steps must be >= 1 for the lstm stage")

    @property
    def alpha(self) -> float:
        return 0.75 if self.loss == "A" else 1.0

    def loss_config(self) -> LossConfig:
        if self.stage == "cnn":
            # log-shaped rho: squared differences for the RMS term,
            # absolute residual differences for the GDL term
            return LossConfig(alpha=0.8, rho="log", gamma_rmse=2.0,
                              gamma_gdl=1.0, epsilon=0.01)
        return LossConfig(alpha=self.alpha, rho="linear")

    def input_dim(self) -> int:
        if self.case == CASE_I:
            return TOOL_DIM
        if self.case == CASE_II:
            return self.feature_dim
        return self.feature_dim + TOOL_DIM


CONFIG_KEYS = {
    "stage": str, "case": str, "loss": str, "alpha": float, "lr": float,
    "batch": int, "iters": int, "T": int, "seed": int, "feature_dim": int,
    "dropout1": float, "dropout2": float, "causal": int, "delta": int,
    "input_size": int, "cells1": int, "cells2": int, "mre_interval": int,
    "episodes_pushing": int, "episodes_pulling": int,
    "train_seconds": float, "test_seconds": float, "frame_size": int,
    "roi_from_tool": int, "cnn_iters": int, "test_ids": str,
}


def parse_config(path: Path) -> dict:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = CONFIG_KEYS[key](val)
    return values


def config_from_dict(values: dict, stage: str | None = None) -> TrainConfig:
    cfg = TrainConfig(stage=stage or values.get("stage", "lstm"),
                      case=values.get("case", CASE_III),
                      loss=values.get("loss", "A"))
    mapping = {"lr": "learning_rate", "batch": "batch_size", "iters": "iterations",
               "T": "time_steps", "seed": "seed", "feature_dim": "feature_dim",
               "delta": "delta", "input_size": "input_size",
               "mre_interval": "mre_interval"}
    kwargs = {attr: values[key] for key, attr in mapping.items() if key in values}
    if "dropout1" in values or "dropout2" in values:
        kwargs["dropout"] = (values.get("dropout1", cfg.dropout[0]),
                             values.get("dropout2", cfg.dropout[1]))
    if "cells1" in values or "cells2" in values:
        kwargs["cells"] = (values.get("cells1", cfg.cells[0]),
                           values.get("cells2", cfg.cells[1]))
    if "causal" in values:
        kwargs["causal"] = bool(values["causal"])
    return replace(cfg, **kwargs)


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class RmsPropState:
    """Second-moment accumulators, one per parameter."""

    s: dict[str, np.ndarray]
    skipped: int = 0

    @classmethod
    def for_params(cls, params: ParamStore) -> "RmsPropState":
        return cls(s={name: np.zeros_like(v) for name, v in params.values.items()})


def rmsprop_step(params: ParamStore, state: RmsPropState, lr: float,
                 beta: float = 0.9, eps: float = 1e-8) -> bool:
    """s <- beta*s + (1-beta)*g^2;  theta <- theta - lr*g/sqrt(s+eps).

    A non-finite gradient anywhere skips the whole step (state and
    parameters untouched) and bumps the skip counter.  Returns whether
    the step was applied.
    """
    grads = params.grads
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            return False
    for name, value in params.values.items():
        g = grads[name]
        s = state.s[name]
        s *= beta
        s += (1.0 - beta) * g * g
        value -= lr * g / np.sqrt(s + eps)
    return True


# ---------------------------------------------------------------------------
# training data containers

@dataclass
class SequenceArrays:
    """Per-sequence training arrays on the preprocessed (strided) timeline."""

    id: str
    task: str
    tool: np.ndarray                 # (n, 4) normalized [x,y,z,s]
    force: np.ndarray                # (n, 6) normalized
    indices: np.ndarray              # (n,) source frame instants
    stf: np.ndarray | None = None    # (n, S, S, 3) space-time stacks
    features: np.ndarray | None = None  # (n, feature_dim)

    def __len__(self):
        return len(self.tool)

    def case_input(self, case: str) -> np.ndarray:
        if case == CASE_I:
            return self.tool
        if case == CASE_II:
            if self.features is None:
                raise ValueError(f"{self.id}: case {case} needs video features")
            return self.features
        if self.features is None:
            raise ValueError(f"{self.id}: case {case} needs video features")
        return np.concatenate([self.features, self.tool], axis=1)


def add_tool_noise(tool: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """i.i.d. zero-mean Gaussian on the normalized position channels.

    The grasper column is never touched.  sigma=0 returns an identical
    copy; draws are deterministic per seed.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    tool = np.asarray(tool, dtype=float)
    out = tool.copy()
    if sigma > 0:
        rng = np.random.default_rng(seed)
        out[:, :3] += rng.normal(0.0, sigma, size=out[:, :3].shape)
    return out


# ---------------------------------------------------------------------------
# stage 1: convolutional regressor

def _pair_pool(seqs: list[SequenceArrays]) -> list[tuple[int, int]]:
    """All (seq_idx, start) so that samples (start, start+1) are adjacent."""
    pool = []
    for si, seq in enumerate(seqs):
        pool.extend((si, k) for k in range(len(seq) - 1))
    if not pool:
        raise ValueError("no contiguous sample pairs available")
    return pool


def _eval_mre(model: FeatureCnn, seqs: list[SequenceArrays], batch: int,
              delta: float) -> float:
    """Batch-averaged mean relative error over whole sequences, eval mode."""
    stf = np.concatenate([s.stf for s in seqs])
    force = np.concatenate([s.force for s in seqs])
    values = []
    for lo in range(0, len(stf), batch):
        y_hat, _ = model.forward(stf[lo:lo + batch])
        values.append(mre(force[lo:lo + batch], y_hat, delta))
    return float(np.mean(values))


def train_cnn(train_seqs: list[SequenceArrays], test_seqs: list[SequenceArrays],
              config: TrainConfig) -> tuple[FeatureCnn, list[dict]]:
    """Optimize the convolutional stage; returns (model, log rows).

    Batches hold ``batch_size//2`` randomly drawn contiguous pairs.
    Logged every ``log_interval`` iterations: composite/rms/gdl loss;
    every ``mre_interval``: batch-averaged MRE on train and test.
    """
    if not train_seqs or all(len(s) == 0 for s in train_seqs):
        raise ValueError("train_cnn: empty dataset")
    model = FeatureCnn(CnnConfig(input_size=config.input_size,
                                 fc_widths=(config.feature_dim, config.feature_dim),
                                 dropout=CNN_STAGE_DEFAULTS["dropout"]),
                       seed=config.seed)
    state = RmsPropState.for_params(model.params)
    rng = np.random.default_rng(config.seed)
    loss_cfg = config.loss_config()
    pool = _pair_pool(train_seqs)
    n_pairs = max(1, config.batch_size // 2)
    segments = [(2 * k, 2 * k + 2) for k in range(n_pairs)]
    log: list[dict] = []

    for it in range(config.iterations):
        picks = rng.integers(0, len(pool), size=n_pairs)
        x = np.empty((2 * n_pairs, config.input_size, config.input_size, 3))
        y = np.empty((2 * n_pairs, 6))
        for b, pk in enumerate(picks):
            si, k = pool[pk]
            x[2 * b:2 * b + 2] = train_seqs[si].stf[k:k + 2]
            y[2 * b:2 * b + 2] = train_seqs[si].force[k:k + 2]
        y_hat, cache = model.forward(x, train=True, rng=rng)
        value, grad, v_rmse, v_gdl = loss_composite(y, y_hat, loss_cfg, segments=segments)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at iteration {it}")
        model.params.zero_grads()
        model.backward(grad, cache)
        rmsprop_step(model.params, state, config.learning_rate,
                     config.rmsprop_beta, config.rmsprop_eps)
        if it % config.log_interval == 0 or it == config.iterations - 1:
            row = {"iteration": it, "loss": value, "loss_rmse": v_rmse,
                   "loss_gdl": v_gdl, "mre_train": "", "mre_test": ""}
            if it % config.mre_interval == 0 or it == config.iterations - 1:
                row["mre_train"] = _eval_mre(model, train_seqs, config.batch_size,
                                             config.mre_delta)
                if test_seqs:
                    row["mre_test"] = _eval_mre(model, test_seqs, config.batch_size,
                                                config.mre_delta)
            log.append(row)
    return model, log


def extract_features(seqs: list[SequenceArrays], model: FeatureCnn,
                     batch: int = 256) -> None:
    """Fill ``seq.features`` with tanh-bounded vectors, order preserved."""
    for seq in seqs:
        if seq.stf is None:
            raise ValueError(f"{seq.id}: no space-time stacks to extract from")
        chunks = [model.features(seq.stf[lo:lo + batch])
                  for lo in range(0, len(seq), batch)]
        seq.features = np.concatenate(chunks) if chunks else np.zeros((0, model.config.feature_dim))


# ---------------------------------------------------------------------------
# stage 2: recurrent stack

def _window_pool(seqs: list[SequenceArrays], t_steps: int) -> list[tuple[int, int]]:
    pool = []
    for si, seq in enumerate(seqs):
        if len(seq) < t_steps:
            raise ValueError(f"sequence {seq.id} shorter than {t_steps} steps")
        pool.extend((si, start) for start in range(len(seq) - t_steps + 1))
    return pool


def train_lstm(train_seqs: list[SequenceArrays], test_seqs: list[SequenceArrays],
               config: TrainConfig) -> tuple[LstmStack, list[dict]]:
    """Optimize the recurrent stage on randomly positioned windows.

    Each batch holds ``batch_size`` windows of ``time_steps`` contiguous
    samples; hidden/cell states are zeroed at every window start.  The
    loss covers all in-window steps by default (the difference term
    needs consecutive outputs); set ``loss_all_steps=False`` for a
    final-step-only variant.
    """
    if not train_seqs:
        raise ValueError("train_lstm: empty dataset")
    t_steps = config.time_steps
    inputs_train = [s.case_input(config.case) for s in train_seqs]
    model = LstmStack(LstmConfig(input_dim=config.input_dim(),
                                 cell_sizes=config.cells,
                                 dropout=config.dropout,
                                 peepholes=config.peepholes),
                      seed=config.seed)
    state = RmsPropState.for_params(model.params)
    rng = np.random.default_rng(config.seed)
    loss_cfg = config.loss_config()
    pool = _window_pool(train_seqs, t_steps)
    m = config.batch_size
    segments = [(b * t_steps, (b + 1) * t_steps) for b in range(m)]
    log: list[dict] = []

    for it in range(config.iterations):
        picks = rng.integers(0, len(pool), size=m)
        phi = np.empty((t_steps, m, config.input_dim()))
        y = np.empty((t_steps, m, 6))
        for b, pk in enumerate(picks):
            si, start = pool[pk]
            phi[:, b, :] = inputs_train[si][start:start + t_steps]
            y[:, b, :] = train_seqs[si].force[start:start + t_steps]
        out, cache = model.forward(phi, train=True, rng=rng)
        if config.loss_all_steps:
            y_flat = y.transpose(1, 0, 2).reshape(m * t_steps, 6)
            out_flat = out.transpose(1, 0, 2).reshape(m * t_steps, 6)
            value, grad, v_rmse, v_gdl = loss_composite(y_flat, out_flat, loss_cfg,
                                                        segments=segments)
            d_out = grad.reshape(m, t_steps, 6).transpose(1, 0, 2)
        else:
            value, grad, v_rmse, v_gdl = loss_composite(y[-1], out[-1], loss_cfg,
                                                        segments=[])
            d_out = np.zeros_like(out)
            d_out[-1] = grad
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at iteration {it}")
        model.params.zero_grads()
        model.backward(d_out, cache)
        rmsprop_step(model.params, state, config.learning_rate,
                     config.rmsprop_beta, config.rmsprop_eps)
        if it % config.log_interval == 0 or it == config.iterations - 1:
            row = {"iteration": it, "loss": value, "loss_rmse": v_rmse,
                   "loss_gdl": v_gdl, "mre_train": "", "mre_test": ""}
            if it % config.mre_interval == 0 or it == config.iterations - 1:
                row["mre_train"] = _lstm_mre(model, train_seqs, config)
                if test_seqs:
                    row["mre_test"] = _lstm_mre(model, test_seqs, config)
            log.append(row)
    return model, log


def predict_sequence(model: LstmStack, phi_seq: np.ndarray, t_steps: int) -> np.ndarray:
    """Sliding-window estimates for one sequence.

    Returns (L - t_steps + 1, 6): the estimate for instant i (i >=
    t_steps-1) is the final-step output of the window ending at i,
    matching the training regime (states zeroed per window).
    """
    phi_seq = np.asarray(phi_seq, dtype=float)
    n = len(phi_seq)
    if n < t_steps:
        raise ValueError(f"sequence length {n} shorter than window {t_steps}")
    n_windows = n - t_steps + 1
    phi = np.empty((t_steps, n_windows, phi_seq.shape[1]))
    for k in range(n_windows):
        phi[:, k, :] = phi_seq[k:k + t_steps]
    out, _ = model.forward(phi)
    return out[-1]


def _lstm_mre(model: LstmStack, seqs: list[SequenceArrays], config: TrainConfig) -> float:
    values = []
    for seq in seqs:
        est = predict_sequence(model, seq.case_input(config.case), config.time_steps)
        ref = seq.force[config.time_steps - 1:]
        for lo in range(0, len(est), config.batch_size):
            values.append(mre(ref[lo:lo + config.batch_size],
                              est[lo:lo + config.batch_size], config.mre_delta))
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# logs

LOG_HEADER = ["iteration", "loss", "loss_rmse", "loss_gdl", "mre_train", "mre_test"]


def write_training_log(path: Path, rows: list[dict]) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=LOG_HEADER)
        if new:
            wr.writeheader()
        for row in rows:
            wr.writerow(row)
