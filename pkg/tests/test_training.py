"""Optimizer and the two training stages."""

import numpy as np
import pytest

from vbforce.formats import write_checkpoint
from vbforce.metrics import pcc
from vbforce.nnet import ParamStore
from vbforce.training import (RmsPropState, SequenceArrays, TrainConfig,
                              add_tool_noise, config_from_dict, extract_features,
                              parse_config, predict_sequence, rmsprop_step,
                              train_cnn, train_lstm)


# -- rmsprop ------------------------------------------------------------------

def make_store(value):
    store = ParamStore()
    store.add("w", np.array([float(value)]))
    return store


def test_rmsprop_zero_gradient_no_change():
    store = make_store(1.25)
    state = RmsPropState.for_params(store)
    assert rmsprop_step(store, state, lr=0.1)
    assert store["w"][0] == 1.25


def test_rmsprop_hand_case():
    store = make_store(0.0)
    store.grads["w"][0] = 1.0
    state = RmsPropState.for_params(store)
    rmsprop_step(store, state, lr=0.1, beta=0.9, eps=1e-8)
    assert state.s["w"][0] == pytest.approx(0.1)
    assert store["w"][0] == pytest.approx(-0.1 / np.sqrt(0.1 + 1e-8))


def test_rmsprop_deterministic_repeat():
    outs = []
    for _ in range(2):
        store = make_store(0.5)
        state = RmsPropState.for_params(store)
        store.grads["w"][0] = -0.3
        rmsprop_step(store, state, lr=0.05)
        store.grads["w"][0] = 0.8
        rmsprop_step(store, state, lr=0.05)
        outs.append(store["w"][0])
    assert outs[0] == outs[1]


def test_rmsprop_skips_nonfinite_and_state_nonnegative():
    store = make_store(1.0)
    state = RmsPropState.for_params(store)
    store.grads["w"][0] = np.nan
    assert not rmsprop_step(store, state, lr=0.1)
    assert state.skipped == 1 and store["w"][0] == 1.0
    rng = np.random.default_rng(0)
    for _ in range(50):
        store.grads["w"][0] = rng.standard_normal()
        rmsprop_step(store, state, lr=0.01)
        assert state.s["w"][0] >= 0.0


# -- config -------------------------------------------------------------------

def test_parse_config_round_trip(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nstage=lstm\ncase=I\nloss=B\nlr=0.01\n"
                    "batch=4\niters=10\nT=8\nseed=3\nfeature_dim=16\n"
                    "dropout1=0.5\ndropout2=0.1\ncausal=1\ndelta=5\n")
    cfg = config_from_dict(parse_config(path))
    assert cfg.case == "I" and cfg.loss == "B" and cfg.alpha == 1.0
    assert cfg.learning_rate == 0.01 and cfg.batch_size == 4
    assert cfg.time_steps == 8 and cfg.dropout == (0.5, 0.1)
    assert cfg.causal and cfg.delta == 5


def test_parse_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("bogus=1\n")
    with pytest.raises(ValueError):
        parse_config(path)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(stage="gan")
    with pytest.raises(ValueError):
        TrainConfig(case="IV")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    assert TrainConfig(loss="A").alpha == 0.75
    assert TrainConfig(loss="B").alpha == 1.0


# -- dataset fixtures ---------------------------------------------------------

def toy_cnn_sequences(n_frames=4, copies=24, size=8, seed=0):
    """A few distinct stacks repeated: a memorization task."""
    rng = np.random.default_rng(seed)
    base_x = rng.uniform(-1, 1, (n_frames, size, size, 3))
    base_y = rng.uniform(-3, 3, (n_frames, 6))
    order = rng.integers(0, n_frames, size=n_frames * copies)
    stf = base_x[order]
    force = base_y[order]
    seq = SequenceArrays(id="toy", task="pushing",
                         tool=np.zeros((len(order), 4)), force=force,
                         indices=np.arange(len(order)), stf=stf)
    return [seq]


def sine_sequence(n=400, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / 50.0
    tool = np.zeros((n, 4))
    tool[:, 0] = np.sin(2 * np.pi * 0.7 * t)
    tool[:, 1] = np.cos(2 * np.pi * 0.4 * t)
    tool[:, 2] = np.sin(2 * np.pi * 0.9 * t + 1.0)
    tool[:, 3] = (np.sin(2 * np.pi * 0.2 * t) > 0).astype(float)
    force = np.zeros((n, 6))
    for j in range(6):
        force[:, j] = np.sin(2 * np.pi * 0.7 * t + j * 0.5) * (1 + 0.2 * j)
    force += 0.01 * rng.standard_normal(force.shape)
    return SequenceArrays(id="sine", task="pushing", tool=tool, force=force,
                          indices=np.arange(n))


# -- cnn stage ----------------------------------------------------------------

def cnn_config(**kw):
    base = dict(stage="cnn", case="III", loss="A", learning_rate=2e-3,
                batch_size=8, iterations=0, input_size=8, feature_dim=12,
                seed=1, log_interval=50, mre_interval=200)
    base.update(kw)
    return TrainConfig(**base)


def test_train_cnn_zero_iterations_keeps_init():
    from vbforce.nnet import CnnConfig, FeatureCnn

    seqs = toy_cnn_sequences()
    model, log = train_cnn(seqs, [], cnn_config(iterations=0))
    fresh = FeatureCnn(CnnConfig(input_size=8, fc_widths=(12, 12)), seed=1)
    for name in fresh.params.names():
        assert np.array_equal(model.params[name], fresh.params[name])


def test_train_cnn_memorizes_small_set():
    seqs = toy_cnn_sequences()
    cfg = cnn_config(iterations=2000, mre_interval=2000, feature_dim=64,
                     learning_rate=3e-3, batch_size=16)
    model, log = train_cnn(seqs, [], cfg)
    first = next(r["mre_train"] for r in log if r["mre_train"] != "")
    last = [r["mre_train"] for r in log if r["mre_train"] != ""][-1]
    assert last < first / 10.0


def test_train_cnn_deterministic_checkpoint_bytes(tmp_path):
    blobs = []
    for run in range(2):
        model, _ = train_cnn(toy_cnn_sequences(), [], cnn_config(iterations=40))
        path = tmp_path / f"m{run}.vbfp"
        write_checkpoint(path, model.params.values)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_train_cnn_empty_dataset_rejected():
    with pytest.raises(ValueError):
        train_cnn([], [], cnn_config())


# -- feature extraction -------------------------------------------------------

def test_extract_features_length_range_determinism():
    seqs = toy_cnn_sequences()
    model, _ = train_cnn(seqs, [], cnn_config(iterations=20))
    extract_features(seqs, model)
    feats = seqs[0].features
    assert feats.shape == (len(seqs[0]), 12)
    assert np.all(np.abs(feats) < 1.0)
    again = model.features(seqs[0].stf)
    assert np.array_equal(feats, again)


# -- lstm stage ---------------------------------------------------------------

def lstm_config(**kw):
    base = dict(stage="lstm", case="I", loss="A", learning_rate=0.0025,
                batch_size=16, iterations=0, time_steps=8, cells=(24, 24),
                dropout=(0.0, 0.0), feature_dim=12, seed=2,
                log_interval=100, mre_interval=1000)
    base.update(kw)
    return TrainConfig(**base)


def test_case_input_widths():
    seq = sine_sequence()
    seq.features = np.zeros((len(seq), 12))
    assert seq.case_input("I").shape[1] == 4
    assert seq.case_input("II").shape[1] == 12
    assert seq.case_input("III").shape[1] == 16


def test_train_lstm_sine_memorization_pcc():
    seq = sine_sequence()
    cfg = lstm_config(iterations=2000)
    model, _ = train_lstm([seq], [], cfg)
    est = predict_sequence(model, seq.case_input("I"), cfg.time_steps)
    truth = seq.force[cfg.time_steps - 1:]
    coeffs = pcc(truth, est)
    assert np.nanmin(coeffs) > 0.95


def test_train_lstm_rejects_short_sequence():
    seq = sine_sequence(n=6)
    with pytest.raises(ValueError):
        train_lstm([seq], [], lstm_config(iterations=1, time_steps=8))


def test_predict_sequence_shape():
    seq = sine_sequence(n=50)
    cfg = lstm_config(iterations=1)
    model, _ = train_lstm([seq], [], cfg)
    est = predict_sequence(model, seq.case_input("I"), cfg.time_steps)
    assert est.shape == (50 - cfg.time_steps + 1, 6)


# -- tool noise ---------------------------------------------------------------

def test_add_tool_noise_sigma_zero_identity():
    tool = np.random.default_rng(1).uniform(-1, 1, (30, 4))
    out = add_tool_noise(tool, 0.0, seed=5)
    assert np.array_equal(out, tool) and out is not tool


def test_add_tool_noise_zero_mean_statistics():
    tool = np.zeros((100_000 // 3 + 1, 4))
    sigma = 0.3
    out = add_tool_noise(tool, sigma, seed=6)
    noise = out[:, :3].reshape(-1)
    n = noise.size
    assert abs(noise.mean()) < 3 * sigma / np.sqrt(n)


def test_add_tool_noise_grasper_untouched():
    rng = np.random.default_rng(7)
    tool = rng.uniform(-1, 1, (50, 4))
    tool[:, 3] = rng.integers(0, 2, 50)
    for sigma in (0.0, 0.1, 2.0):
        out = add_tool_noise(tool, sigma, seed=8)
        assert np.array_equal(out[:, 3], tool[:, 3])
    with pytest.raises(ValueError):
        add_tool_noise(tool, -0.1, seed=0)


def test_add_tool_noise_deterministic_per_seed():
    tool = np.zeros((20, 4))
    a = add_tool_noise(tool, 0.5, seed=9)
    b = add_tool_noise(tool, 0.5, seed=9)
    c = add_tool_noise(tool, 0.5, seed=10)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
