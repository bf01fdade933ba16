"""Composite loss: values, gradients, identities."""

import math

import numpy as np
import pytest

from vbforce.losses import (LossConfig, loss_composite, loss_gdl, loss_rmse,
                            rho_linear, rho_log)


# -- rho ----------------------------------------------------------------------

def test_rho_log_at_zero():
    v, _ = rho_log(np.array([0.0]), gamma=2.0, epsilon=0.01)
    assert v[0] == pytest.approx(math.log(0.01))


def test_rho_log_gamma_one():
    v, d = rho_log(np.array([1.0]), gamma=1.0, epsilon=0.01)
    assert v[0] == pytest.approx(math.log(1.01))
    assert d[0] == pytest.approx(1.0 / 1.01)


def test_rho_log_derivative_finite_difference():
    h = 1e-7
    for gamma in (1.0, 2.0):
        for x in (0.3, 1.0, 2.5):
            _, d = rho_log(np.array([x]), gamma, 0.01)
            vp, _ = rho_log(np.array([x + h]), gamma, 0.01)
            vm, _ = rho_log(np.array([x - h]), gamma, 0.01)
            assert d[0] == pytest.approx((vp[0] - vm[0]) / (2 * h), rel=1e-5)
    _, d = rho_log(np.array([1.0]), 2.0, 0.01)
    assert d[0] == pytest.approx(2.0 / 1.01)
    with pytest.raises(ValueError):
        rho_log(np.array([-0.1]), 2.0, 0.01)


def test_rho_linear():
    v, d = rho_linear(np.array([0.0, 2.5]))
    assert np.allclose(v, [0.0, 2.5]) and np.allclose(d, 1.0)


# -- rmse term ----------------------------------------------------------------

def test_rmse_zero_at_exact_match():
    y = np.random.default_rng(0).uniform(-2, 2, (5, 6))
    value, grad = loss_rmse(y, y, rho="linear")
    assert value == 0.0 and np.allclose(grad, 0.0)


def test_rmse_single_sample_absolute_error():
    value, _ = loss_rmse(np.array([[2.0]]), np.array([[3.0]]), rho="linear")
    assert value == pytest.approx(1.0)


def test_rmse_log_hand_case():
    # two samples, N=1, per-sample errors {0, 1}, log rho gamma=2 eps=0.01
    y = np.array([[0.0], [0.0]])
    y_hat = np.array([[0.0], [1.0]])
    value, _ = loss_rmse(y, y_hat, rho="log", gamma=2.0, epsilon=0.01)
    assert value == pytest.approx(math.log(0.01) + math.log(1.01))


# -- gdl term -----------------------------------------------------------------

def test_gdl_zero_at_exact_match():
    y = np.random.default_rng(1).uniform(-2, 2, (6, 6))
    value, grad = loss_gdl(y, y, rho="linear")
    assert value == 0.0 and np.allclose(grad, 0.0)


def test_gdl_hand_case():
    y = np.array([[1.0], [2.0]])
    y_hat = np.array([[1.0], [3.0]])
    value, _ = loss_gdl(y, y_hat, rho="linear")
    assert value == pytest.approx(1.0)


def test_gdl_invariant_to_constant_shift():
    rng = np.random.default_rng(2)
    y = rng.uniform(-2, 2, (8, 6))
    y_hat = rng.uniform(-2, 2, (8, 6))
    v1, _ = loss_gdl(y, y_hat, rho="linear")
    v2, _ = loss_gdl(y + 3.7, y_hat + 3.7, rho="linear")
    assert v1 == pytest.approx(v2, abs=1e-12)
    with pytest.raises(ValueError):
        loss_gdl(y, y_hat, segments=[(0, 1)])


def test_gdl_respects_segment_boundaries():
    y = np.zeros((4, 1))
    y_hat = np.array([[0.0], [5.0], [0.0], [0.0]])
    whole, _ = loss_gdl(y, y_hat, rho="linear")
    split, _ = loss_gdl(y, y_hat, rho="linear", segments=[(0, 2), (2, 4)])
    assert whole == pytest.approx(10.0)   # |dY - dYhat| terms: 5, 5, 0
    assert split == pytest.approx(5.0)    # the 1->2 boundary diff is dropped


# -- composite ----------------------------------------------------------------

def test_alpha_one_is_rmse_bitwise():
    rng = np.random.default_rng(3)
    y = rng.uniform(-3, 3, (10, 6))
    y_hat = rng.uniform(-3, 3, (10, 6))
    cfg = LossConfig(alpha=1.0, rho="linear")
    v, g, v_r, v_g = loss_composite(y, y_hat, cfg)
    vr, gr = loss_rmse(y, y_hat, rho="linear")
    assert v == vr and np.array_equal(g, gr) and v_g == 0.0


def test_alpha_three_quarters_combination():
    rng = np.random.default_rng(4)
    y = rng.uniform(-3, 3, (10, 6))
    y_hat = rng.uniform(-3, 3, (10, 6))
    cfg = LossConfig(alpha=0.75, rho="linear")
    v, _, v_r, v_g = loss_composite(y, y_hat, cfg)
    assert v == pytest.approx(0.75 * v_r + 0.25 * v_g)


def test_composite_toy_batch():
    # rmse part: one pair with |error| 1 on the second sample; gdl part 1
    y = np.array([[1.0], [2.0]])
    y_hat = np.array([[1.0], [3.0]])
    cfg = LossConfig(alpha=0.75, rho="linear")
    v, _, v_r, v_g = loss_composite(y, y_hat, cfg)
    assert v_r == pytest.approx(1.0) and v_g == pytest.approx(1.0)
    assert v == pytest.approx(1.0)


def test_log_loss_lower_bound():
    rng = np.random.default_rng(5)
    y = rng.uniform(-3, 3, (30, 6))
    y_hat = rng.uniform(-3, 3, (30, 6))
    v, _ = loss_rmse(y, y_hat, rho="log", gamma=2.0, epsilon=0.01)
    assert v >= 30 * math.log(0.01) - 1e-9
    v_lin, _ = loss_rmse(y, y_hat, rho="linear")
    assert v_lin >= 0.0


# -- gradients ----------------------------------------------------------------

def fd_gradient(fn, y_hat, h=1e-7):
    g = np.zeros_like(y_hat)
    flat = y_hat.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        vp = fn(y_hat)
        flat[i] = orig - h
        vm = fn(y_hat)
        flat[i] = orig
        g.reshape(-1)[i] = (vp - vm) / (2 * h)
    return g


@pytest.mark.parametrize("rho,gamma", [("linear", 1.0), ("log", 2.0), ("log", 1.0)])
def test_rmse_gradient_matches_fd(rho, gamma):
    rng = np.random.default_rng(6)
    y = rng.uniform(-2, 2, (4, 6))
    y_hat = y + rng.uniform(0.2, 1.0, (4, 6)) * rng.choice([-1, 1], (4, 6))
    value, grad = loss_rmse(y, y_hat, rho=rho, gamma=gamma)
    fd = fd_gradient(lambda yh: loss_rmse(y, yh, rho=rho, gamma=gamma)[0], y_hat)
    assert np.abs(grad - fd).max() / max(np.abs(fd).max(), 1e-12) < 1e-6


@pytest.mark.parametrize("rho", ["linear", "log"])
def test_gdl_gradient_matches_fd_away_from_kinks(rho):
    rng = np.random.default_rng(7)
    while True:
        y = rng.uniform(-2, 2, (6, 6))
        y_hat = rng.uniform(-2, 2, (6, 6))
        inner = np.abs(np.diff(y, axis=0)) - np.abs(np.diff(y_hat, axis=0))
        if np.abs(inner).min() > 1e-3 and np.abs(np.diff(y_hat, axis=0)).min() > 1e-3:
            break
    _, grad = loss_gdl(y, y_hat, rho=rho, gamma=1.0)
    fd = fd_gradient(lambda yh: loss_gdl(y, yh, rho=rho, gamma=1.0)[0], y_hat)
    assert np.abs(grad - fd).max() / max(np.abs(fd).max(), 1e-12) < 1e-6


def test_rmse_gradient_zero_at_zero_error():
    y = np.zeros((3, 6))
    _, grad = loss_rmse(y, y.copy(), rho="log", gamma=1.0)
    assert np.allclose(grad, 0.0)
