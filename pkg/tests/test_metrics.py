"""Evaluation metrics and summary rows."""

import numpy as np
import pytest

from vbforce.metrics import (MetricReport, evaluate, l2_per_component, mre, pcc,
                             rmse_metric, summarize)

rng = np.random.default_rng(0)


# -- rmse ---------------------------------------------------------------------

def test_rmse_exact_match_zero():
    y = rng.uniform(-5, 5, (20, 6))
    assert np.allclose(rmse_metric(y, y), 0.0)


def test_rmse_constant_error_one():
    y = rng.uniform(-5, 5, (20, 6))
    assert np.allclose(rmse_metric(y, y + 1.0), 1.0)


def test_rmse_hand_case():
    y = np.zeros((2, 6))
    y_hat = np.zeros((2, 6))
    y_hat[0, 0], y_hat[1, 0] = 3.0, 4.0
    out = rmse_metric(y, y_hat)
    assert out[0] == pytest.approx(np.sqrt(12.5))
    assert np.allclose(out[1:], 0.0)


def test_rmse_constant_offset_equals_abs_offset():
    y = rng.uniform(-5, 5, (30, 6))
    c = np.array([0.5, -1.0, 2.0, -0.25, 3.0, -4.0])
    assert np.allclose(rmse_metric(y, y + c), np.abs(c))


# -- pcc ----------------------------------------------------------------------

def test_pcc_identity():
    y = rng.uniform(-5, 5, (30, 6))
    assert np.allclose(pcc(y, y), 1.0)


def test_pcc_negation():
    y = rng.standard_normal((30, 6))
    y = y - y.mean(axis=0)
    assert np.allclose(pcc(y, -y), -1.0)


def test_pcc_affine_invariance():
    y = rng.uniform(-5, 5, (30, 6))
    assert np.allclose(pcc(y, 2.0 * y + 3.0), 1.0)
    noisy = y + 0.3 * rng.standard_normal(y.shape)
    a = pcc(y, noisy)
    b = pcc(y, 7.0 * noisy - 2.0)
    assert np.allclose(a, b, atol=1e-12)


def test_pcc_constant_signal_undefined_marker():
    y = rng.uniform(-5, 5, (30, 6))
    y_hat = y.copy()
    y_hat[:, 2] = 1.5
    out = pcc(y, y_hat)
    assert np.isnan(out[2]) and np.isfinite(out[[0, 1, 3, 4, 5]]).all()


# -- mre ----------------------------------------------------------------------

def test_mre_exact_match_zero():
    y = rng.uniform(-5, 5, (8, 6))
    assert mre(y, y, 1e-3) == 0.0


def test_mre_hand_cases_delta_1e3():
    # one sample, one relevant component with |error| = 1e-3
    y = np.zeros((1, 1))
    y_hat = np.array([[1e-3]])
    assert mre(y, y_hat, 1e-3) == pytest.approx(1.0)
    # two samples, two components, all |error| = 1e-3
    y = np.zeros((2, 2))
    y_hat = np.full((2, 2), 1e-3)
    assert mre(y, y_hat, 1e-3) == pytest.approx(2.0)


def test_mre_scales_inversely_with_delta():
    y = rng.uniform(-5, 5, (8, 6))
    y_hat = y + rng.uniform(-1, 1, (8, 6))
    assert mre(y, y_hat, 1e-3) == pytest.approx(10.0 * mre(y, y_hat, 1e-2))
    with pytest.raises(ValueError):
        mre(y, y_hat, 0.0)


# -- l2 -----------------------------------------------------------------------

def test_l2_exact_match_zero():
    y = rng.uniform(-5, 5, (9, 6))
    assert np.allclose(l2_per_component(y, y), 0.0)


def test_l2_single_sample_vector():
    y = np.zeros((1, 6))
    y_hat = np.array([[3.0, 4.0, 0, 0, 0, 0]])
    assert np.allclose(l2_per_component(y, y_hat), [3, 4, 0, 0, 0, 0])


def test_l2_two_samples_hand_case():
    y = np.zeros((2, 6))
    y_hat = np.zeros((2, 6))
    y_hat[:, 3] = 1.0
    assert l2_per_component(y, y_hat)[3] == pytest.approx(np.sqrt(2.0))


# -- summarize -----------------------------------------------------------------

def test_summarize_constant():
    mx, mn, mean = summarize(np.full(6, 0.4))
    assert mx == pytest.approx(0.4)
    assert mn == pytest.approx(0.4)
    assert mean == pytest.approx(0.4)


def test_summarize_reference_row():
    # published row: max 0.8957, min 0.2674, mean 0.5466
    vals = np.array([0.5864, 0.4537, 0.8957, 0.4246, 0.6520, 0.2674])
    mx, mn, mean = summarize(vals)
    assert mx == pytest.approx(0.8957)
    assert mn == pytest.approx(0.2674)
    assert mean == pytest.approx(0.5466, abs=5e-5)


def test_summarize_mean_matches_bruteforce_and_skips_undefined():
    vals = rng.uniform(-1, 1, 6)
    mx, mn, mean = summarize(vals)
    assert mean == pytest.approx(sum(float(v) for v in vals) / 6.0)
    vals[4] = np.nan
    mx, mn, mean = summarize(vals)
    keep = [v for i, v in enumerate(vals) if i != 4]
    assert mean == pytest.approx(sum(keep) / 5.0)


# -- report object -------------------------------------------------------------

def test_evaluate_report_and_physical_conversion():
    y = rng.uniform(-5, 5, (40, 6))
    y_hat = y + rng.uniform(-0.5, 0.5, (40, 6))
    rep = evaluate(y, y_hat)
    assert isinstance(rep, MetricReport)
    scale = np.array([1.25, 2.0, 0.5, 0.1, 4.0, 3.0])
    phys = rmse_metric(y * scale, y_hat * scale)
    assert np.abs(rep.rmse * scale - phys).max() < 1e-12
    assert rep.n_undefined() == 0
    assert np.isfinite(rep.mean_pcc())
