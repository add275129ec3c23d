"""Smoke tests for the fwicert python module against numpy references."""

import numpy as np
import pytest

import fwicert


def reference_conv2d(x, k, stride=1, padding=0):
    if padding:
        x = np.pad(x, padding)
    kh, kw = k.shape
    oh = (x.shape[0] - kh) // stride + 1
    ow = (x.shape[1] - kw) // stride + 1
    out = np.zeros((oh, ow))
    for i in range(oh):
        for j in range(ow):
            out[i, j] = np.sum(x[i * stride : i * stride + kh, j * stride : j * stride + kw] * k)
    return out


def test_conv_against_numpy_reference():
    rng = np.random.default_rng(0)
    for stride, padding in [(1, 0), (2, 0), (1, 1), (2, 1)]:
        x = rng.standard_normal((6, 6))
        k = rng.standard_normal((3, 3))
        g = fwicert.ConvGeometry(6, 6, 1, 1, 3, 3, stride, padding)
        got = fwicert.conv2d_direct(x, k, g)[0]
        want = reference_conv2d(x, k, stride, padding)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_operator_matrix_matches_direct_conv():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 4))
    k = rng.standard_normal((2, 2))
    g = fwicert.ConvGeometry(4, 4, 1, 1, 2, 2, 2, 0)
    op = fwicert.build_conv_operator(k, g)
    assert op.shape == (4, 16)
    np.testing.assert_allclose(op @ x.ravel(), fwicert.conv2d_direct(x, k, g).ravel(),
                               atol=1e-12)
    opt = fwicert.build_transposed_conv_operator(k, g)
    np.testing.assert_allclose(opt, op.T)


def test_matrix_norms_match_numpy():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((12, 9))
    assert fwicert.matrix_norm(a, "frobenius") == pytest.approx(np.linalg.norm(a, "fro"), rel=1e-12)
    assert fwicert.matrix_norm(a, "spectral") == pytest.approx(np.linalg.norm(a, 2), rel=1e-6)


def test_ricker_formula():
    f, dt, nt, t0 = 15.0, 1e-3, 256, 0.1
    r = fwicert.ricker_wavelet(f, dt, nt, t0)
    t = np.arange(nt) * dt - t0
    a = (np.pi * f * t) ** 2
    np.testing.assert_allclose(r, (1 - 2 * a) * np.exp(-a), atol=1e-14)


def test_simulate_shot_runs_and_records():
    v = np.full((32, 32), 2000.0)
    dt = 0.5 * 10.0 / 2000.0
    rec = fwicert.simulate_shot(v, 10.0, 10.0, 16, 16, 15.0, dt, 120)
    assert rec.shape == (120, 32)
    assert np.isfinite(rec).all()
    assert np.abs(rec).max() > 0


def test_velocity_map_bounds_and_determinism():
    a = fwicert.synthesize_velocity_map(32, 32, faults=2, seed=5)
    b = fwicert.synthesize_velocity_map(32, 32, faults=2, seed=5)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 1500.0 and a.max() <= 4500.0


def test_add_noise_snr_power():
    rng = np.random.default_rng(3)
    s = rng.standard_normal(100000)
    noisy = fwicert.add_noise_snr(s, "10", seed=4)
    realized = 10 * np.log10(np.mean(s**2) / np.mean((noisy - s) ** 2))
    assert realized == pytest.approx(10.0, abs=0.1)
    np.testing.assert_array_equal(fwicert.add_noise_snr(s, "inf", seed=4), s)


def test_ssim_identity_and_symmetry():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, (16, 16))
    y = rng.uniform(0, 1, (16, 16))
    assert fwicert.ssim(x, x)[0] == pytest.approx(1.0, abs=1e-12)
    assert fwicert.ssim(x, y)[1] == fwicert.ssim(y, x)[1]


def test_generalization_bound_hand_value():
    bound, term1, term2 = fwicert.generalization_bound(
        delta=0.1, epsilon=0.05, eta=0.01, lipschitz=1.0, max_train_loss=1.0,
        n_train=100, cover_count=4, norm_product=2.0)
    assert term1 == pytest.approx(0.36, rel=1e-12)
    assert bound == pytest.approx(0.65225, abs=1e-5)


def test_rb_bounds():
    assert fwicert.rb_mae_bound(12.0, 0.1) == pytest.approx(1.2)
    stated, solved, bounded = fwicert.rb_mse_bound(1.2, 0.3, 9, 0.5, 2.0)
    assert stated == pytest.approx(0.44)
    assert solved == pytest.approx(0.25)
    assert bounded


def test_covering_number_line():
    pts = [np.array([float(i)]) for i in range(8)]
    count, centers = fwicert.greedy_covering_number(pts, 1.0)
    assert count >= 3
    for p in pts:
        assert min(abs(p[0] - pts[c][0]) for c in centers) <= 1.0


def test_errors_are_python_exceptions():
    with pytest.raises(fwicert.FwicertError):
        fwicert.ricker_wavelet(15.0, 0.1, 10, 0.0)  # Nyquist violation
    with pytest.raises(fwicert.FwicertError):
        fwicert.compute_loss(np.zeros(3), np.zeros(4), "mae")
