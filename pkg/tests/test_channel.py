import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamkit.channel import (ChannelRealization, SystemConfig, build_statistics, check_feasible,
                             instantaneous_snr, psd_sqrt, rician_weights, sample_batch,
                             sample_realization, sinc_correlation, steering_vector, ula_positions,
                             upa_positions)

from conftest import random_phases, random_unit


def test_steering_broadside_pair():
    a = steering_vector(math.pi / 2, 2, 0.5, 1.0)
    assert np.allclose(a, np.array([1, -1]) / math.sqrt(2), atol=1e-15)


def test_steering_phase_increment():
    a = steering_vector(math.pi / 4, 8, 0.5, 1.0)
    # independent evaluation: successive ratios are a constant phase step
    step = a[1:] / a[:-1]
    assert np.allclose(step, np.exp(-1j * math.pi * math.sin(math.pi / 4)), atol=1e-14)
    assert abs(a[0] - 1 / math.sqrt(8)) < 1e-15


@given(angle=st.floats(-10, 10), count=st.integers(1, 64), spacing=st.floats(0.01, 3))
def test_steering_unit_norm(angle, count, spacing):
    a = steering_vector(angle, count, spacing, 1.0)
    assert abs(np.linalg.norm(a) - 1) < 1e-12


def test_steering_rejects_bad_input():
    with pytest.raises(ValueError):
        steering_vector(float("nan"), 4, 0.5, 1.0)
    with pytest.raises(ValueError):
        steering_vector(0.0, 0, 0.5, 1.0)
    with pytest.raises(ValueError):
        steering_vector(0.0, 4, -0.5, 1.0)


def test_sinc_half_wavelength_identity():
    R = sinc_correlation(ula_positions(2, 0.5), 1.0)
    assert np.allclose(R, np.eye(2), atol=1e-15)


def test_sinc_quarter_wavelength():
    R = sinc_correlation(ula_positions(2, 0.25), 1.0)
    assert abs(R[0, 1] - 2 / math.pi) < 1e-15


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 40), spacing=st.floats(0.02, 2.0), planar=st.booleans())
def test_sinc_correlation_is_a_correlation_matrix(n, spacing, planar):
    pos = upa_positions(n, spacing) if planar else ula_positions(n, spacing)
    R = sinc_correlation(pos, 1.0)
    assert np.allclose(R, R.T)
    assert np.all(np.diag(R) == 1.0)
    assert np.linalg.eigvalsh(R)[0] > -1e-10


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31))
def test_psd_sqrt_squares_back(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    R = X @ X.conj().T
    S = psd_sqrt(R)
    assert np.allclose(S, S.conj().T)
    assert np.allclose(S @ S, R, atol=1e-9 * np.abs(R).max())


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(ValueError):
        psd_sqrt(np.diag([1.0, -1.0]))


def test_rician_weights():
    kl, kn = rician_weights(2.0)
    assert abs(kl ** 2 + kn ** 2 - 1) < 1e-15
    assert rician_weights(0.0) == (0.0, 1.0)
    assert rician_weights(float("inf")) == (1.0, 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(M=0)
    with pytest.raises(ValueError):
        SystemConfig(K=-1)
    with pytest.raises(ValueError):
        SystemConfig(d0=0)


def test_derived_mu_and_gamma():
    cfg = SystemConfig()
    assert abs(cfg.path_loss_ratio - (100 / 100) ** -1) < 1e-15
    assert abs(cfg.snr_scale - 100.0 ** -2 * 1 / 1e-4) < 1e-12
    std = SystemConfig.standard()
    assert abs(20 * math.log10(std.path_loss_ratio) - 5) < 1e-12 and std.snr_scale == 1.0


def test_los_components_unit_modulus(cfg):
    stats = build_statistics(cfg)
    for x in (stats.g_bar, stats.h_bar, stats.H_bar):
        assert np.allclose(np.abs(x), 1.0)
    assert np.linalg.matrix_rank(stats.H_bar) == 1


def test_infinite_k_realization_is_los(cfg):
    stats = build_statistics(cfg.replace(K=float("inf")))
    real = sample_realization(stats, np.random.default_rng(1))
    assert np.array_equal(real.g, stats.g_bar)
    assert np.array_equal(real.h, stats.h_bar)
    assert np.array_equal(real.H, stats.H_bar)


def test_sample_covariances_monte_carlo(cfg):
    stats = build_statistics(cfg.replace(M=3, N=4))
    g, h, H = sample_batch(stats, np.random.default_rng(7), 200_000)
    kl, kn = stats.kappa_l, stats.kappa_n
    assert np.allclose(g.mean(0), kl * stats.g_bar, atol=0.01)
    cg = (g - kl * stats.g_bar).T @ (g - kl * stats.g_bar).conj() / g.shape[0]
    assert np.allclose(cg, kn ** 2 * stats.R_BT, atol=0.01)
    ch = (h - kl * stats.h_bar).T @ (h - kl * stats.h_bar).conj() / h.shape[0]
    assert np.allclose(ch, kn ** 2 * stats.R_RT, atol=0.01)
    # double-sided model: E[vec(H~) vec(H~)^H] = R_BT kron R_RR (column-major vec)
    Ht = (H - kl * stats.H_bar) / kn
    v = Ht.transpose(0, 2, 1).reshape(H.shape[0], -1)
    cH = v.T @ v.conj() / v.shape[0]
    assert np.allclose(cH, np.kron(stats.R_BT, stats.R_RR), atol=0.02)


def test_instantaneous_snr_direct(cfg):
    rng = np.random.default_rng(3)
    stats = build_statistics(cfg.replace(N=6))
    real = sample_realization(stats, rng)
    f, psi = random_unit(rng, stats.M), random_phases(rng, stats.N)
    brute = sum(real.h[k] * psi[k] * (real.H[k] @ f) for k in range(stats.N)) + 2.0 * (real.g @ f)
    assert abs(instantaneous_snr(real, f, psi, 2.0, 3.0) - 3.0 * abs(brute) ** 2) < 1e-9


def test_instantaneous_snr_feasibility():
    real = ChannelRealization(g=np.ones(2), h=np.ones(3), H=np.ones((3, 2)))
    with pytest.raises(ValueError):
        instantaneous_snr(real, np.array([1.0, 1.0]), np.ones(3), 1.0, 1.0)
    with pytest.raises(ValueError):
        instantaneous_snr(real, np.array([1.0, 0.0]), np.array([1, 0.5, 1]), 1.0, 1.0)
    with pytest.raises(ValueError):
        instantaneous_snr(real, np.array([1.0, 0.0, 0.0]), np.ones(3), 1.0, 1.0)


def test_check_feasible_accepts_valid():
    check_feasible(np.array([0.6, 0.8j]), np.exp(1j * np.arange(4)))
