"""Outage probability and ergodic capacity of a fixed (f, psi).

The received amplitude ``|xi1 + mu xi2|`` is modelled as Rice distributed:
``xi1 = h^T diag(psi) H f`` is approximately complex Gaussian by the CLT and
``xi2 = g^T f`` is exactly complex Gaussian, so the sum is ``CN(m, sigma2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln, ndtr

from .beamform import ScenarioKind, check_scenario
from .channel import ChannelStatistics

# Poisson weights beyond mean +/- WINDOW*sqrt(mean) are below 1e-18
WINDOW = 9.0
# above this noncentrality the Rice law is Gaussian to ~1e-4 and the series gets long
ASYMPTOTIC_LAMBDA = 5e5
TAIL = 1e-12
MIN_NODES = 512
GL_NODES = 16


@dataclass(frozen=True)
class XiMoments:
    mu1: complex
    sigma1_2: float
    mu2: complex
    sigma2_2: float


@dataclass(frozen=True)
class RiceParams:
    m: complex
    sigma2: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.sigma2 >= -1e-12:
            raise ValueError(f"sigma2 must be non-negative, got {self.sigma2}")
        object.__setattr__(self, "sigma2", max(float(self.sigma2), 0.0))

    @property
    def mean_snr(self) -> float:
        return abs(self.m) ** 2 + self.sigma2


def _form(R, x) -> float:
    return float(np.real(np.vdot(x, R @ x)))


def cross_term_moments(stats: ChannelStatistics, f, psi) -> tuple[float, float, float]:
    """Closed forms of E|hbar^T Phi Ht f|^2, E|ht^T Phi Hbar f|^2 and E|ht^T Phi Ht f|^2."""
    f = np.asarray(f, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    r_bt = _form(stats.R_BT, f)
    los_tx = _form(stats.R_RR, psi * stats.h_bar) * r_bt
    los_rx = _form(stats.R_RT, psi * (stats.H_bar @ f))
    scatter = _form(stats.R_RR * stats.R_RT, psi) * r_bt
    return los_tx, los_rx, scatter


def xi_moments(stats: ChannelStatistics, f, psi) -> XiMoments:
    f = np.asarray(f, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if f.shape != (stats.M,) or psi.shape != (stats.N,):
        raise ValueError("dimension mismatch")
    kl, kn = stats.kappa_l, stats.kappa_n
    los_tx, los_rx, scatter = cross_term_moments(stats, f, psi)
    mu1 = kl ** 2 * complex(stats.h_bar @ (psi * (stats.H_bar @ f)))
    sigma1_2 = kl ** 2 * kn ** 2 * (los_tx + los_rx) + kn ** 4 * scatter
    mu2 = stats.kappa_l_direct * complex(stats.g_bar @ f)
    sigma2_2 = stats.kappa_n_direct ** 2 * _form(stats.R_BT, f)
    return XiMoments(mu1=mu1, sigma1_2=sigma1_2, mu2=mu2, sigma2_2=sigma2_2)


def rice_params(stats: ChannelStatistics, solution, scenario) -> RiceParams:
    """(m, sigma2) of ``xi1 + mu xi2``; closed-form scenarios use their scalar formulas."""
    kind = check_scenario(stats, scenario)
    N, M, mu = stats.N, stats.M, stats.mu
    kl, kn = stats.kappa_l, stats.kappa_n
    if kind is ScenarioKind.R2_IID:
        m = N * math.sqrt(M) * kl ** 2
        sigma2 = (M + 1) * N * kl ** 2 * kn ** 2 + N * kn ** 4 + mu ** 2
    elif kind is ScenarioKind.R3_IID:
        m, sigma2 = 0.0, mu ** 2 + N
    elif kind is ScenarioKind.R3_CORR:
        lam = np.linalg.eigvalsh(stats.R_BT)[-1]
        ones = np.ones(N)
        m, sigma2 = 0.0, float(lam * (mu ** 2 + ones @ (stats.R_RR * stats.R_RT) @ ones))
    elif kind is ScenarioKind.R1_IID_LB:
        v = solution.f
        en_v = abs(stats.E[0] @ v)
        gv = complex(stats.g_bar @ v)
        # psi co-phases the cascaded sum with g_bar^T v, so both means share its phase
        phase = gv / abs(gv) if abs(gv) > 1e-12 else 1.0
        m = (N * kl ** 2 * en_v + mu * kl * abs(gv)) * phase
        sigma2 = N * kn ** 2 * (1 + kl ** 2 * en_v ** 2) + mu ** 2 * kn ** 2
    else:
        mom = xi_moments(stats, solution.f, solution.psi)
        m = mom.mu1 + mu * mom.mu2
        sigma2 = mom.sigma1_2 + mu ** 2 * mom.sigma2_2
    return RiceParams(m=complex(m), sigma2=float(sigma2), gamma=stats.gamma)


def _k_window(lam: float) -> np.ndarray:
    spread = WINDOW * math.sqrt(lam)
    lo = max(0, math.floor(lam - spread - 10))
    hi = math.ceil(lam + spread + 40)
    return np.arange(lo, hi + 1, dtype=float)


def _marcum_both(a: float, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Q1(a, b), 1 - Q1(a, b))``, each summed directly.

    Uses the Poisson-mixture form of the Bessel series:
    ``Q1(a, b) = sum_k Pois(k; a^2/2) * Gamma_upper(k + 1, b^2/2)``.
    """
    b = np.asarray(b, dtype=float)
    lam = a * a / 2
    x = b * b / 2
    if lam > ASYMPTOTIC_LAMBDA:
        # amplitude ~ N(a + 1/(2a), 1) in normalized units
        z = b - a - 1 / (2 * a)
        return ndtr(-z), ndtr(z)
    k = _k_window(lam)
    if lam == 0:
        logw = np.where(k == 0, 0.0, -np.inf)
    else:
        logw = -lam + k * math.log(lam) - gammaln(k + 1)
    w = np.exp(logw)
    xs = x.reshape(-1, 1)
    upper = (w * gammaincc(k + 1, xs)).sum(axis=1).reshape(b.shape)
    lower = (w * gammainc(k + 1, xs)).sum(axis=1).reshape(b.shape)
    return np.clip(upper, 0.0, 1.0), np.clip(lower, 0.0, 1.0)


def _check_args(a, b):
    if np.any(np.isnan(a)) or np.any(np.isnan(b)):
        raise ValueError("Marcum Q arguments must not be NaN")
    if np.any(np.asarray(a) < 0) or np.any(np.asarray(b) < 0):
        raise ValueError("Marcum Q arguments must be non-negative")
    if not np.all(np.isfinite(a)):
        raise ValueError("Marcum Q arguments must be finite")


def marcum_q1(a, b):
    """First-order Marcum Q-function ``int_b^inf x exp(-(x^2+a^2)/2) I0(a x) dx``."""
    _check_args(a, b)
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.empty(a_arr.shape)
    for a_val in np.unique(a_arr):
        sel = a_arr == a_val
        upper, lower = _marcum_both(float(a_val), b_arr[sel])
        # pick the directly summed side that is small to avoid cancellation
        out[sel] = np.where(upper <= 0.5, upper, 1.0 - lower)
    out = np.where(np.isinf(b_arr), 0.0, out)
    return float(out) if out.ndim == 0 else out


def rice_cdf(a, b):
    """``1 - Q1(a, b)`` without cancellation for small values."""
    _check_args(a, b)
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.empty(a_arr.shape)
    for a_val in np.unique(a_arr):
        sel = a_arr == a_val
        upper, lower = _marcum_both(float(a_val), b_arr[sel])
        out[sel] = np.where(lower <= 0.5, lower, 1.0 - upper)
    out = np.where(np.isinf(b_arr), 1.0, out)
    return float(out) if out.ndim == 0 else out


def _normalized_args(params: RiceParams):
    scale = math.sqrt(params.sigma2 / 2)
    return abs(params.m) / scale, scale


def outage_probability(params: RiceParams, beta):
    """``P[gamma |xi1 + mu xi2|^2 <= beta]`` under the Rice model."""
    beta_arr = np.asarray(beta, dtype=float)
    if np.any(beta_arr < 0) or np.any(np.isnan(beta_arr)):
        raise ValueError("beta must be non-negative")
    if params.sigma2 == 0:
        out = (abs(params.m) ** 2 * params.gamma <= beta_arr).astype(float)
    else:
        a, scale = _normalized_args(params)
        out = rice_cdf(a, np.sqrt(beta_arr / params.gamma) / scale)
    return float(out) if np.ndim(out) == 0 else np.asarray(out)


def _gauss_legendre(lo: float, hi: float, panels: int, order: int = GL_NODES):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges)[:, None] / 2
    mid = (edges[:-1] + edges[1:])[:, None] / 2
    return (mid + half * x).ravel(), (half * w).ravel()


def ergodic_capacity(params: RiceParams, tail: float = TAIL, min_nodes: int = MIN_NODES,
                     max_truncation: float = 1e12) -> float:
    """``E[log2(1 + SNR)]`` from ``(1/ln2) int_0^inf (1 - P_out(u)) / (1 + u) du``.

    Below ``lo`` the outage is under ``tail`` and the integrand is ``1/(1+u)`` in
    closed form; above ``hi`` it is cut off. Both bounds come from doubling
    searches. The middle is integrated in ``t = ln(1 + u)``, where the integrand
    is just ``1 - P_out``, with Gauss-Legendre panels.
    """
    gamma = params.gamma
    if params.sigma2 == 0:
        return math.log2(1 + gamma * abs(params.m) ** 2)
    mean = gamma * params.mean_snr
    hi = mean
    while marcum_q1(*_u_to_args(params, hi)) > tail:
        hi *= 2
        if hi > max_truncation:
            raise ArithmeticError("ergodic capacity truncation search did not converge")
    lo = mean
    while lo > 1e-300 and outage_probability(params, lo) > tail:
        lo /= 2
    if outage_probability(params, lo) > tail:
        lo = 0.0
    panels = math.ceil(min_nodes / GL_NODES)
    t, w = _gauss_legendre(math.log1p(lo), math.log1p(hi), panels)
    q = marcum_q1(*_u_to_args(params, np.expm1(t)))
    return float((math.log1p(lo) + np.sum(w * q)) / math.log(2))


def _u_to_args(params: RiceParams, u):
    a, scale = _normalized_args(params)
    return a, np.sqrt(np.asarray(u, dtype=float) / params.gamma) / scale
