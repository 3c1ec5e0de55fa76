"""Channel statistics and correlated Rician channel sampling.

The downlink has three links: the direct BS-UE vector ``g`` (M), the RIS-UE
vector ``h`` (N) and the BS-RIS matrix ``H`` (N x M). Each link is the
superposition ``kappa_l * LoS + kappa_n * scattered`` where the scattered part
is spatially correlated through a sinc kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal

import numpy as np

Geometry = Literal["ula", "upa"]

# eigenvalues of a correlation matrix above this are treated as round-off
PSD_TOL = 1e-10


@dataclass(frozen=True)
class SystemConfig:
    """Scalar scenario parameters.

    ``mu`` and ``gamma`` are normally derived from the link distances, but can
    be pinned directly (the numerical experiments fix gamma = 1 and state the
    path-loss ratio in dB).
    """

    M: int = 4
    N: int = 32
    K: float = 2.0
    theta_bd_d: float = 0.0
    theta_bd_i: float = math.pi / 4
    theta_ra: float = math.pi / 4
    theta_rd: float = 8 * math.pi / 5
    d0: float = 100.0
    d1: float = 10.0
    d2: float = 10.0
    alpha: float = 2.0
    wavelength: float = 1.0
    spacing_bs: float = 0.25
    spacing_ris: float = 0.25
    Ps: float = 1.0
    sigma_n2: float = 1e-4
    delta: float = 1e-6
    mu: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not (self.K >= 0):
            raise ValueError(f"K must be non-negative, got {self.K}")
        for name in ("d0", "d1", "d2", "alpha", "wavelength", "spacing_bs",
                     "spacing_ris", "Ps", "sigma_n2", "delta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value}")
        for name in ("theta_bd_d", "theta_bd_i", "theta_ra", "theta_rd"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mu is not None and not (self.mu >= 0):
            raise ValueError("mu must be non-negative")
        if self.gamma is not None and not (self.gamma > 0):
            raise ValueError("gamma must be positive")

    @classmethod
    def standard(cls, **overrides) -> "SystemConfig":
        """M=4, N=32, K=2, mu = 5 dB, gamma = 1."""
        params = dict(mu=10 ** (5 / 20), gamma=1.0)
        params.update(overrides)
        return cls(**params)

    @property
    def path_loss_ratio(self) -> float:
        if self.mu is not None:
            return float(self.mu)
        return (self.d0 / (self.d1 * self.d2)) ** (-self.alpha / 2)

    @property
    def snr_scale(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        return (self.d1 * self.d2) ** (-self.alpha) * self.Ps / self.sigma_n2

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


def steering_vector(angle: float, count: int, spacing: float, wavelength: float) -> np.ndarray:
    """Unit-norm ULA response ``exp(-j 2 pi (d/lambda) k sin(angle)) / sqrt(count)``."""
    if not math.isfinite(angle):
        raise ValueError("angle must be finite")
    if count < 1 or spacing <= 0 or wavelength <= 0:
        raise ValueError("count, spacing and wavelength must be positive")
    k = np.arange(count)
    phase = -2j * np.pi * (spacing / wavelength) * k * math.sin(angle)
    return np.exp(phase) / math.sqrt(count)


def sinc_correlation(positions, wavelength: float) -> np.ndarray:
    """Correlation matrix with entries ``sinc(2 * dist_ij / wavelength)``.

    ``positions`` is an (n,) or (n, dim) array of element coordinates.
    """
    if not (wavelength > 0):
        raise ValueError("wavelength must be positive")
    pos = np.asarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    if pos.shape[0] < 1:
        raise ValueError("need at least one position")
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    R = np.sinc(2 * dist / wavelength)
    R = (R + R.T) / 2
    np.fill_diagonal(R, 1.0)
    w = np.linalg.eigvalsh(R)
    if w[0] < -PSD_TOL:
        # a finite sinc kernel is PSD; anything below round-off is a bug upstream
        raise ArithmeticError(f"sinc correlation not PSD (min eigenvalue {w[0]:.3e})")
    return R


def ula_positions(count: int, spacing: float) -> np.ndarray:
    return spacing * np.arange(count, dtype=float)


def upa_positions(count: int, spacing: float) -> np.ndarray:
    """Row-major square-as-possible grid with ceil(sqrt(count)) columns."""
    cols = math.ceil(math.sqrt(count))
    idx = np.arange(count)
    return spacing * np.stack([idx % cols, idx // cols], axis=1).astype(float)


def psd_sqrt(R: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix; tiny negative eigenvalues clamp to 0."""
    w, U = np.linalg.eigh(R)
    if w[0] < -PSD_TOL * max(1.0, abs(w[-1])):
        raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    S = (U * np.sqrt(w)) @ U.conj().T
    return (S + S.conj().T) / 2


@dataclass(frozen=True)
class ChannelStatistics:
    """Second-order description of the three links.

    LoS components carry unit-modulus entries (``g_bar = sqrt(M) a_M``) so every
    channel coefficient has unit average power. ``direct_los=False`` drops the
    LoS part of the direct link (Rician-Rayleigh), in which case ``g`` is pure
    scattering with unit weight.
    """

    kappa_l: float
    kappa_n: float
    g_bar: np.ndarray
    h_bar: np.ndarray
    H_bar: np.ndarray
    R_BT: np.ndarray
    R_RT: np.ndarray
    R_RR: np.ndarray
    mu: float
    gamma: float
    direct_los: bool = True
    bs_iid: bool = False
    ris_iid: bool = False
    K: float = field(default=float("nan"))

    def __post_init__(self):
        for name in ("R_BT", "R_RT", "R_RR"):
            R = np.asarray(getattr(self, name))
            if R.ndim != 2 or R.shape[0] != R.shape[1]:
                raise ValueError(f"{name} must be square")
            # the second-moment formulas assume real symmetric correlations
            if np.iscomplexobj(R) and np.any(R.imag != 0):
                raise ValueError(f"{name} must be real")
            if not np.allclose(R, R.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")

    @property
    def M(self) -> int:
        return self.g_bar.shape[0]

    @property
    def N(self) -> int:
        return self.h_bar.shape[0]

    @property
    def kappa_l_direct(self) -> float:
        return self.kappa_l if self.direct_los else 0.0

    @property
    def kappa_n_direct(self) -> float:
        return self.kappa_n if self.direct_los else 1.0

    @property
    def E(self) -> np.ndarray:
        """Cascaded LoS matrix ``diag(h_bar) H_bar``."""
        return self.h_bar[:, None] * self.H_bar

    @cached_property
    def sqrt_BT(self) -> np.ndarray:
        return psd_sqrt(self.R_BT)

    @cached_property
    def sqrt_RT(self) -> np.ndarray:
        return psd_sqrt(self.R_RT)

    @cached_property
    def sqrt_RR(self) -> np.ndarray:
        return psd_sqrt(self.R_RR)

    @property
    def is_iid(self) -> bool:
        eye_m, eye_n = np.eye(self.M), np.eye(self.N)
        return (np.allclose(self.R_BT, eye_m, atol=1e-12)
                and np.allclose(self.R_RT, eye_n, atol=1e-12)
                and np.allclose(self.R_RR, eye_n, atol=1e-12))

    def with_direct_los(self, flag: bool) -> "ChannelStatistics":
        return replace(self, direct_los=flag)


@dataclass(frozen=True)
class ChannelRealization:
    g: np.ndarray
    h: np.ndarray
    H: np.ndarray


def rician_weights(K: float) -> tuple[float, float]:
    if math.isinf(K):
        return 1.0, 0.0
    return math.sqrt(K / (1 + K)), math.sqrt(1 / (1 + K))


def build_statistics(cfg: SystemConfig, ris_geometry: Geometry = "ula",
                     bs_iid: bool = False, ris_iid: bool = False,
                     direct_los: bool = True) -> ChannelStatistics:
    M, N = int(cfg.M), int(cfg.N)
    lam = cfg.wavelength
    a_bs_d = steering_vector(cfg.theta_bd_d, M, cfg.spacing_bs, lam)
    a_bs_i = steering_vector(cfg.theta_bd_i, M, cfg.spacing_bs, lam)
    a_ris_a = steering_vector(cfg.theta_ra, N, cfg.spacing_ris, lam)
    a_ris_d = steering_vector(cfg.theta_rd, N, cfg.spacing_ris, lam)

    g_bar = math.sqrt(M) * a_bs_d
    h_bar = math.sqrt(N) * a_ris_d
    H_bar = math.sqrt(N * M) * np.outer(a_ris_a, a_bs_i)

    if bs_iid:
        R_BT = np.eye(M)
    else:
        R_BT = sinc_correlation(ula_positions(M, cfg.spacing_bs), lam)
    if ris_iid:
        R_RIS = np.eye(N)
    else:
        if ris_geometry == "ula":
            pos = ula_positions(N, cfg.spacing_ris)
        elif ris_geometry == "upa":
            pos = upa_positions(N, cfg.spacing_ris)
        else:
            raise ValueError(f"unknown RIS geometry {ris_geometry!r}")
        R_RIS = sinc_correlation(pos, lam)

    kl, kn = rician_weights(cfg.K)
    return ChannelStatistics(
        kappa_l=kl, kappa_n=kn, g_bar=g_bar, h_bar=h_bar, H_bar=H_bar,
        R_BT=R_BT, R_RT=R_RIS, R_RR=R_RIS.copy(),
        mu=cfg.path_loss_ratio, gamma=cfg.snr_scale,
        direct_los=direct_los, bs_iid=bs_iid, ris_iid=ris_iid, K=float(cfg.K),
    )


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries (real and imaginary parts each of variance 1/2)."""
    z = rng.standard_normal((*np.atleast_1d(shape), 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2)


def sample_batch(stats: ChannelStatistics, rng: np.random.Generator, size: int):
    """Draw ``size`` realizations at once; returns arrays g (s,M), h (s,N), H (s,N,M)."""
    M, N = stats.M, stats.N
    w_g = complex_gaussian(rng, (size, M))
    w_h = complex_gaussian(rng, (size, N))
    W = complex_gaussian(rng, (size, N, M))
    g_t = w_g @ stats.sqrt_BT.T
    h_t = w_h @ stats.sqrt_RT.T
    H_t = stats.sqrt_RR @ W @ stats.sqrt_BT
    g = stats.kappa_l_direct * stats.g_bar + stats.kappa_n_direct * g_t
    h = stats.kappa_l * stats.h_bar + stats.kappa_n * h_t
    H = stats.kappa_l * stats.H_bar + stats.kappa_n * H_t
    return g, h, H


def sample_realization(stats: ChannelStatistics, rng: np.random.Generator) -> ChannelRealization:
    g, h, H = sample_batch(stats, rng, 1)
    return ChannelRealization(g=g[0], h=h[0], H=H[0])


def instantaneous_snr(real: ChannelRealization, f, psi, mu: float, gamma: float) -> float:
    """``gamma * |h^T diag(psi) H f + mu g^T f|^2``."""
    f = np.asarray(f)
    psi = np.asarray(psi)
    g, h, H = real.g, real.h, real.H
    if H.shape != (h.shape[0], g.shape[0]) or f.shape != g.shape or psi.shape != h.shape:
        raise ValueError("dimension mismatch between realization, f and psi")
    check_feasible(f, psi)
    x = (h * psi) @ (H @ f) + mu * (g @ f)
    return float(gamma * abs(x) ** 2)


def batch_snr(g, h, H, f, psi, mu: float, gamma: float) -> np.ndarray:
    x = np.einsum("sn,sn->s", h * psi, H @ f) + mu * (g @ f)
    return gamma * np.abs(x) ** 2


def check_feasible(f, psi, tol: float = 1e-9) -> None:
    if abs(np.linalg.norm(f) - 1) > tol:
        raise ValueError(f"f must have unit norm (got {np.linalg.norm(f):.12g})")
    if psi.size and np.max(np.abs(np.abs(psi) - 1)) > tol:
        raise ValueError("psi entries must have unit modulus")
