"""Statistically optimal transmit beamformer and RIS phase shifts.

Every scenario maximizes the mean SNR ``E|h^T diag(psi) H f + mu g^T f|^2``
(without the gamma scale) subject to ``||f|| = 1`` and ``|psi_k| = 1``.
Correlated Rician cases are handled by alternating an eigenvector step in
``f`` with an SDR step in ``psi``; the i.i.d. and Rayleigh cases have closed
forms.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdr
from .channel import (ChannelRealization, ChannelStatistics, SystemConfig,
                      build_statistics, check_feasible)

log = logging.getLogger(__name__)

MAX_ITERS = 100


class ScenarioKind(str, enum.Enum):
    R1_CORR = "R1Corr"
    R1_IID = "R1Iid"
    R1_IID_LB = "R1IidLB"
    R2_CORR = "R2Corr"
    R2_IID = "R2Iid"
    R3_CORR = "R3Corr"
    R3_IID = "R3Iid"
    LOS_ONLY = "LosOnly"

    @property
    def iid(self) -> bool:
        return self in (ScenarioKind.R1_IID, ScenarioKind.R1_IID_LB,
                        ScenarioKind.R2_IID, ScenarioKind.R3_IID)

    @property
    def family(self) -> str:
        return "LoS" if self is ScenarioKind.LOS_ONLY else self.value[:2]


@dataclass
class BeamformingSolution:
    f: np.ndarray
    psi: np.ndarray
    mean_snr: float
    iterations: int = 0
    trajectory: list[float] = field(default_factory=list)
    converged: bool = True
    scenario: ScenarioKind | None = None


def scenario_statistics(cfg: SystemConfig, kind: ScenarioKind | str,
                        ris_geometry: str = "ula") -> ChannelStatistics:
    """Channel statistics matching a fading scenario.

    R2 removes the direct-link LoS, R3 forces K = 0 and LoS-only forces
    K -> infinity; the i.i.d. variants use identity correlations.
    """
    kind = ScenarioKind(kind)
    if kind.family == "R3":
        cfg = cfg.replace(K=0.0)
    elif kind is ScenarioKind.LOS_ONLY:
        cfg = cfg.replace(K=math.inf)
    return build_statistics(cfg, ris_geometry=ris_geometry, bs_iid=kind.iid,
                            ris_iid=kind.iid, direct_los=kind.family != "R2")


def check_scenario(stats: ChannelStatistics, kind: ScenarioKind | str) -> ScenarioKind:
    kind = ScenarioKind(kind)
    problems = []
    if kind.iid and not stats.is_iid:
        problems.append("i.i.d. scenario needs identity correlation matrices")
    if kind.family == "R1" and not stats.direct_los:
        problems.append("R1 needs the direct-link LoS component")
    if kind.family == "R2" and stats.direct_los and stats.kappa_l > 0:
        problems.append("R2 needs the direct-link LoS removed")
    if kind.family == "R3" and stats.kappa_l > 0:
        problems.append("R3 needs K = 0")
    if kind is ScenarioKind.LOS_ONLY and stats.kappa_n > 0:
        problems.append("LoS-only needs K -> infinity")
    if problems:
        raise ValueError(f"statistics inconsistent with {kind.value}: " + "; ".join(problems))
    return kind


def z1_matrix(stats: ChannelStatistics, f) -> np.ndarray:
    """``R_RT * (conj(Hbar f) (Hbar f)^T)`` (Hadamard)."""
    v = stats.H_bar @ f
    return stats.R_RT * np.outer(v.conj(), v)


def z2_matrix(stats: ChannelStatistics) -> np.ndarray:
    hb = stats.h_bar
    return stats.R_RR * (stats.kappa_n ** 2 * stats.R_RT
                         + stats.kappa_l ** 2 * np.outer(hb.conj(), hb))


def _quad(X, x) -> float:
    return float(np.real(np.vdot(x, X @ x)))


def mean_snr_eval(stats: ChannelStatistics, f, psi, scenario=None) -> float:
    """Mean SNR divided by gamma for a feasible ``(f, psi)``."""
    f = np.asarray(f, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if f.shape != (stats.M,) or psi.shape != (stats.N,):
        raise ValueError("dimension mismatch")
    check_feasible(f, psi)
    if scenario is not None:
        check_scenario(stats, scenario)
    kl, kn = stats.kappa_l, stats.kappa_n
    kld, knd = stats.kappa_l_direct, stats.kappa_n_direct
    mu = stats.mu
    los = kl ** 2 * (psi @ (stats.E @ f)) + mu * kld * (stats.g_bar @ f)
    value = abs(los) ** 2
    value += kl ** 2 * kn ** 2 * _quad(z1_matrix(stats, f), psi)
    value += _quad(stats.R_BT, f) * (mu ** 2 * knd ** 2 + kn ** 2 * _quad(z2_matrix(stats), psi))
    return float(value)


def dominant_eigvec(F: np.ndarray) -> np.ndarray:
    """Unit-norm dominant eigenvector, first non-negligible entry made real non-negative."""
    F = np.asarray(F, dtype=complex)
    scale = max(np.linalg.norm(F), 1.0)
    if np.linalg.norm(F - F.conj().T) > 1e-9 * scale:
        raise ArithmeticError("matrix is not Hermitian")
    _, U = np.linalg.eigh((F + F.conj().T) / 2)
    v = U[:, -1]
    idx = int(np.argmax(np.abs(v) > 1e-12))
    v = v * np.exp(-1j * np.angle(v[idx]))
    return v / np.linalg.norm(v)


def _phase(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    mag = np.abs(z)
    out = np.ones_like(z)
    nz = mag > 1e-300
    out[nz] = z[nz] / mag[nz]
    return out


def beamformer_matrix(stats: ChannelStatistics, psi) -> np.ndarray:
    """``F`` whose Rayleigh quotient ``f^H F f`` is the mean SNR for fixed psi."""
    kl, kn = stats.kappa_l, stats.kappa_n
    c = kl ** 2 * (psi @ stats.E) + stats.mu * stats.kappa_l_direct * stats.g_bar
    F1 = np.outer(c.conj(), c)
    B = psi[:, None] * stats.H_bar
    F2 = kl ** 2 * kn ** 2 * (B.conj().T @ stats.R_RT @ B)
    scalar = stats.mu ** 2 * stats.kappa_n_direct ** 2 + kn ** 2 * _quad(z2_matrix(stats), psi)
    F3 = scalar * stats.R_BT
    return F1 + F2 + F3


def optimal_f_given_psi(stats: ChannelStatistics, psi, scenario=None) -> np.ndarray:
    if scenario is not None:
        check_scenario(stats, scenario)
    return dominant_eigvec(beamformer_matrix(stats, np.asarray(psi, dtype=complex)))


def phase_problem(stats: ChannelStatistics, f):
    """Return ``(a, b, V)`` with the psi-dependent objective ``|psi^T a + b|^2 + psi^H V psi``."""
    kl, kn = stats.kappa_l, stats.kappa_n
    a = kl ** 2 * (stats.E @ f)
    b = complex(stats.mu * stats.kappa_l_direct * (stats.g_bar @ f))
    V = kl ** 2 * kn ** 2 * z1_matrix(stats, f) + kn ** 2 * _quad(stats.R_BT, f) * z2_matrix(stats)
    return a, b, V


def lifted_matrix(a, b, V) -> np.ndarray:
    """(N+1)x(N+1) matrix ``A`` with ``psibar^H A psibar + |b|^2 = |psi^T a + b|^2 + psi^H V psi``
    at ``psibar = [psi, 1]``."""
    n = a.size
    ac = a.conj()
    A = np.zeros((n + 1, n + 1), dtype=complex)
    A[:n, :n] = np.outer(ac, ac.conj()) + V
    A[:n, n] = ac * b
    A[n, :n] = np.conj(ac * b)
    return A


def optimal_psi_given_f(stats: ChannelStatistics, f, scenario=None,
                        rng: np.random.Generator | None = None, previous=None,
                        warm_factor=None, return_details: bool = False):
    """SDR step: maximize the mean SNR over unit-modulus psi for fixed f.

    With a direct-link LoS the linear term is absorbed through an auxiliary
    unit-modulus slot; otherwise the N x N quadratic form is relaxed directly.
    """
    if scenario is not None:
        check_scenario(stats, scenario)
    f = np.asarray(f, dtype=complex)
    rng = rng if rng is not None else np.random.default_rng(0)
    a, b, V = phase_problem(stats, f)
    candidates = []
    if abs(b) > 0:
        A = lifted_matrix(a, b, V)
        # b-aligned co-phasing is exact when V vanishes and a good start otherwise
        candidates.append(np.append(_phase(a.conj()) * _phase(b), 1.0))
        if previous is not None:
            candidates.append(np.append(previous, 1.0))
        sol = sdr.maximize_unit_modulus(A, rng=rng, candidates=candidates, warm_factor=warm_factor)
        psi = sdr.normalize_auxiliary(sol.psi_bar)
    else:
        A = np.outer(a.conj(), a) + V
        candidates.append(_phase(a.conj()))
        if previous is not None:
            candidates.append(previous)
        sol = sdr.maximize_unit_modulus(A, rng=rng, candidates=candidates, warm_factor=warm_factor)
        psi = sol.psi_bar
    psi = _phase(psi)
    if return_details:
        return psi, sol
    return psi


def _default_delta(value: float) -> float:
    return 1e-6 * (1 + abs(value))


def los_start(stats: ChannelStatistics) -> np.ndarray:
    """Dominant right singular vector of ``[E; mu g_bar^T]``, a good start for deterministic channels."""
    B = np.vstack([stats.kappa_l ** 2 * stats.E, stats.mu * stats.kappa_l_direct * stats.g_bar[None, :]])
    return dominant_eigvec(B.conj().T @ B)


def algorithm1(stats: ChannelStatistics, scenario=ScenarioKind.R1_CORR, init=None,
               delta: float | None = None, max_iters: int = MAX_ITERS,
               rng: np.random.Generator | None = None) -> BeamformingSolution:
    """Alternating SDR / dominant-eigenvector ascent for correlated R1 and R2."""
    kind = check_scenario(stats, scenario)
    rng = rng if rng is not None else np.random.default_rng(0)
    if init is None:
        f = los_start(stats) if stats.kappa_n == 0 else dominant_eigvec(stats.R_BT.astype(complex))
        psi = np.ones(stats.N, dtype=complex)
    else:
        f, psi = (np.asarray(x, dtype=complex) for x in init)
    value = mean_snr_eval(stats, f, psi)
    trajectory = [value]
    best = (f, psi, value)
    warm = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        psi, details = optimal_psi_given_f(stats, f, rng=rng, previous=psi,
                                           warm_factor=warm, return_details=True)
        warm = details.factor
        f = optimal_f_given_psi(stats, psi)
        new_value = mean_snr_eval(stats, f, psi)
        trajectory.append(new_value)
        if new_value > best[2]:
            best = (f, psi, new_value)
        tol = delta if delta is not None else _default_delta(value)
        if abs(new_value - value) <= tol:
            converged = True
            value = new_value
            break
        value = new_value
    if not converged:
        log.warning("algorithm1 stopped at %d iterations without convergence", max_iters)
    f, psi, value = best
    return BeamformingSolution(f=f, psi=psi, mean_snr=value, iterations=it,
                               trajectory=trajectory, converged=converged, scenario=kind)


def iid_cophase(stats: ChannelStatistics, f) -> np.ndarray:
    """``exp(-j angle(E f) + j angle(g_bar^T f))``: aligns every cascaded term with the direct LoS."""
    ref = stats.g_bar @ f if stats.kappa_l_direct > 0 else 1.0
    return _phase((stats.E @ f).conj()) * _phase(np.asarray([ref]))[0]


def algorithm2(stats: ChannelStatistics, init=None, delta: float | None = None,
               max_iters: int = MAX_ITERS) -> BeamformingSolution:
    """Alternating stacked-eigenvector / co-phasing ascent for i.i.d. R1."""
    kind = check_scenario(stats, ScenarioKind.R1_IID)
    kl, kn, mu = stats.kappa_l, stats.kappa_n, stats.mu
    if init is None:
        psi = np.ones(stats.N, dtype=complex)
        f = dominant_eigvec(np.eye(stats.M, dtype=complex))
    else:
        f, psi = (np.asarray(x, dtype=complex) for x in init)
    value = mean_snr_eval(stats, f, psi)
    trajectory = [value]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        top = kl ** 2 * (psi @ stats.E) + mu * kl * stats.g_bar
        Y = np.vstack([top[None, :], kl * kn * stats.H_bar])
        f = dominant_eigvec(Y.conj().T @ Y)
        psi = iid_cophase(stats, f)
        new_value = mean_snr_eval(stats, f, psi)
        trajectory.append(new_value)
        tol = delta if delta is not None else _default_delta(value)
        done = abs(new_value - value) <= tol
        value = new_value
        if done:
            converged = True
            break
    return BeamformingSolution(f=f, psi=psi, mean_snr=value, iterations=it,
                               trajectory=trajectory, converged=converged, scenario=kind)


def r1_iid_weights(stats: ChannelStatistics) -> tuple[float, float, float]:
    """(w1, w2, w3) multiplying |e_n f|^2, |g_bar^T f|^2 and |e_n f||g_bar^T f|."""
    N, kl, kn, mu = stats.N, stats.kappa_l, stats.kappa_n, stats.mu
    w1 = N ** 2 * kl ** 4 + N * kl ** 2 * kn ** 2
    w2 = mu ** 2 * kl ** 2
    w3 = 2 * N * mu * kl ** 3
    return w1, w2, w3


def r1_iid_lower_bound(stats: ChannelStatistics, f) -> float:
    """Mean SNR with the cross term ``w3 |e_n f||g_bar^T f|`` dropped (co-phased psi)."""
    N, kl, kn, mu = stats.N, stats.kappa_l, stats.kappa_n, stats.mu
    w1, w2, _ = r1_iid_weights(stats)
    e = stats.E[0]
    const = (kl ** 2 * kn ** 2 + kn ** 4) * N + mu ** 2 * kn ** 2
    return float(w1 * abs(e @ f) ** 2 + w2 * abs(stats.g_bar @ f) ** 2 + const)


def r1_iid_closed_form(stats: ChannelStatistics) -> BeamformingSolution:
    """Closed-form (f, psi) maximizing the i.i.d. Rician-Rician lower bound."""
    check_scenario(stats, ScenarioKind.R1_IID_LB)
    N, kl, kn, mu = stats.N, stats.kappa_l, stats.kappa_n, stats.mu
    e = stats.E[0]
    Z = ((N ** 2 * kl ** 4 + N * kl ** 2 * kn ** 2) * np.outer(e.conj(), e)
         + 2 * N * mu * kl ** 3 * np.outer(stats.g_bar.conj(), stats.g_bar))
    v = dominant_eigvec(Z)
    gv = stats.g_bar @ v
    Ev = stats.E @ v
    if abs(gv) < 1e-12:
        log.warning("direct LoS projection vanishes; co-phasing the cascaded link alone")
        psi = _phase(Ev.conj())
    else:
        psi = _phase(gv * Ev.conj() / abs(e @ v))
    value = mean_snr_eval(stats, v, psi)
    return BeamformingSolution(f=v, psi=psi, mean_snr=value, trajectory=[value],
                               scenario=ScenarioKind.R1_IID_LB)


def _bs_steering_to_ris(stats: ChannelStatistics) -> np.ndarray:
    row = stats.H_bar[0]
    return row / np.linalg.norm(row)


def r2_iid_closed_form(stats: ChannelStatistics) -> BeamformingSolution:
    check_scenario(stats, ScenarioKind.R2_IID)
    f = _bs_steering_to_ris(stats).conj()
    a_ris = stats.H_bar[:, 0]
    psi = _phase((stats.h_bar * a_ris).conj())
    value = mean_snr_eval(stats, f, psi)
    return BeamformingSolution(f=f, psi=psi, mean_snr=value, trajectory=[value],
                               scenario=ScenarioKind.R2_IID)


def r3_corr_closed_form(stats: ChannelStatistics, theta: float = 0.0) -> BeamformingSolution:
    if not -math.pi / 2 <= theta <= math.pi / 2:
        raise ValueError("theta must lie in [-pi/2, pi/2]")
    check_scenario(stats, ScenarioKind.R3_CORR)
    w, _ = np.linalg.eigh(stats.R_BT)
    f = dominant_eigvec(stats.R_BT.astype(complex))
    psi = np.full(stats.N, np.exp(1j * theta))
    ones = np.ones(stats.N)
    value = float(w[-1] * (stats.mu ** 2 + ones @ (stats.R_RR * stats.R_RT) @ ones))
    return BeamformingSolution(f=f, psi=psi, mean_snr=value, trajectory=[value],
                               scenario=ScenarioKind.R3_CORR)


def r3_iid_solution(stats: ChannelStatistics, f=None, psi=None) -> BeamformingSolution:
    check_scenario(stats, ScenarioKind.R3_IID)
    if f is None:
        f = np.zeros(stats.M, dtype=complex)
        f[0] = 1.0
    if psi is None:
        psi = np.ones(stats.N, dtype=complex)
    f = np.asarray(f, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    check_feasible(f, psi)
    return BeamformingSolution(f=f, psi=psi, mean_snr=float(stats.mu ** 2 + stats.N),
                               trajectory=[float(stats.mu ** 2 + stats.N)],
                               scenario=ScenarioKind.R3_IID)


def los_fixed_point(stats: ChannelStatistics, delta: float | None = None,
                    max_iters: int = MAX_ITERS) -> BeamformingSolution:
    """K -> infinity: alternate ``f = normalize(E^H conj(psi) + mu conj(g_bar))`` and co-phasing."""
    g, h, H = stats.g_bar, stats.h_bar, stats.H_bar
    f, psi, values, it, converged = _pcsi_core(g[None], h[None], H[None], stats.mu, delta, max_iters)
    return BeamformingSolution(f=f[0], psi=psi[0], mean_snr=float(values[-1][0]),
                               iterations=it, trajectory=[float(v[0]) for v in values],
                               converged=bool(converged[0]), scenario=ScenarioKind.LOS_ONLY)


def _pcsi_core(g, h, H, mu, delta, max_iters):
    """Batched instantaneous-SNR ascent over (f, psi) for realizations stacked on axis 0."""
    E = h[:, :, None] * H
    B = np.concatenate([E, mu * g[:, None, :]], axis=1)
    _, U = np.linalg.eigh(np.conj(np.swapaxes(B, 1, 2)) @ B)
    f = U[:, :, -1]

    def objective(f, psi):
        return np.abs(np.einsum("sn,sn->s", psi, np.einsum("snm,sm->sn", E, f))
                      + mu * np.einsum("sm,sm->s", g, f)) ** 2

    def psi_step(f):
        Ef = np.einsum("snm,sm->sn", E, f)
        ref = _phase(np.einsum("sm,sm->s", g, f)) if mu > 0 else np.ones(f.shape[0])
        return _phase(Ef.conj()) * ref[:, None]

    psi = psi_step(f)
    value = objective(f, psi)
    values = [value]
    converged = np.zeros(g.shape[0], dtype=bool)
    it = 0
    for it in range(1, max_iters + 1):
        c = np.einsum("sn,snm->sm", psi, E) + mu * g
        norms = np.linalg.norm(c, axis=1, keepdims=True)
        f_new = np.where(norms > 0, c.conj() / np.where(norms > 0, norms, 1), f)
        psi_new = psi_step(f_new)
        new_value = objective(f_new, psi_new)
        tol = delta if delta is not None else 1e-9 * (1 + value)
        active = ~converged
        f[active], psi[active] = f_new[active], psi_new[active]
        converged |= np.abs(new_value - value) <= tol
        value = np.where(active, new_value, value)
        values.append(value)
        if converged.all():
            break
    return f, psi, values, it, converged


def pcsi_baseline(real: ChannelRealization, mu: float, delta: float | None = None,
                  max_iters: int = MAX_ITERS) -> BeamformingSolution:
    """Per-realization (perfect CSI) alternating maximization of ``|h^T diag(psi) H f + mu g^T f|^2``."""
    f, psi, values, it, converged = _pcsi_core(real.g[None], real.h[None], real.H[None],
                                               mu, delta, max_iters)
    return BeamformingSolution(f=f[0], psi=psi[0], mean_snr=float(values[-1][0]),
                               iterations=it, trajectory=[float(v[0]) for v in values],
                               converged=bool(converged[0]))


def pcsi_snr_batch(g, h, H, mu: float, gamma: float, delta: float | None = None,
                   max_iters: int = MAX_ITERS) -> np.ndarray:
    _, _, values, _, _ = _pcsi_core(g, h, H, mu, delta, max_iters)
    return gamma * values[-1]


def solve(stats: ChannelStatistics, kind: ScenarioKind | str,
          rng: np.random.Generator | None = None, delta: float | None = None) -> BeamformingSolution:
    """Dispatch to the scenario's algorithm or closed form."""
    kind = ScenarioKind(kind)
    if kind in (ScenarioKind.R1_CORR, ScenarioKind.R2_CORR):
        return algorithm1(stats, kind, delta=delta, rng=rng)
    if kind is ScenarioKind.R1_IID:
        return algorithm2(stats, delta=delta)
    if kind is ScenarioKind.R1_IID_LB:
        return r1_iid_closed_form(stats)
    if kind is ScenarioKind.R2_IID:
        return r2_iid_closed_form(stats)
    if kind is ScenarioKind.R3_CORR:
        return r3_corr_closed_form(stats)
    if kind is ScenarioKind.R3_IID:
        return r3_iid_solution(stats)
    check_scenario(stats, kind)
    return los_fixed_point(stats, delta=delta)
