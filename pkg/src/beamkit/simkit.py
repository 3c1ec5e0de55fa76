"""Monte Carlo estimates of outage, ergodic capacity and mean-SNR identities.

Trials are split into fixed-size batches. Batch ``i`` draws from
``default_rng([seed, i])`` so results do not depend on how many workers run
the batches, and reductions always happen in batch order.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import perf
from .beamform import BeamformingSolution, pcsi_snr_batch
from .channel import ChannelStatistics, batch_snr, complex_gaussian, sample_batch

BATCH = 4096
DEFAULT_TRIALS = 100_000


@dataclass(frozen=True)
class MonteCarloReport:
    thresholds: list
    empirical_outage: list
    empirical_capacity: float
    trials: int
    seed: int
    max_abs_gap_vs_analytic: float
    capacity_stderr: float = float("nan")


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    stderr: float
    trials: int

    def __float__(self) -> float:
        return self.value

    def tolerance(self, rel: float = 0.01, n_se: float = 3.0) -> float:
        """``max(rel * value, n_se * stderr)``."""
        return max(rel * abs(self.value), n_se * self.stderr)


def thread_count() -> int:
    raw = os.environ.get("BEAMKIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def batch_sizes(trials: int, batch: int = BATCH) -> list[int]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    full, rest = divmod(trials, batch)
    return [batch] * full + ([rest] if rest else [])


def map_batches(fn, trials: int, seed: int, batch: int = BATCH) -> list:
    """Apply ``fn(rng, size)`` to every batch; results are returned in batch order."""
    sizes = batch_sizes(trials, batch)
    jobs = [(np.random.default_rng([seed, i]), s) for i, s in enumerate(sizes)]
    workers = min(thread_count(), len(jobs))
    if workers <= 1:
        return [fn(rng, s) for rng, s in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def snr_samples(stats: ChannelStatistics, f, psi, trials: int, seed: int) -> np.ndarray:
    """Instantaneous SNR ``gamma |h^T diag(psi) H f + mu g^T f|^2`` for ``trials`` draws."""
    f = np.asarray(f, dtype=complex)
    psi = np.asarray(psi, dtype=complex)

    def one(rng, size):
        g, h, H = sample_batch(stats, rng, size)
        return batch_snr(g, h, H, f, psi, stats.mu, stats.gamma)

    return np.concatenate(map_batches(one, trials, seed))


def _capacity(snr: np.ndarray, trials: int) -> CapacityEstimate:
    rates = np.log2(1 + snr)
    stderr = float(rates.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("inf")
    return CapacityEstimate(value=float(rates.mean()), stderr=stderr, trials=trials)


def empirical_outage(stats: ChannelStatistics, solution: BeamformingSolution, betas,
                     trials: int = DEFAULT_TRIALS, seed: int = 0,
                     params: perf.RiceParams | None = None) -> MonteCarloReport:
    """Empirical ``P[SNR <= beta]`` for each beta, from one shared set of draws.

    The gap column compares against the Rice model ``params`` (derived from
    ``solution.scenario`` when not given).
    """
    betas = np.asarray(betas, dtype=float)
    if betas.ndim != 1 or np.any(np.diff(betas) < 0):
        raise ValueError("betas must be a sorted 1-D sequence")
    snr = np.sort(snr_samples(stats, solution.f, solution.psi, trials, seed))
    outage = np.searchsorted(snr, betas, side="right") / trials
    if params is None and solution.scenario is not None:
        params = perf.rice_params(stats, solution, solution.scenario)
    gap = float("nan")
    if params is not None:
        gap = float(np.max(np.abs(outage - perf.outage_probability(params, betas))))
    cap = _capacity(snr, trials)
    return MonteCarloReport(thresholds=betas.tolist(), empirical_outage=outage.tolist(),
                            empirical_capacity=cap.value, trials=trials, seed=seed,
                            max_abs_gap_vs_analytic=gap, capacity_stderr=cap.stderr)


def empirical_capacity(stats: ChannelStatistics, solution: BeamformingSolution,
                       trials: int = DEFAULT_TRIALS, seed: int = 0) -> CapacityEstimate:
    """Sample mean of ``log2(1 + SNR)`` with its standard error."""
    snr = snr_samples(stats, solution.f, solution.psi, trials, seed)
    return _capacity(snr, trials)


def empirical_mean_snr(stats: ChannelStatistics, f, psi, trials: int = DEFAULT_TRIALS,
                       seed: int = 0) -> tuple[float, float]:
    """``(mean, stderr)`` of ``SNR / gamma``."""
    snr = snr_samples(stats, f, psi, trials, seed) / stats.gamma
    return float(snr.mean()), float(snr.std(ddof=1) / math.sqrt(trials))


def pcsi_capacity(stats: ChannelStatistics, trials: int = DEFAULT_TRIALS, seed: int = 0,
                  batch: int = 1024) -> CapacityEstimate:
    """Ergodic capacity when (f, psi) is re-optimized for every realization."""

    def one(rng, size):
        g, h, H = sample_batch(stats, rng, size)
        return pcsi_snr_batch(g, h, H, stats.mu, stats.gamma)

    snr = np.concatenate(map_batches(one, trials, seed, batch))
    return _capacity(snr, trials)


@dataclass(frozen=True)
class IdentityReport:
    names: tuple
    closed_form: tuple
    monte_carlo: tuple
    relative_error: tuple

    @property
    def max_relative_error(self) -> float:
        return max(self.relative_error)


IDENTITY_NAMES = ("los_tx_scatter_rx", "scatter_tx_los_rx", "scatter_both")


def identity_checks(stats: ChannelStatistics, f, psi, trials: int = DEFAULT_TRIALS,
                    seed: int = 0) -> IdentityReport:
    """Monte Carlo second moments of the three cascaded cross terms vs their closed forms.

    Terms: ``hbar^T Phi Ht f``, ``ht^T Phi Hbar f`` and ``ht^T Phi Ht f`` with
    ``ht``, ``Ht`` the unit-power scattered components.
    """
    f = np.asarray(f, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    v = stats.H_bar @ f
    N, M = stats.N, stats.M

    def one(rng, size):
        h_t = complex_gaussian(rng, (size, N)) @ stats.sqrt_RT.T
        H_t = stats.sqrt_RR @ complex_gaussian(rng, (size, N, M)) @ stats.sqrt_BT
        Ht_f = H_t @ f
        t1 = (stats.h_bar * psi) @ Ht_f.T
        t2 = h_t @ (psi * v)
        t3 = np.einsum("sn,sn->s", h_t * psi, Ht_f)
        return np.stack([np.abs(t1) ** 2, np.abs(t2) ** 2, np.abs(t3) ** 2]).sum(axis=1)

    sums = np.sum(map_batches(one, trials, seed), axis=0)
    mc = sums / trials
    exact = np.array(perf.cross_term_moments(stats, f, psi))
    rel = np.abs(mc - exact) / np.where(exact != 0, np.abs(exact), 1.0)
    return IdentityReport(names=IDENTITY_NAMES, closed_form=tuple(exact.tolist()),
                          monte_carlo=tuple(mc.tolist()), relative_error=tuple(rel.tolist()))
