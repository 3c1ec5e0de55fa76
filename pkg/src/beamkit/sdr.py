"""Unit-diagonal semidefinite relaxation of unit-modulus quadratic programs.

Solves ``max tr(A Psi)  s.t.  Psi >= 0, diag(Psi) = 1`` through the low-rank
factorization ``Psi = V V^H`` with unit-norm rows of ``V``: the feasible set
becomes a product of complex spheres and the objective is climbed by Riemannian
gradient ascent with a backtracking line search. Feasible unit-modulus vectors
are then recovered by Gaussian randomization.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

TOL = 1e-7
MAX_ITERS = 2000
RESTARTS = 3
TRIALS = 100


@dataclass(frozen=True)
class SdrProblem:
    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        object.__setattr__(self, "A", (A + A.conj().T) / 2)

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass
class SdrSolution:
    psi_bar: np.ndarray
    relaxation_value: float
    rounded_value: float
    iterations: int
    converged: bool
    factor: np.ndarray = field(repr=False, default=None)


def default_rank(n: int) -> int:
    return min(n, math.ceil(math.sqrt(2 * n)) + 1)


def quad_value(A: np.ndarray, psi: np.ndarray) -> float:
    """``psi^H A psi`` (real part)."""
    return float(np.real(np.vdot(psi, A @ psi)))


def _objective(A, V) -> float:
    return float(np.real(np.sum(V.conj() * (A @ V))))


def _normalize_rows(V):
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return V / norms


def _riemannian_grad(A, V):
    G = 2 * (A @ V)
    radial = np.real(np.sum(V.conj() * G, axis=1, keepdims=True))
    return G - radial * V


def _ascend(A, V, max_iters, tol):
    """Gradient ascent on the product of spheres from ``V``; returns (V, value, iters, converged)."""
    value = _objective(A, V)
    scale = max(np.linalg.norm(A, 2), 1e-300)
    step = 1.0 / scale
    for it in range(1, max_iters + 1):
        grad = _riemannian_grad(A, V)
        gnorm2 = float(np.real(np.vdot(grad, grad)))
        if math.sqrt(gnorm2) <= tol * (1 + abs(value)):
            return V, value, it - 1, True
        while True:
            V_new = _normalize_rows(V + step * grad)
            new_value = _objective(A, V_new)
            if new_value >= value + 1e-4 * step * gnorm2:
                break
            step *= 0.5
            if step * scale < 1e-14:
                # no ascent direction left at machine precision
                return V, value, it, True
        V, value = V_new, new_value
        step *= 2.0
    return V, value, max_iters, False


def solve_relaxation(prob: SdrProblem, rank: int | None = None, max_iters: int = MAX_ITERS,
                     tol: float = TOL, restarts: int = RESTARTS,
                     rng: np.random.Generator | None = None,
                     init: np.ndarray | None = None):
    """Maximize ``tr(A V V^H)`` over unit-row factors ``V`` (n x rank).

    Returns ``(V, value, iterations, converged)`` for the best of ``restarts``
    random starts plus the optional warm start ``init``.
    """
    A = prob.A
    n = prob.n
    r = rank or default_rank(n)
    rng = rng if rng is not None else np.random.default_rng(0)
    starts = []
    if init is not None:
        # small noise in the unused columns lets the ascent leave a rank-deficient start
        V0 = 1e-3 * (rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r)))
        k = min(r, init.shape[1])
        V0[:, :k] += init[:, :k]
        starts.append(_normalize_rows(V0))
    for _ in range(restarts):
        V0 = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
        starts.append(_normalize_rows(V0))

    best = None
    total_iters = 0
    for V0 in starts:
        V, value, iters, converged = _ascend(A, V0, max_iters, tol)
        total_iters += iters
        if best is None or value > best[1]:
            best = (V, value, converged)
    V, value, converged = best
    if not converged:
        log.warning("SDR ascent hit %d iterations without meeting tol=%g", max_iters, tol)
    return V, value, total_iters, converged


def _phase(z):
    mag = np.abs(z)
    out = np.ones_like(z, dtype=complex)
    nz = mag > 0
    out[nz] = z[nz] / mag[nz]
    return out


def round_solution(factor: np.ndarray, A: np.ndarray, trials: int = TRIALS,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Gaussian randomization; candidate 0 is the phase of the dominant eigenvector of V V^H."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    n, r = factor.shape
    U, _, _ = np.linalg.svd(factor, full_matrices=False)
    lead = U[:, 0]
    z = (rng.standard_normal((r, trials)) + 1j * rng.standard_normal((r, trials))) / math.sqrt(2)
    cands = np.concatenate([lead[:, None], factor @ z], axis=1)
    cands = _phase(cands)
    values = np.real(np.sum(cands.conj() * (A @ cands), axis=0))
    best = values.max()
    # lowest index among (numerical) ties
    idx = int(np.argmax(values >= best - 1e-12 * (1 + abs(best))))
    return cands[:, idx]


def polish(A: np.ndarray, psi: np.ndarray, max_sweeps: int = 200, tol: float = 1e-12) -> np.ndarray:
    """Coordinate ascent ``psi_k <- phase(sum_{j != k} A_kj psi_j)``; never decreases psi^H A psi."""
    psi = psi.copy()
    diag = np.real(np.diag(A))
    value = quad_value(A, psi)
    for _ in range(max_sweeps):
        for k in range(psi.size):
            s = A[k] @ psi - diag[k] * psi[k]
            if abs(s) > 0:
                psi[k] = s / abs(s)
        new_value = quad_value(A, psi)
        if new_value - value <= tol * (1 + abs(value)):
            value = max(value, new_value)
            break
        value = new_value
    return psi


def normalize_auxiliary(psi_bar: np.ndarray) -> np.ndarray:
    """Rotate so the trailing auxiliary entry equals 1 and drop it."""
    t = psi_bar[-1]
    if abs(abs(t) - 1) > 1e-9:
        raise RuntimeError(f"auxiliary entry must have unit modulus, got |t|={abs(t):.12g}")
    return psi_bar[:-1] * np.conj(t)


def maximize_unit_modulus(A: np.ndarray, rng: np.random.Generator | None = None,
                          candidates: list[np.ndarray] | tuple = (),
                          warm_factor: np.ndarray | None = None, trials: int = TRIALS,
                          restarts: int = RESTARTS, tol: float = TOL,
                          max_iters: int = MAX_ITERS) -> SdrSolution:
    """Relax, round, and locally polish ``max psi^H A psi, |psi_k| = 1``.

    Extra ``candidates`` (e.g. the previous iterate) compete with the rounded
    vector, so callers running an alternating scheme never lose ground.
    """
    prob = SdrProblem(A)
    A = prob.A
    rng = rng if rng is not None else np.random.default_rng(0)
    V, relax, iters, converged = solve_relaxation(prob, rng=rng, init=warm_factor,
                                                  restarts=restarts, tol=tol, max_iters=max_iters)
    psi = polish(A, round_solution(V, A, trials, rng))
    value = quad_value(A, psi)
    for cand in candidates:
        cand = polish(A, _phase(np.asarray(cand, dtype=complex)))
        cand_value = quad_value(A, cand)
        if cand_value > value + 1e-12 * (1 + abs(value)):
            psi, value = cand, cand_value
    if value > relax + 1e-9 * (1 + abs(relax)):
        # the factorization stalled below a feasible rank-1 point; climb from there
        V_up, relax_up, it_up, conv_up = solve_relaxation(
            prob, rank=V.shape[1], restarts=0, init=psi[:, None], tol=tol, max_iters=max_iters)
        iters += it_up
        if relax_up > relax:
            V, relax, converged = V_up, relax_up, conv_up
    return SdrSolution(psi_bar=psi, relaxation_value=relax, rounded_value=value,
                       iterations=iters, converged=converged, factor=V)
