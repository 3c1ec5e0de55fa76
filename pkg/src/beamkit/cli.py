"""Command-line sweeps writing CSV tables.

Usage: ``beamkit <subcommand> --scenario FILE --out FILE [--trials T] [--seed S]``

Scenario files hold ``key = value`` lines with ``#`` comments. Keys are the
``SystemConfig`` fields (angles in degrees) plus ``scenario``, ``sweep``,
``grid`` (comma-separated, strictly increasing), ``mu_db``, ``theta_gap``,
``ris_geometry``, ``trials`` and ``seed``.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import perf, simkit
from .beamform import ScenarioKind, scenario_statistics, solve
from .channel import SystemConfig, steering_vector

EXIT_USAGE = 2
EXIT_NUMERIC = 3

SUBCOMMANDS = {
    "outage": "beta",
    "ec-vs-n": "N",
    "ec-vs-theta": "theta_gap",
    "ec-vs-mu": "mu_db",
    "ec-vs-spacing": "spacing",
    "ec-vs-k": "K",
    "pattern": "angle",
}
DEFAULT_GRIDS = {
    "N": [8, 16, 32, 64],
    "theta_gap": [0, 10, 20, 30, 40, 50, 60],
    "mu_db": [-10, -5, 0, 5, 10, 15, 20],
    "spacing": [0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0],
    "K": [0.1, 1, 10, 100, 1000],
}
ANGLE_KEYS = ("theta_bd_d", "theta_bd_i", "theta_ra", "theta_rd")
CONFIG_KEYS = {f.name for f in fields(SystemConfig)}
INT_KEYS = {"M", "N"}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    config: SystemConfig
    kind: ScenarioKind
    axis: str
    grid: tuple
    trials: int = 0
    seed: int = 0
    ris_geometry: str = "ula"


def parse_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"line {lineno}: empty key")
        if key in pairs:
            raise UsageError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _number(key, value):
    try:
        return float(value)
    except ValueError:
        raise UsageError(f"{key}: not a number: {value!r}") from None


def parse_grid(value: str) -> tuple:
    grid = tuple(_number("grid", v) for v in value.split(",") if v.strip())
    check_grid(grid)
    return grid


def check_grid(grid) -> None:
    if len(grid) == 0:
        raise UsageError("sweep grid must be non-empty")
    if any(not math.isfinite(g) for g in grid):
        raise UsageError("sweep grid must be finite")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("sweep grid must be strictly increasing")


def build_scenario(pairs: dict, subcommand: str, trials=None, seed=None) -> Scenario:
    axis = SUBCOMMANDS[subcommand]
    pairs = dict(pairs)
    kind_name = pairs.pop("scenario", "R1Corr")
    try:
        kind = ScenarioKind(kind_name)
    except ValueError:
        valid = ", ".join(k.value for k in ScenarioKind)
        raise UsageError(f"unknown scenario kind {kind_name!r} (expected one of {valid})") from None
    sweep = pairs.pop("sweep", axis)
    if sweep != axis:
        raise UsageError(f"{subcommand} sweeps {axis!r}, scenario file asks for {sweep!r}")
    grid_text = pairs.pop("grid", None)
    ris_geometry = pairs.pop("ris_geometry", "ula")
    if ris_geometry not in ("ula", "upa"):
        raise UsageError("ris_geometry must be 'ula' or 'upa'")
    file_trials = int(_number("trials", pairs.pop("trials", "0")))
    file_seed = int(_number("seed", pairs.pop("seed", "0")))

    cfg_args = {}
    if "mu_db" in pairs:
        cfg_args["mu"] = 10 ** (_number("mu_db", pairs.pop("mu_db")) / 20)
    gap = pairs.pop("theta_gap", None)
    for key, value in pairs.items():
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown key {key!r}")
        if key in ("mu", "gamma") and value.lower() == "none":
            cfg_args[key] = None
            continue
        x = _number(key, value)
        if key in INT_KEYS:
            if x != int(x):
                raise UsageError(f"{key} must be an integer")
            x = int(x)
        if key in ANGLE_KEYS:
            x = math.radians(x)
        cfg_args[key] = x
    if gap is not None:
        cfg_args["theta_bd_i"] = cfg_args.get("theta_bd_d", 0.0) + math.radians(_number("theta_gap", gap))
    base = dict(mu=10 ** (5 / 20), gamma=1.0)
    base.update(cfg_args)
    try:
        cfg = SystemConfig(**base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    if axis == "angle":
        grid = tuple(np.arange(-180, 181) * 0.5)
    elif grid_text is not None:
        grid = parse_grid(grid_text)
    elif axis == "beta":
        grid = ()
    else:
        grid = tuple(float(g) for g in DEFAULT_GRIDS[axis])
    if axis == "N" and any(g != int(g) or g < 1 for g in grid):
        raise UsageError("N grid must hold positive integers")
    trials = file_trials if trials is None else trials
    seed = file_seed if seed is None else seed
    if trials < 0:
        raise UsageError("trials must be non-negative")
    return Scenario(config=cfg, kind=kind, axis=axis, grid=grid, trials=trials,
                    seed=seed, ris_geometry=ris_geometry)


def load_scenario(path: str, subcommand: str, trials=None, seed=None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read scenario file: {exc}") from None
    return build_scenario(parse_pairs(text), subcommand, trials, seed)


def point_config(sc: Scenario, x: float) -> SystemConfig:
    cfg = sc.config
    if sc.axis == "N":
        return cfg.replace(N=int(x))
    if sc.axis == "theta_gap":
        return cfg.replace(theta_bd_i=cfg.theta_bd_d + math.radians(x))
    if sc.axis == "mu_db":
        return cfg.replace(mu=10 ** (x / 20))
    if sc.axis == "spacing":
        return cfg.replace(spacing_bs=x, spacing_ris=x)
    if sc.axis == "K":
        return cfg.replace(K=x)
    return cfg


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _solve_point(sc: Scenario, cfg: SystemConfig, index: int):
    stats = scenario_statistics(cfg, sc.kind, sc.ris_geometry)
    sol = solve(stats, sc.kind, rng=np.random.default_rng([sc.seed, index]))
    return stats, sol, perf.rice_params(stats, sol, sc.kind)


def _map_points(fn, n: int) -> list:
    workers = min(simkit.thread_count(), n)
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def run_outage(sc: Scenario):
    stats, sol, params = _solve_point(sc, sc.config, 0)
    betas = np.asarray(sc.grid) if sc.grid else np.linspace(0, 3 * params.mean_snr * stats.gamma, 31)
    analytic = np.atleast_1d(perf.outage_probability(params, betas))
    header = ["beta", "analytic_outage", "empirical_outage", "m_abs", "sigma2"]
    empirical = [None] * len(betas)
    if sc.trials > 0:
        report = simkit.empirical_outage(stats, sol, betas, sc.trials, sc.seed, params=params)
        empirical = report.empirical_outage
    rows = [[b, a, e, abs(params.m), params.sigma2] for b, a, e in zip(betas, analytic, empirical)]
    return header, rows


def run_capacity(sc: Scenario):
    with_pcsi = sc.axis == "K" and sc.trials > 0 and sc.kind.family in ("R1", "R2")

    def point(i):
        x = sc.grid[i]
        stats, sol, params = _solve_point(sc, point_config(sc, x), i)
        ec = perf.ergodic_capacity(params)
        row = [x, params.mean_snr, abs(params.m), params.sigma2, ec,
               math.log2(1 + stats.gamma * params.mean_snr), None, None]
        if sc.trials > 0:
            est = simkit.empirical_capacity(stats, sol, sc.trials, _point_seed(sc.seed, i))
            row[6:8] = [est.value, est.stderr]
        if with_pcsi:
            row.append(simkit.pcsi_capacity(stats, sc.trials, _point_seed(sc.seed + 1, i)).value)
        return row

    header = [sc.axis, "mean_snr", "m_abs", "sigma2", "analytic_ec", "jensen_bound",
              "empirical_ec", "empirical_ec_stderr"]
    if with_pcsi:
        header.append("pcsi_ec")
    return header, _map_points(point, len(sc.grid))


def run_pattern(sc: Scenario):
    cfg = sc.config
    _, sol, _ = _solve_point(sc, cfg, 0)
    rows = []
    for deg in sc.grid:
        a = steering_vector(math.radians(deg), cfg.M, cfg.spacing_bs, cfg.wavelength)
        rows.append([deg, float(abs(np.vdot(a, sol.f)) ** 2)])
    return ["angle_deg", "gain"], rows


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.17g}"


def write_csv(path: str, comments: list[str], header: list[str], rows: list[list]) -> None:
    """Write atomically: a partial file never replaces ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".beamkit-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            for c in comments:
                fh.write(f"# {c}\r\n")
            fh.write(",".join(header) + "\r\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\r\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


COLUMN_DOCS = {
    "beta": "beta: SNR threshold",
    "analytic_outage": "analytic_outage: Rice-model P[SNR <= beta]",
    "empirical_outage": "empirical_outage: Monte Carlo P[SNR <= beta] (empty when trials = 0)",
    "m_abs": "m_abs: |mean| of the composite Gaussian",
    "sigma2": "sigma2: variance of the composite Gaussian",
    "mean_snr": "mean_snr: |m|^2 + sigma2",
    "analytic_ec": "analytic_ec: ergodic capacity from the Rice model (bit/s/Hz)",
    "jensen_bound": "jensen_bound: log2(1 + gamma * mean_snr)",
    "empirical_ec": "empirical_ec: Monte Carlo ergodic capacity (empty when trials = 0)",
    "empirical_ec_stderr": "empirical_ec_stderr: its standard error",
    "pcsi_ec": "pcsi_ec: Monte Carlo capacity with per-realization optimization",
    "angle_deg": "angle_deg: steering angle in degrees",
    "gain": "gain: |a_M(angle)^H f|^2",
    "N": "N: RIS elements",
    "theta_gap": "theta_gap: |theta_bd_i - theta_bd_d| in degrees",
    "mu_db": "mu_db: path-loss ratio in dB",
    "spacing": "spacing: element spacing at BS and RIS (same unit as wavelength)",
    "K": "K: Rician factor",
}


def run(subcommand: str, scenario_path: str, out: str, trials=None, seed=None) -> int:
    sc = load_scenario(scenario_path, subcommand, trials, seed)
    if sc.axis == "angle":
        header, rows = run_pattern(sc)
    elif sc.axis == "beta":
        header, rows = run_outage(sc)
    else:
        header, rows = run_capacity(sc)
    comments = [f"beamkit {subcommand} scenario={sc.kind.value} trials={sc.trials} seed={sc.seed}"]
    comments += [COLUMN_DOCS[h] for h in header]
    write_csv(out, comments, header, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="key = value scenario file")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials (0 = analytic only)")
        p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args.command, args.scenario, args.out, args.trials, args.seed)
    except UsageError as exc:
        print(f"beamkit: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"beamkit: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
