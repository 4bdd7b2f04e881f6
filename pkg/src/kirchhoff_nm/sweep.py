"""Grid sweeps over (omega, mu, gamma) and the accepted-measure curve.

Every grid point runs the full solver; rejections are recorded, not raised.
Points are solved by a process pool when ``workers > 1`` and always merged
in (gamma, mu, omega) order, so the output does not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field as dc_field, replace
from multiprocessing import get_context

import numpy as np

from .errors import ConfigError, InsufficientData, KirchhoffError
from .kirchhoff import ProblemData
from .nashmoser import CONVERGED, RESONANCE, SolverParams, solve

CSV_COLUMNS = ["omega", "mu", "gamma", "status", "rejection_stage", "offender_j", "offender_l",
               "final_residual", "norm_u", "wall_ms"]

#: smallest number of grid points per gamma for a measure estimate
MIN_POINTS = 100


def sweep_solver_defaults(d: int = 1) -> SolverParams:
    """Light solver settings for dense grids: small caps, no confirmation run."""
    return SolverParams.defaults_for(d, N_cap=8.0, M_time=16, confirm=False)


@dataclass
class SweepConfig:
    omega_interval: tuple
    n_omega: int
    mu_values: list
    gamma_values: list
    solver: SolverParams = dc_field(default_factory=sweep_solver_defaults)
    seed: int = 0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.omega_interval)
        if not 0 < lo < hi:
            raise ConfigError(f"omega interval must satisfy 0 < lo < hi, got {self.omega_interval}")
        self.omega_interval = (lo, hi)
        if self.n_omega < 2:
            raise ConfigError("n_omega must be >= 2")
        if len(self.mu_values) < 1 or len(self.gamma_values) < 1:
            raise ConfigError("need at least one mu and one gamma value")
        if any(not m > 0 for m in self.mu_values):
            raise ConfigError("mu values must be positive")

    def omegas(self) -> np.ndarray:
        """Cell midpoints of n_omega equal cells of the interval."""
        lo, hi = self.omega_interval
        return lo + (hi - lo) * (np.arange(self.n_omega) + 0.5) / self.n_omega

    @property
    def resolution(self) -> float:
        lo, hi = self.omega_interval
        return (hi - lo) / self.n_omega


def rectangle_mu_values(gamma: float, delta: float = 0.1, count: int = 8, seed: int = 0) -> list:
    """mu sampled log-uniformly in (delta gamma 1e-3, delta gamma)."""
    rng = np.random.default_rng(seed)
    top = delta * gamma
    return sorted(float(v) for v in top * 10 ** rng.uniform(-3, 0, size=count))


@dataclass
class SweepRecord:
    omega: float
    mu: float
    gamma: float
    status: str
    rejection_stage: int | None = None
    offender: tuple | None = None  # (j, l)
    final_residual: float | None = None
    norm_u: float | None = None
    wall_ms: float | None = None

    @property
    def accepted(self) -> bool:
        return self.status == CONVERGED

    def key(self):
        return (self.gamma, self.mu, self.omega)


def _solve_point(args) -> SweepRecord:
    pd, params, omega, mu, gamma = args
    t0 = time.perf_counter()
    try:
        out = solve(pd.replace(omega=omega, mu=mu, gamma=gamma), params)
    except KirchhoffError as exc:
        return SweepRecord(omega, mu, gamma, f"Error: {type(exc).__name__}",
                           wall_ms=1e3 * (time.perf_counter() - t0))
    stage = None if out.converged else out.stage
    offender = None
    if out.status == RESONANCE and out.offender is not None:
        offender = (int(out.offender[0]), int(out.offender[1]))
    norm_u = out.solution.norm(0) if out.converged else None
    return SweepRecord(omega, mu, gamma, out.status, stage, offender, out.final_residual, norm_u,
                       1e3 * (time.perf_counter() - t0))


def sweep_omega(cfg: SweepConfig, pd_template: ProblemData, workers: int = 1) -> list:
    params = cfg.solver
    jobs = [(pd_template, params, float(w), float(m), float(g))
            for g in cfg.gamma_values for m in cfg.mu_values for w in cfg.omegas()]
    if workers > 1:
        with get_context("spawn").Pool(workers) as pool:
            records = pool.map(_solve_point, jobs, chunksize=max(1, len(jobs) // (8 * workers)))
    else:
        records = [_solve_point(j) for j in jobs]
    return sorted(records, key=SweepRecord.key)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records, timing: bool = False) -> str:
    """CSV text; wall_ms is left blank unless ``timing`` so reruns are byte-identical."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        j, l = r.offender if r.offender is not None else (None, None)
        w.writerow([_fmt(r.omega), _fmt(r.mu), _fmt(r.gamma), r.status, _fmt(r.rejection_stage),
                    _fmt(j), _fmt(l), _fmt(r.final_residual), _fmt(r.norm_u),
                    f"{r.wall_ms:.3f}" if timing and r.wall_ms is not None else ""])
    return buf.getvalue()


def records_from_csv(text: str) -> list:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        def num(key, cast=float):
            return cast(row[key]) if row[key] != "" else None
        off = None
        if row["offender_j"] != "":
            off = (int(row["offender_j"]), int(row["offender_l"]))
        out.append(SweepRecord(float(row["omega"]), float(row["mu"]), float(row["gamma"]),
                               row["status"], num("rejection_stage", int), off,
                               num("final_residual"), num("norm_u"), num("wall_ms")))
    return out


@dataclass
class MeasureCurve:
    gammas: list
    fractions: list
    counts: list
    slope: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "fraction", "fitted_slope"])
        for g, f in zip(self.gammas, self.fractions):
            w.writerow([repr(float(g)), repr(float(f)), repr(float(self.slope))])
        return buf.getvalue()

    def rows(self):
        return list(zip(self.gammas, self.fractions))


def measure_curve(records) -> MeasureCurve:
    """Accepted fraction per gamma and the slope C of 1 - fraction ~ C gamma."""
    by_gamma = {}
    for r in records:
        by_gamma.setdefault(r.gamma, []).append(r.accepted)
    if len(by_gamma) < 2:
        raise InsufficientData(f"need at least two gamma values, got {len(by_gamma)}")
    gammas = sorted(by_gamma)
    counts = [len(by_gamma[g]) for g in gammas]
    for g, n in zip(gammas, counts):
        if n < MIN_POINTS:
            raise InsufficientData(f"gamma = {g} has {n} points, need {MIN_POINTS}")
    fractions = [float(np.mean(by_gamma[g])) for g in gammas]
    x = np.array(gammas, dtype=float)
    y = 1.0 - np.array(fractions)
    slope = float(x @ y / (x @ x))
    return MeasureCurve(gammas, fractions, counts, slope)


def stage0_screen_fraction(omegas, gamma: float, tau: float, N: float, lambdas, parity: str = "full") -> float:
    """Accepted fraction of the exact (alpha = 0) screen at cutoff N, computed directly."""
    lam = np.asarray([v for v in lambdas if 0 < v <= N * (1 + 1e-12)], dtype=float)
    ok = []
    for w in omegas:
        lmax = int(math.ceil(3 * (N + gamma) / w)) + 1
        k = (np.arange(lmax + 1) + 1) // 2  # p_l = l with multiplicity two
        if parity == "odd":
            k = k[k % 2 == 1]
        elif parity == "even":
            k = k[k % 2 == 0]
        gap = np.abs(w * k[None, :] - lam[:, None])
        ok.append(bool(np.all(gap > gamma / lam[:, None] ** tau)))
    return float(np.mean(ok))


def with_solver(cfg: SweepConfig, **changes) -> SweepConfig:
    return replace(cfg, solver=replace(cfg.solver, **changes))
