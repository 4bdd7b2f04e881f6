"""Nash-Moser iteration for F(u) = L_w u - mu f(u) - mu g = 0.

Stage n of the iteration:

1. stop if ||F(u_n)||_{sigma, tau-1} < residual_tol;
2. screen the small divisors |w p_l - lambda_j| > gamma / lambda_j^tau for
   lambda_j <= N_{n+1} = min(exp(chi^(n+1)), N_cap), with p_l the Hill
   spectrum of the weight 1 + mu a_n (p_l = l exactly at stage 0);
3. solve F'(u_n) h = -P_{n+1} F(u_n) inside the truncated space and set
   u_{n+1} = u_n + h.

Only the harmonic class of the forcing (odd or even harmonics) is
propagated when the forcing lies in one: f is cubic, so both classes are
invariant, and divisors of the other class never enter.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field, replace

import numpy as np

from .basis import enumerate_modes
from .errors import (ConfigError, MeanNotZero, NeumannDiverging, NonResonanceViolated,
                     SpectrumTooShort, WeightNotPositive)
from .field import Field, NormParams, TimeProfile, eigen_embed, parity_mask, project, sigma_s_norm
from .hill import free_spectrum, solve_hill
from .kirchhoff import ProblemData, residual
from .linsolve import (LinearizedContext, ResonanceReport, build_context, check_nonresonance,
                       invert_linearized, l_max_for)


# --------------------------------------------------------------------------
# parameters and results

@dataclass(frozen=True)
class SolverParams:
    sigma: float = 0.0
    s0: float = 2.5
    s1: float = 2.2
    tau: float | None = None  # overrides the problem's tau when set
    gamma: float | None = None  # overrides the problem's gamma when set
    chi: float = 1.3
    n_max: int = 12
    N_cap: float = 64.0
    M_time: int = 64
    residual_tol: float = 1e-12
    neumann_tol: float = 1e-15
    parity: str = "auto"
    confirm: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 1 < self.chi < 2:
            raise ConfigError(f"chi must lie in (1, 2), got {self.chi}")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.residual_tol <= 0 or self.neumann_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.n_max < 0:
            raise ConfigError("n_max must be >= 0")
        if self.N_cap < 1:
            raise ConfigError("N_cap must be >= 1")
        if self.M_time < 1:
            raise ConfigError("M_time must be >= 1")
        if self.parity not in ("auto", "full", "odd", "even"):
            raise ConfigError(f"unknown parity {self.parity!r}")

    @classmethod
    def defaults_for(cls, d: int, **kw) -> "SolverParams":
        """Regularity indices satisfying s0 > 2d and 1 + d < s1 < 1 + s0/2."""
        base = dict(s0=2 * d + 0.5, s1=d + 1.2)
        base.update(kw)
        return cls(**base)

    def validate_for(self, d: int):
        if not self.s0 > 2 * d:
            raise ConfigError(f"s0 = {self.s0} must exceed 2d = {2 * d}")
        if not 1 + d < self.s1 < 1 + self.s0 / 2:
            raise ConfigError(f"s1 = {self.s1} must lie in ({1 + d}, {1 + self.s0 / 2})")

    def cutoff(self, n: int) -> float:
        """N_n = exp(chi^n), saturated at N_cap."""
        e = self.chi ** n
        return self.N_cap if e > math.log(self.N_cap) else min(math.exp(e), self.N_cap)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    n: int
    N: float
    h_norm: float
    u_norm: float
    residual: float
    min_margin: float
    neumann_terms: int
    wall_ms: float
    h_lambda_max: float = 0.0  # largest lambda_j carrying a nonzero correction


@dataclass
class IterationTrace:
    records: list = dc_field(default_factory=list)
    seed: int | None = None
    residual_history: list = dc_field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "N", "h_norm", "u_norm", "residual", "min_margin", "neumann_terms",
                    "h_lambda_max", "wall_ms"])
        for r in self.records:
            w.writerow([r.n, repr(r.N), repr(r.h_norm), repr(r.u_norm), repr(r.residual),
                        repr(r.min_margin), r.neumann_terms, repr(r.h_lambda_max), f"{r.wall_ms:.3f}"])
        return buf.getvalue()

    def h_norms(self) -> np.ndarray:
        return np.array([r.h_norm for r in self.records])


CONVERGED = "Converged"
RESONANCE = "ResonanceRejected"
NEUMANN = "NeumannRejected"
BUDGET = "BudgetExhausted"


@dataclass
class SolveOutcome:
    status: str
    solution: Field | None
    trace: IterationTrace
    stage: int | None = None
    offender: tuple | None = None
    final_residual: float | None = None
    report: ResonanceReport | None = None
    message: str = ""

    def __post_init__(self):
        if (self.solution is not None) != (self.status == CONVERGED):
            raise ValueError("a solution is present exactly when the run converged")

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_json(self) -> dict:
        off = None
        if self.offender is not None:
            j, l, gap = self.offender
            off = {"j": int(j), "l": int(l), "gap": float(gap)}
        return {"status": self.status, "stage": self.stage, "offender": off,
                "final_residual": self.final_residual, "message": self.message,
                "steps": len(self.trace)}


# --------------------------------------------------------------------------
# helpers

def forcing_class(g: Field) -> str:
    """'odd' or 'even' if g only carries harmonics of that parity, else 'full'."""
    c = g.coeffs
    odd = np.any(c[:, 1::2] != 0)
    even = np.any(c[:, 0::2] != 0)
    if odd and not even:
        return "odd"
    if even and not odd:
        return "even"
    return "full"


def _class_of(params: SolverParams, g: Field) -> str:
    return forcing_class(g) if params.parity == "auto" else params.parity


def _norm(u: Field, sigma: float, s: float) -> float:
    return sigma_s_norm(u, NormParams(sigma, max(s, 0.0)))


def _residual_norm(pd: ProblemData, u: Field, sigma: float) -> float:
    return _norm(residual(pd, u), sigma, pd.tau - 1)


def _working_problem(pd: ProblemData, params: SolverParams) -> ProblemData:
    """Problem re-embedded on the solver's mode table and harmonic cap."""
    changes = {}
    if params.gamma is not None:
        changes["gamma"] = params.gamma
    if params.tau is not None:
        changes["tau"] = params.tau
    cutoff = max(params.N_cap, pd.g.modes.cutoff)
    modes = pd.g.modes if pd.g.modes.cutoff >= cutoff else enumerate_modes(pd.domain, cutoff)
    g = eigen_embed(pd.g, modes)
    if g.bandwidth > params.M_time:
        raise ConfigError(f"forcing carries harmonic {g.bandwidth} above M_time = {params.M_time}")
    changes["g"] = g.resized(params.M_time)
    return pd.replace(**changes)


def _screen(ctx: LinearizedContext, pd: ProblemData, N: float, exact: bool, parity: str) -> ResonanceReport:
    lmax = l_max_for(N, pd.gamma, pd.omega)
    if exact:
        ctx.spectrum = free_spectrum(lmax)
    else:
        split = True if parity != "full" else None
        ctx.spectrum = solve_hill(ctx.alpha.resized(min(ctx.alpha.M, 2 * lmax)), lmax, 2 * lmax,
                                  vectors=False, split=split)
    return check_nonresonance(ctx, pd.gamma, pd.tau, N, parity)


# --------------------------------------------------------------------------
# the iteration

def _iterate(pd: ProblemData, params: SolverParams, parity: str) -> SolveOutcome:
    trace = IterationTrace(seed=params.seed)
    M = params.M_time
    sig = params.sigma
    u = Field.zeros(pd.g.modes, M, sig)
    for n in range(params.n_max + 1):
        t0 = time.perf_counter()
        F = residual(pd, u)
        rn = _norm(F, sig, pd.tau - 1)
        trace.residual_history.append(rn)
        if rn < params.residual_tol:
            return SolveOutcome(CONVERGED, u, trace, stage=n, final_residual=rn)
        N = params.cutoff(n + 1)
        ctx = build_context(pd.omega, pd.mu, u, N, pd.gamma, pd.tau, M, parity)
        exact = not np.any(ctx.a.coeffs != 0)
        try:
            report = _screen(ctx, pd, N, exact, parity)
        except WeightNotPositive as exc:
            return SolveOutcome(NEUMANN, None, trace, stage=n, final_residual=rn, message=str(exc))
        if not report.satisfied:
            return SolveOutcome(RESONANCE, None, trace, stage=n, offender=report.offender,
                                final_residual=rn, report=report,
                                message=f"non-resonance fails at cutoff {N:.4g}")
        stats = {}
        rhs = -1.0 * project(F, N)
        try:
            h = invert_linearized(ctx, u, rhs, contraction_tol=params.neumann_tol, stats=stats)
        except NonResonanceViolated as exc:
            return SolveOutcome(RESONANCE, None, trace, stage=n, offender=(exc.j, exc.l, exc.gap),
                                final_residual=rn, report=report, message=str(exc))
        except (NeumannDiverging, SpectrumTooShort) as exc:
            return SolveOutcome(NEUMANN, None, trace, stage=n, final_residual=rn, report=report,
                                message=str(exc))
        u = u + h.resized(M)
        live = np.any(h.coeffs != 0, axis=1)
        top = float(h.lambdas[live].max()) if live.any() else 0.0
        trace.records.append(StepRecord(n, N, _norm(h, sig, 0), _norm(u, sig, pd.tau + 1), rn,
                                        report.min_margin, stats.get("terms", 0),
                                        1e3 * (time.perf_counter() - t0), top))
    rn = _residual_norm(pd, u, sig)
    trace.residual_history.append(rn)
    if rn < params.residual_tol:
        return SolveOutcome(CONVERGED, u, trace, stage=params.n_max + 1, final_residual=rn)
    return SolveOutcome(BUDGET, None, trace, stage=params.n_max, final_residual=rn,
                        message=f"residual {rn:.3g} after {params.n_max + 1} stages")


def _confirm(pd: ProblemData, params: SolverParams, out: SolveOutcome, solver) -> SolveOutcome:
    """Re-solve with twice the harmonics; the residuals must agree."""
    if not (params.confirm and out.converged):
        return out
    twice = replace(params, M_time=2 * params.M_time, confirm=False)
    other = solver(pd, twice)
    if not other.converged:
        return SolveOutcome(BUDGET, None, out.trace, stage=out.stage, final_residual=out.final_residual,
                            message=f"confirmation run with M_time = {twice.M_time} ended as {other.status}")
    diff = abs(other.final_residual - out.final_residual)
    if diff >= 10 * params.residual_tol:
        return SolveOutcome(BUDGET, None, out.trace, stage=out.stage, final_residual=out.final_residual,
                            message=f"residual moved by {diff:.3g} when doubling M_time")
    return out


def solve_dirichlet(pd: ProblemData, params: SolverParams = SolverParams()) -> SolveOutcome:
    if pd.domain.is_torus:
        raise ConfigError("solve_dirichlet needs a Dirichlet domain; use solve_periodic")
    params.validate_for(pd.domain.dimension)
    work = _working_problem(pd, params)
    out = _iterate(work, params, _class_of(params, work.g))
    return _confirm(pd, params, out, solve_dirichlet)


def solve_periodic(pd: ProblemData, params: SolverParams = SolverParams()) -> SolveOutcome:
    """Split u = y(t) + w: y solves w^2 y'' = mu g_0 exactly, w the rest."""
    if not pd.domain.is_torus:
        raise ConfigError("solve_periodic needs a torus domain")
    params.validate_for(pd.domain.dimension)
    mean = pd.space_time_mean()
    if abs(mean) > 1e-12:
        raise MeanNotZero(f"space-time mean of the forcing is {mean:.3g}")
    work = _working_problem(pd, params)
    zero = work.g.modes.row(0)
    g0 = work.g.coeffs[zero]
    k = np.arange(len(g0))
    y = np.zeros_like(g0)
    y[1:] = -work.mu * g0[1:] / (work.omega ** 2 * k[1:] ** 2)
    gw = work.g.coeffs.copy()
    gw[zero] = 0
    w_problem = work.replace(g=work.g.with_coeffs(gw))
    out = _iterate(w_problem, params, _class_of(params, w_problem.g))
    if out.converged:
        c = np.array(out.solution.coeffs)
        c[zero] = y[: c.shape[1]]
        u = out.solution.with_coeffs(c)
        out.solution = u
        out.final_residual = _residual_norm(work, u, params.sigma)
    return _confirm(pd, params, out, solve_periodic)


def solve(pd: ProblemData, params: SolverParams = SolverParams()) -> SolveOutcome:
    return solve_periodic(pd, params) if pd.domain.is_torus else solve_dirichlet(pd, params)


def zero_mode_profile(u: Field) -> TimeProfile:
    return u.profile(0)


# --------------------------------------------------------------------------
# diagnostics

def fit_decay(trace: IterationTrace, mu: float, gamma: float, chi: float):
    """Fit ||h_k|| <= K (mu/gamma) exp(-b chi^k) over the recorded steps.

    b comes from a least-squares line of log ||h_k|| against chi^k; K is then
    the smallest constant making the envelope hold at every step.
    Returns (b, K); b is nan with fewer than two nonzero steps.
    """
    h = trace.h_norms()
    k = np.arange(1, len(h) + 1)
    keep = h > 0
    if keep.sum() < 2:
        return math.nan, math.nan
    x = chi ** k[keep]
    y = np.log(h[keep] * gamma / mu)
    slope, _ = np.polyfit(x, y, 1)
    b = -slope
    K = float(np.max(np.exp(y + b * x)))
    return float(b), K


def newton_rate_ok(residuals, power: float = 1.5, C: float = 1.0, below: float = 1e-2) -> bool:
    """||F_{n+1}|| <= C ||F_n||^power for every step that starts below ``below``."""
    r = list(residuals)
    for a, b in zip(r, r[1:]):
        if 0 < a < below and b > C * a ** power:
            return False
    return True


def constraint_admits_b(b: float, chi: float, tau: float, s0: float) -> bool:
    """Whether b(2 - chi) > tau + 1 and tau - 1 + b chi < s0 hold together."""
    return b * (2 - chi) > tau + 1 and tau - 1 + b * chi < s0


@dataclass
class VerificationReport:
    coefficient_residual: float
    pointwise_residual: float
    norm_ratio: float
    dtt_ratio: float

    def to_json(self) -> dict:
        return asdict(self)


def _space_points(domain, nx: int) -> np.ndarray:
    axes = []
    for L in domain.lengths:
        if domain.is_torus:
            axes.append(L * np.arange(nx) / nx)
        else:
            axes.append(L * (np.arange(nx) + 0.5) / nx)
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def pointwise_residual(omega: float, coupling: float, forcing_scale: float, g: Field, u: Field,
                       grid=(16, 64)) -> float:
    """max |w^2 u_tt - Delta u - c Delta u int |grad u|^2 - s g| on a collocation grid.

    Eigenfunctions are evaluated in closed form and profiles by Fourier
    synthesis; the gradient energy is formed pointwise in time.
    """
    from .basis import eigenfunctions

    nx, nt = grid
    g = eigen_embed(g, u.modes)
    x = _space_points(u.domain, nx)
    t = 2 * np.pi * np.arange(nt) / nt
    phi = eigenfunctions(u.modes, x)  # (P, n)

    def synth(c):  # (n, K) -> (nt, n)
        return np.stack([TimeProfile(row)(t) for row in c], axis=1)

    lam2 = u.lambdas ** 2
    ut = synth(u.coeffs)
    utt = synth(u.coeffs * -(np.arange(u.M + 1) ** 2))
    a = (ut ** 2 * lam2).sum(axis=1)
    lap = (-ut * lam2) @ phi.T  # (nt, P)
    R = omega ** 2 * (utt @ phi.T) - lap - coupling * lap * a[:, None] - forcing_scale * (synth(g.coeffs) @ phi.T)
    return float(np.max(np.abs(R)))


def verify_solution(pd: ProblemData, u: Field, grid=(16, 64), s1: float = 2.2,
                    sigma: float | None = None) -> VerificationReport:
    """Residual of the equation in coefficient space and on a collocation grid."""
    sig = u.sigma if sigma is None else sigma
    coef = _residual_norm(pd, u, sig)
    point = pointwise_residual(pd.omega, pd.mu, pd.mu, pd.g, u, grid)
    dtt = u.with_coeffs(u.coeffs * -(np.arange(u.M + 1) ** 2))
    return VerificationReport(coef, point, _norm(u, sig, s1) * pd.gamma / pd.mu,
                              _norm(dtt, sig, s1 - 2) * pd.gamma * pd.omega ** 2 / pd.mu)


def _random_direction(u: Field, rng, parity: str, n_modes: int = 4, n_harm: int = 6) -> Field:
    c = np.zeros_like(u.coeffs)
    lam = u.lambdas
    rows = np.nonzero(lam > 0)[0][:n_modes]
    K = min(n_harm, u.M)
    c[rows, : K + 1] = rng.normal(size=(len(rows), K + 1)) + 1j * rng.normal(size=(len(rows), K + 1))
    c[:, 0] = c[:, 0].real
    c *= parity_mask(c.shape[1], parity)[None, :]
    return u.with_coeffs(c)


def newton_from(pd: ProblemData, v: Field, params: SolverParams, parity: str,
                max_steps: int = 30) -> Field | None:
    """Plain Newton at the fixed cutoff N_cap, no screening schedule."""
    M = params.M_time
    for _ in range(max_steps):
        F = residual(pd, v)
        if _norm(F, params.sigma, pd.tau - 1) < params.residual_tol:
            return v
        ctx = build_context(pd.omega, pd.mu, v, params.N_cap, pd.gamma, pd.tau, M, parity)
        try:
            h = invert_linearized(ctx, v, -1.0 * project(F, params.N_cap),
                                  contraction_tol=params.neumann_tol)
        except Exception:
            return None
        v = v + h.resized(M)
        if not np.all(np.isfinite(v.coeffs)):
            return None
    return None


def uniqueness_probe(pd: ProblemData, u_star: Field, n_perturbations: int, radius: float,
                     params: SolverParams = SolverParams(), seed: int | None = None) -> bool:
    """Newton from n random points at distance ``radius`` in ||.||_{sigma, tau+1}
    must return to u_star within 1e-8 in ||.||_{sigma, 0}."""
    if radius == 0 or n_perturbations == 0:
        return True
    work = _working_problem(pd, params)
    u_star = eigen_embed(u_star, work.g.modes).resized(params.M_time)
    parity = _class_of(params, work.g)
    rng = np.random.default_rng(params.seed if seed is None else seed)
    for _ in range(n_perturbations):
        dv = _random_direction(u_star, rng, parity)
        dv = dv * (radius / _norm(dv, params.sigma, pd.tau + 1))
        v = newton_from(work, u_star + dv, params, parity)
        if v is None or _norm(v - u_star, params.sigma, 0) >= 1e-8:
            return False
    return True
