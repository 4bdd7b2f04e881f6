"""Small-divisor screening and inversion of the linearized Kirchhoff operator.

At a point u the derivative of F splits as F'(u) = D + S with

    (D h)_j = w^2 h_j'' + lambda_j^2 (1 + mu a(t)) h_j,   a = int |grad u|^2
    S h     = -2 mu Delta u int grad u . grad h

D is diagonal in space and is diagonalized in time by the Hill eigenpairs
of the weight rho = 1 + mu a: on psi_l it acts as rho (lambda_j^2 - w^2 p_l^2).
S has finite rank in time and is handled by a Neumann series
(I + S D^-1)^-1.

All time operators are Galerkin-truncated to harmonics <= ``Mdisc``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .basis import ModeTable
from .errors import NeumannDiverging, NonResonanceViolated, SpectrumTooShort
from .field import (Field, NormParams, TimeProfile, gradient_energy, gradient_pairing,
                    harmonic_project, laplacian, parity_mask, sigma_s_norm, time_multiply, _resize)
from .hill import HillSpectrum, hill_basis, profile_to_coords, coords_to_profile

#: successive Neumann terms must shrink by at least this factor
DIVERGENCE_RATIO = 0.9
#: relative bound on ||F'(u) w - h|| checked after every inversion
CONTRACT_TOL = 1e-9


def l_max_for(N: float, gamma: float, omega: float) -> int:
    """Largest index that can violate the gap: p_l >= l/3 rules out the rest."""
    return int(math.ceil(3 * (N + gamma) / omega)) + 1


@dataclass
class ResonanceReport:
    satisfied: bool
    min_margin: float
    offender: tuple | None  # (j, l, gap)
    l_range_used: int
    cutoff_N: float
    min_gap: float = math.inf

    def to_json(self) -> dict:
        off = None
        if self.offender is not None:
            j, l, gap = self.offender
            off = {"j": int(j), "l": int(l), "gap": float(gap)}
        return {"satisfied": self.satisfied, "min_margin": float(self.min_margin),
                "offender": off, "l_range_used": self.l_range_used,
                "cutoff_N": float(self.cutoff_N), "min_gap": float(self.min_gap)}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(eq=False)
class LinearizedContext:
    """Everything the linear solves at one iterate need.

    ``spectrum`` is the screening spectrum (may be None when no screen is
    run); the inversion uses the complete Galerkin eigenbasis on harmonics
    <= Mdisc of the requested class, built lazily.
    """

    omega: float
    mu: float
    a: TimeProfile
    spectrum: HillSpectrum | None
    modes: ModeTable
    N: float
    gamma: float
    tau: float
    Mdisc: int
    parity: str = "full"
    _basis: tuple | None = dc_field(default=None, repr=False)

    @property
    def alpha(self) -> TimeProfile:
        return self.a * self.mu

    @property
    def a_h1(self) -> float:
        return float(math.sqrt(np.sum(np.abs(self.a.full()) ** 2 * (1 + np.arange(-self.a.M, self.a.M + 1) ** 2))))

    @property
    def basis(self):
        if self._basis is None:
            self._basis = hill_basis(self.alpha.resized(min(self.alpha.M, 2 * self.Mdisc)),
                                     self.Mdisc, self.parity)
        return self._basis

    def class_project(self, h: Field) -> Field:
        """Truncate to harmonics <= Mdisc, the active class and modes <= N."""
        h = harmonic_project(h, self.Mdisc, self.parity)
        keep = h.lambdas <= self.N * (1 + 1e-12)
        return h.with_coeffs(np.where(keep[:, None], h.coeffs, 0))


def build_context(omega, mu, u: Field, N: float, gamma: float, tau: float, Mdisc: int,
                  parity: str = "full", spectrum: HillSpectrum | None = None) -> LinearizedContext:
    a = gradient_energy(u, 2 * u.bandwidth)
    if parity != "full":
        # u in one harmonic class makes a(t) even; drop the round-off
        a = TimeProfile(a.coeffs * parity_mask(a.M + 1, "even"))
    return LinearizedContext(float(omega), float(mu), a, spectrum, u.modes, float(N),
                             float(gamma), float(tau), int(Mdisc), parity)


# --------------------------------------------------------------------------
# screening

def check_nonresonance(ctx: LinearizedContext, gamma: float, tau: float, N: float,
                       parity: str | None = None) -> ResonanceReport:
    """Check |w p_l - lambda_j| > gamma / lambda_j^tau for 0 < lambda_j <= N, l <= l_max.

    Only eigenvalues of the given harmonic class are checked ("full" checks
    all; by default the context's class is used).
    """
    spec = ctx.spectrum
    parity = ctx.parity if parity is None else parity
    lmax = l_max_for(N, gamma, ctx.omega)
    if spec is None or spec.L < lmax:
        have = -1 if spec is None else spec.L
        raise SpectrumTooShort(f"screen needs l <= {lmax}, spectrum has L = {have}")
    lam = ctx.modes.lambdas
    rows = np.nonzero((lam > 0) & (lam <= N * (1 + 1e-12)))[0]
    ls = np.nonzero(spec.in_class(parity)[: lmax + 1])[0]
    if len(rows) == 0 or len(ls) == 0:
        return ResonanceReport(True, math.inf, None, lmax, float(N))
    lj = lam[rows][:, None]
    gap = np.abs(ctx.omega * spec.p[ls][None, :] - lj)
    margin = gap - gamma / lj ** tau
    bad = np.argwhere(margin <= 0)
    offender = None
    if len(bad):
        r, c = bad[0]  # argwhere is row-major: smallest j first, then l
        offender = (int(ctx.modes.indices[rows[r]]), int(ls[c]), float(gap[r, c]))
    return ResonanceReport(offender is None, float(margin.min()), offender, lmax, float(N),
                           float(gap.min()))


# --------------------------------------------------------------------------
# the operators

def apply_D(ctx: LinearizedContext, z: Field) -> Field:
    """w^2 z'' + lambda^2 (1 + mu a) z, truncated to Mdisc harmonics."""
    z = z.resized(max(z.M, ctx.Mdisc))
    k2 = np.arange(z.M + 1) ** 2
    lam2 = z.lambdas[:, None] ** 2
    az = time_multiply(ctx.a, z, z.M).coeffs
    out = (lam2 - ctx.omega ** 2 * k2[None, :]) * z.coeffs + ctx.mu * lam2 * az
    return z.with_coeffs(out).resized(ctx.Mdisc)


def apply_S(ctx: LinearizedContext, u: Field, h: Field, m_out: int | None = None) -> Field:
    """S h = -2 mu Delta u int grad u . grad h; exact products truncated to m_out."""
    if m_out is None:
        m_out = 2 * u.bandwidth + h.bandwidth
    b = gradient_pairing(u, h, u.bandwidth + h.bandwidth)
    return -2.0 * ctx.mu * laplacian(time_multiply(b, u, m_out))


def invert_D(ctx: LinearizedContext, h: Field) -> Field:
    """Solve D z = h mode by mode through the weighted eigenbasis.

    With V the B-orthonormal eigenvectors (V^T B V = I, V^T A V = diag p^2) the
    discrete D_j is V^-T diag(lambda_j^2 - w^2 p^2) V^-1, so
    z_j = V diag(1 / (lambda_j^2 - w^2 p^2)) V^T h_j. Components of h outside
    the active harmonic class are discarded.
    """
    if h.bandwidth > ctx.Mdisc:
        raise SpectrumTooShort(f"h carries harmonic {h.bandwidth} above the eigenbasis span {ctx.Mdisc}")
    p2, V = ctx.basis
    c = _resize(h.coeffs, ctx.Mdisc)
    rows = np.nonzero(np.any(c != 0, axis=1))[0]
    out = np.zeros((len(h.modes), ctx.Mdisc + 1), dtype=complex)
    if len(rows) == 0:
        return Field(h.modes, out, h.sigma)
    lam = h.lambdas[rows]
    p = np.sqrt(np.maximum(p2, 0.0))
    # divisor safety check duplicating the screen
    div = lam[:, None] ** 2 - ctx.omega ** 2 * p2[None, :]
    thresh = ctx.gamma * np.where(lam > 0, lam, 1.0) ** (1 - ctx.tau)
    bad = np.abs(div) < thresh[:, None]
    bad |= (lam == 0)[:, None]
    if np.any(bad):
        r, l = np.argwhere(bad)[0]
        j = int(h.modes.indices[rows[r]])
        gap = abs(ctx.omega * p[l] - lam[r])
        raise NonResonanceViolated(f"divisor at (j={j}, l={l}) is {div[r, l]:.3g}, below {thresh[r]:.3g}",
                                   j=j, l=int(l), gap=float(gap))
    b = profile_to_coords(c[rows])  # (rows, 2M+1)
    coef = (b @ V) / div
    out[rows] = coords_to_profile(coef @ V.T)
    return Field(h.modes, out, h.sigma)


def _tau_norm(ctx: LinearizedContext, h: Field) -> float:
    return sigma_s_norm(h, NormParams(h.sigma, max(ctx.tau - 1, 0.0)))


def apply_linearized(ctx: LinearizedContext, u: Field, z: Field) -> Field:
    """(D + S) z on the Galerkin space of the context."""
    return ctx.class_project(apply_D(ctx, z) + apply_S(ctx, u, z, ctx.Mdisc))


def invert_linearized(ctx: LinearizedContext, u: Field, h: Field, max_terms: int = 200,
                      contraction_tol: float = 1e-15, stats: dict | None = None) -> Field:
    """Solve (D + S) z = h through w = sum_k (-S D^-1)^k h, z = D^-1 w.

    ``stats`` (if given) receives the number of series terms, the largest
    observed term ratio and the relative residual of the inverse contract.
    """
    h = ctx.class_project(h)
    hn = _tau_norm(ctx, h)
    info = {"terms": 0, "ratio": 0.0, "contract": 0.0}
    if stats is not None:
        stats.update(info)
    if hn == 0:
        return Field.zeros(h.modes, ctx.Mdisc, h.sigma)
    w = h
    term = h
    prev = hn
    for k in range(1, max_terms + 1):
        term = -1.0 * ctx.class_project(apply_S(ctx, u, invert_D(ctx, term), ctx.Mdisc))
        tn = _tau_norm(ctx, term)
        info["terms"] = k
        if tn == 0 or tn < contraction_tol * hn:
            w = w + term
            break
        ratio = tn / prev
        info["ratio"] = max(info["ratio"], ratio)
        if ratio >= DIVERGENCE_RATIO:
            if stats is not None:
                stats.update(info)
            raise NeumannDiverging(f"Neumann term {k} shrank only by {ratio:.3f}")
        w = w + term
        prev = tn
    else:
        raise NeumannDiverging(f"Neumann series did not reach {contraction_tol:g} in {max_terms} terms")
    z = invert_D(ctx, w)
    miss = _tau_norm(ctx, apply_linearized(ctx, u, z) - h) / hn
    info["contract"] = miss
    if stats is not None:
        stats.update(info)
    if miss > CONTRACT_TOL:
        raise NeumannDiverging(f"inverse contract failed: relative residual {miss:.3g}")
    return z


# --------------------------------------------------------------------------
# dense oracles: assemble the Galerkin matrices column by column

def _real_unknowns(n_rows: int, M: int):
    """Unit coefficient arrays for every real degree of freedom."""
    for r in range(n_rows):
        for k in range(M + 1):
            for part in ((1.0,) if k == 0 else (1.0, 1j)):
                c = np.zeros((n_rows, M + 1), dtype=complex)
                c[r, k] = part
                yield c


def _to_real(c: np.ndarray) -> np.ndarray:
    n, m1 = c.shape
    x = np.zeros((n, 2 * m1 - 1))
    x[:, 0] = c[:, 0].real
    x[:, 1::2] = c[:, 1:].real
    x[:, 2::2] = c[:, 1:].imag
    return x.ravel()


def _from_real(x: np.ndarray, n_rows: int, M: int) -> np.ndarray:
    x = x.reshape(n_rows, 2 * M + 1)
    c = np.zeros((n_rows, M + 1), dtype=complex)
    c[:, 0] = x[:, 0]
    c[:, 1:] = x[:, 1::2] + 1j * x[:, 2::2]
    return c


def dense_operator(op, modes: ModeTable, rows: np.ndarray, M: int) -> np.ndarray:
    """Real matrix of a real-linear map of fields restricted to ``rows`` x harmonics <= M."""
    n = len(rows)
    cols = []
    for c in _real_unknowns(n, M):
        full = np.zeros((len(modes), M + 1), dtype=complex)
        full[rows] = c
        out = _resize(op(Field(modes, full)).coeffs, M)[rows]
        cols.append(_to_real(out))
    return np.array(cols).T


def dense_solve(op, h: Field, rows: np.ndarray, M: int) -> Field:
    A = dense_operator(op, h.modes, rows, M)
    b = _to_real(_resize(h.coeffs, M)[rows])
    x = np.linalg.solve(A, b)
    out = np.zeros((len(h.modes), M + 1), dtype=complex)
    out[rows] = _from_real(x, len(rows), M)
    return Field(h.modes, out, h.sigma)


def dense_linearized_solve(omega: float, mu: float, u: Field, h: Field, N: float, M: int) -> Field:
    """Reference solve of P[L_w z - mu f'(u) z] = h over modes <= N and harmonics <= M.

    Built from the nonlinear-operator code only (no Hill eigenpairs).
    """
    from .kirchhoff import apply_dalembert, apply_f_prime

    rows = np.nonzero((h.lambdas > 0) & (h.lambdas <= N * (1 + 1e-12)))[0]
    def op(z):
        m = 3 * max(u.bandwidth, z.bandwidth, 1)
        return apply_dalembert(omega, z).resized(m) - mu * apply_f_prime(u, z, m)

    return dense_solve(op, h, rows, M)


def dense_D_solve(omega: float, mu: float, a: TimeProfile, h: Field, M: int) -> Field:
    """Reference per-mode solve of w^2 z'' + lambda^2 (1 + mu a) z = h."""
    rows = np.nonzero(np.any(_resize(h.coeffs, M) != 0, axis=1))[0]
    k2 = np.arange(M + 1) ** 2

    def op(z):
        lam2 = z.lambdas[:, None] ** 2
        c = _resize(z.coeffs, M)
        az = time_multiply(a, z, M).coeffs
        return z.with_coeffs((lam2 - omega ** 2 * k2[None, :]) * c + mu * lam2 * az)

    out = np.zeros((len(h.modes), M + 1), dtype=complex)
    for r in rows:
        out[r] = dense_solve(op, h, np.array([r]), M).coeffs[r]
    return Field(h.modes, out, h.sigma)
