"""The forced Kirchhoff map F(u) = L_w u - mu f(u) - mu g and its pieces.

With u = sum_j u_j(t) phi_j(x) and -Delta phi_j = lambda_j^2 phi_j:

    (L_w u)_j = w^2 u_j'' + lambda_j^2 u_j
    f(u)_j    = -lambda_j^2 u_j(t) a(t),   a(t) = sum_k lambda_k^2 u_k(t)^2

so f is cubic, f(u) = A[u, u, u], and keeps every spatial truncation
invariant. All products are exact; ``m_work`` is the harmonic cap of the
result and must be at least three times the input bandwidth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np

from .basis import DomainSpec
from .errors import AliasingBudgetExceeded, DomainError
from .field import (Field, NormParams, eigen_embed, gradient_energy, gradient_pairing, laplacian,
                    sigma_s_norm, time_multiply)


@dataclass(frozen=True, eq=False)
class ProblemData:
    domain: DomainSpec
    g: Field
    omega: float
    mu: float
    gamma: float
    tau: float
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.g.domain != self.domain:
            raise DomainError("forcing field lives on a different domain")
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if not self.tau > self.domain.dimension:
            raise DomainError(f"tau must exceed the dimension {self.domain.dimension}, got {self.tau}")
        upper = 1.0 if self.domain.is_torus else float(self.g.modes.lambdas[0])
        if not 0 < self.gamma < upper:
            raise DomainError(f"gamma must lie in (0, {upper:g}), got {self.gamma}")

    def replace(self, **changes) -> "ProblemData":
        kw = dict(domain=self.domain, g=self.g, omega=self.omega, mu=self.mu,
                  gamma=self.gamma, tau=self.tau, meta=self.meta)
        kw.update(changes)
        return ProblemData(**kw)

    def space_time_mean(self) -> float:
        """(2pi)^-(d+1) int g dx dt; only the constant torus mode contributes."""
        if not self.domain.is_torus:
            return float("nan")
        d = self.domain.dimension
        return float(self.g.coeffs[0, 0].real) * (2 * math.pi) ** (-d / 2)

    def to_json(self) -> dict:
        return {"domain": self.domain.to_json(), "omega": self.omega, "mu": self.mu,
                "gamma": self.gamma, "tau": self.tau, "forcing": self.g.to_json()}

    @classmethod
    def from_json(cls, data: dict) -> "ProblemData":
        g = Field.from_json(data["forcing"])
        return cls(DomainSpec.from_json(data["domain"]), g, float(data["omega"]),
                   float(data["mu"]), float(data["gamma"]), float(data["tau"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _check_budget(m_work: int | None, *fields: Field) -> int:
    need = 3 * max(f.bandwidth for f in fields)
    if m_work is None:
        return need
    if m_work < need:
        raise AliasingBudgetExceeded(
            f"working cap {m_work} is below 3 x input bandwidth = {need}")
    return int(m_work)


def apply_dalembert(omega: float, u: Field) -> Field:
    k2 = np.arange(u.M + 1) ** 2
    symbol = u.lambdas[:, None] ** 2 - omega ** 2 * k2[None, :]
    return u.with_coeffs(symbol * u.coeffs)


def apply_f(u: Field, m_work: int | None = None) -> Field:
    """f(u) = Delta u int |grad u|^2 dx."""
    m_work = _check_budget(m_work, u)
    a = gradient_energy(u, 2 * u.bandwidth)
    return laplacian(time_multiply(a, u, m_work))


def apply_f_prime(u: Field, h: Field, m_work: int | None = None) -> Field:
    """f'(u)[h] = Delta h int |grad u|^2 + 2 Delta u int grad u . grad h."""
    m_work = _check_budget(m_work, u, h)
    mid = u.bandwidth + h.bandwidth
    a = gradient_energy(u, 2 * u.bandwidth)
    b = gradient_pairing(u, h, mid)
    return laplacian(time_multiply(a, h, m_work) + 2.0 * time_multiply(b, u, m_work))


def quadratic_remainder(u: Field, h: Field, m_work: int | None = None) -> Field:
    """Q(u, h) = f(u+h) - f(u) - f'(u)[h], evaluated from its explicit expansion."""
    m_work = _check_budget(m_work, u, h)
    mid = u.bandwidth + h.bandwidth
    eh = gradient_energy(h, 2 * h.bandwidth)
    b = gradient_pairing(u, h, mid)
    inner = 2.0 * b + eh
    return laplacian(time_multiply(eh, u, m_work) + time_multiply(inner, h, m_work))


def residual(pd: ProblemData, u: Field, m_work: int | None = None) -> Field:
    """F(u) = L_w u - mu f(u) - mu g."""
    m_work = _check_budget(m_work, u)
    g = pd.g
    if g.modes != u.modes:
        # work on whichever table is larger
        if g.modes.cutoff > u.modes.cutoff:
            u = eigen_embed(u, g.modes)
        else:
            g = eigen_embed(g, u.modes)
    m_out = max(m_work, g.M, u.M)
    Lu = apply_dalembert(pd.omega, u).resized(m_out)
    fu = apply_f(u, m_work).resized(m_out)
    return Lu - pd.mu * fu - pd.mu * g.resized(m_out)


def residual_norm(pd: ProblemData, u: Field, sigma: float = 0.0) -> float:
    """The stopping metric ||F(u)||_{sigma, tau-1}."""
    return sigma_s_norm(residual(pd, u), NormParams(sigma, pd.tau - 1))


class Direction(str, Enum):
    PHYSICAL_TO_SCALED = "PhysicalToScaled"
    SCALED_TO_PHYSICAL = "ScaledToPhysical"


def convert_scaling(value: float, direction, u: Field | None = None):
    """Convert between the physical amplitude eps and the scaled mu = eps^(2/3).

    PhysicalToScaled maps (eps, u_phys) to (mu, eps^(-1/3) u_phys);
    ScaledToPhysical maps (mu, u_scaled) to (eps, eps^(1/3) u_scaled).
    """
    direction = Direction(direction)
    if not value > 0:
        raise DomainError(f"amplitude must be positive, got {value}")
    if direction is Direction.PHYSICAL_TO_SCALED:
        eps = value
        out = eps ** (2.0 / 3.0)
        factor = eps ** (-1.0 / 3.0)
    else:
        eps = value ** 1.5
        out = eps
        factor = eps ** (1.0 / 3.0)
    return out, (None if u is None else u * factor)
