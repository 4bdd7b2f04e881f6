"""Coefficient-space fields u(x, t) = sum_j u_j(t) phi_j(x).

Each time profile u_j is a real trigonometric polynomial stored by its
complex Fourier coefficients c_k, k = 0..M (c_{-k} = conj(c_k) is implied).
The H^1 norm is the sequence norm sum_k (1 + k^2) |c_k|^2 over k = -M..M.

Products are computed exactly by sampling on a grid fine enough to avoid
aliasing and transforming back, then truncated to the requested number of
harmonics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .basis import DomainSpec, ModeTable, enumerate_modes

#: H^1(T) algebra constant of the sequence norm: ||ab|| <= K_ALG ||a|| ||b||.
#: Equals sqrt(sup_k (1+k^2) sum_m 1/((1+m^2)(1+(k-m)^2))); the sup is the
#: k -> infinity limit 2 pi coth(pi) (checked in tests/test_field.py).
K_ALG = math.sqrt(2 * math.pi / math.tanh(math.pi))


# --------------------------------------------------------------------------
# raw coefficient helpers (arrays of shape (..., M+1))

def _clean(c: np.ndarray) -> np.ndarray:
    c = np.array(c, dtype=complex)
    c[..., 0] = c[..., 0].real
    return c


def _resize(c: np.ndarray, M: int) -> np.ndarray:
    have = c.shape[-1] - 1
    if have == M:
        return c
    if have > M:
        return c[..., : M + 1]
    out = np.zeros(c.shape[:-1] + (M + 1,), dtype=complex)
    out[..., : have + 1] = c
    return out


def bandwidth(c: np.ndarray) -> int:
    """Highest harmonic carrying a nonzero coefficient (0 for the zero profile)."""
    c = np.asarray(c)
    nz = np.nonzero(np.any(c.reshape(-1, c.shape[-1]) != 0, axis=0))[0]
    return int(nz[-1]) if len(nz) else 0


def grid_size(M: int) -> int:
    """Number of samples that resolves trigonometric polynomials of degree M exactly."""
    return next_fast_len(2 * M + 2, real=True)


def to_grid(c: np.ndarray, P: int) -> np.ndarray:
    """Samples at t_m = 2 pi m / P of the profiles in ``c``."""
    M = c.shape[-1] - 1
    if 2 * M >= P:
        raise ValueError(f"grid of {P} points cannot resolve {M} harmonics")
    X = np.zeros(c.shape[:-1] + (P // 2 + 1,), dtype=complex)
    X[..., : M + 1] = c
    return irfft(X, n=P, axis=-1) * P


def from_grid(y: np.ndarray, M: int) -> np.ndarray:
    P = y.shape[-1]
    c = _resize(rfft(y, axis=-1) / P, M)
    c[..., 0] = c[..., 0].real
    return c


def h1_sq(c: np.ndarray) -> np.ndarray:
    """Squared sequence H^1 norm along the last axis."""
    k = np.arange(c.shape[-1])
    w = 2.0 * (1.0 + k ** 2)
    w[0] = 1.0
    return (np.abs(c) ** 2 * w).sum(axis=-1)


def l2_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(1/2pi) int a b dt along the last axis."""
    M = min(a.shape[-1], b.shape[-1])
    prod = (a[..., :M] * np.conj(b[..., :M])).real
    return prod[..., 0] + 2 * prod[..., 1:].sum(axis=-1)


# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeProfile:
    """Real 2 pi-periodic trigonometric polynomial."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _clean(np.atleast_1d(self.coeffs))
        if c.ndim != 1:
            raise ValueError("TimeProfile coefficients must be one-dimensional")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, M: int = 0) -> "TimeProfile":
        return cls(np.zeros(M + 1))

    @classmethod
    def constant(cls, value: float, M: int = 0) -> "TimeProfile":
        c = np.zeros(M + 1)
        c[0] = value
        return cls(c)

    @classmethod
    def from_trig(cls, cos=(), sin=(), const: float = 0.0, M: int | None = None) -> "TimeProfile":
        """const + sum_k cos[k-1] cos(kt) + sin[k-1] sin(kt)."""
        cos = np.asarray(cos, dtype=float)
        sin = np.asarray(sin, dtype=float)
        n = max(len(cos), len(sin))
        M = n if M is None else M
        c = np.zeros(max(M, n) + 1, dtype=complex)
        c[0] = const
        c[1: len(cos) + 1] += cos / 2
        c[1: len(sin) + 1] += -1j * sin / 2
        return cls(c[: M + 1])

    @property
    def M(self) -> int:
        return len(self.coeffs) - 1

    @property
    def bandwidth(self) -> int:
        return bandwidth(self.coeffs)

    def full(self) -> np.ndarray:
        """Coefficients for k = -M..M."""
        c = self.coeffs
        return np.concatenate([np.conj(c[:0:-1]), c])

    def cos_sin(self):
        """(const, cos coefficients, sin coefficients) for harmonics 1..M."""
        c = self.coeffs
        return c[0].real, 2 * c[1:].real, -2 * c[1:].imag

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.arange(1, self.M + 1)
        c = self.coeffs
        phase = np.multiply.outer(t, k)
        return c[0].real + 2 * (np.exp(1j * phase) @ c[1:]).real

    def resized(self, M: int) -> "TimeProfile":
        return TimeProfile(_resize(self.coeffs, M))

    def derivative(self, order: int = 1) -> "TimeProfile":
        k = np.arange(self.M + 1)
        return TimeProfile(self.coeffs * (1j * k) ** order)

    def __add__(self, other: "TimeProfile") -> "TimeProfile":
        M = max(self.M, other.M)
        return TimeProfile(_resize(self.coeffs, M) + _resize(other.coeffs, M))

    def __sub__(self, other: "TimeProfile") -> "TimeProfile":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "TimeProfile":
        return TimeProfile(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "TimeProfile":
        return self * -1.0

    def allclose(self, other: "TimeProfile", atol: float = 1e-14) -> bool:
        M = max(self.M, other.M)
        return bool(np.max(np.abs(_resize(self.coeffs, M) - _resize(other.coeffs, M)), initial=0) <= atol)


def h1_norm(y: TimeProfile) -> float:
    return float(math.sqrt(h1_sq(y.coeffs)))


def multiply_profiles(a: TimeProfile, b: TimeProfile, Mout: int) -> TimeProfile:
    """Exact product of two trigonometric polynomials, truncated to |k| <= Mout."""
    Ma, Mb = a.bandwidth, b.bandwidth
    P = grid_size(Ma + Mb)
    y = to_grid(_resize(a.coeffs, Ma), P) * to_grid(_resize(b.coeffs, Mb), P)
    return TimeProfile(_resize(from_grid(y, Ma + Mb), Mout))


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NormParams:
    sigma: float = 0.0
    s: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and math.isfinite(self.s)):
            raise ValueError("norm parameters must be finite")
        if self.sigma < 0 or self.s < 0:
            raise ValueError("sigma and s must be nonnegative")


@dataclass(frozen=True, eq=False)
class Field:
    """Profiles of every mode of ``modes`` stored as an (n_modes, M+1) array."""

    modes: ModeTable
    coeffs: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        c = _clean(self.coeffs)
        if c.ndim != 2 or c.shape[0] != len(self.modes):
            raise ValueError(f"coefficient array of shape {c.shape} does not match "
                             f"{len(self.modes)} modes")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, modes: ModeTable, M: int, sigma: float = 0.0) -> "Field":
        return cls(modes, np.zeros((len(modes), M + 1), dtype=complex), sigma)

    @classmethod
    def from_profiles(cls, modes: ModeTable, profiles: dict, M: int | None = None,
                      sigma: float = 0.0) -> "Field":
        """Build from {j: TimeProfile}; absent modes are zero."""
        if M is None:
            M = max((p.M for p in profiles.values()), default=0)
        c = np.zeros((len(modes), M + 1), dtype=complex)
        for j, p in profiles.items():
            c[modes.row(j)] = _resize(p.coeffs, M)
        return cls(modes, c, sigma)

    @property
    def domain(self) -> DomainSpec:
        return self.modes.domain

    @property
    def M(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def bandwidth(self) -> int:
        return bandwidth(self.coeffs)

    @property
    def lambdas(self) -> np.ndarray:
        return self.modes.lambdas

    def profile(self, j: int) -> TimeProfile:
        return TimeProfile(self.coeffs[self.modes.row(j)])

    @property
    def profiles(self) -> dict:
        """Nonzero profiles keyed by mode index."""
        rows = np.nonzero(np.any(self.coeffs != 0, axis=1))[0]
        first = self.domain.first_index
        return {int(r) + first: TimeProfile(self.coeffs[r]) for r in rows}

    def support(self) -> np.ndarray:
        """Mode indices with a nonzero profile."""
        rows = np.nonzero(np.any(self.coeffs != 0, axis=1))[0]
        return rows + self.domain.first_index

    def with_coeffs(self, coeffs: np.ndarray) -> "Field":
        return Field(self.modes, coeffs, self.sigma)

    def resized(self, M: int) -> "Field":
        return self.with_coeffs(_resize(self.coeffs, M))

    def norm(self, s: float = 0.0, sigma: float | None = None) -> float:
        return sigma_s_norm(self, NormParams(self.sigma if sigma is None else sigma, s))

    def _align(self, other: "Field"):
        if other.modes is not self.modes and other.modes != self.modes:
            raise ValueError("fields live on different mode tables")
        M = max(self.M, other.M)
        return _resize(self.coeffs, M), _resize(other.coeffs, M)

    def __add__(self, other: "Field") -> "Field":
        a, b = self._align(other)
        return self.with_coeffs(a + b)

    def __sub__(self, other: "Field") -> "Field":
        a, b = self._align(other)
        return self.with_coeffs(a - b)

    def __mul__(self, scalar: float) -> "Field":
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self * -1.0

    def max_abs_diff(self, other: "Field") -> float:
        a, b = self._align(other)
        return float(np.max(np.abs(a - b), initial=0.0))

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        modes = []
        for r in np.nonzero(np.any(self.coeffs != 0, axis=1))[0]:
            c = self.coeffs[r]
            modes.append({
                "j": int(r) + self.domain.first_index,
                "label": [int(v) for v in self.modes.labels[r]],
                "lambda": float(self.modes.lambdas[r]),
                "coeffs": [[float(v.real), float(v.imag)] for v in c],
            })
        return {"domain": self.domain.to_json(), "sigma": self.sigma,
                "cutoff": self.modes.cutoff, "M": self.M, "modes": modes}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict, modes: ModeTable | None = None) -> "Field":
        domain = DomainSpec.from_json(data["domain"])
        if modes is None:
            cutoff = data.get("cutoff")
            if cutoff is None:
                cutoff = max((m["lambda"] for m in data["modes"]), default=1.0)
            modes = enumerate_modes(domain, max(float(cutoff), 1.0))
        M = data.get("M")
        if M is None:
            M = max((len(m["coeffs"]) - 1 for m in data["modes"]), default=0)
        c = np.zeros((len(modes), M + 1), dtype=complex)
        for m in data["modes"]:
            r = modes.row(modes.find(m["label"]))
            vals = np.array([complex(re, im) for re, im in m["coeffs"]])
            c[r, : len(vals)] = vals[: M + 1]
        return cls(modes, c, float(data.get("sigma", 0.0)))

    @classmethod
    def loads(cls, text: str, modes: ModeTable | None = None) -> "Field":
        return cls.from_json(json.loads(text), modes)


def mode_weights(lambdas: np.ndarray, p: NormParams) -> np.ndarray:
    """lambda^(2s) e^(2 sigma lambda); the constant torus mode is unweighted."""
    lam = np.asarray(lambdas, dtype=float)
    safe = np.where(lam > 0, lam, 1.0)
    w = safe ** (2 * p.s) * np.exp(2 * p.sigma * safe)
    return np.where(lam > 0, w, 1.0)


def sigma_s_norm(u: Field, p: NormParams) -> float:
    return float(math.sqrt((h1_sq(u.coeffs) * mode_weights(u.lambdas, p)).sum()))


def project(u: Field, N: float) -> Field:
    """Zero every profile whose lambda exceeds N."""
    if not N > 0:
        raise ValueError("projection cutoff must be positive")
    keep = u.lambdas <= N * (1 + 1e-12)
    return u.with_coeffs(np.where(keep[:, None], u.coeffs, 0))


def harmonic_project(u: Field, M: int, parity: str = "full") -> Field:
    """Truncate to harmonics <= M and keep only the given parity class."""
    c = _resize(u.coeffs, M).copy()
    if parity != "full":
        c[:, parity_mask(M + 1, parity) == 0] = 0
    return u.with_coeffs(c)


def parity_mask(n: int, parity: str) -> np.ndarray:
    k = np.arange(n)
    if parity == "odd":
        return (k % 2 == 1).astype(float)
    if parity == "even":
        return (k % 2 == 0).astype(float)
    return np.ones(n)


def laplacian(u: Field) -> Field:
    return u.with_coeffs(-u.lambdas[:, None] ** 2 * u.coeffs)


# --------------------------------------------------------------------------
# Kirchhoff pairings: int grad u . grad h dx = sum_j lambda_j^2 u_j(t) h_j(t)

def _active_rows(*arrays) -> np.ndarray:
    mask = np.zeros(arrays[0].shape[0], dtype=bool)
    for c in arrays:
        mask |= np.any(c != 0, axis=1)
    return np.nonzero(mask)[0]


def gradient_pairing(u: Field, h: Field, Mout: int) -> TimeProfile:
    cu, ch = u._align(h)
    rows = _active_rows(cu)
    rows = rows[np.isin(rows, _active_rows(ch))]
    if len(rows) == 0:
        return TimeProfile.zeros(Mout)
    Mu, Mh = bandwidth(cu[rows]), bandwidth(ch[rows])
    P = grid_size(Mu + Mh)
    lam2 = u.lambdas[rows] ** 2
    yu = to_grid(_resize(cu[rows], Mu), P)
    yh = to_grid(_resize(ch[rows], Mh), P)
    a = (lam2[:, None] * yu * yh).sum(axis=0)
    return TimeProfile(_resize(from_grid(a, Mu + Mh), Mout))


def gradient_energy(u: Field, Mout: int) -> TimeProfile:
    """a(t) = int |grad u|^2 dx = sum_j lambda_j^2 u_j(t)^2."""
    return gradient_pairing(u, u, Mout)


def time_multiply(a: TimeProfile, u: Field, Mout: int) -> Field:
    """The field a(t) u(x, t), truncated to Mout harmonics."""
    rows = _active_rows(u.coeffs)
    out = np.zeros((len(u.modes), Mout + 1), dtype=complex)
    if len(rows) and np.any(a.coeffs != 0):
        Ma, Mu = a.bandwidth, bandwidth(u.coeffs[rows])
        P = grid_size(Ma + Mu)
        y = to_grid(_resize(a.coeffs, Ma), P) * to_grid(_resize(u.coeffs[rows], Mu), P)
        out[rows] = _resize(from_grid(y, Ma + Mu), Mout)
    return Field(u.modes, out, u.sigma)


def eigen_embed(u: Field, modes: ModeTable) -> Field:
    """The same function expressed on another mode table of the same domain.

    Modes of ``u`` missing from ``modes`` must carry zero profiles.
    """
    if modes is u.modes or modes == u.modes:
        return u
    if modes.domain != u.domain:
        raise ValueError("cannot embed a field into a table of another domain")
    out = np.zeros((len(modes), u.M + 1), dtype=complex)
    index = {tuple(lab): r for r, lab in enumerate(modes.labels.tolist())}
    for r in np.nonzero(np.any(u.coeffs != 0, axis=1))[0]:
        key = tuple(u.modes.labels[r].tolist())
        if key not in index:
            raise ValueError(f"mode {key} is not in the target table (cutoff {modes.cutoff})")
        out[index[key]] = u.coeffs[r]
    return Field(modes, out, u.sigma)
