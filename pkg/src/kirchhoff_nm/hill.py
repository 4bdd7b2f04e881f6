"""Periodic eigenproblem y'' + p^2 (1 + alpha(t)) y = 0 for a weight close to 1.

The problem is discretized by Galerkin projection on the real trigonometric
basis

    e_0 = 1/sqrt(2 pi),  c_k = cos(kt)/sqrt(pi),  s_k = sin(kt)/sqrt(pi),

ordered (e_0, c_1, s_1, c_2, s_2, ...). In this basis -y'' is diag(k^2) and
multiplication by q = 1 + alpha is a Toeplitz-plus-Hankel matrix B built from
the Fourier coefficients of q, so the eigenpairs solve A v = p^2 B v with
v^T B v = 1, i.e. int q psi^2 dt = 1.

When alpha only carries even harmonics the even-harmonic and odd-harmonic
subspaces are invariant and are solved separately; each eigenpair is tagged
with its class so callers can restrict to one of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.fft import rfft

from .errors import DiscretizationTooCoarse, DomainError, WeightNotPositive
from .field import TimeProfile, _resize

#: relative gap below which two eigenvalues are treated as one double eigenvalue
DEGENERATE_GAP = 1e-9
#: harmonics of alpha below this (relative to its largest one) are dropped
ALPHA_TRIM = 1e-17


def sup_norm_estimate(y: TimeProfile) -> float:
    """max |y| on 8 max(M, 1) equispaced samples, inflated by 1%."""
    n = 8 * max(y.M, 1)
    t = 2 * math.pi * np.arange(n) / n
    return 1.01 * float(np.max(np.abs(y(t))))


def even_harmonics_only(y: TimeProfile, tol: float = 0.0) -> bool:
    c = np.abs(y.coeffs[1::2])
    return bool(np.all(c <= tol))


# --------------------------------------------------------------------------
# assembly

def _basis_harmonics(Mdisc: int):
    """Harmonic index and kind (0 const, 1 cos, 2 sin) of every basis slot."""
    k = np.concatenate([[0], np.repeat(np.arange(1, Mdisc + 1), 2)])
    kind = np.concatenate([[0], np.tile([1, 2], Mdisc)])
    return k, kind


def mass_matrix(q: TimeProfile, Mdisc: int) -> np.ndarray:
    """B_ab = int q(t) e_a(t) e_b(t) dt over one period, exactly."""
    k, kind = _basis_harmonics(Mdisc)
    qh = _resize(q.coeffs, 2 * Mdisc)

    def Ic(m):  # int q cos(mt)
        return 2 * math.pi * qh[np.abs(m)].real

    def Is(m):  # int q sin(mt)
        return -2 * math.pi * np.sign(m) * qh[np.abs(m)].imag

    m, n = k[:, None], k[None, :]
    km, kn = kind[:, None], kind[None, :]
    B = np.zeros((len(k), len(k)))
    # the constant slot behaves like cos(0 t); only its scale differs
    cc = 0.5 * (Ic(m - n) + Ic(m + n))
    ss = 0.5 * (Ic(m - n) - Ic(m + n))
    cs = 0.5 * (Is(n + m) + Is(n - m))  # int q cos(m) sin(n)
    B = np.where((km <= 1) & (kn <= 1), cc, B)
    B = np.where((km == 2) & (kn == 2), ss, B)
    B = np.where((km <= 1) & (kn == 2), cs, B)
    B = np.where((km == 2) & (kn <= 1), cs.T, B)
    scale = np.where(kind == 0, 1 / math.sqrt(2 * math.pi), 1 / math.sqrt(math.pi))
    B *= scale[:, None] * scale[None, :]
    return B


def stiffness_diagonal(Mdisc: int) -> np.ndarray:
    k, _ = _basis_harmonics(Mdisc)
    return (k ** 2).astype(float)


def coords_to_profile(v: np.ndarray) -> np.ndarray:
    """Real basis coordinates (..., 2M+1) to complex coefficients (..., M+1)."""
    v = np.asarray(v, dtype=float)
    M = (v.shape[-1] - 1) // 2
    c = np.zeros(v.shape[:-1] + (M + 1,), dtype=complex)
    c[..., 0] = v[..., 0] / math.sqrt(2 * math.pi)
    a, b = v[..., 1::2], v[..., 2::2]
    c[..., 1:] = (a - 1j * b) / (2 * math.sqrt(math.pi))
    return c


def profile_to_coords(c: np.ndarray) -> np.ndarray:
    """Inverse of :func:`coords_to_profile`: expansion coefficients in the real basis."""
    c = np.asarray(c, dtype=complex)
    M = c.shape[-1] - 1
    v = np.zeros(c.shape[:-1] + (2 * M + 1,))
    v[..., 0] = c[..., 0].real * math.sqrt(2 * math.pi)
    v[..., 1::2] = 2 * math.sqrt(math.pi) * c[..., 1:].real
    v[..., 2::2] = -2 * math.sqrt(math.pi) * c[..., 1:].imag
    return v


def block_slots(Mdisc: int, parity: str) -> np.ndarray:
    k, _ = _basis_harmonics(Mdisc)
    if parity == "even":
        return np.nonzero(k % 2 == 0)[0]
    if parity == "odd":
        return np.nonzero(k % 2 == 1)[0]
    return np.arange(len(k))


def _trimmed(alpha: TimeProfile) -> TimeProfile:
    c = np.array(alpha.coeffs)
    big = np.max(np.abs(c), initial=0.0)
    c[np.abs(c) <= ALPHA_TRIM * big] = 0
    return TimeProfile(c)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    for i in range(V.shape[1]):
        v = V[:, i]
        tol = 1e-10 * np.max(np.abs(v))
        first = np.nonzero(np.abs(v) > tol)[0][0]
        if v[first] < 0:
            V[:, i] = -v
    return V


def _split_pairs(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Canonical basis inside numerically double eigenvalues.

    The second vector is the combination vanishing on the first coordinate
    where the pair is active; the first is its B-orthogonal partner. Both
    stay B-orthonormal because the pair is rotated by an orthogonal 2x2 map.
    """
    i = 0
    while i + 1 < len(w):
        if abs(w[i + 1] - w[i]) < DEGENERATE_GAP * max(1.0, abs(w[i])):
            pair = V[:, i:i + 2]
            mag = np.max(np.abs(pair), axis=1)
            r = np.nonzero(mag > 1e-8 * mag.max())[0][0]
            x, y = pair[r]
            nrm = math.hypot(x, y)
            rot = np.array([[x, y], [y, -x]]) / nrm
            V[:, i:i + 2] = pair @ rot
            i += 2
        else:
            i += 1
    return V


def _solve_block(A: np.ndarray, B: np.ndarray, slots: np.ndarray, count: int,
                 vectors: bool, zero_mode: bool, canonical: bool = True):
    count = min(count, len(slots))
    sub = np.ix_(slots, slots)
    Ab, Bb = np.diag(A[slots]), B[sub]
    if vectors:
        w, V = sla.eigh(Ab, Bb, subset_by_index=[0, count - 1])
    else:
        w = sla.eigh(Ab, Bb, eigvals_only=True, subset_by_index=[0, count - 1])
        V = None
    if zero_mode:
        # the constants are the exact kernel of -y''
        w[0] = 0.0
        if vectors:
            V[:, 0] = 0.0
            V[0, 0] = 1.0 / math.sqrt(Bb[0, 0])
    if vectors:
        V = _fix_signs(_split_pairs(w, V) if canonical else V)
    return w, V


@dataclass(frozen=True, eq=False)
class HillSpectrum:
    """Lowest L+1 eigenpairs of y'' + p^2 (1 + alpha) y = 0.

    ``vectors`` holds the eigenfunctions in the real trigonometric basis,
    one row per eigenvalue (absent for eigenvalue-only solves). ``parity``
    tags each eigenfunction as "even", "odd" (harmonic class) or "mixed".
    """

    alpha: TimeProfile
    eigenvalues: np.ndarray
    L: int
    Mdisc: int
    parity: np.ndarray
    vectors: np.ndarray | None = None

    @property
    def p(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.eigenvalues, 0.0))

    @property
    def eigenfunction_coeffs(self) -> np.ndarray:
        if self.vectors is None:
            raise ValueError("spectrum was computed without eigenfunctions")
        return coords_to_profile(self.vectors)

    @property
    def eigenfunctions(self) -> list:
        return [TimeProfile(c) for c in self.eigenfunction_coeffs]

    def weight(self) -> TimeProfile:
        return TimeProfile.constant(1.0) + self.alpha

    def in_class(self, parity: str) -> np.ndarray:
        """Boolean mask of eigenpairs belonging to a harmonic class."""
        if parity == "full":
            return np.ones(len(self.eigenvalues), dtype=bool)
        if np.any(self.parity == "mixed"):
            raise DomainError(f"spectrum is not split by harmonic class; cannot restrict to {parity}")
        return self.parity == parity


def _eigensystem(alpha: TimeProfile, Mdisc: int, count: int, vectors: bool, split: bool | None,
                 canonical: bool = True):
    if sup_norm_estimate(alpha) >= 0.5:
        raise WeightNotPositive(f"sup |alpha| estimate {sup_norm_estimate(alpha):.4g} is not below 1/2")
    alpha = _trimmed(alpha)
    q = TimeProfile.constant(1.0) + alpha
    B = mass_matrix(q, Mdisc)
    A = stiffness_diagonal(Mdisc)
    if split is None:
        split = even_harmonics_only(alpha)
    n = 2 * Mdisc + 1
    if split:
        parts = []
        for cls in ("even", "odd"):
            slots = block_slots(Mdisc, cls)
            w, V = _solve_block(A, B, slots, count, vectors, zero_mode=(cls == "even"),
                                canonical=canonical)
            full = None
            if vectors:
                full = np.zeros((n, len(w)))
                full[slots] = V
            parts.append((w, full, np.full(len(w), cls)))
        w = np.concatenate([p[0] for p in parts])
        tags = np.concatenate([p[2] for p in parts])
        order = np.argsort(w, kind="stable")[:count]
        V = np.concatenate([p[1] for p in parts], axis=1)[:, order] if vectors else None
        return w[order], V, tags[order]
    w, V = _solve_block(A, B, np.arange(n), count, vectors, zero_mode=True, canonical=canonical)
    return w, V, np.full(len(w), "mixed")


def solve_hill(alpha: TimeProfile, L: int, Mdisc: int, vectors: bool = True,
               split: bool | None = None) -> HillSpectrum:
    """Lowest L+1 eigenpairs, Galerkin-discretized up to harmonic Mdisc.

    ``split`` forces (True) or forbids (False) the even/odd block solve; by
    default it is used whenever alpha has no odd harmonics.
    """
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    if Mdisc < 2 * L:
        raise DiscretizationTooCoarse(f"Mdisc = {Mdisc} is below 2 L = {2 * L}")
    w, V, tags = _eigensystem(alpha, Mdisc, L + 1, vectors, split)
    return HillSpectrum(alpha, w, L, Mdisc, tags, None if V is None else V.T.copy())


def hill_basis(alpha: TimeProfile, Mdisc: int, parity: str = "full"):
    """Complete Galerkin eigendecomposition on harmonics <= Mdisc.

    Returns (p^2, V) with V of shape (2 Mdisc + 1, n) B-orthonormal, restricted
    to the requested harmonic class. Unlike :func:`solve_hill` every discrete
    eigenpair is kept: the result diagonalizes the discrete operator exactly
    and is what the linear solver inverts with. Nearly double eigenvalues are
    left as the eigensolver returns them: rotating a pair whose eigenvalues
    differ by d would leave off-diagonal entries of size d.
    """
    n = 2 * Mdisc + 1
    if parity == "full":
        split = even_harmonics_only(_trimmed(alpha))
        w, V, tags = _eigensystem(alpha, Mdisc, n, True, split, canonical=False)
        return w, V
    if not even_harmonics_only(_trimmed(alpha)):
        raise DomainError(f"alpha has odd harmonics; the {parity} class is not invariant")
    w, V, tags = _eigensystem(alpha, Mdisc, n, True, True, canonical=False)
    keep = tags == parity
    return w[keep], V[:, keep]


# --------------------------------------------------------------------------
# weighted inner products

def weighted_l2(alpha: TimeProfile, u: TimeProfile, v: TimeProfile) -> float:
    """int u v (1 + alpha) dt over one period, computed on coefficients."""
    M = max(u.M, v.M)
    q = TimeProfile.constant(1.0) + alpha
    B = mass_matrix(q, M)
    x = profile_to_coords(_resize(u.coeffs, M))
    y = profile_to_coords(_resize(v.coeffs, M))
    return float(x @ B @ y)


def weighted_h1(alpha: TimeProfile, u: TimeProfile, v: TimeProfile) -> float:
    """int u' v' + u v (1 + alpha) dt."""
    M = max(u.M, v.M)
    x = profile_to_coords(_resize(u.coeffs, M))
    y = profile_to_coords(_resize(v.coeffs, M))
    return float((stiffness_diagonal(M) * x) @ y) + weighted_l2(alpha, u, v)


# --------------------------------------------------------------------------
# Liouville normal form, an independent route to the same eigenvalues

def _periodic_samples(y: TimeProfile, P: int) -> np.ndarray:
    t = 2 * math.pi * np.arange(P) / P
    return y(t)


def liouville_potential(alpha: TimeProfile):
    """(q, Q) with Q = -(5/16) q'^2 / q^3 + (1/4) q'' / q^2 and q = 1 + alpha.

    With xi = (1/c) int_0^t sqrt(q) and z = q^(1/4) y the weighted problem
    becomes z'' + c^2 (p^2 - Q(t(xi))) z = 0.
    """
    q = TimeProfile.constant(1.0) + alpha
    dq, ddq = q.derivative(1), q.derivative(2)

    def Q(t):
        qt = q(t)
        return -(5 / 16) * dq(t) ** 2 / qt ** 3 + 0.25 * ddq(t) / qt ** 2

    return q, Q


def liouville_oracle(alpha: TimeProfile, L: int, Mdisc: int) -> np.ndarray:
    """Eigenvalues p_0..p_L computed through the Liouville change of variable."""
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    if Mdisc < 2 * L:
        raise DiscretizationTooCoarse(f"Mdisc = {Mdisc} is below 2 L = {2 * L}")
    if sup_norm_estimate(alpha) >= 0.5:
        raise WeightNotPositive("sup |alpha| estimate is not below 1/2")
    q, Q = liouville_potential(alpha)
    # sqrt(q) is analytic; resolve it on a generous grid
    P = 16 * max(q.M, 8) + 4 * Mdisc
    r = rfft(np.sqrt(_periodic_samples(q, P))) / P
    c = r[0].real
    k = np.arange(1, len(r))
    # g(t) = t + (1/c) sum_k 2 Re(r_k e^{ikt} / (ik)) - constant
    def g(t):
        t = np.asarray(t, dtype=float)
        ph = np.exp(1j * np.multiply.outer(t, k))
        per = 2 * ((ph - 1) @ (r[1:] / (1j * k))).real
        return t + per / c

    def dg(t):
        t = np.asarray(t, dtype=float)
        ph = np.exp(1j * np.multiply.outer(t, k))
        return (r[0].real + 2 * (ph @ r[1:]).real) / c

    # invert xi = g(t) on a uniform xi grid by Newton from t = xi
    Pxi = 4 * Mdisc + 8 * max(q.M, 8)
    xi = 2 * math.pi * np.arange(Pxi) / Pxi
    t = xi.copy()
    for _ in range(100):
        step = (g(t) - xi) / dg(t)
        t -= step
        if np.max(np.abs(step)) < 1e-15:
            break
    W = c ** 2 * Q(t)
    w = np.fft.fft(W) / Pxi  # w[m] for e^{i m xi}
    n = 2 * Mdisc + 1
    m = np.arange(-Mdisc, Mdisc + 1)
    T = w[(m[:, None] - m[None, :]) % Pxi]
    H = np.diag(m.astype(float) ** 2) + T
    H = 0.5 * (H + H.conj().T)
    mu = sla.eigh(H, eigvals_only=True, subset_by_index=[0, min(L, n - 1)])
    p2 = mu / c ** 2
    return np.sqrt(np.maximum(p2, 0.0))


def free_spectrum(L: int) -> HillSpectrum:
    """Exact spectrum for alpha = 0: p = 0, 1, 1, 2, 2, ... (no eigenfunctions)."""
    l = np.arange(L + 1)
    k = (l + 1) // 2
    tags = np.where(k % 2 == 0, "even", "odd")
    return HillSpectrum(TimeProfile.zeros(), (k ** 2).astype(float), L, 2 * L, tags)
