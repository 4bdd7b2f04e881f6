import numpy as np
import pytest

from kirchhoff_nm.basis import DomainSpec, enumerate_modes
from kirchhoff_nm.field import Field, TimeProfile

ACCEPTANCE_LINES = []


@pytest.fixture
def interval():
    return DomainSpec("dirichlet_interval")


@pytest.fixture
def modes8(interval):
    return enumerate_modes(interval, 8)


def random_field(rng, modes, M, n_modes=None, kmax=None, scale=1.0, decay=2.0):
    """Random real-profile field with algebraically decaying harmonics."""
    n_modes = len(modes) if n_modes is None else n_modes
    kmax = M if kmax is None else kmax
    c = np.zeros((len(modes), M + 1), dtype=complex)
    shape = (n_modes, kmax + 1)
    c[:n_modes, : kmax + 1] = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * scale
    c[:, : kmax + 1] /= (1 + np.arange(kmax + 1)) ** decay
    c[:, 0] = c[:, 0].real
    return Field(modes, c)


def random_profile(rng, M, scale=1.0):
    c = (rng.normal(size=M + 1) + 1j * rng.normal(size=M + 1)) * scale
    return TimeProfile(c)


def single_mode_forcing(modes, j=1):
    return Field.from_profiles(modes, {j: TimeProfile.from_trig([1.0])})


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_alpha(rng, harmonics=4, sup_target=None, even_only=False):
    """Random trigonometric alpha with a prescribed sup norm below 1/2."""
    from kirchhoff_nm.hill import sup_norm_estimate

    c = np.zeros(harmonics + 1, dtype=complex)
    c[1:] = rng.normal(size=harmonics) + 1j * rng.normal(size=harmonics)
    c[0] = rng.normal()
    if even_only:
        c[1::2] = 0
    p = TimeProfile(c)
    target = rng.uniform(0.05, 0.45) if sup_target is None else sup_target
    t = 2 * np.pi * np.arange(4096) / 4096
    return p * (target / np.max(np.abs(p(t))))


def linear_instance(seed, N=8.0, M=32, gamma=0.01, tau=1.5):
    """Seeded (ctx, u, h) for oracle comparisons: small u, random h, non-resonant omega."""
    from kirchhoff_nm.errors import NonResonanceViolated
    from kirchhoff_nm.linsolve import build_context, invert_D

    rng = np.random.default_rng(seed)
    modes = enumerate_modes(DomainSpec("dirichlet_interval"), N)
    while True:
        omega = float(rng.uniform(0.3, 2.5))
        mu = float(10 ** rng.uniform(-3, -1))
        u = random_field(rng, modes, M, n_modes=3, kmax=4, scale=0.05)
        h = random_field(rng, modes, M, kmax=6)
        ctx = build_context(omega, mu, u, N, gamma, tau, M)
        try:
            invert_D(ctx, h)
        except NonResonanceViolated:
            continue
        return ctx, u, h


def collocation_single_mode(omega, mu, n=256, tol=1e-15, max_iter=100):
    """Periodic collocation of w^2 v'' + v (1 + mu v^2) = mu cos t by damped Newton.

    Independent of the package: FFT differentiation matrix on n points and a
    dense Jacobian. Newton steps are kept in the half-wave symmetric class
    v(t + pi) = -v(t) (odd harmonics), which the forcing and the cubic term
    preserve; at w = 1/2 the even harmonic cos 2t is exactly resonant and the
    full-space Jacobian is nearly singular there. Returns (t, v).
    """
    t = 2 * np.pi * np.arange(n) / n
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = -(k ** 2)
    if n % 2 == 0:
        k2[n // 2] = -((n // 2) ** 2)
    D2 = np.real(np.fft.ifft(k2[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0))
    rhs = mu * np.cos(t)

    def res(v):
        return omega ** 2 * D2 @ v + v * (1 + mu * v * v) - rhs

    v = rhs / (1 - omega ** 2)
    r = res(v)
    for _ in range(max_iter):
        J = omega ** 2 * D2 + np.diag(1 + 3 * mu * v * v)
        step = np.linalg.solve(J, -r)
        step = 0.5 * (step - np.roll(step, n // 2))  # odd-harmonic part
        damp = 1.0
        while damp > 1e-4:
            trial = v + damp * step
            rt = res(trial)
            if np.linalg.norm(rt) < np.linalg.norm(r) or np.linalg.norm(rt) < tol:
                break
            damp /= 2
        v, r = trial, rt
        if np.max(np.abs(r)) < tol:
            break
    return t, v
