import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kirchhoff_nm.basis import DomainSpec, enumerate_modes
from kirchhoff_nm.errors import AliasingBudgetExceeded, DomainError
from kirchhoff_nm.field import Field, NormParams, TimeProfile, project, sigma_s_norm
from kirchhoff_nm.kirchhoff import (Direction, ProblemData, apply_dalembert, apply_f, apply_f_prime,
                                    convert_scaling, quadratic_remainder, residual, residual_norm)

from conftest import random_field, single_mode_forcing


def cos_t():
    return TimeProfile.from_trig([1.0])


def rel(a: Field, b: Field) -> float:
    M = max(a.M, b.M)
    d = np.max(np.abs(a.resized(M).coeffs - b.resized(M).coeffs), initial=0)
    return d / max(np.max(np.abs(b.coeffs), initial=0), 1e-300)


def test_dalembert_examples(modes8):
    u = Field.from_profiles(modes8, {1: cos_t()})
    assert np.all(apply_dalembert(1.0, u).coeffs == 0)
    assert apply_dalembert(0.5, u).max_abs_diff(u * 0.75) < 1e-16
    torus = enumerate_modes(DomainSpec("torus", 1), 2)
    c = Field.from_profiles(torus, {0: TimeProfile.constant(3.0)})
    assert np.all(apply_dalembert(2.0, c).coeffs == 0)


def test_f_examples(modes8):
    c = 0.6
    u = Field.from_profiles(modes8, {1: TimeProfile.constant(c)})
    assert apply_f(u).max_abs_diff(u * -(c * c)) < 1e-15
    assert np.all(apply_f(Field.zeros(modes8, 2)).coeffs == 0)
    u = Field.from_profiles(modes8, {1: cos_t()})
    want = Field.from_profiles(modes8, {1: TimeProfile.from_trig([-0.75, 0, -0.25])})
    assert apply_f(u).max_abs_diff(want) < 1e-15


def test_aliasing_budget(modes8):
    u = Field.from_profiles(modes8, {1: TimeProfile.from_trig([0, 1.0])})
    with pytest.raises(AliasingBudgetExceeded):
        apply_f(u, m_work=5)
    assert apply_f(u, m_work=6).M == 6
    with pytest.raises(AliasingBudgetExceeded):
        apply_f_prime(u, u, m_work=4)
    with pytest.raises(AliasingBudgetExceeded):
        quadratic_remainder(u, u, m_work=4)


def test_f_prime_examples(modes8):
    rng = np.random.default_rng(0)
    u, h = random_field(rng, modes8, 3), random_field(rng, modes8, 3)
    assert np.all(apply_f_prime(Field.zeros(modes8, 3), h).coeffs == 0)
    assert rel(apply_f_prime(u, u), apply_f(u) * 3.0) < 1e-13


def test_f_prime_central_difference(modes8):
    rng = np.random.default_rng(1)
    u, h = random_field(rng, modes8, 3), random_field(rng, modes8, 3)
    exact = apply_f_prime(u, h, 9)
    errs = []
    for e in (1e-3, 1e-4):
        fd = (apply_f(u + h * e, 9) - apply_f(u - h * e, 9)) * (1 / (2 * e))
        errs.append(np.max(np.abs(fd.coeffs - exact.coeffs)))
    order = np.log10(errs[0] / errs[1])
    assert order >= 1.9


def test_quadratic_remainder_examples(modes8):
    rng = np.random.default_rng(2)
    u, h = random_field(rng, modes8, 3), random_field(rng, modes8, 3)
    zero = Field.zeros(modes8, 3)
    assert rel(quadratic_remainder(zero, h), apply_f(h)) < 1e-13
    assert np.all(quadratic_remainder(u, zero).coeffs == 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), M=st.integers(0, 4))
def test_taylor_identity(seed, M):
    rng = np.random.default_rng(seed)
    modes = enumerate_modes(DomainSpec("dirichlet_interval"), 6)
    u, h = random_field(rng, modes, M), random_field(rng, modes, M)
    lhs = apply_f(u + h)
    rhs = apply_f(u, 3 * M) + apply_f_prime(u, h) + quadratic_remainder(u, h)
    assert rel(lhs, rhs) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), s=st.floats(-3, 3))
def test_cubic_homogeneity(seed, s):
    rng = np.random.default_rng(seed)
    modes = enumerate_modes(DomainSpec("dirichlet_interval"), 5)
    u = random_field(rng, modes, 3)
    assert rel(apply_f(u * s), apply_f(u) * s ** 3) < 1e-12 or s == 0


@pytest.mark.parametrize("N", [1, 2.5, 4])
def test_f_preserves_truncation(modes8, N):
    rng = np.random.default_rng(3)
    pu = project(random_field(rng, modes8, 3), N)
    fu = apply_f(pu)
    assert project(fu, N).max_abs_diff(fu) == 0


def test_torus_constant_shift_leaves_f_unchanged():
    modes = enumerate_modes(DomainSpec("torus", 2), 2)
    rng = np.random.default_rng(4)
    u = random_field(rng, modes, 3)
    c = Field.from_profiles(modes, {0: TimeProfile.constant(2.5)}, M=3)
    assert apply_f(u + c).max_abs_diff(apply_f(u)) == 0


def test_residual_of_zero(modes8):
    g = single_mode_forcing(modes8)
    pd = ProblemData(g.domain, g, 0.5, 1e-3, 0.1, 1.5)
    assert residual(pd, Field.zeros(modes8, 1)).max_abs_diff(g * -1e-3) < 1e-18


def test_residual_first_step_gap(modes8):
    """u = mu L^-1 P_1 g leaves -mu (I - P_1) g plus a mu^4 remainder from f."""
    rng = np.random.default_rng(5)
    g = random_field(rng, modes8, 3)
    omega = 0.37  # no integer resonance for these modes and harmonics
    k2 = np.arange(4) ** 2
    symbol = modes8.lambdas[:, None] ** 2 - omega ** 2 * k2[None, :]
    gaps = []
    for mu in (1e-3, 5e-4):
        pd = ProblemData(g.domain, g, omega, mu, 0.1, 1.5)
        P1g = project(g, 1)
        u = P1g.with_coeffs(mu * P1g.coeffs / symbol)
        F = residual(pd, u)
        want = (g - P1g) * -mu
        gaps.append(sigma_s_norm(F - want.resized(F.M), NormParams()))
        assert gaps[-1] < 1e-10
    assert gaps[0] / gaps[1] == pytest.approx(16, rel=1e-6)


def test_residual_norm_uses_tau_minus_one(modes8):
    g = Field.from_profiles(modes8, {2: cos_t()})
    pd = ProblemData(g.domain, g, 0.5, 1e-2, 0.1, 2.5)
    assert residual_norm(pd, Field.zeros(modes8, 1)) == pytest.approx(1e-2 * 2 ** 1.5)


def test_problem_validation(modes8):
    g = single_mode_forcing(modes8)
    d = g.domain
    with pytest.raises(DomainError):
        ProblemData(d, g, 0.5, 1e-3, 1.0, 1.5)  # gamma must be below lambda_1 = 1
    with pytest.raises(DomainError):
        ProblemData(d, g, 0.5, 1e-3, 0.1, 1.0)  # tau must exceed d
    with pytest.raises(DomainError):
        ProblemData(d, g, -0.5, 1e-3, 0.1, 1.5)
    with pytest.raises(DomainError):
        ProblemData(DomainSpec("torus", 1), g, 0.5, 1e-3, 0.1, 1.5)


def test_problem_json_round_trip(modes8):
    g = single_mode_forcing(modes8)
    pd = ProblemData(g.domain, g, 0.5, 1e-3, 0.1, 1.5)
    back = ProblemData.from_json(pd.to_json())
    assert (back.omega, back.mu, back.gamma, back.tau) == (0.5, 1e-3, 0.1, 1.5)
    assert back.g.max_abs_diff(g) == 0


def test_space_time_mean():
    modes = enumerate_modes(DomainSpec("torus", 1), 1)
    g = Field.from_profiles(modes, {0: TimeProfile.constant(1.0)})
    # the constant eigenfunction is (2 pi)^(-1/2), so the mean is (2 pi)^(-1/2)
    pd = ProblemData(g.domain, g, 1.0, 0.1, 0.5, 1.5)
    assert pd.space_time_mean() == pytest.approx((2 * np.pi) ** -0.5)


def test_convert_scaling_examples(modes8):
    mu, _ = convert_scaling(1e-3, Direction.PHYSICAL_TO_SCALED)
    assert mu == pytest.approx(0.01, rel=1e-14)
    eps, _ = convert_scaling(0.04, "ScaledToPhysical")
    assert eps == pytest.approx(0.008, rel=1e-14)
    for e in (1e-3, 0.27, 3.0):
        back, _ = convert_scaling(convert_scaling(e, "PhysicalToScaled")[0], "ScaledToPhysical")
        assert abs(back - e) <= 1e-15 * max(1, e)
    u = Field.from_profiles(modes8, {1: cos_t()})
    _, us = convert_scaling(1e-3, "PhysicalToScaled", u)
    assert us.max_abs_diff(u * 10.0) < 1e-13
    with pytest.raises(DomainError):
        convert_scaling(0.0, "PhysicalToScaled")
