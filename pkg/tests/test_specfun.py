import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from numpy.random import PCG64, Generator

from errors import DomainError
from services.specfun import (
    DiscreteGaussian,
    ThetaArg,
    dn_cgf_Y,
    dn_cgf_Y_theta,
    dn_pmf,
    erfc,
    jacobi_theta,
    log_theta,
    log_theta_modular,
    log_theta_prime,
    modified_theta,
    modified_theta_dx,
    modified_theta_via_theta,
    scaled_erfc,
    theta,
    xi_series,
    xi_series_at_zero,
)

heights = st.floats(min_value=0.3, max_value=3.0)
reals = st.floats(min_value=-0.5, max_value=0.5)


def test_theta_at_zero_with_large_height():
    # theta(0; i h) -> 1 + 2 e^{-pi h} for large h
    h = 8.0
    assert theta(0.0, 1j * h).real == pytest.approx(1.0 + 2.0 * math.exp(-math.pi * h), rel=1e-14)


def test_theta_needs_upper_half_plane():
    with pytest.raises(DomainError):
        ThetaArg(0.0, -1j)
    with pytest.raises(DomainError):
        ThetaArg(0.0, 1.0)


@hsettings(max_examples=50, deadline=None)
@given(reals, heights)
def test_theta_quasi_periodicity(z, h):
    tau = 1j * h
    base = theta(z, tau)
    assert theta(z + 1.0, tau) == pytest.approx(base, rel=1e-12)
    shifted = theta(z + tau, tau)
    expected = cmath.exp(-1j * math.pi * tau - 2j * math.pi * z) * base
    assert abs(shifted - expected) <= 1e-10 * abs(expected)


@hsettings(max_examples=50, deadline=None)
@given(reals, heights)
def test_log_theta_consistent(z, h):
    arg = ThetaArg(z, 1j * h)
    assert log_theta(arg).real == pytest.approx(math.log(abs(jacobi_theta(arg))), abs=1e-12)
    assert log_theta_modular(arg).real == pytest.approx(log_theta(arg).real, abs=1e-10)


def test_log_theta_prime_finite_difference():
    tau, z, step = 0.8j, 0.23, 1e-6
    fd = (log_theta(ThetaArg(z + step, tau)) - log_theta(ThetaArg(z - step, tau))) / (2 * step)
    assert log_theta_prime(ThetaArg(z, tau)) == pytest.approx(fd, abs=1e-7)


def test_erfc_scaled():
    t = np.linspace(-3.0, 3.0, 13)
    np.testing.assert_allclose(scaled_erfc(t) * np.exp(-t * t), erfc(t), rtol=1e-13)
    assert float(scaled_erfc(30.0)) > 0.0


@hsettings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0),
       st.floats(min_value=0.15, max_value=0.85),
       st.floats(min_value=0.3, max_value=3.0))
def test_modified_theta_reduction(x, rho, a):
    assert modified_theta(x, rho, a) == pytest.approx(modified_theta_via_theta(x, rho, a), abs=1e-9)


def test_modified_theta_derivative():
    x, rho, a, h = 0.37, 0.4, 1.3, 1e-5
    fd = (modified_theta(x + h, rho, a) - modified_theta(x - h, rho, a)) / (2 * h)
    assert modified_theta_dx(x, rho, a) == pytest.approx(fd, abs=1e-7)


def test_modified_theta_domain():
    with pytest.raises(DomainError):
        modified_theta(0.5, 1.2, 1.0)
    with pytest.raises(DomainError):
        modified_theta(0.5, 0.5, -1.0)


@hsettings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=0.99),
       st.floats(min_value=0.15, max_value=0.85),
       st.floats(min_value=0.3, max_value=3.0))
def test_xi_closed_form_at_zero(x, rho, a):
    assert xi_series(x, 0.0, rho, a).real == pytest.approx(xi_series_at_zero(x, rho, a), abs=1e-10)


def test_xi_at_zero_reference_value():
    # at a = 1 the series is close to x
    assert xi_series(0.3, 0.0, 0.5, 1.0).real == pytest.approx(0.3, abs=1e-3)
    assert xi_series_at_zero(0.3, 0.5, 1.0) == pytest.approx(xi_series(0.3, 0.0, 0.5, 1.0).real, abs=1e-12)


def test_xi_is_conjugate_symmetric_in_phi():
    left = xi_series(0.3, 0.7, 0.5, 1.2)
    right = xi_series(0.3, -0.7, 0.5, 1.2)
    assert left == pytest.approx(right.conjugate(), abs=1e-13)


class TestDiscreteGaussian:
    def test_normalized(self):
        d = DiscreteGaussian(0.3, 0.2)
        k = d.support()
        assert float(np.sum(d.pmf(k))) == pytest.approx(1.0, abs=1e-14)
        assert dn_pmf(d, 0) > dn_pmf(d, 2)

    def test_integer_center_is_mean(self):
        d = DiscreteGaussian(2.0, 0.4)
        assert d.mean() == pytest.approx(2.0, abs=1e-12)
        assert d.variance() > 0.0

    def test_variance_matches_cgf_curvature(self):
        d = DiscreteGaussian(0.25, 0.3)
        h = 1e-4
        second = (d.cgf_Y(1.0, h) - 2 * d.cgf_Y(1.0, 0.0) + d.cgf_Y(1.0, -h)) / h ** 2
        assert second == pytest.approx(d.variance(), rel=1e-5)

    def test_cgf_vanishes_at_zero(self):
        d = DiscreteGaussian(0.7, 0.5)
        assert dn_cgf_Y(d, 1.5, 0.0) == 0.0
        assert dn_cgf_Y(d, 0.0, 2.0) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            DiscreteGaussian(0.0, 1.0)
        with pytest.raises(DomainError):
            DiscreteGaussian(0.0, 0.0)

    @hsettings(max_examples=60, deadline=None)
    @given(st.floats(min_value=-1.0, max_value=1.0),
           st.floats(min_value=0.05, max_value=0.6),
           st.floats(min_value=-2.0, max_value=2.0),
           st.floats(min_value=-2.0, max_value=2.0))
    def test_cgf_poisson_summation(self, alpha, u, c, t):
        direct = DiscreteGaussian(alpha, u).cgf_Y(c, t)
        assert direct == pytest.approx(dn_cgf_Y_theta(alpha, u, c, t), abs=1e-9)

    def test_sample_frequencies(self):
        d = DiscreteGaussian(0.4, 0.3)
        draws = d.sample(Generator(PCG64(5)), 20000)
        for k in (0, 1):
            assert float(np.mean(draws == k)) == pytest.approx(dn_pmf(d, k), abs=0.02)
