import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from errors import ConfigError, DomainError
from models import LambdaSpec, PotentialSpec
from services.potential import (
    BumpFunction,
    ConstantFunction,
    PerturbedPotential,
    PlateauFunction,
    RadialPotential,
    RadialProfile,
    TabulatedPotential,
    ZeroFunction,
    build_potential,
    build_test_function,
    eval_perturbed,
    eval_q,
    laplacian,
)


def test_ginibre_laplacian_is_one(ginibre):
    r = np.array([0.1, 0.5, 1.0, 2.0])
    np.testing.assert_allclose(laplacian(ginibre, r), 1.0, rtol=1e-14)
    np.testing.assert_allclose(ginibre.mass_function(r), r ** 2, rtol=1e-14)


def test_sextic_laplacian_closed_form(sextic):
    r = np.linspace(0.05, 2.5, 40)
    expected = 1.8 - 3.2 * r ** 2 + 0.9 * r ** 4
    np.testing.assert_allclose(sextic.laplacian(r), expected, rtol=1e-12, atol=1e-12)
    # generic formula from q' and q''
    np.testing.assert_allclose(RadialProfile.laplacian(sextic, r), expected, rtol=1e-10, atol=1e-10)


def test_laplacian_derivatives_match_finite_differences(sextic):
    r, h = 1.3, 1e-5
    fd1 = (sextic.laplacian(r + h) - sextic.laplacian(r - h)) / (2 * h)
    fd2 = (sextic.laplacian_dr(r + h) - sextic.laplacian_dr(r - h)) / (2 * h)
    assert float(sextic.laplacian_dr(r)) == pytest.approx(float(fd1), abs=1e-7)
    assert float(sextic.laplacian_d2r(r)) == pytest.approx(float(fd2), abs=1e-7)


def test_radius_domain(sextic):
    with pytest.raises(DomainError):
        eval_q(sextic, -0.5)
    with pytest.raises(DomainError):
        laplacian(sextic, 0.0)
    with pytest.raises(DomainError):
        eval_q(sextic, float("nan"))


def test_zero_coefficients_rejected():
    with pytest.raises(ConfigError):
        RadialPotential([0.0, 0.0])


def test_growth(sextic, ginibre):
    assert sextic.check_growth()
    assert ginibre.check_growth()


def test_tabulated_ginibre(tmp_path):
    r = np.linspace(0.0, 3.0, 301)
    path = tmp_path / "q.csv"
    pd.DataFrame({"r": r, "q": r ** 2}).to_csv(path, index=False)
    p = build_potential(PotentialSpec(table=path))
    assert isinstance(p, TabulatedPotential)
    assert p.reduced_precision
    assert float(p.laplacian(0.7)) == pytest.approx(1.0, abs=1e-5)
    assert float(p.q(1.234)) == pytest.approx(1.234 ** 2, abs=1e-10)


def test_tabulated_needs_columns(tmp_path):
    path = tmp_path / "bad.csv"
    pd.DataFrame({"x": np.arange(10.0), "y": np.arange(10.0)}).to_csv(path, index=False)
    with pytest.raises(ConfigError):
        TabulatedPotential.from_csv(path)


def test_bump_support_and_peak():
    bump = BumpFunction(0.2, 0.8, height=2.0)
    assert float(bump(0.5)) == pytest.approx(2.0)
    np.testing.assert_array_equal(bump(np.array([0.0, 0.2, 0.8, 1.5])), 0.0)
    assert bump.knots() == (0.2, 0.8)


@hsettings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.25, max_value=0.75))
def test_bump_derivatives_property(r):
    bump = BumpFunction(0.2, 0.8)
    h = 1e-6
    fd = (float(bump(r + h)) - float(bump(r - h))) / (2 * h)
    assert float(bump.d1(r)) == pytest.approx(fd, abs=1e-5)
    fd2 = (float(bump.d1(r + h)) - float(bump.d1(r - h))) / (2 * h)
    assert float(bump.d2(r)) == pytest.approx(fd2, abs=1e-3)


def test_plateau_poly():
    f = PlateauFunction("poly", [1.0, 2.0], (0.2, 1.0), (0.4, 0.8), smoothness=6)
    assert float(f(0.6)) == pytest.approx(1.0 + 2.0 * 0.6)
    assert float(f(0.1)) == 0.0 and float(f(1.2)) == 0.0
    # C^1 across the plateau knot
    h = 1e-7
    assert float(f(0.4 - h)) == pytest.approx(float(f(0.4 + h)), abs=1e-6)
    assert float(f.d1(0.4 - h)) == pytest.approx(float(f.d1(0.4 + h)), abs=1e-4)
    assert f.knots() == (0.2, 0.4, 0.8, 1.0)


def test_plateau_log():
    f = PlateauFunction("log", [0.5, 1.0], (0.1, 2.0), (0.5, 1.5))
    assert float(f(1.0)) == pytest.approx(0.5)
    assert float(f.d1(1.0)) == pytest.approx(1.0)


def test_plateau_must_sit_inside_support():
    with pytest.raises(ConfigError):
        PlateauFunction("poly", [1.0], (0.2, 1.0), (0.1, 0.8))


def test_perturbed_potential(sextic):
    bump = BumpFunction(0.1, 0.9)
    pp = PerturbedPotential(sextic, bump, s=2.0, n=10)
    r = 0.5
    assert float(eval_perturbed(pp, r)) == pytest.approx(float(sextic.q(r)) - 2.0 * float(bump(r)) / 10)
    assert float(pp.laplacian(r)) == pytest.approx(float(sextic.laplacian(r)) - 2.0 * float(bump.laplacian(r)) / 10)
    assert float(pp.with_strength(0.0).q(r)) == pytest.approx(float(sextic.q(r)))
    with pytest.raises(DomainError):
        PerturbedPotential(sextic, bump, 1.0, 0)


def test_build_test_function():
    assert isinstance(build_test_function(None), ZeroFunction)
    const = build_test_function(LambdaSpec(kind="const", height=2.5))
    assert isinstance(const, ConstantFunction)
    assert float(const(3.0)) == 2.5
    bump = build_test_function(LambdaSpec(kind="bump", support=(0.1, 0.5)))
    assert isinstance(bump, BumpFunction)
    poly = build_test_function(LambdaSpec(kind="poly", support=(0.0, 1.0), coeffs=[0.0, 1.0]))
    assert float(poly(0.5)) == pytest.approx(0.5)
    assert math.isclose(float(ZeroFunction().laplacian(0.3)), 0.0)
