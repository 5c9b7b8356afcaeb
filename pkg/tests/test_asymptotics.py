import cmath
import math

import numpy as np
import pytest

from errors import AngleCoincidence, Divergence, DomainError, ModeMismatch
from services.asymptotics import (
    cgf_coefficients_analytic,
    cgf_prediction,
    cgf_predict_radial,
    circle_mean,
    dirichlet_energy,
    edge_local_correction,
    edge_point,
    edge_t,
    expected_mean,
    oscillation_law,
    predict_bulk,
    predict_density_gap_inner,
    predict_density_gap_outer_edge,
    predict_density_outer_boundary,
    predict_two_point,
    szego_exterior,
    szego_gap,
    theta_argument,
    theta_term_via_xi,
)
from services.droplet import gap_state, solve_droplet
from services.kernel import build_weight_table, one_point, two_point
from services.potential import BumpFunction, ConstantFunction, PerturbedPotential, RadialPotential, ZeroFunction
from services.statistics import exact_cgf_product


def test_edge_point_round_trip():
    z = edge_point(0.8, 1.3, -1.7, 250, angle=0.4)
    assert cmath.phase(z) == pytest.approx(0.4)
    assert edge_t(0.8, 1.3, z, 250) == pytest.approx(-1.7)


class TestOuterBoundary:
    def test_ginibre_edge_at_zero(self, ginibre_geometry):
        n = 100
        prediction = predict_density_outer_boundary(ginibre_geometry, 0.0, n)
        assert prediction.leading == pytest.approx(n / 2)
        assert prediction.components["curvature"] == pytest.approx(-math.sqrt(n / (2 * math.pi)) / 3)
        assert prediction.components["normal_derivative"] == pytest.approx(0.0, abs=1e-12)
        assert prediction.total == pytest.approx(prediction.leading + prediction.subleading)

    @pytest.mark.parametrize("t", [-1.0, 0.0, 0.5, 1.5])
    def test_ginibre_edge_against_exact(self, ginibre, ginibre_geometry, t):
        n = 100
        pp = PerturbedPotential(ginibre, None, 0.0, n)
        table = build_weight_table(pp)
        z = edge_point(1.0, 1.0, t, n)
        exact = one_point(pp, table, z)
        assert exact == pytest.approx(predict_density_outer_boundary(ginibre_geometry, t, n).total, abs=0.5)

    def test_t_beyond_log_n(self, ginibre_geometry):
        with pytest.raises(DomainError):
            predict_density_outer_boundary(ginibre_geometry, 5.0, 100)


class TestGapEdges:
    def test_theta_term_via_xi(self, sextic_gap):
        for n in (50, 101, 333):
            state = gap_state(sextic_gap, n)
            parts = predict_density_gap_inner(sextic_gap, state, 0.0).components
            pre = math.sqrt(n * sextic_gap.dq1) / (math.sqrt(2 * math.pi) * sextic_gap.r1)
            bracket = (parts["laplacian_ratio"] + parts["theta"]) / pre
            assert theta_term_via_xi(sextic_gap, state) == pytest.approx(bracket, abs=1e-10)

    def test_inner_and_outer_are_mirrors(self, sextic_gap):
        state = gap_state(sextic_gap, 100)
        inner = predict_density_gap_inner(sextic_gap, state, 0.0)
        outer = predict_density_gap_outer_edge(sextic_gap, state, 0.0)
        ratio = (inner.components["theta"] / inner.components["laplacian_ratio"])
        assert outer.components["theta"] / outer.components["laplacian_ratio"] == pytest.approx(ratio)
        assert inner.leading == pytest.approx(100 * sextic_gap.dq1 / 2)
        assert outer.leading == pytest.approx(100 * sextic_gap.dq2 / 2)

    def test_perturbation_shifts_theta_argument(self, sextic_gap):
        state = gap_state(sextic_gap, 100)
        lam = BumpFunction(0.1, 0.5)
        shifted = theta_argument(sextic_gap, state, 1.0, lam)
        expected = state.alpha + float(lam(sextic_gap.r1)) / (2 * sextic_gap.log_ratio)
        assert shifted == pytest.approx(expected)
        assert theta_argument(sextic_gap, state) == pytest.approx(state.alpha)

    @pytest.mark.slow
    @pytest.mark.parametrize("edge", ["r1", "r2"])
    def test_gap_edges_against_exact(self, sextic, sextic_gap, edge):
        n = 100
        state = gap_state(sextic_gap, n)
        pp = PerturbedPotential(sextic, None, 0.0, n)
        table = build_weight_table(pp, None, window_C=4.0)
        for t in (-1.0, 0.0, 1.0):
            if edge == "r1":
                z = edge_point(sextic_gap.r1, sextic_gap.dq1, t, n)
                predicted = predict_density_gap_inner(sextic_gap, state, t).total
            else:
                z = edge_point(sextic_gap.r2, sextic_gap.dq2, t, n)
                predicted = predict_density_gap_outer_edge(sextic_gap, state, t).total
            assert abs(one_point(pp, table, z) - predicted) <= 2.5

    def test_edge_local_correction(self, sextic_gap):
        y = np.linspace(-1.0, 1.0, 5)
        values = edge_local_correction(sextic_gap, 1, y, 0.3, 0.4)
        assert values.shape == y.shape
        assert np.all(np.isfinite(values))
        with pytest.raises(DomainError):
            edge_local_correction(sextic_gap, 3, y, 0.0, 0.0)


class TestBulk:
    def test_ginibre_bulk(self, ginibre, ginibre_geometry):
        assert predict_bulk(ginibre, ginibre_geometry, 0.3, 100) == pytest.approx(100.0)
        with pytest.raises(DomainError):
            predict_bulk(ginibre, ginibre_geometry, 0.99, 100)

    def test_quartic_bulk_against_exact(self):
        # q = r^2 + r^4, Laplacian 1 + 4 r^2, droplet radius sqrt(1/2)
        p = RadialPotential([1.0, 1.0])
        geometry = solve_droplet(p)
        n, r = 200, 0.3
        pp = PerturbedPotential(p, None, 0.0, n)
        exact = one_point(pp, build_weight_table(pp), r)
        assert exact / predict_bulk(p, geometry, r, n) == pytest.approx(1.0, abs=0.02)

    def test_gap_is_not_bulk(self, sextic, sextic_geometry, sextic_gap):
        with pytest.raises(DomainError):
            predict_bulk(sextic, sextic_geometry, math.sqrt(sextic_gap.r1 * sextic_gap.r2), 100)


class TestSzego:
    def test_exterior_closed_form(self, ginibre_geometry):
        z, w = 2.0, cmath.rect(1.5, 0.3)
        prod = z * w.conjugate()
        expected = 1.0 / (2 * math.pi * (prod - 1.0))
        assert szego_exterior(ginibre_geometry, z, w, weighted=False) == pytest.approx(expected)
        with pytest.raises(Divergence):
            szego_exterior(ginibre_geometry, 0.5, 0.5)
        with pytest.raises(AngleCoincidence):
            szego_exterior(ginibre_geometry, 1.0, 1.0)

    def test_gap_kernel_hermitian(self, sextic_gap):
        state = gap_state(sextic_gap, 100)
        z = cmath.rect(0.6, 0.2)
        w = cmath.rect(1.2, -0.5)
        assert szego_gap(sextic_gap, state, z, w) == pytest.approx(szego_gap(sextic_gap, state, w, z).conjugate())

    def test_gap_kernel_on_inner_circle(self, sextic_gap):
        state = gap_state(sextic_gap, 100)
        z = cmath.rect(sextic_gap.r1, 0.0)
        with pytest.raises(AngleCoincidence):
            szego_gap(sextic_gap, state, z, z)
        assert np.isfinite(abs(szego_gap(sextic_gap, state, z, cmath.rect(sextic_gap.r1, 1.0))))

    def test_gap_kernel_diverges_outside(self, sextic_gap):
        state = gap_state(sextic_gap, 100)
        with pytest.raises(Divergence):
            szego_gap(sextic_gap, state, 0.1, 0.1)


class TestTwoPoint:
    def test_mode_mismatch(self, sextic, sextic_gap):
        n = 200
        state = gap_state(sextic_gap, n)
        far = cmath.rect(1.0, 0.0)
        with pytest.raises(ModeMismatch):
            predict_two_point(sextic_gap, state, far, sextic_gap.r2, mode="r1r2")
        with pytest.raises(ModeMismatch):
            predict_two_point(sextic_gap, state, 0.8, 0.81, mode="general", p=sextic)
        with pytest.raises(ModeMismatch):
            predict_two_point(sextic_gap, state, sextic_gap.r1, sextic_gap.r2, mode="diagonal")

    @pytest.mark.slow
    def test_r1r2_against_exact(self, sextic, sextic_gap):
        n = 200
        state = gap_state(sextic_gap, n)
        z = edge_point(sextic_gap.r1, sextic_gap.dq1, 0.0, n, 0.0)
        w = edge_point(sextic_gap.r2, sextic_gap.dq2, 0.0, n, 1.0)
        pp = PerturbedPotential(sextic, None, 0.0, n)
        exact = two_point(pp, build_weight_table(pp, None, window_C=4.0), z, w).as_complex()
        predicted = predict_two_point(sextic_gap, state, z, w, mode="r1r2")
        assert abs(exact - predicted) / abs(predicted) < 0.3

    @pytest.mark.slow
    def test_r1r1_against_exact(self, sextic, sextic_gap):
        n = 200
        state = gap_state(sextic_gap, n)
        z = edge_point(sextic_gap.r1, sextic_gap.dq1, 0.0, n, 0.0)
        w = edge_point(sextic_gap.r1, sextic_gap.dq1, 0.0, n, 1.0)
        pp = PerturbedPotential(sextic, None, 0.0, n)
        exact = two_point(pp, build_weight_table(pp, None, window_C=4.0), z, w).as_complex()
        predicted = predict_two_point(sextic_gap, state, z, w, mode="r1r1")
        assert abs(exact - predicted) / abs(predicted) < 0.5

    @pytest.mark.slow
    def test_general_against_exact(self, sextic, sextic_gap):
        n = 200
        state = gap_state(sextic_gap, n)
        inset = 0.1 * (sextic_gap.r2 - sextic_gap.r1)
        z = cmath.rect(sextic_gap.r1 + inset, 0.0)
        w = cmath.rect(sextic_gap.r2 - inset, 1.0)
        pp = PerturbedPotential(sextic, None, 0.0, n)
        exact = two_point(pp, build_weight_table(pp, None, window_C=4.0), z, w).as_complex()
        predicted = predict_two_point(sextic_gap, state, z, w, mode="general", p=sextic)
        assert abs(exact - predicted) / abs(predicted) < 0.5


class TestFluctuations:
    def test_circle_mean(self):
        assert circle_mean(lambda z: np.abs(z) ** 2, 2.0) == pytest.approx(4.0)
        assert circle_mean(lambda z: np.real(z), 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_ginibre_coefficients(self, ginibre, ginibre_geometry):
        bump = BumpFunction(0.2, 0.8)
        coeffs = cgf_coefficients_analytic(bump, ginibre_geometry, ginibre)
        assert coeffs.e == pytest.approx(0.0, abs=1e-12)
        assert coeffs.v == pytest.approx(dirichlet_energy(bump, 1.0), rel=1e-8)
        assert coeffs.v > 0.0

    def test_constant_function_has_no_fluctuation(self, ginibre, ginibre_geometry):
        coeffs = cgf_coefficients_analytic(ConstantFunction(3.0), ginibre_geometry, ginibre)
        assert coeffs.v == pytest.approx(0.0, abs=1e-12)

    def test_no_gap_prediction_is_gaussian(self, ginibre, ginibre_geometry):
        bump = BumpFunction(0.2, 0.8)
        prediction = cgf_prediction(bump, ginibre, ginibre_geometry, 50)
        assert prediction.oscillation(1.0) == 0.0
        assert prediction(0.7) == pytest.approx(0.5 * 0.49 * prediction.v)
        assert cgf_predict_radial(bump, ginibre, ginibre_geometry, 50, 0.0) == 0.0

    def test_ginibre_cgf_against_product(self, ginibre, ginibre_geometry):
        bump = BumpFunction(0.2, 0.8)
        n, t = 50, 0.5
        exact = exact_cgf_product(bump, ginibre, n, t, ginibre_geometry)
        assert exact == pytest.approx(cgf_predict_radial(bump, ginibre, ginibre_geometry, n, t), abs=0.2)

    def test_oscillation_law(self, sextic_gap):
        lam = BumpFunction(0.1, 0.5)
        state = gap_state(sextic_gap, 80)
        law, c = oscillation_law(sextic_gap, state, lam)
        assert law.u == pytest.approx(sextic_gap.u)
        assert law.alpha == pytest.approx(state.alpha)
        assert c == pytest.approx(float(lam(sextic_gap.r1)))

    def test_gap_prediction_carries_oscillation(self, sextic, sextic_geometry):
        lam = BumpFunction(0.5 * sextic_geometry.gap.r1, 1.0)
        prediction = cgf_prediction(lam, sextic, sextic_geometry, 100)
        law, c = oscillation_law(sextic_geometry.gap, gap_state(sextic_geometry.gap, 100), lam)
        assert prediction.oscillation(0.8) == pytest.approx(law.cgf_Y(c, 0.8))
        assert prediction.n == 100

    def test_expected_mean_without_perturbation(self, ginibre, ginibre_geometry):
        bump = BumpFunction(0.2, 0.8)
        assert expected_mean(bump, ginibre, ginibre_geometry, 50) == pytest.approx(0.0, abs=1e-12)
        zero = expected_mean(ZeroFunction(), ginibre, ginibre_geometry, 50)
        assert zero == 0.0
