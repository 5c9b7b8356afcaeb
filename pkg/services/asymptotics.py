"""
Closed-form large-n predictions: edge and bulk densities, weighted Szego
kernels, two-point asymptotics and fluctuation coefficients.

Edge points are parametrized as r_k + t/sqrt(2n Lap Q(r_k)). The normal
derivative of Lap Q entering the edge expansions is the derivative in the
direction of increasing t, which is +d/dr at every edge; the bulk limit of
each expansion pins this sign. The Bn/2 argument of the theta terms is
reduced to x = {Bn/2} before evaluation.
"""
import cmath
import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import quad

from config import settings
from errors import AngleCoincidence, Divergence, DomainError, ModeMismatch
from models import CgfPrediction, DropletGeometry, EdgePrediction, GapParams, NDependentGapState
from services.droplet import gap_state
from services.potential import RadialProfile, RadialTestFunction
from services.specfun import (
    LOG_TERM_TOL,
    MAX_TERMS,
    DiscreteGaussian,
    ThetaArg,
    erfc,
    log_theta_prime,
    scaled_erfc,
    xi_series,
)

logger = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
CIRCLE_POINTS = 64
ON_CIRCLE_TOL = 1e-12


def _check_t(t: float, n: int) -> None:
    if abs(t) > math.log(n):
        raise DomainError(f"|t| = {abs(t):.6g} exceeds log n = {math.log(n):.6g}")


def _lambda_pair(lam: Optional[RadialTestFunction], gp: GapParams) -> Tuple[float, float, float, float]:
    """lambda(r1), lambda(r2), lambda'(r1), lambda'(r2)"""
    if lam is None:
        return 0.0, 0.0, 0.0, 0.0
    v1, d1, _ = (float(v) for v in lam.derivatives(gp.r1))
    v2, d2, _ = (float(v) for v in lam.derivatives(gp.r2))
    return v1, v2, d1, d2


def edge_point(radius: float, dq: float, t: float, n: int, angle: float = 0.0) -> complex:
    """e^{i angle} (radius + t / sqrt(2 n Lap Q(radius)))"""
    return cmath.rect(radius + t / math.sqrt(2.0 * n * dq), angle)


def edge_t(radius: float, dq: float, z: complex, n: int) -> float:
    """Inverse of edge_point in the modulus"""
    return (abs(z) - radius) * math.sqrt(2.0 * n * dq)


def theta_argument(gp: GapParams, state: NDependentGapState, s: float = 0.0,
                   lam: Optional[RadialTestFunction] = None) -> float:
    """alpha + s (lambda(r1) - lambda(r2)) / (2 log(r2/r1))"""
    v1, v2, _, _ = _lambda_pair(lam, gp)
    return state.alpha + s * (v1 - v2) / (2.0 * gp.log_ratio)


def _log_theta_prime(gp: GapParams, argument: float) -> float:
    return log_theta_prime(ThetaArg(argument, gp.tau)).real


def _edge_terms(radius: float, dq: float, d_dq: float, t: float, n: int, sign: int) -> dict:
    """erfc, curvature and normal-derivative parts shared by all edges (sign=-1 mirrors t)"""
    prefactor = math.sqrt(n * dq) / (math.sqrt(2.0 * math.pi) * radius) * math.exp(-t * t)
    u = sign * t
    curvature = sign * (t * t - 2.0) / 6.0
    normal = radius * d_dq / dq * (0.5 * SQRT_PI * t * float(scaled_erfc(u))
                                   - sign * (2.0 * t * t + 5.0) / 12.0)
    return {
        "prefactor": prefactor,
        "erfc": n * dq * float(erfc(u)) / 2.0,
        "curvature": prefactor * curvature,
        "normal_derivative": prefactor * normal,
    }


def _edge_prediction(parts: dict, extra: dict) -> EdgePrediction:
    components = {k: v for k, v in parts.items() if k != "prefactor"}
    components.update(extra)
    leading = components["erfc"]
    subleading = float(sum(v for k, v in components.items() if k != "erfc"))
    return EdgePrediction(leading=leading, subleading=subleading, total=leading + subleading,
                          components=components)


def predict_density_gap_inner(gp: GapParams, state: NDependentGapState, t: float,
                              s: float = 0.0, lam: Optional[RadialTestFunction] = None) -> EdgePrediction:
    """One-point function at r1 + t/sqrt(2n Lap Q(r1)), to order sqrt(n)"""
    n = state.n
    _check_t(t, n)
    v1, v2, d1, _ = _lambda_pair(lam, gp)
    big_l = gp.log_ratio
    parts = _edge_terms(gp.r1, gp.dq1, gp.d_dq1, t, n, sign=1)
    pre = parts["prefactor"]
    extra = {
        "lambda": pre * 0.5 * s * (gp.r1 * d1 + (v1 - v2) / big_l),
        "laplacian_ratio": pre * math.log(gp.dq2 / gp.dq1) / (4.0 * big_l),
        "theta": pre * _log_theta_prime(gp, theta_argument(gp, state, s, lam)) / (2.0 * big_l),
    }
    return _edge_prediction(parts, extra)


def predict_density_gap_outer_edge(gp: GapParams, state: NDependentGapState, t: float,
                                   s: float = 0.0, lam: Optional[RadialTestFunction] = None) -> EdgePrediction:
    """One-point function at r2 + t/sqrt(2n Lap Q(r2)); mirror of the r1 expansion"""
    n = state.n
    _check_t(t, n)
    v1, v2, _, d2 = _lambda_pair(lam, gp)
    big_l = gp.log_ratio
    parts = _edge_terms(gp.r2, gp.dq2, gp.d_dq2, t, n, sign=-1)
    pre = parts["prefactor"]
    extra = {
        "lambda": -pre * 0.5 * s * (gp.r2 * d2 + (v1 - v2) / big_l),
        "laplacian_ratio": -pre * math.log(gp.dq2 / gp.dq1) / (4.0 * big_l),
        "theta": -pre * _log_theta_prime(gp, theta_argument(gp, state, s, lam)) / (2.0 * big_l),
    }
    return _edge_prediction(parts, extra)


def predict_density_outer_boundary(geometry: DropletGeometry, t: float, n: int) -> EdgePrediction:
    """One-point function at b_N + t/sqrt(2n Lap Q(b_N)); no theta term"""
    _check_t(t, n)
    parts = _edge_terms(geometry.outer_radius, geometry.outer_dq, geometry.outer_d_dq, t, n, sign=1)
    return _edge_prediction(parts, {})


def theta_term_via_xi(gp: GapParams, state: NDependentGapState, s: float = 0.0,
                      lam: Optional[RadialTestFunction] = None) -> float:
    """
    Xi(x, 0; rho, a(s)) - x with a(s) = e^{s(lambda(r1) - lambda(r2))} sqrt(Lap Q(r2)/Lap Q(r1)).
    Equals the sum of the lambda-gap, Laplacian-ratio and theta parts of the
    r1 bracket, summed directly from the series.
    """
    v1, v2, _, _ = _lambda_pair(lam, gp)
    a = math.exp(s * (v1 - v2)) * gp.a0
    return xi_series(state.x, 0.0, gp.rho, a).real - state.x


def edge_local_correction(gp: GapParams, k: int, y, t: float, x: float, s: float = 0.0,
                          lam: Optional[RadialTestFunction] = None):
    """
    First correction f_k(y) in |p_j(r)|^2 / c_k = sqrt(Lap Q(r_k))/r_k e^{-y^2} (1 + f_k(y)/sqrt(n)),
    y = t - l/(sqrt(n) r_k sqrt(2 Lap Q(r_k))), l = j - floor(Bn/2)
    """
    if k not in (1, 2):
        raise DomainError(f"edge index must be 1 or 2, got {k}")
    radius, dq, d_dq = (gp.r1, gp.dq1, gp.d_dq1) if k == 1 else (gp.r2, gp.dq2, gp.d_dq2)
    d_lam = float(lam.d1(radius)) if lam is not None else 0.0
    y = np.asarray(y, dtype=float)
    geometric = (-t + y - 2.0 * x * y - y * t * t + 2.0 * t * y * y - 2.0 * y ** 3 / 3.0) / radius
    slope = d_dq / dq * (t * y * y - t * t * y - y ** 3 / 3.0 + 0.5 * t - 0.5 * y)
    return (s * y * d_lam + geometric + slope) / math.sqrt(2.0 * dq)


def _boundary_distance(geometry: DropletGeometry, r: float) -> float:
    return min(abs(r - radius) for radius, _ in geometry.boundary)


def predict_bulk(p: RadialProfile, geometry: DropletGeometry, z: complex, n: int,
                 s: float = 0.0, lam: Optional[RadialTestFunction] = None) -> float:
    """n Lap Q + Lap log Lap Q / 2 - s Lap lambda, at distance >= delta_n inside the droplet"""
    r = abs(z)
    d = math.log(n) / math.sqrt(n)
    if not geometry.contains(r) or _boundary_distance(geometry, r) < d:
        raise DomainError(f"|z| = {r:.6g} is not in the bulk (collar width {d:.3g})")
    r = max(r, 1e-8 * geometry.outer_radius)
    value = n * float(p.laplacian(r)) + 0.5 * float(p.laplacian_of_log_laplacian(r))
    if lam is not None and s:
        value -= s * float(lam.laplacian(r))
    return value


def _gap_log_denominator(gp: GapParams, x: float, ells: np.ndarray) -> np.ndarray:
    power = 2.0 * ells + 1.0 - 2.0 * x
    return np.logaddexp(power * math.log(gp.r1) - 0.5 * math.log(gp.dq1),
                        power * math.log(gp.r2) - 0.5 * math.log(gp.dq2))


def _szego_interior(gp: GapParams, x: float, prod: complex) -> complex:
    log_abs = math.log(abs(prod))
    up = 2.0 * math.log(gp.r2) - log_abs
    down = log_abs - 2.0 * math.log(gp.r1)
    if up <= 0.0 or down <= 0.0:
        raise Divergence(f"|z conj(w)| = {abs(prod):.6g} outside ({gp.r1 ** 2:.6g}, {gp.r2 ** 2:.6g})")
    hi = math.ceil((-LOG_TERM_TOL + 5.0) / up) + 2
    lo = math.ceil((-LOG_TERM_TOL + 5.0) / down) + 2
    if hi + lo > MAX_TERMS:
        raise Divergence(f"Szego series needs {hi + lo} terms at |z conj(w)| = {abs(prod):.6g}")
    ells = np.arange(-lo, hi + 1)
    logs = ells * log_abs - _gap_log_denominator(gp, x, ells)
    phases = ells * cmath.phase(prod)
    shift = float(np.max(logs))
    total = np.sum(np.exp(logs - shift) * np.exp(1j * phases))
    return complex(total) * math.exp(shift) / (2.0 * math.pi)


def _szego_r1_circle(gp: GapParams, x: float, phi: float) -> complex:
    if math.isclose(math.remainder(phi, 2.0 * math.pi), 0.0, abs_tol=1e-14):
        raise AngleCoincidence("Abel-summed kernel on |z| = r1 needs distinct angles")
    pole = 1.0 / (cmath.exp(1j * phi) - 1.0)
    prefactor = math.sqrt(gp.dq1) / gp.r1 * gp.r1 ** (2.0 * x) / (2.0 * math.pi)
    return prefactor * (pole + xi_series(x, phi, gp.rho, gp.a0))


def _on_circle(value: float, radius: float) -> bool:
    return abs(value - radius) <= ON_CIRCLE_TOL * radius


def szego_gap(gp: GapParams, state: NDependentGapState, z: complex, w: complex) -> complex:
    """
    n-weighted Szego kernel of the gap; Abel-summed when z and w both lie
    on the circle |z| = r1
    """
    z, w = complex(z), complex(w)
    if _on_circle(abs(z), gp.r1) and _on_circle(abs(w), gp.r1):
        return _szego_r1_circle(gp, state.x, cmath.phase(z) - cmath.phase(w))
    return _szego_interior(gp, state.x, z * w.conjugate())


def szego_exterior(geometry: DropletGeometry, z: complex, w: complex, weighted: bool = True) -> complex:
    """
    Szego kernel of the unbounded component |z| > b_N,
    (1/2pi) sum_{l<=-1} (z conj w)^l b^{-2l-1} = b / (2pi (z conj w - b^2)),
    times sqrt(Lap Q(b_N)) when weighted
    """
    b = geometry.outer_radius
    prod = complex(z) * complex(w).conjugate()
    if abs(prod) < b * b * (1.0 - ON_CIRCLE_TOL):
        raise Divergence(f"|z conj(w)| = {abs(prod):.6g} below b_N^2 = {b * b:.6g}")
    if abs(prod - b * b) <= ON_CIRCLE_TOL * b * b:
        raise AngleCoincidence("exterior kernel on |z| = b_N needs distinct angles")
    value = b / (2.0 * math.pi * (prod - b * b))
    return value * math.sqrt(geometry.outer_dq) if weighted else value


def _mode_check(gp: GapParams, n: int, z: complex, w: complex, mode: str):
    r1, r2 = gp.r1, gp.r2
    window = math.log(n) / math.sqrt(n)
    if mode == "general":
        separation = 0.25 * (r2 - r1)
        for point in (z, w):
            r = abs(point)
            if r < r1 - window or r > r2 + window:
                raise ModeMismatch(f"|z| = {r:.6g} outside the delta_n neighbourhood of the gap")
        if abs(abs(z) - abs(w)) <= separation:
            raise ModeMismatch(f"general mode needs ||z| - |w|| > {separation:.3g}")
        return None
    targets = {"r1r2": ((r1, gp.dq1), (r2, gp.dq2)), "r1r1": ((r1, gp.dq1), (r1, gp.dq1))}
    if mode not in targets:
        raise ModeMismatch(f"unknown two-point mode {mode!r}")
    scaled = []
    for point, (radius, dq) in zip((z, w), targets[mode]):
        t = edge_t(radius, dq, point, n)
        if abs(t) > math.log(n):
            raise ModeMismatch(f"{mode} mode: |z| = {abs(point):.6g} is not microscopically close to {radius:.6g}")
        scaled.append(t)
    return scaled


def predict_two_point(gp: GapParams, state: NDependentGapState, z: complex, w: complex,
                      mode: str = "r1r2", p: Optional[RadialProfile] = None) -> complex:
    """sqrt(2 pi n) S^G(z, w; n) times the mode's gauge and Gaussian factors"""
    z, w = complex(z), complex(w)
    n, m, x = state.n, state.m, state.x
    scaled = _mode_check(gp, n, z, w, mode)
    root = math.sqrt(2.0 * math.pi * n)
    theta1, theta2 = cmath.phase(z), cmath.phase(w)

    if mode == "general":
        if p is None:
            raise ModeMismatch("general mode needs the potential")
        prod = z * w.conjugate()
        log_gauge = (m * math.log(abs(prod)) - gp.B * n / 2.0 * math.log(gp.r1 * gp.r2)
                     + n * (float(p.q(gp.r1)) - float(p.q(abs(z)))) / 2.0
                     + n * (float(p.q(gp.r2)) - float(p.q(abs(w)))) / 2.0)
        phase = cmath.exp(1j * m * cmath.phase(prod))
        return root * szego_gap(gp, state, z, w) * phase * math.exp(log_gauge)

    t, s = scaled
    gaussian = math.exp(-0.5 * (t * t + s * s))
    phase = cmath.exp(1j * m * (theta1 - theta2))
    if mode == "r1r2":
        return root * szego_gap(gp, state, z, w) * phase * (gp.r1 * gp.r2) ** (-x) * gaussian
    kernel = szego_gap(gp, state, cmath.rect(gp.r1, theta1), cmath.rect(gp.r1, theta2))
    return root * gaussian * phase * gp.r1 ** (-2.0 * x) * kernel


def circle_mean(func: Callable[[np.ndarray], np.ndarray], radius: float,
                points: int = CIRCLE_POINTS) -> float:
    """(1/2 pi r) times the integral of func over |z| = r, by the trapezoid rule"""
    angles = 2.0 * math.pi * np.arange(points) / points
    values = np.asarray(func(radius * np.exp(1j * angles)), dtype=float)
    return float(np.mean(values))


def _radial(f: RadialTestFunction) -> Callable[[np.ndarray], np.ndarray]:
    return lambda z: f(np.abs(z))


def _annulus_integral(integrand: Callable[[float], float], a: float, b: float,
                      knots: Tuple[float, ...]) -> float:
    if b <= a:
        return 0.0
    points = sorted(k for k in knots if a < k < b)
    value, _ = quad(integrand, a, b, points=points or None, epsabs=1e-13,
                    epsrel=1e-11, limit=settings.QUAD_LIMIT)
    return value


def droplet_integral(geometry: DropletGeometry, f: RadialTestFunction,
                      integrand: Callable[[float], float]) -> float:
    """Sum over annuli of integral of integrand(r) 2r dr, restricted to the support of f"""
    lo, hi = f.support
    total = 0.0
    for a, b in geometry.annuli:
        total += _annulus_integral(lambda r: integrand(r) * 2.0 * r if r > 0 else 0.0,
                                   max(a, lo), min(b, hi), f.knots())
    return total


def _boundary_sum(geometry: DropletGeometry, p: RadialProfile, f: RadialTestFunction,
                  s: float = 0.0, lam: Optional[RadialTestFunction] = None) -> Tuple[float, float]:
    """(1/8pi) integrals over the droplet boundary of d_n f and of f d_n log Lap Q"""
    normal_f = 0.0
    weighted = 0.0
    for radius, sign in geometry.boundary:
        if radius <= 0.0:
            continue
        d_f = float(f.d1(radius)) * sign
        d_log = sign * float(p.laplacian_dr(radius)) / float(p.laplacian(radius))
        normal_f += radius * d_f / 4.0
        weighted += radius * circle_mean(_radial(f), radius) * d_log / 4.0
    return normal_f, weighted


def cgf_coefficients_analytic(f: RadialTestFunction, geometry: DropletGeometry,
                              p: RadialProfile) -> CgfPrediction:
    """Mean e_f and variance v_f of the Gaussian limit of fluct_n f"""
    mean_bulk = 0.5 * droplet_integral(
        geometry, f, lambda r: float(f(r)) * float(p.laplacian_of_log_laplacian(r)))
    normal_f, weighted = _boundary_sum(geometry, p, f)
    variance = -droplet_integral(geometry, f, lambda r: float(f(r)) * float(f.laplacian(r)))
    return CgfPrediction(e=mean_bulk + normal_f - weighted, v=variance)


def dirichlet_energy(f: RadialTestFunction, upper: float) -> float:
    """(1/4) integral of |grad f|^2 dA = (1/2) integral of f'(r)^2 r dr over [0, upper]"""
    lo, hi = f.support
    hi = min(hi, upper)
    return 0.5 * _annulus_integral(lambda r: float(f.d1(r)) ** 2 * r, lo, hi, f.knots())


def oscillation_law(gp: GapParams, state: NDependentGapState, lam: RadialTestFunction) -> Tuple[DiscreteGaussian, float]:
    """X ~ dN(alpha(n), u) and the scale c = lambda(r1) - lambda(r2) of Y = c (X - alpha)"""
    v1, v2, _, _ = _lambda_pair(lam, gp)
    return DiscreteGaussian(state.alpha, gp.u), v1 - v2


def predict_inner_count(gp: GapParams, state: NDependentGapState) -> float:
    """
    Mean number of points inside the gap circle sqrt(r1 r2): m + E X with
    X ~ dN(alpha(n), u). Exact up to the O(1/n) Laplace corrections of the
    two peak weights.
    """
    return state.m + DiscreteGaussian(state.alpha, gp.u).mean()


def cgf_prediction(lam: RadialTestFunction, p: RadialProfile, geometry: DropletGeometry,
                   n: int) -> CgfPrediction:
    """e = e_lambda + e_hat, v = v_lambda + v_hat and the discrete-Gaussian oscillation"""
    gp = geometry.gap
    base = cgf_coefficients_analytic(lam, geometry, p)
    if gp is None:
        return base.model_copy(update={"n": n})
    state = gap_state(gp, n)
    v1, v2, d1, d2 = _lambda_pair(lam, gp)
    e_hat = (v1 - v2) * math.log(gp.dq2 / gp.dq1) / (4.0 * gp.log_ratio)
    v_hat = (gp.r1 * v1 * d1 - gp.r2 * v2 * d2) / 2.0
    law, c = oscillation_law(gp, state, lam)
    return CgfPrediction(e=base.e + e_hat, v=base.v + v_hat, n=n,
                         osc=lambda t: law.cgf_Y(c, t))


def cgf_predict_radial(lam: RadialTestFunction, p: RadialProfile, geometry: DropletGeometry,
                       n: int, t: float) -> float:
    """t e + t^2 v / 2 + F_n(t)"""
    _check_t(t, n)
    if t == 0.0:
        return 0.0
    return cgf_prediction(lam, p, geometry, n)(t)


def expected_mean(f: RadialTestFunction, p: RadialProfile, geometry: DropletGeometry, n: int,
                  s: float = 0.0, lam: Optional[RadialTestFunction] = None) -> float:
    """
    Predicted E fluct_n f in the potential Q - s lambda/n: droplet integral of
    f (Lap log Lap Q / 2 - s Lap lambda), the two boundary integrals, and the
    circle-mean terms carrying log a(s) and the theta derivative.
    """
    def bulk(r: float) -> float:
        value = 0.5 * float(p.laplacian_of_log_laplacian(r))
        if lam is not None and s:
            value -= s * float(lam.laplacian(r))
        return float(f(r)) * value

    total = droplet_integral(geometry, f, bulk)
    normal_f, weighted = _boundary_sum(geometry, p, f)
    total += normal_f - weighted
    gp = geometry.gap
    if gp is None:
        return total
    state = gap_state(gp, n)
    v1, v2, d1, d2 = _lambda_pair(lam, gp)
    m1, m2 = circle_mean(_radial(f), gp.r1), circle_mean(_radial(f), gp.r2)
    big_l = gp.log_ratio
    log_a = s * (v1 - v2) + math.log(gp.a0)
    total += log_a / (2.0 * big_l) * (m1 - m2) + s * (gp.r1 * d1 * m1 - gp.r2 * d2 * m2) / 2.0
    argument = state.x + log_a / (2.0 * big_l)
    total += (m1 - m2) / (2.0 * big_l) * _log_theta_prime(gp, argument)
    return total
