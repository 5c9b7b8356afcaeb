"""
Droplet geometry of a radial potential.

The droplet is a union of annuli. With F(r) = r q'(r)/2, the equilibrium
mass of {|z| <= r} equals F(r) - F(a_j) summed over the annuli met, and a
bounded gap (r1, r2) is the bridge of the convex minorant of s -> q(e^s)
across a descending stretch of F: r1 q'(r1) = r2 q'(r2) = B and
B log(r2/r1) = q(r2) - q(r1).
"""
import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, newton

from config import settings
from errors import (
    DomainError,
    FrostmanViolation,
    MultiGapUnsupported,
    NoGap,
    NonPositiveLaplacian,
    RootNotFound,
)
from models import DropletGeometry, GapParams, NDependentGapState
from services.potential import RadialProfile

logger = logging.getLogger(__name__)

FROSTMAN_TOL = 1e-8
FROSTMAN_POINTS = 1000


def polished_root(func: Callable[[float], float], fprime: Callable[[float], float],
                  lo: float, hi: float) -> float:
    """
    Root of func in [lo, hi]: bracketed bisection to width 1e-6, then a
    Newton polish to 1e-13. Falls back to a tight Brent solve when Newton
    leaves the bracket.
    """
    f_lo, f_hi = float(func(lo)), float(func(hi))
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        raise RootNotFound(f"no sign change on [{lo:.6g}, {hi:.6g}] (values {f_lo:.3g}, {f_hi:.3g})")
    rough = brentq(lambda x: float(func(x)), lo, hi, xtol=1e-6)
    try:
        root = newton(lambda x: float(func(x)), rough, fprime=lambda x: float(fprime(x)),
                      tol=1e-13, maxiter=50)
        if lo <= root <= hi and math.isfinite(root):
            return float(root)
    except (RuntimeError, ZeroDivisionError):
        pass
    logger.debug("Newton polish left [%g, %g]; using tight Brent", lo, hi)
    return float(brentq(lambda x: float(func(x)), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def mass_function(p: RadialProfile, r) -> np.ndarray:
    """F(r) = r q'(r)/2"""
    return p.mass_function(r)


def _outer_scale(p: RadialProfile) -> float:
    radius = 1.0
    while float(p.mass_function(radius)) <= 1.0:
        radius *= 2.0
        if radius > 1e6:
            raise NoGap("mass function never reaches 1; potential lacks logarithmic growth")
    return radius


def _scan(p: RadialProfile, r_max: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = np.geomspace(r_max * 1e-6, r_max, settings.SCAN_POINTS)
    return grid, p.mass_function(grid), p.laplacian(grid)


def _sign_changes(values: np.ndarray) -> np.ndarray:
    signs = np.sign(values)
    return np.nonzero(signs[:-1] * signs[1:] < 0)[0]


def _level_root(p: RadialProfile, level: float, lo: float, hi: float) -> float:
    return polished_root(lambda r: p.mass_function(r) - level,
                         lambda r: 2.0 * r * p.laplacian(r), lo, hi)


def _outer_radius(p: RadialProfile, grid: np.ndarray, mass: np.ndarray) -> float:
    crossings = _sign_changes(mass - 1.0)
    upward = [i for i in crossings if mass[i + 1] > mass[i]]
    if not upward:
        raise NoGap("mass function does not cross 1 on the scan grid")
    i = upward[-1]
    if len(crossings) > 1 and crossings[-1] != i:
        raise MultiGapUnsupported("mass function dips below 1 beyond the outer radius")
    return _level_root(p, 1.0, grid[i], grid[i + 1])


def _inner_radius(p: RadialProfile, grid: np.ndarray, mass: np.ndarray, b_outer: float) -> float:
    """a0 > 0 when q attains its minimum over (0, b_N] away from the origin"""
    inside = grid <= b_outer
    q_vals = p.q(grid[inside])
    q_origin = float(p.q(0.0))
    k = int(np.argmin(q_vals))
    if q_vals[k] >= q_origin - 1e-14 * max(1.0, abs(q_origin)):
        return 0.0
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, inside.sum() - 1)]
    a0 = _level_root(p, 0.0, lo, hi)
    logger.info("Inner disk gap detected, a0 = %.12g", a0)
    return a0


def _descending_stretches(grid: np.ndarray, lap: np.ndarray, lo: float, hi: float) -> List[Tuple[int, int]]:
    """Grid index pairs (local max of F, following local min of F) inside (lo, hi)"""
    changes = _sign_changes(lap)
    stretches = []
    for i in changes:
        if lap[i] > 0 > lap[i + 1] and lo < grid[i] < hi:
            later = [j for j in changes if j > i and lap[j] < 0 < lap[j + 1]]
            if not later:
                raise MultiGapUnsupported("mass function decreases up to the end of the scan grid")
            stretches.append((i, later[0]))
    return stretches


def _solve_gap(p: RadialProfile, grid, lap, a0: float, b_outer: float,
               i_max: int, i_min: int) -> GapParams:
    lap_fn = p.laplacian
    r_a = polished_root(lap_fn, p.laplacian_dr, grid[i_max], grid[i_max + 1])
    r_b = polished_root(lap_fn, p.laplacian_dr, grid[i_min], grid[i_min + 1])
    f_a = float(p.mass_function(r_a))
    f_b = float(p.mass_function(r_b))
    left = a0 if a0 > 0.0 else grid[0]
    logger.debug("Descending stretch of F on [%g, %g], F from %g to %g", r_a, r_b, f_a, f_b)

    def radii(level: float) -> Tuple[float, float]:
        return _level_root(p, level, left, r_a), _level_root(p, level, r_b, b_outer)

    def closing(level: float) -> float:
        r1, r2 = radii(level)
        return float(p.q(r2) - p.q(r1)) - 2.0 * level * math.log(r2 / r1)

    floor = max(f_b, float(p.mass_function(left)), 0.0)
    span = f_a - floor
    level_lo = floor + 1e-9 * span
    level_hi = f_a - 1e-9 * span
    try:
        level = brentq(closing, level_lo, level_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    except ValueError:
        raise RootNotFound(f"gap closing condition has no sign change for B/2 in ({level_lo:.6g}, {level_hi:.6g})")
    r1, r2 = radii(level)
    return make_gap_params(p, r1, r2)


def make_gap_params(p: RadialProfile, r1: float, r2: float) -> GapParams:
    """Gap constants from the two gap radii"""
    dq1, dq2 = float(p.laplacian(r1)), float(p.laplacian(r2))
    for radius, dq in ((r1, dq1), (r2, dq2)):
        if dq <= 0.0:
            raise NonPositiveLaplacian(f"Laplacian {dq:.3g} <= 0 at gap radius {radius:.12g}")
    B = float(r1 * p.derivative(r1, 1))
    A = float(p.q(r1)) - B * math.log(r1)
    rho = r1 / r2
    return GapParams(
        r1=r1, r2=r2, B=B, A=A, rho=rho, u=rho * rho,
        C_lemma=0.5 * (1.0 / (r1 * r1 * dq1) - 1.0 / (r2 * r2 * dq2)),
        dq1=dq1, dq2=dq2, a0=math.sqrt(dq2 / dq1),
        d_dq1=float(p.laplacian_dr(r1)), d_dq2=float(p.laplacian_dr(r2)),
    )


def solve_droplet(p: RadialProfile, check: bool = True) -> DropletGeometry:
    """
    Annular decomposition, gap constants and Robin constant of the droplet.

    A potential with monotone mass function yields a disk or annulus without
    gaps; use require_gap when a gap is mandatory.
    """
    r_scan = 1.5 * _outer_scale(p)
    grid, mass, lap = _scan(p, r_scan)
    b_outer = _outer_radius(p, grid, mass)
    a0 = _inner_radius(p, grid, mass, b_outer)

    stretches = _descending_stretches(grid, lap, a0, b_outer)
    if len(stretches) > 1:
        raise MultiGapUnsupported(f"{len(stretches)} descending stretches of the mass function below b_N")
    gaps = [_solve_gap(p, grid, lap, a0, b_outer, *stretches[0])] if stretches else []

    if gaps:
        annuli = [(a0, gaps[0].r1), (gaps[0].r2, b_outer)]
    else:
        annuli = [(a0, b_outer)]

    for radius in (a0, b_outer):
        if radius > 0.0 and float(p.laplacian(radius)) <= 0.0:
            raise NonPositiveLaplacian(f"Laplacian <= 0 at boundary radius {radius:.12g}")

    provisional = DropletGeometry(
        annuli=annuli, outer_radius=b_outer, gaps=gaps, robin_gamma=0.0,
        outer_dq=float(p.laplacian(b_outer)), outer_d_dq=float(p.laplacian_dr(b_outer)),
    )
    gamma = float(p.q(b_outer)) + 2.0 * float(log_potential(provisional, p, b_outer))
    geometry = provisional.model_copy(update={"robin_gamma": gamma})
    if check:
        margin = frostman_margin(geometry, p)
        geometry = geometry.model_copy(update={"frostman_margin": margin})
    logger.info("Droplet annuli %s, %d gap(s), gamma = %.12g", annuli, len(gaps), gamma)
    return geometry


def require_gap(geometry: DropletGeometry) -> GapParams:
    if not geometry.gaps:
        raise NoGap(f"mass function is monotone on [0, {geometry.outer_radius:.6g}]; droplet has no gap")
    return geometry.gaps[0]


def equilibrium_mass(g: DropletGeometry, p: RadialProfile, r: float) -> float:
    """sigma({|z| <= r}) = 2 * integral over [0, r] of Lap Q(s) 1_S(s) s ds"""
    if r < 0.0:
        raise DomainError(f"radius must be >= 0, got {r}")
    total = 0.0
    for a, b in g.annuli:
        hi = min(r, b)
        if hi <= a:
            continue
        value, _ = quad(lambda s: 2.0 * float(p.laplacian(s)) * s if s > 0 else 0.0,
                        a, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
        total += value
    if total > 1.0 + 1e-8 or total < -1e-8:
        raise DomainError(f"equilibrium mass {total:.12g} outside [0, 1]")
    return min(max(total, 0.0), 1.0)


def log_potential(g: DropletGeometry, p: RadialProfile, r) -> np.ndarray:
    """
    U(r) = -integral of log max(r, s) dmu(s) for the modulus distribution mu
    of the equilibrium measure. On an annulus dmu = dF and
    integral of log s dF = F log s - q/2.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("log potential needs r > 0")
    total = np.zeros_like(r)

    def f_log(x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0, x, 1.0)
        return np.where(x > 0, p.mass_function(x) * np.log(safe), 0.0)

    for a, b in g.annuli:
        lo = np.clip(r, a, b)
        inner = p.mass_function(lo) - p.mass_function(a)
        outer = f_log(b) - f_log(lo) - (p.q(b) - p.q(lo)) / 2.0
        total -= inner * np.log(r) + outer
    return total


def obstacle(g: DropletGeometry, p: RadialProfile, r) -> np.ndarray:
    """gamma - 2 U(r); equals q on the droplet"""
    return g.robin_gamma - 2.0 * log_potential(g, p, r)


def frostman_margin(g: DropletGeometry, p: RadialProfile) -> float:
    """
    Minimum of q - obstacle over grid points off the droplet. Raises when
    q dips below the obstacle or when they disagree on the droplet.
    """
    grid = np.linspace(0.0, 1.5 * g.outer_radius, FROSTMAN_POINTS + 1)[1:]
    diff = p.q(grid) - obstacle(g, p, grid)
    on = np.array([g.contains(r) for r in grid])
    if np.any(on):
        worst = float(np.max(np.abs(diff[on])))
        if worst >= FROSTMAN_TOL:
            raise FrostmanViolation(f"q and obstacle differ by {worst:.3g} on the droplet")
    margin = float(np.min(diff[~on])) if np.any(~on) else 0.0
    if margin < -FROSTMAN_TOL:
        r_bad = grid[~on][int(np.argmin(diff[~on]))]
        raise FrostmanViolation(f"q below obstacle by {-margin:.3g} at r = {r_bad:.6g}")
    return margin


def obstacle_in_gap(gp: GapParams, r: float) -> float:
    """V(r) = A + B log r on [r1, r2]"""
    slack = 1e-12 * gp.r2
    if not gp.r1 - slack <= r <= gp.r2 + slack:
        raise DomainError(f"r = {r} outside the gap [{gp.r1:.12g}, {gp.r2:.12g}]")
    return gp.A + gp.B * math.log(r)


def strict_gap_check(gp: GapParams, p: RadialProfile, points: int = 200) -> float:
    """Minimum of q - V over interior gap points; positive for a strict obstacle"""
    grid = np.linspace(gp.r1, gp.r2, points + 2)[1:-1]
    return float(np.min(p.q(grid) - (gp.A + gp.B * np.log(grid))))


def gap_state(gp: GapParams, n: int) -> NDependentGapState:
    """m = floor(Bn/2), x = {Bn/2}, alpha = x + log(dq2/dq1)/(4 log(r2/r1))"""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    half = gp.B * n / 2.0
    m = math.floor(half)
    x = half - m
    if x >= 1.0:
        m, x = m + 1, 0.0
    alpha = x + math.log(gp.dq2 / gp.dq1) / (4.0 * gp.log_ratio)
    return NDependentGapState(n=n, m=m, x=x, alpha=alpha)
