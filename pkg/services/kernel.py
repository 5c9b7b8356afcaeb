"""
Exact finite-n engine.

For a rotation-invariant potential the weighted monomials z^j e^{-n Q/2}
are orthogonal, so the correlation kernel is the diagonal sum
K_n(z, w) = sum_j (z conj w)^j e^{-n(q(|z|) + q(|w|))/2} / I_j with
I_j = 2 * integral of r^{2j+1} e^{-n q(r)} dr. All sums run in shifted log
space; z^j e^{-nq/2} underflows long before n reaches a few hundred.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp

from config import settings
from errors import DomainError, OutOfWindow, QuadratureFailure, RootNotFound
from models import GapParams, NDependentGapState
from services.droplet import polished_root
from services.potential import PerturbedPotential, RadialProfile, RadialTestFunction, ZeroFunction

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)
WINDOW_CANDIDATES = (4.0, 6.0, 8.0, 10.0)
CALIBRATION_N = 100
PEAK_FLOOR = 60.0
TAIL_FLOOR = 750.0

_window_cache: Dict[str, float] = {}


def delta_n(n: int) -> float:
    """log n / sqrt(n)"""
    return math.log(n) / math.sqrt(n)


@dataclass(frozen=True)
class KernelEvaluation:
    """Kernel value stored as value * e^{log_scale}"""
    z: complex
    w: complex
    value: complex
    log_scale: float
    n: int
    s: float = 0.0

    def as_complex(self) -> complex:
        return complex(self.value) * math.exp(self.log_scale)

    @property
    def log_abs(self) -> float:
        return self.log_scale + math.log(abs(self.value)) if self.value != 0 else -math.inf


@dataclass(frozen=True)
class WeightTable:
    """Log-norms of all weighted monomials plus twin-peak data near the gap"""
    n: int
    pp: PerturbedPotential
    log_norms: np.ndarray
    window_C: float
    delta_n: float
    gap: Optional[GapParams] = None
    peaks: Dict[int, Tuple[float, float]] = field(default_factory=dict)
    laplace_c: Dict[int, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.log_norms.setflags(write=False)
        if not np.all(np.isfinite(self.log_norms)):
            raise QuadratureFailure("non-finite log-norm in weight table")


class NormIntegrator:
    """Peak-normalized quadrature of 2 r^{2j+1} e^{-n q~(r)} for one perturbed potential"""

    def __init__(self, pp: PerturbedPotential):
        self.pp = pp
        self.n = pp.n
        self.r_top = self._upper_limit()
        self.grid = np.geomspace(self.r_top * 1e-9, self.r_top, 2 * settings.SCAN_POINTS)
        self.log_grid = np.log(self.grid)
        self.nq_grid = self.n * self.pp.q(self.grid)

    def log_integrand(self, j: int, r: float) -> float:
        return (2 * j + 1) * math.log(r) - self.n * float(self.pp.q(r)) + LOG2

    def log_integrand_array(self, j: int, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (2 * j + 1) * np.log(r) - self.n * self.pp.q(r) + LOG2

    def support(self, j: int, floor: float) -> Tuple[float, float]:
        """Radii bracketing the region where the integrand is within e^{-floor} of its grid maximum"""
        values = (2 * j + 1) * self.log_grid - self.nq_grid
        alive = np.nonzero(values > values.max() - floor)[0]
        lo = self.grid[max(alive[0] - 1, 0)]
        hi = self.grid[min(alive[-1] + 1, self.grid.size - 1)]
        return float(lo), float(hi)

    def _upper_limit(self) -> float:
        radius = 1.0
        while float(self.pp.mass_function(radius)) < 1.5:
            radius *= 2.0
            if radius > 1e6:
                raise QuadratureFailure("potential too flat to bound the norm integrals")
        top = radius
        reference = self.log_integrand(self.n - 1, radius)
        while self.log_integrand(self.n - 1, top) > reference - 800.0:
            top *= 1.25
        return top

    def _peaks(self, j: int, values: np.ndarray) -> List[float]:
        inner = (values[1:-1] >= values[:-2]) & (values[1:-1] > values[2:])
        idx = np.nonzero(inner)[0] + 1
        if int(np.argmax(values)) == values.size - 1:
            raise QuadratureFailure(f"integrand for j={j} still rising at the end of the grid")
        idx = [i for i in idx if values[i] > values.max() - PEAK_FLOOR]
        first = lambda r: (2 * j + 1) / r - self.n * float(self.pp.derivative(r, 1))
        second = lambda r: -(2 * j + 1) / r ** 2 - self.n * float(self.pp.derivative(r, 2))
        peaks = []
        for i in idx:
            try:
                peaks.append(polished_root(first, second, self.grid[i - 1], self.grid[i + 1]))
            except RootNotFound:
                peaks.append(float(self.grid[i]))
        return peaks

    def log_norm(self, j: int) -> float:
        values = (2 * j + 1) * self.log_grid - self.nq_grid + LOG2
        peaks = self._peaks(j, values)
        g_peak = [self.log_integrand(j, p) for p in peaks]
        g_max = max(max(g_peak), float(values.max()))

        breakpoints = []
        scale = 0.0
        for p, g in zip(peaks, g_peak):
            kappa = (2 * j + 1) / p ** 2 + self.n * float(self.pp.derivative(p, 2))
            if kappa <= 0.0:
                kappa = (2 * j + 1) / p ** 2
            width = 10.0 / math.sqrt(kappa)
            breakpoints += [p - 2.5 * width, p - width, p, p + width, p + 2.5 * width]
            scale += math.sqrt(2.0 * math.pi / kappa) * math.exp(g - g_max)

        alive = np.nonzero(values - g_max > -TAIL_FLOOR)[0]
        upper = float(self.grid[min(alive[-1] + 1, self.grid.size - 1)])
        points = sorted(b for b in breakpoints if 0.0 < b < upper)

        def integrand(r: float) -> float:
            if r <= 0.0:
                return 0.0
            return math.exp(self.log_integrand(j, r) - g_max)

        out = quad(integrand, 0.0, upper, points=points or None,
                   epsabs=1e-13 * scale, epsrel=settings.QUAD_EPSREL,
                   limit=settings.QUAD_LIMIT, full_output=1)
        value, error = out[0], out[1]
        if value <= 0.0 or not math.isfinite(value):
            raise QuadratureFailure(f"norm integral for j={j}, n={self.n} returned {value}")
        if len(out) > 3 and error > 1e-9 * value:
            raise QuadratureFailure(
                f"norm integral for j={j}, n={self.n}: error {error:.2e} on value {value:.6e} ({out[3]})"
            )
        return g_max + math.log(value)


def log_norm(pp: PerturbedPotential, j: int) -> float:
    """log I_j = log of 2 * integral of r^{2j+1} e^{s lambda(r)} e^{-n q(r)} dr"""
    if not 0 <= j < pp.n:
        raise DomainError(f"index j={j} outside [0, {pp.n})")
    return NormIntegrator(pp).log_norm(j)


def window_indices(n: int, B: float, window_C: float) -> np.ndarray:
    """Indices j with |j/n - B/2| <= C delta_n"""
    half = window_C * delta_n(n)
    lo = max(0, math.ceil(n * (B / 2.0 - half)))
    hi = min(n - 1, math.floor(n * (B / 2.0 + half)))
    return np.arange(lo, hi + 1)


def _peak_pair(p: RadialProfile, gp: GapParams, tau: float) -> Tuple[float, float]:
    span = 0.2 * (gp.r2 - gp.r1)
    roots = []
    for rk in (gp.r1, gp.r2):
        grid = np.linspace(max(rk - span, 1e-3 * rk), rk + span, 65)
        values = p.mass_function(grid) - tau
        signs = np.sign(values)
        changes = np.nonzero(signs[:-1] * signs[1:] <= 0)[0]
        if changes.size == 0:
            raise RootNotFound(f"no saddle point for tau={tau:.6g} within {span:.3g} of r={rk:.6g}")
        i = min(changes, key=lambda k: abs(0.5 * (grid[k] + grid[k + 1]) - rk))
        roots.append(polished_root(lambda r: p.mass_function(r) - tau,
                                   lambda r: 2.0 * r * p.laplacian(r), grid[i], grid[i + 1]))
    return roots[0], roots[1]


def peak_points(pp: PerturbedPotential, gp: GapParams, j: int,
                window_C: Optional[float] = None) -> Tuple[float, float]:
    """Roots of g_j'(r) = q'(r) - 2 tau/r nearest r1 and r2, tau = j/n"""
    tau = j / pp.n
    if window_C is not None and abs(tau - gp.B / 2.0) > window_C * delta_n(pp.n):
        raise OutOfWindow(f"j={j} outside the twin-peak window at n={pp.n}")
    return _peak_pair(pp.base, gp, tau)


def peak_expansion(p: RadialProfile, gp: GapParams, tau: float) -> Tuple[float, float]:
    """Second-order expansion of the saddle points in eps = tau - B/2"""
    eps = tau - gp.B / 2.0
    out = []
    for rk in (gp.r1, gp.r2):
        h1 = 4.0 * rk * float(p.laplacian(rk))
        h2 = 4.0 * float(p.laplacian(rk)) + 4.0 * rk * float(p.laplacian_dr(rk))
        out.append(rk + 2.0 * eps / h1 - 2.0 * h2 * eps ** 2 / h1 ** 3)
    return out[0], out[1]


def log_laplace_coefficient(pp: PerturbedPotential, j: int, r: float) -> float:
    """log c = log(2 h(r) / sqrt(g_j''(r))) - n g_j(r), h = r e^{s lambda}"""
    tau = j / pp.n
    base = pp.base
    g = float(base.q(r)) - 2.0 * tau * math.log(r)
    g2 = float(base.derivative(r, 2)) + 2.0 * tau / r ** 2
    lam = float(pp.bump(r)) if pp.s else 0.0
    return LOG2 + math.log(r) + pp.s * lam - 0.5 * math.log(g2) - pp.n * g


def laplace_log_norm(table: WeightTable, j: int) -> float:
    """log of sqrt(2 pi/n) (c1 + c2)"""
    if j not in table.laplace_c:
        raise OutOfWindow(f"no Laplace coefficients stored for j={j}")
    c1, c2 = table.laplace_c[j]
    return 0.5 * math.log(2.0 * math.pi / table.n) + float(np.logaddexp(c1, c2))


def _lambda_at_gap(lam: Optional[RadialTestFunction], gp: GapParams):
    if lam is None:
        return 0.0, 0.0
    return float(lam(gp.r1)), float(lam(gp.r2))


def peak_ratio_prediction(gp: GapParams, state: NDependentGapState, ell: int,
                          s: float = 0.0, lam: Optional[RadialTestFunction] = None) -> float:
    """log(c2/c1) ~ s(lam2 - lam1) + log sqrt(dq1/dq2) + (2l - 2x + 1) log(r2/r1) - C l^2/n"""
    lam1, lam2 = _lambda_at_gap(lam, gp)
    return (s * (lam2 - lam1) + 0.5 * math.log(gp.dq1 / gp.dq2)
            + (2 * ell - 2.0 * state.x + 1.0) * gp.log_ratio
            - gp.C_lemma * ell ** 2 / state.n)


def two_peak_log_norm(table: WeightTable, j: int, state: NDependentGapState,
                      lam: Optional[RadialTestFunction] = None) -> float:
    """
    log I from the explicit two-peak form in r1, r2, Lap Q, C and x, with the
    exponential factor taken at the exact saddle points
    """
    gp = table.gap
    if gp is None or j not in table.peaks:
        raise OutOfWindow(f"no twin peaks stored for j={j}")
    n, s = table.n, table.pp.s
    ell = j - state.m
    lam1, lam2 = _lambda_at_gap(lam, gp)
    power = 2 * ell - 2.0 * state.x + 1.0
    tau = j / n
    g = [float(table.pp.base.q(r)) - 2.0 * tau * math.log(r) for r in table.peaks[j]]
    first = power * math.log(gp.r1) - 0.5 * math.log(gp.dq1) + s * lam1 + gp.C_lemma * ell ** 2 / (2 * n)
    second = power * math.log(gp.r2) - 0.5 * math.log(gp.dq2) + s * lam2 - gp.C_lemma * ell ** 2 / (2 * n)
    return (0.5 * math.log(2.0 * math.pi / n) + (state.x - ell) * math.log(gp.r1 * gp.r2)
            + float(np.logaddexp(first, second)) - n * (g[0] + g[1]) / 2.0)


def gap_difference(p: RadialProfile, gp: GapParams, tau: float) -> Tuple[float, float]:
    """g(r2,tau) - g(r1,tau) at the saddle points and its quadratic prediction"""
    r1t, r2t = _peak_pair(p, gp, tau)
    exact = (float(p.q(r2t)) - 2.0 * tau * math.log(r2t)) - (float(p.q(r1t)) - 2.0 * tau * math.log(r1t))
    predicted = -(2.0 * tau - gp.B) * gp.log_ratio + gp.C_lemma * (tau - gp.B / 2.0) ** 2
    return exact, predicted


def _resolve_window(pp: PerturbedPotential, gp: Optional[GapParams], window_C: Optional[float]) -> float:
    if window_C is not None:
        return float(window_C)
    if settings.WINDOW_C is not None:
        return float(settings.WINDOW_C)
    if gp is None:
        return WINDOW_CANDIDATES[0]
    return calibrate_window(pp.base, gp)


def build_weight_table(pp: PerturbedPotential, gp: Optional[GapParams] = None,
                       window_C: Optional[float] = None, workers: Optional[int] = None) -> WeightTable:
    """All log-norms for j < n, plus peaks and Laplace coefficients inside the gap window"""
    integrator = NormIntegrator(pp)
    workers = workers or settings.THREADS
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            log_norms = list(pool.map(integrator.log_norm, range(pp.n)))
    else:
        log_norms = [integrator.log_norm(j) for j in range(pp.n)]
    C = _resolve_window(pp, gp, window_C)

    peaks, laplace = {}, {}
    if gp is not None:
        for j in window_indices(pp.n, gp.B, C):
            j = int(j)
            try:
                pair = _peak_pair(pp.base, gp, j / pp.n)
            except RootNotFound:
                logger.debug("No twin peaks for j=%d at n=%d", j, pp.n)
                continue
            peaks[j] = pair
            laplace[j] = tuple(log_laplace_coefficient(pp, j, r) for r in pair)
    logger.info("Weight table n=%d s=%g built, %d twin-peak indices", pp.n, pp.s, len(peaks))
    return WeightTable(n=pp.n, pp=pp, log_norms=np.asarray(log_norms), window_C=C,
                       delta_n=delta_n(pp.n), gap=gp, peaks=peaks, laplace_c=laplace)


def _log_terms(table: WeightTable, r: np.ndarray, js: Optional[np.ndarray] = None) -> np.ndarray:
    js = np.arange(table.n) if js is None else np.asarray(js)
    with np.errstate(divide="ignore"):
        log_r = np.log(r)
    powers = 2.0 * js[None, :] * log_r[:, None]
    powers[:, js == 0] = 0.0
    return powers - table.n * table.pp.q(r)[:, None] - table.log_norms[js][None, :]


def _radii(z) -> Tuple[np.ndarray, bool]:
    arr = np.abs(np.asarray(z, dtype=complex))
    return np.atleast_1d(arr).ravel(), arr.ndim == 0


def one_point(pp: PerturbedPotential, table: WeightTable, z):
    """R_n(z) = K_n(z, z)"""
    r, scalar = _radii(z)
    values = np.exp(logsumexp(_log_terms(table, r), axis=1))
    return float(values[0]) if scalar else values


def wavefunction(table: WeightTable, j: int, r):
    """|p_j(r)|^2 / ||p_j||^2 with p_j(z) = z^j e^{-n q~(|z|)/2}"""
    radii, scalar = _radii(r)
    values = np.exp(_log_terms(table, radii, np.array([j]))[:, 0])
    return float(values[0]) if scalar else values


def two_point(pp: PerturbedPotential, table: WeightTable, z: complex, w: complex) -> KernelEvaluation:
    """K_n(z, w) in the canonical monomial gauge"""
    z, w = complex(z), complex(w)
    prod = z * w.conjugate()
    js = np.arange(table.n)
    base = -table.n * (float(pp.q(abs(z))) + float(pp.q(abs(w)))) / 2.0 - table.log_norms
    if prod == 0:
        logs = base[:1]
        phases = np.zeros(1)
    else:
        logs = js * math.log(abs(prod)) + base
        phases = js * cmath_phase(prod)
    shift = float(np.max(logs))
    value = complex(np.sum(np.exp(logs - shift) * np.exp(1j * phases)))
    return KernelEvaluation(z=z, w=w, value=value, log_scale=shift, n=table.n, s=pp.s)


def cmath_phase(value: complex) -> float:
    return math.atan2(value.imag, value.real)


def truncated_gap_one_point(pp: PerturbedPotential, table: WeightTable, z, window_C: Optional[float] = None):
    """One-point function keeping only |j/n - B/2| <= C delta_n, for z within delta_n of the gap"""
    gp = table.gap
    if gp is None:
        raise OutOfWindow("weight table carries no gap")
    r, scalar = _radii(z)
    d = table.delta_n
    if np.any((r <= gp.r1 - d) | (r >= gp.r2 + d)):
        raise OutOfWindow(f"|z| must lie in ({gp.r1 - d:.6g}, {gp.r2 + d:.6g})")
    js = window_indices(table.n, gp.B, window_C or table.window_C)
    values = np.exp(logsumexp(_log_terms(table, r, js), axis=1))
    return float(values[0]) if scalar else values


def truncated_outer_one_point(pp: PerturbedPotential, table: WeightTable, z, outer_radius: float,
                              window_C: Optional[float] = None):
    """One-point function keeping only 1 - C delta_n <= j/n < 1, for z within delta_n of |z| = b_N"""
    r, scalar = _radii(z)
    d = table.delta_n
    if np.any(np.abs(r - outer_radius) >= d):
        raise OutOfWindow(f"|z| must lie within {d:.3g} of the outer radius {outer_radius:.6g}")
    C = window_C or table.window_C
    lo = max(0, math.ceil(table.n * (1.0 - C * d)))
    js = np.arange(lo, table.n)
    values = np.exp(logsumexp(_log_terms(table, r, js), axis=1))
    return float(values[0]) if scalar else values


def calibrate_window(p: RadialProfile, gp: GapParams, n: int = CALIBRATION_N) -> float:
    """
    Smallest candidate C for which doubling C moves the truncated gap
    one-point function by less than 1e-10 (relative) at n = 100
    """
    key = f"{p.cache_key()}|{n}" if hasattr(p, "cache_key") else None
    if key is not None and key in _window_cache:
        return _window_cache[key]
    pp = PerturbedPotential(p, ZeroFunction(), 0.0, n)
    table = build_weight_table(pp, None, window_C=2 * WINDOW_CANDIDATES[-1])
    table = WeightTable(n=n, pp=pp, log_norms=np.array(table.log_norms), window_C=table.window_C,
                        delta_n=table.delta_n, gap=gp)
    radii = np.array([gp.r1, gp.r2, math.sqrt(gp.r1 * gp.r2)])
    chosen = WINDOW_CANDIDATES[-1]
    for C in WINDOW_CANDIDATES:
        small = truncated_gap_one_point(pp, table, radii, C)
        large = truncated_gap_one_point(pp, table, radii, 2 * C)
        if np.max(np.abs(small - large) / large) < 1e-10:
            chosen = C
            break
    else:
        logger.warning("Window calibration did not settle; using C=%g", chosen)
    if key is not None:
        _window_cache[key] = chosen
    logger.info("Calibrated window constant C=%g", chosen)
    return chosen
