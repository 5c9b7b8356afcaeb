"""
Exact and Monte Carlo fluctuation machinery for radial linear statistics.

The moduli of a rotation-invariant determinantal ensemble are independent,
|z_j|^2 drawn from the density proportional to r^{2j+1} e^{-n q(r)}, with
angles uniform. Both the product route for the exact CGF and the sampler
rest on that.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.random import PCG64, Generator, SeedSequence
from scipy import stats
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import logsumexp

from cache import cache
from config import settings
from errors import QuadratureFailure, TableBuildFailure
from models import CgfCurve, CgfPrediction, DropletGeometry
from services.asymptotics import droplet_integral
from services.droplet import solve_droplet
from services.kernel import NormIntegrator, build_weight_table, one_point
from services.potential import PerturbedPotential, RadialProfile, RadialTestFunction, ZeroFunction
from services.specfun import DiscreteGaussian

logger = logging.getLogger(__name__)

CDF_FLOOR = 45.0
WARD_EPSREL = 1e-10


@dataclass(frozen=True)
class SampleBatch:
    """count independent draws of the n-point ensemble"""
    n: int
    count: int
    seed: int
    moduli: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        if self.moduli.shape != (self.count, self.n) or self.angles.shape != (self.count, self.n):
            raise TableBuildFailure(f"sample arrays must have shape ({self.count}, {self.n})")
        if not np.all(np.isfinite(self.moduli)) or np.any(self.moduli <= 0.0):
            raise TableBuildFailure("sampled moduli must be positive and finite")

    def points(self) -> np.ndarray:
        return self.moduli * np.exp(1j * self.angles)


@dataclass(frozen=True)
class CdfTable:
    """Per-index radial CDFs on monotone node grids, one row per j"""
    nodes: np.ndarray
    cdf: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def invert(self, j: int, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.cdf[j], self.nodes[j])

    def cdf_at(self, j: int, r: np.ndarray) -> np.ndarray:
        return np.interp(r, self.nodes[j], self.cdf[j], left=0.0, right=1.0)


def _fallback_geometry(p: RadialProfile, geometry: Optional[DropletGeometry]) -> DropletGeometry:
    return geometry if geometry is not None else solve_droplet(p, check=False)


def sigma(lam: RadialTestFunction, p: RadialProfile, geometry: Optional[DropletGeometry] = None) -> float:
    """sigma(lambda) = 2 * integral over the droplet of lambda(r) Lap Q(r) r dr"""
    geometry = _fallback_geometry(p, geometry)
    if isinstance(lam, ZeroFunction):
        return 0.0
    return droplet_integral(geometry, lam, lambda r: float(lam(r)) * float(p.laplacian(r)))


def _log_norms(pp: PerturbedPotential) -> np.ndarray:
    integrator = NormIntegrator(pp)
    return np.array([integrator.log_norm(j) for j in range(pp.n)])


def exact_cgf_curve(lam: RadialTestFunction, p: RadialProfile, n: int, t_grid: Sequence[float],
                    geometry: Optional[DropletGeometry] = None) -> CgfCurve:
    """
    log E exp(t fluct_n lambda) on a grid, as the sum over j of
    log(I_j(t)/I_j(0)) minus t n sigma(lambda)
    """
    base = _log_norms(PerturbedPotential(p, lam, 0.0, n))
    mean = n * sigma(lam, p, geometry)
    values = []
    for t in t_grid:
        if t == 0.0:
            values.append(0.0)
            continue
        tilted = _log_norms(PerturbedPotential(p, lam, float(t), n))
        values.append(float(np.sum(tilted - base)) - t * mean)
    logger.info("Product-route CGF at n=%d on %d points", n, len(values))
    return CgfCurve(t_grid=list(t_grid), values=values, route="product")


def exact_cgf_product(lam: RadialTestFunction, p: RadialProfile, n: int, t: float,
                      geometry: Optional[DropletGeometry] = None) -> float:
    return exact_cgf_curve(lam, p, n, [t], geometry).values[0]


def _ward_breakpoints(lam: RadialTestFunction, geometry: DropletGeometry, n: int) -> Tuple[float, ...]:
    points = set(lam.knots())
    for radius, _ in geometry.boundary:
        points.add(radius)
        for k in (-5.0, 5.0):
            points.add(radius + k / math.sqrt(n))
    return tuple(sorted(points))


def ward_integrand(lam: RadialTestFunction, p: RadialProfile, geometry: DropletGeometry,
                   n: int, s: float) -> float:
    """integral of lambda (R_{n, s lambda} - n Lap Q 1_S) dA with a fresh weight table"""
    pp = PerturbedPotential(p, lam, s, n)
    table = build_weight_table(pp)
    lo, hi = lam.support
    hi = min(hi, 3.0 * geometry.outer_radius)
    if hi <= lo:
        return 0.0

    def integrand(r: float) -> float:
        if r <= 0.0:
            return 0.0
        value = float(lam(r))
        if value == 0.0:
            return 0.0
        density = one_point(pp, table, r)
        if geometry.contains(r):
            density -= n * float(p.laplacian(r))
        return value * density * 2.0 * r

    points = [b for b in _ward_breakpoints(lam, geometry, n) if lo < b < hi]
    value, error = quad(integrand, lo, hi, points=points or None, epsabs=1e-12,
                        epsrel=WARD_EPSREL, limit=settings.QUAD_LIMIT)
    if not math.isfinite(value):
        raise QuadratureFailure(f"Ward integrand non-finite at s={s}")
    return value


def exact_cgf_ward(lam: RadialTestFunction, p: RadialProfile, n: int, t: float,
                   s_steps: int = 8, geometry: Optional[DropletGeometry] = None) -> float:
    """Gauss-Legendre over s in [0, t] of the Ward integrand"""
    if s_steps < 8:
        raise QuadratureFailure(f"s_steps must be >= 8, got {s_steps}")
    if t == 0.0:
        return 0.0
    geometry = _fallback_geometry(p, geometry)
    nodes, weights = leggauss(s_steps)
    s_values = 0.5 * t * (nodes + 1.0)
    total = sum(0.5 * t * w * ward_integrand(lam, p, geometry, n, float(s))
                for s, w in zip(s_values, weights))
    logger.info("Ward-route CGF n=%d t=%g: %.12g", n, t, total)
    return float(total)


def build_cdf_table(p: RadialProfile, n: int, nodes: Optional[int] = None) -> CdfTable:
    """Radial CDF of each |z_j| on a uniform grid over its numerical support"""
    nodes = nodes or settings.CDF_NODES
    try:
        integrator = NormIntegrator(PerturbedPotential(p, ZeroFunction(), 0.0, n))
        grid = np.empty((n, nodes))
        cdf = np.empty((n, nodes))
        for j in range(n):
            lo, hi = integrator.support(j, CDF_FLOOR)
            r = np.linspace(lo, hi, nodes)
            log_density = integrator.log_integrand_array(j, r)
            weights = np.exp(log_density - log_density.max())
            cumulative = cumulative_trapezoid(weights, r, initial=0.0)
            if not cumulative[-1] > 0.0:
                raise TableBuildFailure(f"empty CDF for j={j} at n={n}")
            grid[j] = r
            cdf[j] = cumulative / cumulative[-1]
    except QuadratureFailure as e:
        raise TableBuildFailure(f"sampling table for n={n}: {e}")
    return CdfTable(nodes=grid, cdf=cdf)


def cdf_table(p: RadialProfile, n: int) -> CdfTable:
    """build_cdf_table behind the on-disk cache"""
    key = cache.key(p.cache_key(), n, settings.CDF_NODES) if hasattr(p, "cache_key") else None
    if key is not None:
        arrays = cache.load(key)
        if arrays is not None and arrays["nodes"].shape == (n, settings.CDF_NODES):
            return CdfTable(nodes=arrays["nodes"], cdf=arrays["cdf"])
    table = build_cdf_table(p, n)
    if key is not None:
        cache.store(key, nodes=table.nodes, cdf=table.cdf)
    return table


def sample(p: RadialProfile, geometry: Optional[DropletGeometry], n: int, count: int, seed: int) -> SampleBatch:
    """
    Exact draws: one PCG64 stream per sample spawned from SeedSequence(seed);
    each stream yields n uniforms for the moduli, then n angles.
    """
    if n < 1 or count < 1:
        raise TableBuildFailure(f"need n >= 1 and count >= 1, got n={n}, count={count}")
    table = cdf_table(p, n)
    uniforms = np.empty((count, n))
    angles = np.empty((count, n))
    for i, stream in enumerate(SeedSequence(seed).spawn(count)):
        rng = Generator(PCG64(stream))
        uniforms[i] = rng.random(n)
        angles[i] = rng.uniform(0.0, 2.0 * math.pi, n)
    moduli = np.empty((count, n))
    for j in range(n):
        moduli[:, j] = table.invert(j, uniforms[:, j])
    if geometry is not None and geometry.gap is not None:
        logger.debug("Sampled %d x %d; expected inner count %.3f", count, n, n * geometry.gap.B / 2.0)
    return SampleBatch(n=n, count=count, seed=seed, moduli=moduli, angles=angles)


def empirical_fluct(batch: SampleBatch, lam: RadialTestFunction, p: RadialProfile,
                    geometry: Optional[DropletGeometry] = None) -> np.ndarray:
    """sum_j lambda(|z_j|) - n sigma(lambda) per sample"""
    if isinstance(lam, ZeroFunction):
        return np.zeros(batch.count)
    values = lam(batch.moduli).sum(axis=1)
    return values - batch.n * sigma(lam, p, geometry)


def empirical_cgf(values: np.ndarray, t_grid: Sequence[float]) -> CgfCurve:
    """log of the sample mean of exp(t * value)"""
    values = np.asarray(values, dtype=float)
    out = [float(logsumexp(t * values) - math.log(values.size)) for t in t_grid]
    return CgfCurve(t_grid=list(t_grid), values=out, route="empirical")


def bootstrap_band(values: np.ndarray, t: float, level: float = 0.99,
                   resamples: int = 1000, seed: int = 0) -> Tuple[float, float]:
    """Percentile bootstrap interval of the empirical CGF at t"""
    values = np.asarray(values, dtype=float)
    rng = Generator(PCG64(seed))
    idx = rng.integers(0, values.size, size=(resamples, values.size))
    estimates = logsumexp(t * values[idx], axis=1) - math.log(values.size)
    tail = 50.0 * (1.0 - level)
    lo, hi = np.percentile(estimates, [tail, 100.0 - tail])
    return float(lo), float(hi)


def sample_predicted_law(prediction: CgfPrediction, law: Optional[DiscreteGaussian], c: float,
                         size: int, seed: int = 0) -> np.ndarray:
    """Draws of c (X - alpha) + N(e, v), X ~ dN(alpha, u)"""
    rng = Generator(PCG64(seed))
    normal = rng.normal(prediction.e, math.sqrt(max(prediction.v, 0.0)), size)
    if law is None or c == 0.0:
        return normal
    return normal + c * (law.sample(rng, size) - law.alpha)


def ks_two_sample(first: np.ndarray, second: np.ndarray) -> Tuple[float, float]:
    result = stats.ks_2samp(first, second)
    return float(result.statistic), float(result.pvalue)


def ks_marginal(batch: SampleBatch, table: CdfTable, j: int) -> float:
    """Kolmogorov-Smirnov statistic of the sampled |z_j| against the table CDF"""
    return float(stats.kstest(batch.moduli[:, j], lambda r: table.cdf_at(j, r)).statistic)


def disk_counts(batch: SampleBatch, radius: float) -> np.ndarray:
    """Number of points with |z| <= radius in each sample"""
    return np.sum(batch.moduli <= radius, axis=1)
