"""
Verification Service.

Desk-scale acceptance suites comparing the exact finite-n engine against the
closed-form predictions. Each suite returns CheckResult rows; the edge suite
also produces the oscillation series over an n-range.
"""
import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from numpy.random import PCG64, Generator
from scipy.integrate import quad

from config import settings
from errors import CoulombGapError, NoGap
from models import CheckResult, DropletGeometry, GapParams, RunConfig
from services.asymptotics import (
    cgf_predict_radial,
    edge_point,
    predict_bulk,
    predict_density_gap_inner,
    predict_density_gap_outer_edge,
    predict_density_outer_boundary,
    predict_inner_count,
    predict_two_point,
    theta_term_via_xi,
)
from services.droplet import (
    equilibrium_mass,
    gap_state,
    solve_droplet,
    strict_gap_check,
)
from services.kernel import (
    build_weight_table,
    laplace_log_norm,
    peak_expansion,
    peak_points,
    peak_ratio_prediction,
    one_point,
    truncated_gap_one_point,
    two_point,
    wavefunction,
)
from services.potential import (
    BumpFunction,
    PerturbedPotential,
    RadialProfile,
    RadialTestFunction,
    ZeroFunction,
    build_potential,
    build_test_function,
)
from services.specfun import (
    DiscreteGaussian,
    ThetaArg,
    dn_cgf_Y_theta,
    log_theta,
    log_theta_modular,
    modified_theta,
    modified_theta_dx,
    modified_theta_via_theta,
    xi_series,
    xi_series_at_zero,
)
from services.statistics import (
    cdf_table,
    disk_counts,
    empirical_fluct,
    exact_cgf_curve,
    exact_cgf_product,
    exact_cgf_ward,
    ks_marginal,
    sample,
)

logger = logging.getLogger(__name__)

EDGE_N_RANGE = list(range(30, 201, 10))
EDGE_FIT_MAX_N = 60
EDGE_MARGIN = 1.5
# the r2 residual is still settling below this n
EDGE_R2_MIN_N = 80
PEAK_N = 30
RATIO_N = 200
CGF_ROUTE_N = (25, 50, 100)
CGF_ENVELOPE_N = (50, 100, 200, 400)
CGF_T = (0.5, 1.0)
TWOPOINT_N = (100, 200, 400)
TWOPOINT_MODES = ("r1r2", "r1r1", "general")
TWOPOINT_MARGIN = 0.5
TWOPOINT_PHASE = {"r1r2": 1e-2, "r1r1": 5e-2, "general": 5e-2}
SAMPLER_N = 100
SAMPLER_COUNT = 10_000
SAMPLER_SEED = 20240607
# O(1/n) Laplace corrections of the two peak weights, in units of 1/n
INNER_COUNT_SLACK = 2.0
KERNEL_N = 200


def _check(name: str, residual: float, bound: float, n: Optional[int] = None) -> CheckResult:
    residual = float(residual)
    passed = math.isfinite(residual) and residual <= bound
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, "%s n=%s residual=%.3e bound=%.3e %s", name, n, residual, bound,
               "ok" if passed else "FAILED")
    return CheckResult(check=name, n=n, residual=residual, bound=bound, passed=passed)


def two_point_pair(gp: GapParams, config: RunConfig, n: int, mode: str):
    """
    Points compared in each two-point mode: edge points at r1 and r2 (r1r2),
    two edge points on r1 (r1r1), and two points a tenth of the gap inside
    its circles (general).
    """
    if mode == "general":
        inset = 0.1 * (gp.r2 - gp.r1)
        return cmath.rect(gp.r1 + inset, config.theta1), cmath.rect(gp.r2 - inset, config.theta2)
    z = edge_point(gp.r1, gp.dq1, config.kernel_t, n, config.theta1)
    if mode == "r1r1":
        return z, edge_point(gp.r1, gp.dq1, config.kernel_s, n, config.theta2)
    return z, edge_point(gp.r2, gp.dq2, config.kernel_s, n, config.theta2)


@dataclass
class VerifyReport:
    """Per-check rows plus the edge oscillation series, one frame per edge"""
    checks: List[CheckResult] = field(default_factory=list)
    series: Dict[str, pd.DataFrame] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.row() for c in self.checks],
                            columns=["check", "n", "residual", "bound", "pass"])


class VerifyService:
    """
    Service running the acceptance suites for one potential.
    """

    def __init__(self):
        self.suites: Dict[str, Callable] = {
            "geometry": self.geometry,
            "peaks": self.peaks,
            "edge": self.edge,
            "identities": self.identities,
            "cgf": self.cgf,
            "twopoint": self.twopoint,
            "sampler": self.sampler,
            "kernel": self.kernel,
        }

    def run(self, config: RunConfig) -> VerifyReport:
        p = build_potential(config.potential)
        geometry = solve_droplet(p)
        lam = build_test_function(config.lam) if config.lam is not None else None
        report = VerifyReport()
        for name in config.verify_suites:
            logger.info("Running suite %s", name)
            self.suites[name](report, p, geometry, config, lam)
        logger.info("%d checks, %d failed", len(report.checks),
                    sum(not c.passed for c in report.checks))
        return report

    # geometry

    def geometry(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
                 config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        b = geometry.outer_radius
        report.checks.append(_check("geometry.total_mass", abs(equilibrium_mass(geometry, p, b) - 1.0), 1e-10))
        report.checks.append(_check("geometry.frostman", -geometry.frostman_margin, 1e-8))
        gp = geometry.gap
        if gp is None:
            return
        slope1 = gp.r1 * float(p.derivative(gp.r1, 1))
        slope2 = gp.r2 * float(p.derivative(gp.r2, 1))
        report.checks.append(_check("geometry.equal_slopes", abs(slope1 - slope2), 1e-10))
        secant = (float(p.q(gp.r2)) - float(p.q(gp.r1))) / gp.log_ratio
        report.checks.append(_check("geometry.secant", abs(secant - gp.B), 1e-10))
        inner = equilibrium_mass(geometry, p, gp.r1)
        report.checks.append(_check("geometry.inner_mass", abs(2.0 * inner - gp.B), 1e-8))
        report.checks.append(_check("geometry.strict_gap", -strict_gap_check(gp, p), 0.0))

    # twin peaks

    def peaks(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
              config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        gp = self._gap_or_skip(geometry, "peaks")
        if gp is None:
            return
        n = PEAK_N
        j = min(max(int(round(gp.B * n / 2.0)), 0), n - 1)
        pp = PerturbedPotential(p, ZeroFunction(), 0.0, n)
        table = build_weight_table(pp, gp)

        grid = np.geomspace(1e-3 * gp.r1, 1.5 * geometry.outer_radius, 20001)
        with np.errstate(divide="ignore"):
            logs = np.log(wavefunction(table, j, grid))
        inner = (logs[1:-1] > logs[:-2]) & (logs[1:-1] > logs[2:])
        maxima = grid[1:-1][inner]
        report.checks.append(_check("peaks.count", abs(len(maxima) - 2), 0.0, n))
        if len(maxima) != 2:
            return

        r1j, r2j = peak_points(pp, gp, j)
        step = float(np.max(grid[1:] / grid[:-1]) - 1.0) * geometry.outer_radius
        located = max(abs(maxima[0] - r1j), abs(maxima[1] - r2j))
        report.checks.append(_check("peaks.location", located, 2.0 * step, n))

        eps = j / n - gp.B / 2.0
        e1, e2 = peak_expansion(p, gp, j / n)
        report.checks.append(_check("peaks.expansion", max(abs(e1 - r1j), abs(e2 - r2j)),
                                    max(eps * eps, 1e-10), n))

        spread = 0.25 * (gp.r2 - gp.r1)
        fitted = []
        for peak in (r1j, r2j):
            near = np.abs(grid - peak)
            mask = (near > 1e-6) & (near <= spread)
            drop = float(np.log(wavefunction(table, j, peak))) - logs[mask]
            fitted.append(float(np.min(drop / (n * near[mask] ** 2))))
        report.checks.append(_check("peaks.envelope", -min(fitted), 0.0, n))

        # Laplace and ratio checks at a larger n
        n = RATIO_N
        pp = PerturbedPotential(p, ZeroFunction(), 0.0, n)
        table = build_weight_table(pp, gp)
        state = gap_state(gp, n)
        reach = int(math.floor(math.log(n)))
        laplace, ratio = [], []
        for ell in range(-reach, reach + 1):
            j = state.m + ell
            if j not in table.laplace_c or not 0 <= j < n:
                continue
            laplace.append(n * abs(laplace_log_norm(table, j) - float(table.log_norms[j])))
            if abs(ell) <= 2:
                c1, c2 = table.laplace_c[j]
                ratio.append(abs(math.expm1((c2 - c1) - peak_ratio_prediction(gp, state, ell))))
        if laplace:
            report.checks.append(_check("peaks.laplace", max(laplace), 10.0, n))
        if ratio:
            report.checks.append(_check("peaks.ratio", max(ratio), 0.05, n))

    # edge oscillation

    def edge_series(self, p: RadialProfile, geometry: DropletGeometry, n_values: Sequence[int],
                    edge: str, threads: int = 1) -> pd.DataFrame:
        """
        (R_n(r_k) - n Lap Q/2)/sqrt(n Lap Q) and R_n(r_k) - E_n at t = 0 over n_values
        """
        gp = geometry.gap
        if edge in ("r1", "r2") and gp is None:
            raise NoGap(f"edge {edge} needs a gap")
        if edge == "r1":
            radius, dq = gp.r1, gp.dq1
        elif edge == "r2":
            radius, dq = gp.r2, gp.dq2
        else:
            radius, dq = geometry.outer_radius, geometry.outer_dq

        def one(n: int) -> dict:
            pp = PerturbedPotential(p, ZeroFunction(), 0.0, n)
            table = build_weight_table(pp, None, window_C=4.0, workers=1)
            exact = one_point(pp, table, radius)
            if edge == "r1":
                predicted = predict_density_gap_inner(gp, gap_state(gp, n), 0.0).total
            elif edge == "r2":
                predicted = predict_density_gap_outer_edge(gp, gap_state(gp, n), 0.0).total
            else:
                predicted = predict_density_outer_boundary(geometry, 0.0, n).total
            return {"n": n, "normalized_raw": (exact - n * dq / 2.0) / math.sqrt(n * dq),
                    "post_prediction": exact - predicted}

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(one, n_values))
        else:
            rows = [one(n) for n in n_values]
        return pd.DataFrame(rows, columns=["n", "normalized_raw", "post_prediction"])

    def edge(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
             config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        n_values = sorted(config.verify_n or EDGE_N_RANGE)
        edges = ["r1", "r2", "outer"] if geometry.gap is not None else ["outer"]
        for edge in edges:
            edge_n = n_values
            if edge == "r2" and config.verify_n is None:
                edge_n = [n for n in n_values if n >= EDGE_R2_MIN_N]
            frame = self.edge_series(p, geometry, edge_n, edge, config.threads or settings.THREADS)
            report.series[edge] = frame
            fit = frame[frame["n"] <= EDGE_FIT_MAX_N]
            if fit.empty:
                fit = frame.head(3)
            band = EDGE_MARGIN * float(fit["post_prediction"].abs().max())
            report.checks.append(_check(f"edge.{edge}.band", float(frame["post_prediction"].abs().max()),
                                        band, int(frame["n"].max())))
            if edge == "outer":
                continue
            dq = geometry.gap.dq1 if edge == "r1" else geometry.gap.dq2
            scaled = frame["post_prediction"] / np.sqrt(frame["n"] * dq)
            report.checks.append(_check(f"edge.{edge}.oscillation_removed", float(scaled.std()),
                                        float(frame["normalized_raw"].std()), int(frame["n"].max())))

    # special-function identities

    def identities(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
                   config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        xs = np.linspace(0.1, 0.9, 5)
        rhos = np.linspace(0.2, 0.8, 5)
        amps = np.geomspace(0.5, 2.0, 5)
        reduction, derivative, xi = 0.0, 0.0, 0.0
        for x in xs:
            for rho in rhos:
                for a in amps:
                    reduction = max(reduction, abs(modified_theta(x, rho, a) - modified_theta_via_theta(x, rho, a)))
                    h = 1e-5
                    fd = (modified_theta(x + h, rho, a) - modified_theta(x - h, rho, a)) / (2.0 * h)
                    derivative = max(derivative, abs(modified_theta_dx(x, rho, a) - fd))
                    xi = max(xi, abs(xi_series(x, 0.0, rho, a).real - xi_series_at_zero(x, rho, a)))
        report.checks.append(_check("identities.theta_reduction", reduction, 1e-10))
        report.checks.append(_check("identities.theta_derivative", derivative, 1e-6))
        report.checks.append(_check("identities.xi_at_zero", xi, 1e-10))

        rng = Generator(PCG64(config.seed))
        cgf = 0.0
        for _ in range(100):
            alpha = rng.uniform(-1.0, 1.0)
            u = rng.uniform(0.05, 0.6)
            c = rng.uniform(-2.0, 2.0)
            t = rng.uniform(-2.0, 2.0)
            cgf = max(cgf, abs(DiscreteGaussian(alpha, u).cgf_Y(c, t) - dn_cgf_Y_theta(alpha, u, c, t)))
        report.checks.append(_check("identities.discrete_gaussian_cgf", cgf, 1e-9))

        modular = 0.0
        for _ in range(100):
            z = rng.uniform(-1.0, 1.0)
            tau = 1j * rng.uniform(0.3, 5.0)
            diff = log_theta(ThetaArg(z, tau)).real - log_theta_modular(ThetaArg(z, tau)).real
            modular = max(modular, abs(math.expm1(diff)))
        report.checks.append(_check("identities.modular", modular, 1e-10))

        gp = geometry.gap
        if gp is not None:
            state = gap_state(gp, config.n[0])
            parts = predict_density_gap_inner(gp, state, 0.0).components
            pre = math.sqrt(state.n * gp.dq1) / (math.sqrt(2.0 * math.pi) * gp.r1)
            bracket = (parts["laplacian_ratio"] + parts["theta"]) / pre
            report.checks.append(_check("identities.theta_term_via_xi",
                                        abs(theta_term_via_xi(gp, state) - bracket), 1e-10, state.n))

    # fluctuation CGF

    def _cgf_lambda(self, geometry: DropletGeometry, lam: Optional[RadialTestFunction]) -> RadialTestFunction:
        if lam is not None:
            return lam
        gp = geometry.gap
        if gp is not None:
            return BumpFunction(0.5 * gp.r1, 0.5 * (gp.r1 + gp.r2))
        b = geometry.outer_radius
        return BumpFunction(0.2 * b, 0.6 * b)

    def cgf(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
            config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        lam = self._cgf_lambda(geometry, lam)
        t = CGF_T[0]
        for n in CGF_ROUTE_N:
            product = exact_cgf_product(lam, p, n, t, geometry)
            ward = exact_cgf_ward(lam, p, n, t, config.s_steps, geometry)
            scale = max(abs(product), abs(ward), 1e-300)
            report.checks.append(_check("cgf.routes_agree", abs(product - ward) / scale, 1e-6, n))

        for t in CGF_T:
            gaps = []
            for n in CGF_ENVELOPE_N:
                exact = exact_cgf_product(lam, p, n, t, geometry)
                gaps.append(abs(exact - cgf_predict_radial(lam, p, geometry, n, t)))
            envelope = [math.log(n) ** 5 / math.sqrt(n) for n in CGF_ENVELOPE_N]
            kappa = gaps[0] / envelope[0]
            worst = max(g / e for g, e in zip(gaps, envelope))
            report.checks.append(_check(f"cgf.envelope_t{t:g}", worst, kappa * (1.0 + 1e-9), CGF_ENVELOPE_N[-1]))
            rises = max(0.0, max(b - a for a, b in zip(gaps, gaps[1:])))
            report.checks.append(_check(f"cgf.decreasing_t{t:g}", rises, 0.0, CGF_ENVELOPE_N[-1]))

    # two-point asymptotics

    def twopoint(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
                 config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        gp = self._gap_or_skip(geometry, "twopoint")
        if gp is None:
            return
        tables = {}
        for n in TWOPOINT_N:
            pp = PerturbedPotential(p, ZeroFunction(), 0.0, n)
            tables[n] = (pp, build_weight_table(pp, None, window_C=4.0))

        for mode in TWOPOINT_MODES:
            if mode == "r1r1" and math.isclose(math.remainder(config.theta1 - config.theta2, 2.0 * math.pi),
                                               0.0, abs_tol=1e-12):
                logger.info("twopoint r1r1 skipped: theta1 and theta2 coincide")
                continue
            scaled, phases = [], []
            for n in TWOPOINT_N:
                pp, table = tables[n]
                z, w = two_point_pair(gp, config, n, mode)
                exact = two_point(pp, table, z, w).as_complex()
                predicted = predict_two_point(gp, gap_state(gp, n), z, w, mode=mode, p=p)
                scaled.append(abs(abs(exact) - abs(predicted)) / math.sqrt(n))
                phases.append(abs(cmath.phase(exact * predicted.conjugate())))
            # residuals stay inside kappa log^3 n / sqrt n, kappa fitted at the smallest n
            envelope = [math.log(n) ** 3 / math.sqrt(n) for n in TWOPOINT_N]
            kappa = scaled[0] / envelope[0]
            worst = max(r / e for r, e in zip(scaled, envelope))
            report.checks.append(_check(f"twopoint.{mode}.envelope", worst,
                                        kappa * (1.0 + TWOPOINT_MARGIN), TWOPOINT_N[-1]))
            report.checks.append(_check(f"twopoint.{mode}.phase", phases[-1],
                                        TWOPOINT_PHASE[mode], TWOPOINT_N[-1]))

    # sampler

    def sampler(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
                config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        n, count = SAMPLER_N, SAMPLER_COUNT
        lam = self._cgf_lambda(geometry, lam)
        batch = sample(p, geometry, n, count, SAMPLER_SEED)
        values = empirical_fluct(batch, lam, p, geometry)
        h = 1e-3
        curve = exact_cgf_curve(lam, p, n, [-h, h], geometry)
        mean = (curve.values[1] - curve.values[0]) / (2.0 * h)
        stderr = float(values.std(ddof=1)) / math.sqrt(count)
        report.checks.append(_check("sampler.fluct_mean", abs(float(values.mean()) - mean), 3.0 * stderr, n))

        table = cdf_table(p, n)
        j = n // 2
        report.checks.append(_check("sampler.ks_marginal", ks_marginal(batch, table, j),
                                    1.95 / math.sqrt(count), n))

        gp = geometry.gap
        if gp is None:
            return
        counts = disk_counts(batch, gp.r1)
        count_err = float(counts.std(ddof=1)) / math.sqrt(count)
        expected = float(sum(table.cdf_at(k, gp.r1) for k in range(n)))
        report.checks.append(_check("sampler.disk_count_exact", abs(float(counts.mean()) - expected),
                                    3.0 * count_err, n))

        # the gap holds exponentially few points, so the inner count is m + X, X ~ dN(alpha, u)
        inner = disk_counts(batch, math.sqrt(gp.r1 * gp.r2))
        inner_err = float(inner.std(ddof=1)) / math.sqrt(count)
        predicted = predict_inner_count(gp, gap_state(gp, n))
        report.checks.append(_check("sampler.inner_count", abs(float(inner.mean()) - predicted),
                                    3.0 * inner_err + INNER_COUNT_SLACK / n, n))

    # kernel sanity

    def kernel(self, report: VerifyReport, p: RadialProfile, geometry: DropletGeometry,
               config: RunConfig, lam: Optional[RadialTestFunction]) -> None:
        n = KERNEL_N
        gp = geometry.gap
        pp = PerturbedPotential(p, ZeroFunction(), 0.0, n)
        table = build_weight_table(pp, gp)
        b = geometry.outer_radius

        points = sorted(radius for radius, _ in geometry.boundary if radius > 0.0)
        total, _ = quad(lambda r: one_point(pp, table, r) * 2.0 * r if r > 0 else 0.0, 0.0, 3.0 * b,
                        points=points, epsabs=0.0, epsrel=1e-10, limit=settings.QUAD_LIMIT)
        report.checks.append(_check("kernel.total_mass", abs(total - n) / n, 1e-6, n))

        rng = Generator(PCG64(config.seed))
        radii = rng.uniform(0.3 * b, 1.1 * b, 8)
        angles = rng.uniform(0.0, 2.0 * math.pi, 8)
        zs = radii * np.exp(1j * angles)
        gram = np.array([[two_point(pp, table, z, w).as_complex() for w in zs] for z in zs])
        density = np.array([one_point(pp, table, z) for z in zs])
        hermitian = float(np.max(np.abs(gram - gram.conj().T)) / np.max(np.abs(gram)))
        report.checks.append(_check("kernel.hermitian", hermitian, 1e-12, n))
        schwarz = float(np.max(np.abs(gram) ** 2 / np.outer(density, density)))
        report.checks.append(_check("kernel.cauchy_schwarz", schwarz - 1.0, 1e-10, n))
        diagonal = float(np.max(np.abs(np.real(np.diag(gram)) - density) / density))
        report.checks.append(_check("kernel.diagonal", diagonal, 1e-12, n))
        smallest = float(np.min(np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))))
        report.checks.append(_check("kernel.positive", -smallest, 1e-8 * float(np.trace(gram).real), n))

        a, top = geometry.annuli[-1]
        mid = 0.5 * (a + top)
        try:
            bulk = predict_bulk(p, geometry, mid, n)
            report.checks.append(_check("kernel.bulk", abs(one_point(pp, table, mid) / bulk - 1.0), 0.02, n))
        except CoulombGapError as e:
            logger.info("Bulk check skipped: %s", e)

        if gp is None:
            return
        edges = np.array([gp.r1, gp.r2])
        ratio = float(np.max(np.abs(one_point(pp, table, edges) / truncated_gap_one_point(pp, table, edges) - 1.0)))
        report.checks.append(_check("kernel.truncation", ratio, 1e-3, n))
        small = truncated_gap_one_point(pp, table, edges, table.window_C)
        large = truncated_gap_one_point(pp, table, edges, 2.0 * table.window_C)
        report.checks.append(_check("kernel.window_stability", float(np.max(np.abs(small / large - 1.0))), 1e-8, n))

    @staticmethod
    def _gap_or_skip(geometry: DropletGeometry, suite: str) -> Optional[GapParams]:
        if geometry.gap is None:
            logger.info("Suite %s skipped: droplet has no gap", suite)
        return geometry.gap


# Global service instance
verify_service = VerifyService()
