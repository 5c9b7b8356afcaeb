"""
Special functions shared by the predictors.

Theta-family series are truncated once the neglected terms fall below
1e-16 relative to the largest term; sums run in shifted log space.
"""
import cmath
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.random import Generator
from scipy.special import erfc as _erfc
from scipy.special import erfcx, expit, logsumexp

from errors import ConvergenceFailure, DomainError, PoleError

TERM_TOL = 1e-16
LOG_TERM_TOL = math.log(TERM_TOL)
MAX_TERMS = 10 ** 6
POLE_TOL = 1e-300


def erfc(t):
    """Complementary error function"""
    return _erfc(t)


def scaled_erfc(t):
    """e^{t^2} erfc(t), finite for large positive t"""
    return erfcx(t)


@dataclass(frozen=True)
class ThetaArg:
    """Argument (z, tau) of the Jacobi theta function, Im tau > 0"""
    z: complex
    tau: complex

    def __post_init__(self):
        if not complex(self.tau).imag > 0.0:
            raise DomainError(f"theta needs Im tau > 0, got tau = {self.tau}")


def _theta_exponents(arg: ThetaArg) -> Tuple[np.ndarray, np.ndarray, float]:
    z, tau = complex(arg.z), complex(arg.tau)
    height = tau.imag
    center = -z.imag / height
    spread = math.sqrt((-LOG_TERM_TOL + 3.0) / (math.pi * height)) + 1.0
    size = math.ceil(abs(center) + spread)
    if size > MAX_TERMS:
        raise ConvergenceFailure(f"theta series would need {size} terms (Im tau = {height:.3g})")
    ells = np.arange(-size, size + 1)
    exponents = 2j * math.pi * ells * z + 1j * math.pi * ells.astype(float) ** 2 * tau
    shift = float(np.max(exponents.real))
    return ells, exponents, shift


def jacobi_theta(arg: ThetaArg) -> complex:
    """theta(z; tau) = sum over integers l of e^{2 pi i l z} e^{pi i l^2 tau}"""
    _, exponents, shift = _theta_exponents(arg)
    return complex(np.sum(np.exp(exponents - shift)) * math.exp(shift))


def theta(z: complex, tau: complex) -> complex:
    return jacobi_theta(ThetaArg(z, tau))


def log_theta(arg: ThetaArg) -> complex:
    """Principal log of theta, computed without forming theta itself"""
    _, exponents, shift = _theta_exponents(arg)
    partial = complex(np.sum(np.exp(exponents - shift)))
    if partial == 0:
        raise PoleError(f"theta vanishes at z = {arg.z}, tau = {arg.tau}")
    return shift + cmath.log(partial)


def log_theta_modular(arg: ThetaArg) -> complex:
    """
    log theta(z; tau) through theta(z; tau) = (-i tau)^{-1/2} e^{-pi i z^2/tau} theta(z/tau; -1/tau).
    Converges fast when Im tau is small.
    """
    z, tau = complex(arg.z), complex(arg.tau)
    return (-0.5 * cmath.log(-1j * tau) - 1j * math.pi * z * z / tau
            + log_theta(ThetaArg(z / tau, -1.0 / tau)))


def log_theta_prime(arg: ThetaArg) -> complex:
    """theta'(z; tau)/theta(z; tau), the prime acting on z"""
    ells, exponents, shift = _theta_exponents(arg)
    weights = np.exp(exponents - shift)
    partial = complex(np.sum(weights))
    if partial == 0 or shift + math.log(abs(partial)) < math.log(POLE_TOL):
        raise PoleError(f"|theta| < {POLE_TOL:g} at z = {arg.z}, tau = {arg.tau}")
    return complex(np.sum(2j * math.pi * ells * weights)) / partial


def _geometric_length(log_first: float, log_ratio: float) -> int:
    """Number of terms e^{log_first + j log_ratio} (log_ratio < 0) above TERM_TOL"""
    count = math.ceil((LOG_TERM_TOL - log_first) / log_ratio) + 2
    count = max(count, 2)
    if count > MAX_TERMS:
        raise ConvergenceFailure(f"series would need {count} terms")
    return count


def _check_rho_a(rho: float, a: float) -> None:
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (0, 1), got {rho}")
    if not a > 0.0:
        raise DomainError(f"a must be positive, got {a}")


def modified_theta(x: float, rho: float, a: float) -> float:
    """
    Theta(x; rho, a) = x(x-1) log rho + x log a
        + sum_{j>=0} log(1 + a rho^{2(j+x)}) + sum_{j>=0} log(1 + rho^{2(j+1-x)}/a)
    """
    _check_rho_a(rho, a)
    log_rho, log_a = math.log(rho), math.log(a)
    first = log_a + 2.0 * x * log_rho
    second = -log_a + 2.0 * (1.0 - x) * log_rho
    j1 = np.arange(_geometric_length(first, 2.0 * log_rho))
    j2 = np.arange(_geometric_length(second, 2.0 * log_rho))
    tail = np.sum(np.logaddexp(0.0, first + 2.0 * j1 * log_rho))
    tail += np.sum(np.logaddexp(0.0, second + 2.0 * j2 * log_rho))
    return x * (x - 1.0) * log_rho + x * log_a + float(tail)


def modified_theta_dx(x: float, rho: float, a: float) -> float:
    """Derivative of modified_theta in x from the term-wise differentiated series"""
    _check_rho_a(rho, a)
    log_rho, log_a = math.log(rho), math.log(a)
    first = log_a + 2.0 * x * log_rho
    second = -log_a + 2.0 * (1.0 - x) * log_rho
    j1 = np.arange(_geometric_length(first, 2.0 * log_rho))
    j2 = np.arange(_geometric_length(second, 2.0 * log_rho))
    plus = np.sum(expit(first + 2.0 * j1 * log_rho))
    minus = np.sum(expit(second + 2.0 * j2 * log_rho))
    return (2.0 * x - 1.0) * log_rho + log_a + 2.0 * log_rho * float(plus - minus)


def modified_theta_via_theta(x: float, rho: float, a: float) -> float:
    """Right-hand side of the reduction of Theta to the Jacobi theta function"""
    _check_rho_a(rho, a)
    big_l = -math.log(rho)
    log_a = math.log(a)
    j = np.arange(1, _geometric_length(2.0 * math.log(rho), 2.0 * math.log(rho)) + 1)
    euler = float(np.sum(np.log1p(-rho ** (2.0 * j))))
    shift = x + math.log(a * rho) / (2.0 * math.log(rho))
    return (0.5 * math.log(math.pi * a * rho ** -0.5 / big_l)
            + log_a ** 2 / (4.0 * big_l)
            - euler
            + log_theta(ThetaArg(shift, 1j * math.pi / big_l)).real)


def xi_series(x: float, phi: float, rho: float, a: float) -> complex:
    """
    Xi(x, phi; rho, a) = sum_{l>=0} e^{i phi l} / (1 + rho^{-(2l-2x+1)}/a)
                       - sum_{l<=-1} e^{i phi l} / (1 + a rho^{2l-2x+1})
    """
    _check_rho_a(rho, a)
    log_rho, log_a = math.log(rho), math.log(a)
    # both tails decay like rho^{2|l|}
    size = math.ceil((-LOG_TERM_TOL + abs(log_a)) / (-2.0 * log_rho) + abs(x) + 2)
    if size > MAX_TERMS:
        raise ConvergenceFailure(f"Xi series would need {size} terms")
    upper = np.arange(0, size + 1)
    lower = np.arange(-size, 0)
    up = expit(log_a + (2.0 * upper - 2.0 * x + 1.0) * log_rho)
    down = expit(-(log_a + (2.0 * lower - 2.0 * x + 1.0) * log_rho))
    return complex(np.sum(np.exp(1j * phi * upper) * up) - np.sum(np.exp(1j * phi * lower) * down))


def xi_series_at_zero(x: float, rho: float, a: float) -> float:
    """
    Closed form of Xi(x, 0; rho, a):
    [(log theta)'(x + log a/(2L); pi i/L) + 2xL + log a] / (2L), L = log(1/rho)
    """
    _check_rho_a(rho, a)
    big_l = -math.log(rho)
    log_a = math.log(a)
    prime = log_theta_prime(ThetaArg(x + log_a / (2.0 * big_l), 1j * math.pi / big_l)).real
    return (prime + 2.0 * x * big_l + log_a) / (2.0 * big_l)


@dataclass(frozen=True)
class DiscreteGaussian:
    """Integer law with P(X = k) = u^{(k-alpha)^2/2} / I(alpha, u)"""
    alpha: float
    u: float

    def __post_init__(self):
        if not 0.0 < self.u < 1.0:
            raise DomainError(f"discrete Gaussian needs u in (0, 1), got {self.u}")

    @property
    def decay(self) -> float:
        """-log u"""
        return -math.log(self.u)

    def support(self, center: float = None) -> np.ndarray:
        """Integers carrying all mass above TERM_TOL around center (default alpha)"""
        center = self.alpha if center is None else center
        half = math.ceil(math.sqrt(2.0 * (-LOG_TERM_TOL + 5.0) / self.decay)) + 2
        if half > MAX_TERMS:
            raise ConvergenceFailure(f"discrete Gaussian support would need {2 * half} points")
        mid = math.floor(center)
        return np.arange(mid - half, mid + half + 2)

    def log_weights(self, k: np.ndarray) -> np.ndarray:
        return -0.5 * self.decay * (np.asarray(k, dtype=float) - self.alpha) ** 2

    @property
    def log_normalizer(self) -> float:
        return float(logsumexp(self.log_weights(self.support())))

    @property
    def normalizer(self) -> float:
        return math.exp(self.log_normalizer)

    def pmf(self, k) -> np.ndarray:
        return np.exp(self.log_weights(k) - self.log_normalizer)

    def mean(self) -> float:
        k = self.support()
        return float(np.sum(k * self.pmf(k)))

    def variance(self) -> float:
        k = self.support()
        probs = self.pmf(k)
        mu = float(np.sum(k * probs))
        return float(np.sum((k - mu) ** 2 * probs))

    def cgf_Y(self, c: float, t: float) -> float:
        """log E exp(t c (X - alpha))"""
        if c == 0.0 or t == 0.0:
            return 0.0
        k = self.support(self.alpha + t * c / self.decay)
        tilted = self.log_weights(k) + t * c * (k - self.alpha)
        return float(logsumexp(tilted)) - self.log_normalizer

    def sample(self, rng: Generator, size: int) -> np.ndarray:
        k = self.support()
        probs = self.pmf(k)
        return rng.choice(k, size=size, p=probs / probs.sum())


def dn_pmf(d: DiscreteGaussian, k: int) -> float:
    return float(d.pmf(k))


def dn_cgf_Y(d: DiscreteGaussian, c: float, t: float) -> float:
    """CGF of Y = c (X - alpha), X ~ dN(alpha, u), by direct summation"""
    return d.cgf_Y(c, t)


def dn_cgf_Y_theta(alpha: float, u: float, c: float, t: float) -> float:
    """
    Same CGF through Poisson summation:
    t^2 c^2 / (4L) + log theta(alpha + tc/(2L); pi i/L) - log theta(alpha; pi i/L),
    L = -log(u)/2 = log(r2/r1).
    """
    big_l = -0.5 * math.log(u)
    tau = 1j * math.pi / big_l
    shifted = log_theta(ThetaArg(alpha + t * c / (2.0 * big_l), tau)).real
    base = log_theta(ThetaArg(alpha, tau)).real
    return t * t * c * c / (4.0 * big_l) + shifted - base
