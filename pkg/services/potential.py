"""
Radially symmetric potentials Q(z) = q(|z|) and radial test functions.

Polynomial profiles are differentiated exactly from their coefficients.
Tabulated profiles go through a cubic spline and 5-point stencils and are
flagged as reduced precision.
"""
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline
from scipy.special import betainc, beta

from errors import ConfigError, DomainError
from models import LambdaSpec, PotentialSpec

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _as_radius(r: ArrayLike, strict: bool = False) -> np.ndarray:
    arr = np.asarray(r, dtype=float)
    bad = arr <= 0.0 if strict else arr < 0.0
    if np.any(bad) or np.any(~np.isfinite(arr)):
        raise DomainError(f"radius must be {'> 0' if strict else '>= 0'} and finite, got {r!r}")
    return arr


def _stencil(f, r: np.ndarray, order: int, h: np.ndarray) -> np.ndarray:
    """Five-point central difference of the given order (1..4)"""
    f2p, f1p, f0, f1m, f2m = f(r + 2 * h), f(r + h), f(r), f(r - h), f(r - 2 * h)
    if order == 1:
        return (-f2p + 8 * f1p - 8 * f1m + f2m) / (12 * h)
    if order == 2:
        return (-f2p + 16 * f1p - 30 * f0 + 16 * f1m - f2m) / (12 * h ** 2)
    if order == 3:
        return (f2p - 2 * f1p + 2 * f1m - f2m) / (2 * h ** 3)
    if order == 4:
        return (f2p - 4 * f1p + 6 * f0 - 4 * f1m + f2m) / h ** 4
    raise ValueError(f"stencil order must be 1..4, got {order}")


class RadialProfile(ABC):
    """
    Radial profile q of a potential Q(z) = q(|z|).

    Subclasses provide q and its radial derivatives up to order 4; the
    Laplacian and its radial derivatives follow from
    4*Lap Q = q'/r + q'' and 4*d/dr Lap Q = q''/r - q'/r^2 + q'''.
    """

    reduced_precision: bool = False
    smoothness: Optional[int] = None

    @abstractmethod
    def derivative(self, r: ArrayLike, order: int = 0) -> np.ndarray:
        """d^order q / dr^order at r >= 0"""

    def q(self, r: ArrayLike) -> np.ndarray:
        return self.derivative(r, 0)

    def laplacian(self, r: ArrayLike) -> np.ndarray:
        r = _as_radius(r, strict=True)
        return (self.derivative(r, 1) / r + self.derivative(r, 2)) / 4.0

    def laplacian_dr(self, r: ArrayLike) -> np.ndarray:
        r = _as_radius(r, strict=True)
        d1, d2, d3 = (self.derivative(r, k) for k in (1, 2, 3))
        return (d2 / r - d1 / r ** 2 + d3) / 4.0

    def laplacian_d2r(self, r: ArrayLike) -> np.ndarray:
        r = _as_radius(r, strict=True)
        d1, d2, d3, d4 = (self.derivative(r, k) for k in (1, 2, 3, 4))
        return (d3 / r - 2 * d2 / r ** 2 + 2 * d1 / r ** 3 + d4) / 4.0

    def laplacian_of_log_laplacian(self, r: ArrayLike) -> np.ndarray:
        """Radial Laplacian of log Lap Q, i.e. (L'' + L'/r)/4 with L = log Lap Q"""
        r = _as_radius(r, strict=True)
        dq, ddq, d2dq = self.laplacian(r), self.laplacian_dr(r), self.laplacian_d2r(r)
        first = ddq / dq
        second = d2dq / dq - first ** 2
        return (second + first / r) / 4.0

    def mass_function(self, r: ArrayLike) -> np.ndarray:
        """F(r) = r q'(r) / 2"""
        r = _as_radius(r)
        return r * self.derivative(r, 1) / 2.0

    def check_growth(self, r0: float = 1.0) -> bool:
        """q(R) - 2 log R exceeds its value at R0 by more than 1 at R = 10 R0"""
        big = 10.0 * r0
        return float(self.q(big) - 2 * np.log(big)) > float(self.q(r0) - 2 * np.log(r0)) + 1.0


class RadialPotential(RadialProfile):
    """q(r) = sum_k c_k r^(2k), k = 1..K"""

    def __init__(self, coeffs: Sequence[float]):
        coeffs = [float(c) for c in coeffs]
        if not coeffs or not any(c != 0.0 for c in coeffs):
            raise ConfigError(f"potential coefficients must contain a nonzero value, got {coeffs}")
        self.coeffs: Tuple[float, ...] = tuple(coeffs)
        powers = np.zeros(2 * len(coeffs) + 1)
        lap = np.zeros(2 * len(coeffs) - 1)
        for k, c in enumerate(coeffs, start=1):
            powers[2 * k] = c
            lap[2 * k - 2] = k * k * c
        self._poly = Polynomial(powers)
        self._lap = Polynomial(lap)
        self._derivs = [self._poly.deriv(m) if m else self._poly for m in range(5)]
        self._lap_derivs = [self._lap.deriv(m) if m else self._lap for m in range(3)]
        self.smoothness = None

    def __repr__(self) -> str:
        return f"RadialPotential(coeffs={list(self.coeffs)})"

    def derivative(self, r: ArrayLike, order: int = 0) -> np.ndarray:
        r = _as_radius(r)
        if order < len(self._derivs):
            return self._derivs[order](r)
        return self._poly.deriv(order)(r)

    # Laplacian is itself a polynomial, no cancellation near the origin
    def laplacian(self, r: ArrayLike) -> np.ndarray:
        return self._lap_derivs[0](_as_radius(r, strict=True))

    def laplacian_dr(self, r: ArrayLike) -> np.ndarray:
        return self._lap_derivs[1](_as_radius(r, strict=True))

    def laplacian_d2r(self, r: ArrayLike) -> np.ndarray:
        return self._lap_derivs[2](_as_radius(r, strict=True))

    def cache_key(self) -> str:
        return ",".join(f"{c:.17g}" for c in self.coeffs)


class TabulatedPotential(RadialProfile):
    """General radial profile given on a grid (reduced precision)"""

    reduced_precision = True

    def __init__(self, r: Sequence[float], q: Sequence[float]):
        r = np.asarray(r, dtype=float)
        q = np.asarray(q, dtype=float)
        if r.ndim != 1 or r.shape != q.shape or r.size < 8:
            raise ConfigError("tabulated potential needs matching r and q columns with at least 8 rows")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ConfigError("tabulated potential radii must be non-negative and strictly increasing")
        self.r_grid = r
        self._spline = CubicSpline(r, q)
        self.smoothness = 2
        logger.info("Tabulated potential on [%g, %g] with %d nodes (reduced precision)", r[0], r[-1], r.size)

    @classmethod
    def from_csv(cls, path: Path) -> "TabulatedPotential":
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError) as e:
            raise ConfigError(f"cannot read potential table {path}: {e}")
        if not {"r", "q"} <= set(frame.columns):
            raise ConfigError(f"potential table {path} needs columns r,q")
        return cls(frame["r"].to_numpy(), frame["q"].to_numpy())

    def derivative(self, r: ArrayLike, order: int = 0) -> np.ndarray:
        r = _as_radius(r)
        if order == 0:
            return self._spline(r)
        h = 1e-3 * np.maximum(r, 1e-3)
        return _stencil(self._spline, r, order, h)

    def cache_key(self) -> str:
        return "table:" + ",".join(f"{v:.17g}" for v in self._spline(self.r_grid))


class RadialTestFunction(ABC):
    """
    Radial test function lambda with two continuous derivatives, vanishing
    outside its support [r_lo, r_hi].
    """

    support: Tuple[float, float] = (0.0, np.inf)
    smoothness: int = 2

    def derivatives(self, r: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lambda, lambda', lambda'') at r"""
        arr = _as_radius(r)
        flat = np.atleast_1d(arr).ravel()
        return tuple(part.reshape(arr.shape) for part in self._derivatives(flat))

    @abstractmethod
    def _derivatives(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Derivatives on a flat array of radii"""

    def __call__(self, r: ArrayLike) -> np.ndarray:
        return self.derivatives(r)[0]

    def value(self, r: ArrayLike) -> np.ndarray:
        return self.derivatives(r)[0]

    def d1(self, r: ArrayLike) -> np.ndarray:
        return self.derivatives(r)[1]

    def d2(self, r: ArrayLike) -> np.ndarray:
        return self.derivatives(r)[2]

    def laplacian(self, r: ArrayLike) -> np.ndarray:
        r = _as_radius(r, strict=True)
        _, d1, d2 = self.derivatives(r)
        return (d2 + d1 / r) / 4.0

    def knots(self) -> Tuple[float, ...]:
        """Radii where the function is not analytic"""
        return tuple(v for v in self.support if np.isfinite(v))


class ZeroFunction(RadialTestFunction):
    support = (0.0, 0.0)
    smoothness = 12

    def _derivatives(self, r):
        r = _as_radius(r)
        zero = np.zeros_like(r)
        return zero, zero, zero

    def knots(self):
        return ()


class ConstantFunction(RadialTestFunction):
    """lambda = c everywhere"""

    smoothness = 12

    def __init__(self, c: float):
        self.c = float(c)

    def _derivatives(self, r):
        r = _as_radius(r)
        zero = np.zeros_like(r)
        return np.full_like(r, self.c), zero, zero

    def knots(self):
        return ()


class BumpFunction(RadialTestFunction):
    """height * exp(1 - 1/(1 - u^2)), u = (r - mid)/halfwidth, smooth of all orders"""

    smoothness = 12

    def __init__(self, r_lo: float, r_hi: float, height: float = 1.0):
        if not 0.0 <= r_lo < r_hi:
            raise ConfigError(f"bump support must satisfy 0 <= r_lo < r_hi, got ({r_lo}, {r_hi})")
        self.support = (float(r_lo), float(r_hi))
        self.height = float(height)
        self._mid = 0.5 * (r_lo + r_hi)
        self._half = 0.5 * (r_hi - r_lo)

    def _derivatives(self, r):
        r = _as_radius(r)
        u = (r - self._mid) / self._half
        inside = np.abs(u) < 1.0
        val = np.zeros_like(r)
        d1 = np.zeros_like(r)
        d2 = np.zeros_like(r)
        ui = u[inside]
        w = 1.0 - ui ** 2
        phi = self.height * np.exp(1.0 - 1.0 / w)
        g1 = -2.0 * ui / w ** 2
        g2 = -(2.0 + 6.0 * ui ** 2) / w ** 3
        val[inside] = phi
        d1[inside] = phi * g1 / self._half
        d2[inside] = phi * (g1 ** 2 + g2) / self._half ** 2
        return val, d1, d2


class PlateauFunction(RadialTestFunction):
    """
    g(r) * chi(r) where chi = 1 on the plateau, rises and falls through a
    regularized incomplete beta step (C^k at the knots), and vanishes off the
    support. g is a polynomial in r or a + b log r.
    """

    def __init__(self, kind: str, coeffs: Sequence[float], support: Tuple[float, float],
                 plateau: Optional[Tuple[float, float]] = None, smoothness: int = 6):
        lo, hi = (float(v) for v in support)
        if plateau is None:
            plateau = (lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo))
        p_lo, p_hi = (float(v) for v in plateau)
        if not 0.0 <= lo <= p_lo <= p_hi <= hi or lo == hi:
            raise ConfigError(f"plateau {plateau} must lie inside support {support}")
        if p_lo == lo and lo > 0.0:
            raise ConfigError("plateau may touch the support only at r_lo = 0")
        if p_hi == hi:
            raise ConfigError("plateau must end strictly inside the support")
        self.kind = kind
        self.support = (lo, hi)
        self.plateau = (p_lo, p_hi)
        self.smoothness = int(smoothness)
        self._k = int(smoothness)
        self._beta = beta(self._k + 1, self._k + 1)
        if kind == "poly":
            self._g = Polynomial([float(c) for c in coeffs])
            self._g1, self._g2 = self._g.deriv(1), self._g.deriv(2)
        elif kind == "log":
            self._a, self._b = (float(c) for c in coeffs)
        else:
            raise ConfigError(f"unknown plateau kind {kind!r}")

    def _inner(self, r):
        if self.kind == "poly":
            return self._g(r), self._g1(r), self._g2(r)
        with np.errstate(divide="ignore"):
            safe = np.where(r > 0, r, np.nan)
            return self._a + self._b * np.log(safe), self._b / safe, -self._b / safe ** 2

    def _step(self, u):
        k = self._k
        s0 = betainc(k + 1, k + 1, u)
        s1 = (u * (1 - u)) ** k / self._beta
        s2 = k * (u * (1 - u)) ** (k - 1) * (1 - 2 * u) / self._beta
        return s0, s1, s2

    def _cutoff(self, r):
        lo, hi = self.support
        p_lo, p_hi = self.plateau
        c0 = np.zeros_like(r)
        c1 = np.zeros_like(r)
        c2 = np.zeros_like(r)
        c0[(r >= p_lo) & (r <= p_hi)] = 1.0
        rise = (r > lo) & (r < p_lo)
        if np.any(rise):
            width = p_lo - lo
            s0, s1, s2 = self._step((r[rise] - lo) / width)
            c0[rise], c1[rise], c2[rise] = s0, s1 / width, s2 / width ** 2
        fall = (r > p_hi) & (r < hi)
        if np.any(fall):
            width = hi - p_hi
            s0, s1, s2 = self._step((hi - r[fall]) / width)
            c0[fall], c1[fall], c2[fall] = s0, -s1 / width, s2 / width ** 2
        return c0, c1, c2

    def _derivatives(self, r):
        r = _as_radius(r)
        c0, c1, c2 = self._cutoff(r)
        val = np.zeros_like(r)
        d1 = np.zeros_like(r)
        d2 = np.zeros_like(r)
        live = c0 != 0.0
        if np.any(live):
            g0, g1, g2 = self._inner(r[live])
            a0, a1, a2 = c0[live], c1[live], c2[live]
            val[live] = g0 * a0
            d1[live] = g1 * a0 + g0 * a1
            d2[live] = g2 * a0 + 2 * g1 * a1 + g0 * a2
        return val, d1, d2

    def knots(self):
        return tuple(sorted(set(self.support) | set(self.plateau)))


class PerturbedPotential(RadialProfile):
    """q(r) - s * lambda(r) / n"""

    def __init__(self, base: RadialProfile, bump: Optional[RadialTestFunction] = None,
                 s: float = 0.0, n: int = 1):
        if n < 1:
            raise DomainError(f"particle number must be positive, got {n}")
        self.base = base
        self.bump = bump if bump is not None else ZeroFunction()
        self.s = float(s)
        self.n = int(n)
        self.reduced_precision = base.reduced_precision

    def __repr__(self) -> str:
        return f"PerturbedPotential(base={self.base!r}, s={self.s}, n={self.n})"

    def derivative(self, r: ArrayLike, order: int = 0) -> np.ndarray:
        value = self.base.derivative(r, order)
        if self.s == 0.0:
            return value
        if order > 2:
            raise DomainError("test functions provide derivatives up to order 2")
        return value - self.s * self.bump.derivatives(r)[order] / self.n

    def laplacian(self, r: ArrayLike) -> np.ndarray:
        value = self.base.laplacian(r)
        if self.s == 0.0:
            return value
        return value - self.s * self.bump.laplacian(r) / self.n

    def with_strength(self, s: float) -> "PerturbedPotential":
        return PerturbedPotential(self.base, self.bump, s, self.n)


def eval_q(p: RadialProfile, r: ArrayLike) -> np.ndarray:
    """q(r) for r > 0"""
    return p.q(_as_radius(r, strict=True))


def laplacian(p: RadialProfile, r: ArrayLike) -> np.ndarray:
    """(q'(r)/r + q''(r)) / 4 for r > 0"""
    return p.laplacian(_as_radius(r, strict=True))


def eval_perturbed(pp: PerturbedPotential, r: ArrayLike) -> np.ndarray:
    """q(r) - s lambda(r)/n for r > 0"""
    return pp.q(_as_radius(r, strict=True))


def build_potential(spec: PotentialSpec) -> RadialProfile:
    if spec.coeffs is not None:
        return RadialPotential(spec.coeffs)
    return TabulatedPotential.from_csv(spec.table)


def build_test_function(spec: Optional[LambdaSpec]) -> RadialTestFunction:
    if spec is None:
        return ZeroFunction()
    if spec.kind == "const":
        return ConstantFunction(spec.height)
    if spec.kind == "bump":
        return BumpFunction(spec.support[0], spec.support[1], spec.height)
    return PlateauFunction(spec.kind, spec.coeffs, spec.support, spec.plateau, spec.smoothness)
