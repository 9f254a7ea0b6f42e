# -*- coding: utf-8 -*-
r"""Symmetric alpha-stable primitives: parameters, sampling, CDF oracle, bound constants.

    Only the symmetric law is handled: SaS(sigma) has characteristic function
    exp(-sigma**alpha * |theta|**alpha), with 0 < alpha < 2.

    Some design notes:
    - parameters are validated once, in make_params(), and then carried around as
      an immutable AlphaStableParams

    - sampling never owns a seed: a RandomKey (see array_builder) yields a pair of
      uniforms and the Chambers-Mallows-Stuck transform turns them into a variate
        - alpha == 1 uses sigma*tan(U) directly
        - the transform is linear in sigma, so a draw at sigma is exactly sigma
          times the draw at sigma=1 for the same key

    - the CDF comes from the characteristic function through its Zolotarev form, a
      finite integral over theta in (0, pi/2) of exp(-x**(alpha/(alpha-1)) V(theta))
        - the integrand steps between 0 and 1 where the scaled V crosses 1; that
          point is found by brentq and handed to quad as a breakpoint
        - for alpha < 1 the complement 1 - exp(..) is integrated, so the tail
          P(|X| >= x) is what the quadrature returns in both cases
        - far out (x**-alpha <= 1e-4) the convergent or asymptotic power series
          in x**-alpha is summed instead
        - alpha == 1 is the Cauchy law in closed form
      small tails keep their relative accuracy this way, which the
      truncated-variance integral depends on

    - the constants of the tail bound and the truncated-variance bound are
      calibrated numerically over a grid at sigma=1 and returned as certificates
      that remember their grid


    Typical usage:

    import stable_core as sc

    p = sc.make_params(1.0, 1.0)
    sc.cdf_sas(p, 1.0)  # 0.75

    cert = sc.calibrate_tail_constant(1.0)
    sc.tail_bound(sc.make_params(1.0, 0.1), 10.0, cert)  # ~0.006366
"""
from __future__ import annotations

import dataclasses
import functools
import logging
import math
from typing import TYPE_CHECKING, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

import gof_stats

if TYPE_CHECKING:
    import array_builder

log = logging.getLogger(__name__)

CDF_TOLERANCE = 1e-8
# absolute error allowed on cdf_sas and tail_probability

TAIL_RTOL = 1e-5
# relative error allowed on tail_probability, which the bound checks divide by

SERIES_START = 1e-4
# the large-x expansion replaces the integral once x**-alpha is at or below this

SERIES_TERMS = 8

THETA_EDGE = 1e-12
LOG_HUGE = 700.0

DEFAULT_T_GRID: Tuple[float, ...] = tuple(2.0 ** (i / 4) for i in range(65))
# 1 .. 2**16 in quarter-octave steps, for the tail constant

DEFAULT_K_GRID: Tuple[float, ...] = tuple(2.0**i for i in range(21))
# 1, 2, 4, .. 2**20, for the truncated-variance constant

ECF_FLOOR = 0.1
# dispersion_estimate refuses theta where the empirical |CF| is at or below this


class ParamsError(ValueError):
    """Raised when alpha or sigma are outside the symmetric stable parameter space"""

    pass


class DomainError(ValueError):
    """Raised when a formula or bound is used outside the range where it holds"""

    pass


class QuadratureError(ArithmeticError):
    """Raised when numerical integration doesn't reach the documented tolerance"""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


class GridError(ValueError):
    """Raised when the empirical characteristic function is too small on a theta grid"""

    pass


@dataclasses.dataclass(frozen=True)
class AlphaStableParams:
    """Symmetric alpha-stable law SaS(sigma); skewness and shift are fixed at 0."""

    alpha: float
    """stability index, strictly inside (0, 2)"""

    sigma: float = 1.0
    """dispersion parameter: the characteristic function is exp(-sigma**alpha |theta|**alpha)"""

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ParamsError(f"alpha out of open interval (0,2): {self.alpha}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParamsError(f"sigma must be positive and finite: {self.sigma}")

    @property
    def dispersion(self) -> float:
        """sigma**alpha, the quantity that adds up over independent summands"""
        return self.sigma**self.alpha

    def with_sigma(self, sigma: float) -> AlphaStableParams:
        return self.__class__(self.alpha, sigma)

    def __repr__(self):
        return f"{self.__class__.__name__}(alpha={self.alpha!r}, sigma={self.sigma!r})"


@dataclasses.dataclass(frozen=True)
class TailBoundCert:
    """Calibrated constant for P(|X| >= t) <= C * sigma**alpha * t**-alpha."""

    alpha: float

    c_alpha: float
    """max of the grid supremum of P(|X| >= t) * t**alpha (sigma=1) and asymptotic_c"""

    asymptotic_c: float
    """c in P(|X| >= t) ~ c * t**-alpha as t -> inf"""

    valid_from_t: float = 1.0
    """the bound is only asserted for t >= valid_from_t (and sigma <= 1)"""

    t_grid: Tuple[float, ...] = ()
    """grid the supremum was taken over"""

    def __post_init__(self):
        if not self.c_alpha > 0:
            raise ParamsError(f"c_alpha must be positive: {self.c_alpha}")
        if not self.valid_from_t >= 1:
            raise ParamsError(f"valid_from_t must be >= 1: {self.valid_from_t}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "c_alpha": self.c_alpha,
            "asymptotic_c": self.asymptotic_c,
            "valid_from_t": self.valid_from_t,
            "t_grid": list(self.t_grid),
        }


@dataclasses.dataclass(frozen=True)
class VarianceBoundCert:
    """Calibrated constant for Var(X 1[|X| <= K]) <= c * K**(2-alpha) * sigma**alpha."""

    alpha: float
    c: float
    asymptotic_c: float
    k_grid: Tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "c": self.c,
            "asymptotic_c": self.asymptotic_c,
            "k_grid": list(self.k_grid),
        }


def make_params(alpha: float, sigma: float = 1.0) -> AlphaStableParams:
    return AlphaStableParams(float(alpha), float(sigma))


# sampling ------------------------------------------------------------------------------ #


def cms_transform(alpha: float, sigma: float, u, e) -> np.ndarray:
    """Chambers-Mallows-Stuck map for the symmetric case.

    u uniform on the open interval (-pi/2, pi/2), e unit-mean exponential; both
    may be arrays of the same shape.
    """
    u = np.asarray(u, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if alpha == 1.0:
        return sigma * np.tan(u)
    core = (
        np.sin(alpha * u)
        / np.cos(u) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    )
    return sigma * core


def sample_sas(params: AlphaStableParams, key: array_builder.RandomKey) -> float:
    """One SaS(sigma) variate, a pure function of the key"""
    u, e = key.uniform_pair()
    return float(cms_transform(params.alpha, params.sigma, u, e))


def cf_value(params: AlphaStableParams, theta: float) -> float:
    return math.exp(-params.dispersion * abs(theta) ** params.alpha)


# distribution function ----------------------------------------------------------------- #


def _quad(func, a: float, b: float, **kwargs) -> Tuple[float, float]:
    result = integrate.quad(func, a, b, full_output=1, **kwargs)
    value, abserr = result[0], result[1]
    if len(result) > 3:
        # quadpack returned a warning message instead of raising
        log.debug(f"quad on [{a}, {b}]: {result[3].splitlines()[0]} (abserr {abserr:.2e})")
    return value, abserr


@functools.lru_cache(maxsize=2**16)
def _tail_standard(alpha: float, x: float) -> float:
    """P(|X| >= x) for SaS(1), x >= 0"""
    if x == 0:
        return 1.0
    if alpha == 1.0:
        return 2 / math.pi * math.atan2(1.0, x)
    if x ** (-alpha) <= SERIES_START:
        return _tail_series(alpha, x)

    def kernel(theta: float) -> float:
        scaled = math.exp(min(_log_scaled_v(alpha, x, theta), LOG_HUGE))
        return -math.expm1(-scaled) if alpha < 1 else math.exp(-scaled)

    # the kernel switches between 0 and 1 where the scaled V crosses 1
    lo, hi = THETA_EDGE, math.pi / 2 - THETA_EDGE
    points = None
    if _log_scaled_v(alpha, x, lo) * _log_scaled_v(alpha, x, hi) < 0:
        points = [optimize.brentq(lambda t: _log_scaled_v(alpha, x, t), lo, hi, xtol=1e-15)]
    value, abserr = _quad(kernel, 0.0, math.pi / 2, points=points, epsabs=1e-15, epsrel=1e-11, limit=400)

    tail = value * 2 / math.pi
    residual = abserr * 2 / math.pi
    if residual > min(CDF_TOLERANCE, TAIL_RTOL * tail) or not -CDF_TOLERANCE <= tail <= 1 + CDF_TOLERANCE:
        raise QuadratureError(f"tail integral at alpha={alpha}, x={x} did not converge", residual)
    return min(1.0, max(0.0, tail))


def _log_scaled_v(alpha: float, x: float, theta: float) -> float:
    """log of x**(alpha/(alpha-1)) * V(theta), V the symmetric Zolotarev kernel on (0, pi/2)"""
    cos_t = math.cos(theta)
    sin_a = math.sin(alpha * theta)
    if cos_t <= 0.0:
        return -math.inf if alpha > 1 else math.inf
    if sin_a <= 0.0:
        return math.inf if alpha > 1 else -math.inf
    ratio = alpha / (alpha - 1.0)
    return ratio * (math.log(x) + math.log(cos_t) - math.log(sin_a)) + math.log(
        math.cos((alpha - 1.0) * theta) / cos_t
    )


def _tail_series(alpha: float, x: float) -> float:
    """Large-x expansion: (2/pi) sum_k (-1)**(k+1) Gamma(k alpha) sin(k pi alpha/2) x**(-k alpha) / k!"""
    terms = [
        (-1) ** (k + 1)
        * math.exp(math.lgamma(k * alpha) - math.lgamma(k + 1) - k * alpha * math.log(x))
        * math.sin(k * math.pi * alpha / 2)
        for k in range(1, SERIES_TERMS + 1)
    ]
    return 2 / math.pi * math.fsum(terms)


def tail_probability(params: AlphaStableParams, t: float) -> float:
    """P(|X| >= t) for X ~ SaS(sigma)"""
    t = abs(float(t))
    if not math.isfinite(t):
        raise DomainError(f"t must be finite: {t}")
    if t == 0:
        return 1.0
    return _tail_standard(params.alpha, t / params.sigma)


def cdf_sas(params: AlphaStableParams, x: float) -> float:
    """Distribution function of SaS(sigma), by inversion of the characteristic function.

    Only x > 0 is integrated; negative x is reflected, so F(0) = 1/2 exactly and
    F(x) + F(-x) = 1.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"x must be finite: {x}")
    if x == 0:
        return 0.5
    upper = 1.0 - 0.5 * _tail_standard(params.alpha, abs(x) / params.sigma)
    return upper if x > 0 else 1.0 - upper


def quantile_sas(params: AlphaStableParams, p: float) -> float:
    """Inverse of cdf_sas by bisection"""
    if not 0 < p < 1:
        raise DomainError(f"probability must be inside (0, 1): {p}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -quantile_sas(params, 1.0 - p)
    hi = params.sigma
    while cdf_sas(params, hi) < p:
        hi *= 2.0
    return optimize.bisect(
        lambda x: cdf_sas(params, x) - p, 0.0, hi, xtol=1e-12, rtol=1e-10, maxiter=200
    )


# bound constants ----------------------------------------------------------------------- #


def asymptotic_tail_constant(alpha: float) -> float:
    """c with P(|X| >= t) ~ c * t**-alpha for SaS(1)"""
    return 2 / math.pi * math.gamma(alpha) * math.sin(math.pi * alpha / 2)


def calibrate_tail_constant(
    alpha: float, t_grid: Sequence[float] | None = None
) -> TailBoundCert:
    """Calibrate C_alpha as a supremum over t_grid of P(|X| >= t) * t**alpha at sigma=1.

    The asymptotic constant is folded in, since for some alpha the supremum is
    only approached as t -> inf.
    """
    grid = tuple(sorted(float(t) for t in (DEFAULT_T_GRID if t_grid is None else t_grid)))
    return _calibrate_tail_constant(float(alpha), grid)


@functools.lru_cache(maxsize=64)
def _calibrate_tail_constant(alpha: float, grid: Tuple[float, ...]) -> TailBoundCert:
    if not grid or grid[0] < 1:
        raise DomainError(f"t grid must be nonempty and start at t >= 1: {grid[:3]}")
    params = make_params(alpha)
    grid_sup = max(tail_probability(params, t) * t**alpha for t in grid)
    asymptotic = asymptotic_tail_constant(alpha)
    log.info(f"tail constant alpha={alpha}: grid sup {grid_sup:.6f}, asymptotic {asymptotic:.6f}")
    return TailBoundCert(
        alpha=alpha,
        c_alpha=max(grid_sup, asymptotic),
        asymptotic_c=asymptotic,
        valid_from_t=grid[0],
        t_grid=grid,
    )


def tail_bound(params: AlphaStableParams, t: float, cert: TailBoundCert) -> float:
    if params.sigma > 1:
        raise DomainError(f"tail bound only holds for sigma <= 1: {params.sigma}")
    if t < cert.valid_from_t:
        raise DomainError(f"tail bound only holds for t >= {cert.valid_from_t}: {t}")
    if cert.alpha != params.alpha:
        raise DomainError(f"certificate is for alpha={cert.alpha}, not {params.alpha}")
    return cert.c_alpha * params.dispersion * t ** (-params.alpha)


@functools.lru_cache(maxsize=2**12)
def _moment_piece(alpha: float, lo: float, hi: float) -> float:
    """int_lo^hi 2x P(|X| >= x) dx for SaS(1)"""
    value, abserr = _quad(
        lambda x: 2.0 * x * _tail_standard(alpha, x) if x > 0 else 0.0,
        lo,
        hi,
        epsabs=0.0,
        epsrel=1e-10,
        limit=200,
    )
    if abserr > max(CDF_TOLERANCE, 1e-8 * abs(value)):
        raise QuadratureError(f"second moment on [{lo}, {hi}] did not converge", abserr)
    return value


def _truncated_second_moment(alpha: float, upper: float) -> float:
    """E[X**2 1[|X| <= upper]] for SaS(1), via int_0^K 2x P(|X| >= x) dx - K**2 P(|X| >= K)"""
    if upper <= 1.0:
        integral = _moment_piece(alpha, 0.0, upper)
    else:
        # octave pieces, so repeated calls over a K grid reuse cached pieces
        edges = [0.0, 1.0]
        while edges[-1] * 2 < upper:
            edges.append(edges[-1] * 2)
        edges.append(upper)
        integral = math.fsum(_moment_piece(alpha, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    return max(0.0, integral - upper**2 * _tail_standard(alpha, upper))


def truncated_variance(params: AlphaStableParams, K: float) -> float:
    """Var(X 1[|X| <= K]) for X ~ SaS(sigma); the mean is 0 by symmetry"""
    if K < 1:
        raise DomainError(f"truncation level must be >= 1: {K}")
    if params.sigma > 1:
        raise DomainError(f"truncated variance bound only holds for sigma <= 1: {params.sigma}")
    return params.sigma**2 * _truncated_second_moment(params.alpha, K / params.sigma)


def calibrate_variance_constant(
    alpha: float, k_grid: Sequence[float] | None = None
) -> VarianceBoundCert:
    grid = tuple(sorted(float(k) for k in (DEFAULT_K_GRID if k_grid is None else k_grid)))
    return _calibrate_variance_constant(float(alpha), grid)


@functools.lru_cache(maxsize=64)
def _calibrate_variance_constant(alpha: float, grid: Tuple[float, ...]) -> VarianceBoundCert:
    if not grid or grid[0] < 1:
        raise DomainError(f"K grid must be nonempty and start at K >= 1: {grid[:3]}")
    params = make_params(alpha)
    grid_sup = max(truncated_variance(params, K) / K ** (2 - alpha) for K in grid)
    asymptotic = asymptotic_tail_constant(alpha) * alpha / (2 - alpha)
    log.info(f"variance constant alpha={alpha}: grid sup {grid_sup:.6f}, asymptotic {asymptotic:.6f}")
    return VarianceBoundCert(
        alpha=alpha, c=max(grid_sup, asymptotic), asymptotic_c=asymptotic, k_grid=grid
    )


def variance_bound(params: AlphaStableParams, K: float, cert: VarianceBoundCert) -> float:
    if K < 1 or params.sigma > 1:
        raise DomainError(f"variance bound only holds for K >= 1, sigma <= 1: {K=}, {params.sigma=}")
    if cert.alpha != params.alpha:
        raise DomainError(f"certificate is for alpha={cert.alpha}, not {params.alpha}")
    return cert.c * K ** (2 - params.alpha) * params.dispersion


# dispersion ---------------------------------------------------------------------------- #


def dispersion_estimate(
    sample: gof_stats.EmpiricalSample, alpha: float, theta_grid: Sequence[float]
) -> float:
    """Estimate sigma**alpha as the grid average of -ln|empirical CF(theta)| / |theta|**alpha"""
    if not sample.n:
        raise DomainError("dispersion estimate needs a nonempty sample")
    if not theta_grid or any(theta == 0 for theta in theta_grid):
        raise DomainError(f"theta grid must be nonempty and exclude 0: {theta_grid}")
    estimates = []
    for theta, magnitude in gof_stats.ecf(sample, theta_grid):
        if magnitude <= ECF_FLOOR:
            raise GridError(
                f"|empirical CF| = {magnitude:.4f} at theta={theta} is at or below {ECF_FLOOR}: use smaller theta"
            )
        estimates.append(-math.log(magnitude) / abs(theta) ** alpha)
    return math.fsum(estimates) / len(estimates)
