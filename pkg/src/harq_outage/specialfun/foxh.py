"""Generalized Fox H and Meijer G functions as Mellin-Barnes integrals.

Kernels follow the x^(-s) convention

    Y[x] = (1/2 pi i) int M(s) x^(-s) ds

with M assembled from the factors

    Xi (a, alpha, A, phi)(s) = A^(phi + a + alpha s - 1) Psi(phi, phi + a + alpha s; A)
    Xi'(a, alpha, A, phi)(s) = A^(phi - a - alpha s)     Psi(phi, phi + 1 - a - alpha s; A)

Xi sits on lower parameters j <= m (numerator) and upper i > n
(denominator); Xi' on upper i <= n (numerator) and lower j > m
(denominator).  At A = 0 they reduce to Gamma(phi + a + alpha s - 1)/Gamma(phi)
and Gamma(phi - a - alpha s)/Gamma(phi), and those limits are used directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ..errors import DomainError, PoleError
from .contour import ContourSpec, mellin_barnes
from .hypergeometric import psi_array

Quad = tuple  # (a, alpha, A, phi)


@dataclass(frozen=True)
class FoxHSpec:
    upper_params: tuple = ()
    lower_params: tuple = ()
    split_indices: tuple = (0, 0)

    def __post_init__(self):
        up = tuple(tuple(float(v) for v in q) for q in self.upper_params)
        lo = tuple(tuple(float(v) for v in q) for q in self.lower_params)
        object.__setattr__(self, "upper_params", up)
        object.__setattr__(self, "lower_params", lo)
        m, n = self.split_indices
        p, q = len(up), len(lo)
        if not (0 <= n <= p and 0 <= m <= q):
            raise DomainError(f"split indices (m={m}, n={n}) invalid for p={p}, q={q}")
        for quad in up + lo:
            if len(quad) != 4:
                raise DomainError("parameters must be quadruples (a, alpha, A, phi)")
            _, alpha, big_a, phi = quad
            if not alpha > 0 or not big_a >= 0 or not phi > 0:
                raise DomainError(f"invalid quadruple {quad}")

    @property
    def m(self) -> int:
        return self.split_indices[0]

    @property
    def n(self) -> int:
        return self.split_indices[1]


def _xi(quad, s, primed: bool):
    """Xi or Xi' factor of one quadruple, as complex log-value."""
    a, alpha, big_a, phi = quad
    if primed:
        b = phi + 1 - a - alpha * s
    else:
        b = phi + a + alpha * s
    if big_a == 0.0:
        # A -> 0 limit: A^(b-1) Psi(phi, b; A) -> Gamma(b-1)/Gamma(phi)
        return special.loggamma(b - 1) - special.gammaln(phi)
    vals = psi_array(phi, b, big_a, log_scale=(b - 1) * math.log(big_a))
    return np.log(vals)


def fox_h_kernel(spec: FoxHSpec):
    """M(s) for the generalized Fox H function of ``spec``."""
    m, n = spec.m, spec.n
    up, lo = spec.upper_params, spec.lower_params

    def kernel(s):
        s = np.asarray(s, dtype=complex)
        log_m = np.zeros(s.shape, dtype=complex)
        for j, quad in enumerate(lo):
            if j < m:
                log_m += _xi(quad, s, primed=False)
            else:
                log_m -= _xi(quad, s, primed=True)
        for i, quad in enumerate(up):
            if i < n:
                log_m += _xi(quad, s, primed=True)
            else:
                log_m -= _xi(quad, s, primed=False)
        return np.exp(log_m)

    return kernel


def fundamental_strip(spec: FoxHSpec) -> tuple[float, float]:
    """Open interval of admissible abscissae from the A = 0 Gamma factors.

    Quadruples with A > 0 contribute Psi factors, which are entire in s and
    impose no constraint.
    """
    lo_bound, hi_bound = -math.inf, math.inf
    for j, (b, beta, big_b, phi) in enumerate(spec.lower_params):
        if j < spec.m and big_b == 0.0:
            # Gamma(phi + b + beta s - 1) has poles at s <= (1 - phi - b)/beta
            lo_bound = max(lo_bound, (1 - phi - b) / beta)
    for i, (a, alpha, big_a, phi) in enumerate(spec.upper_params):
        if i < spec.n and big_a == 0.0:
            # Gamma(phi - a - alpha s) has poles at s >= (phi - a)/alpha
            hi_bound = min(hi_bound, (phi - a) / alpha)
    return lo_bound, hi_bound


def default_abscissa(lo: float, hi: float) -> float:
    if lo >= hi:
        raise PoleError(f"empty fundamental strip ({lo}, {hi})")
    if math.isinf(lo) and math.isinf(hi):
        return 0.5
    if math.isinf(lo):
        return hi - 0.5
    if math.isinf(hi):
        return lo + 0.5
    return 0.5 * (lo + hi)


def validate_abscissa(spec: FoxHSpec, c: float):
    lo, hi = fundamental_strip(spec)
    if not lo < c < hi:
        raise PoleError(f"abscissa c={c} outside the fundamental strip ({lo}, {hi})")


def fox_h(spec: FoxHSpec, x: float, contour: ContourSpec | None = None) -> float:
    """Y^{m,n}_{p,q}[spec | x] by Mellin-Barnes quadrature."""
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    if contour is None:
        contour = ContourSpec(c=default_abscissa(*fundamental_strip(spec)))
    validate_abscissa(spec, contour.c)
    return mellin_barnes(fox_h_kernel(spec), x, contour)


def shift_spec(spec: FoxHSpec, rho: float) -> FoxHSpec:
    up = tuple((a + rho * al, al, A, ph) for a, al, A, ph in spec.upper_params)
    lo = tuple((b + rho * be, be, B, ph) for b, be, B, ph in spec.lower_params)
    return FoxHSpec(up, lo, spec.split_indices)


def invert_spec(spec: FoxHSpec) -> FoxHSpec:
    up = tuple((1 - b, be, B, ph) for b, be, B, ph in spec.lower_params)
    lo = tuple((1 - a, al, A, ph) for a, al, A, ph in spec.upper_params)
    return FoxHSpec(up, lo, (spec.n, spec.m))


def fox_h_property_shift(spec: FoxHSpec, rho: float, x: float, contour: ContourSpec | None = None) -> float:
    """Y[(a + rho alpha), (b + rho beta) | x]; equals x^rho Y[spec | x].

    The shifted kernel is M(s + rho), so the abscissa moves to c - rho.
    """
    if contour is None:
        contour = ContourSpec(c=default_abscissa(*fundamental_strip(spec)))
    return fox_h(shift_spec(spec, rho), x, contour.with_c(contour.c - rho))


def fox_h_property_invert(spec: FoxHSpec, x: float, contour: ContourSpec | None = None) -> float:
    """Y^{n,m}_{q,p}[(1 - b); (1 - a) | 1/x]; equals Y[spec | x]."""
    if contour is None:
        contour = ContourSpec(c=default_abscissa(*fundamental_strip(spec)))
    return fox_h(invert_spec(spec), 1.0 / x, contour.with_c(-contour.c))


# --------------------------------------------------------------------------
# Meijer G


def meijer_g_kernel(a_upper, b_lower, m: int, n: int):
    """Gamma-ratio kernel of G^{m,n}_{p,q} in the x^(-s) convention."""
    a_upper = [float(v) for v in a_upper]
    b_lower = [float(v) for v in b_lower]

    def kernel(s):
        s = np.asarray(s, dtype=complex)
        log_m = np.zeros(s.shape, dtype=complex)
        for j, b in enumerate(b_lower):
            if j < m:
                log_m += special.loggamma(b + s)
            else:
                log_m -= special.loggamma(1 - b - s)
        for i, a in enumerate(a_upper):
            if i < n:
                log_m += special.loggamma(1 - a - s)
            else:
                log_m -= special.loggamma(a + s)
        return np.exp(log_m)

    return kernel


def meijer_g_strip(a_upper, b_lower, m: int, n: int) -> tuple[float, float]:
    lo = max((-b for b in b_lower[:m]), default=-math.inf)
    hi = min((1 - a for a in a_upper[:n]), default=math.inf)
    return lo, hi


def meijer_g(a_upper, b_lower, x: float, contour: ContourSpec | None = None, m: int = 0, n: int | None = None) -> float:
    """Meijer G^{m,n}_{p,q}(a; b | x); defaults to m = 0, n = p."""
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    if n is None:
        n = len(a_upper)
    lo, hi = meijer_g_strip(a_upper, b_lower, m, n)
    if contour is None:
        contour = ContourSpec(c=default_abscissa(lo, hi))
    if not lo < contour.c < hi:
        raise PoleError(f"abscissa c={contour.c} outside the fundamental strip ({lo}, {hi})")
    return mellin_barnes(meijer_g_kernel(a_upper, b_lower, m, n), x, contour)
