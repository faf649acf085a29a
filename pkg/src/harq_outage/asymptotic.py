"""High-SNR outage: the region integral g_l, the zeta * varrho * (C gamma)^-mK
factorization, diversity estimates and the monotonicity/convexity lemmas.

g_l(x) = int_{prod (1 + t_k) <= x} prod t_k^(a_k - 1) dt with a_k = m + l_k is
evaluated as prod Gamma(a_k) times a Meijer G^{0,K+1}_{K+1,K+1} function.
Most helpers accept the shape vector a directly, so reduced indices with
fewer rounds (needed by the convexity recurrence) are expressible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .channel import PowerAllocation, SystemModel, derive_params
from .errors import DomainError
from .outage import weight_params
from .specialfun.contour import ContourSpec, mellin_barnes
from .specialfun.foxh import meijer_g_kernel

REGIME_WARNING_LEVEL = 0.1
LN2 = math.log(2.0)


def _shapes(index, m: int) -> tuple:
    return tuple(int(m) + int(lk) for lk in tuple(index))


def _meijer_abscissa(shapes, x: float) -> float:
    # the strip is c < -max(a); pick the half-integer there that minimises
    # x^-c |kernel(c)|, which keeps the quadrature free of cancellation
    top = max(shapes)
    lx = math.log(x)
    best_c, best_v = None, math.inf
    for j in range(80):
        c = -top - 0.5 - j
        sp = -c
        v = -c * lx + sum(special.gammaln(sp - a) for a in shapes) - len(shapes) * special.gammaln(sp) - math.log(sp)
        if v < best_v:
            best_c, best_v = c, v
        elif v > best_v:
            break
    return best_c


def g_shapes(shapes, x: float, contour: ContourSpec | None = None, closed_form: bool = True) -> float:
    """g for an explicit shape vector (a_1, ..., a_K), K >= 0."""
    shapes = tuple(shapes)
    if any(a <= 0 for a in shapes):
        raise DomainError("shapes must be positive")
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    if x <= 1.0:
        return 0.0
    K = len(shapes)
    if K == 0:
        return 1.0
    if closed_form:
        if K == 1:
            a = shapes[0]
            return (x - 1.0) ** a / a
        if shapes == (1, 1):
            return x * math.log(x) - x + 1.0
    a_upper = [1.0] + [1.0 + a for a in shapes]
    b_lower = [1.0] * K + [0.0]
    c = _meijer_abscissa(shapes, x)
    spec = contour.with_c(c) if contour is not None else ContourSpec(c=c)
    kernel = meijer_g_kernel(a_upper, b_lower, 0, K + 1)
    val = mellin_barnes(kernel, x, spec)
    return math.exp(sum(special.gammaln(a) for a in shapes)) * val


def g_ell(index, m: int, x: float, contour: ContourSpec | None = None, closed_form: bool = True) -> float:
    """g_l(x) for multi-index l and fading order m."""
    return g_shapes(_shapes(index, m), x, contour, closed_form)


def g_shapes_oracle(shapes, x: float) -> float:
    """Region integral by nested adaptive quadrature (innermost in closed form)."""
    shapes = tuple(shapes)
    if len(shapes) > 4:
        raise DomainError("the quadrature oracle is limited to K <= 4")
    if x <= 1.0:
        return 0.0
    if len(shapes) == 0:
        return 1.0
    a, rest = shapes[0], shapes[1:]
    if not rest:
        return (x - 1.0) ** a / a

    def inner(t):
        return t ** (a - 1) * g_shapes_oracle(rest, x / (1.0 + t))

    val, _ = integrate.quad(inner, 0.0, x - 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def g_ell_oracle(index, m: int, x: float) -> float:
    return g_shapes_oracle(_shapes(index, m), x)


# --------------------------------------------------------------------------
# factorization


def correlation_factor(lam, K: int | None = None, m: int = 1):
    """(l(lambda, K), varrho = l^-m)."""
    lam = np.asarray(lam, dtype=float)
    if K is not None and lam.size != K:
        raise DomainError("lambda vector length does not match K")
    if np.any(lam >= 1.0) or np.any(lam < 0.0):
        raise DomainError("time correlation must satisfy 0 <= lambda < 1")
    one_minus = 1.0 - lam**2
    ell = (1.0 + float(np.sum(lam**2 / one_minus))) * float(np.prod(one_minus))
    return ell, ell ** (-m)


def coding_modulation_gain(rate: float, m: int, K: int, contour: ContourSpec | None = None) -> float:
    """C(R) = g_0(2^R)^(-1/(mK))."""
    if not rate > 0:
        raise DomainError("rate must be positive")
    return g_ell((0,) * K, m, 2.0**rate, contour) ** (-1.0 / (m * K))


@dataclass(frozen=True)
class AsymptoticBreakdown:
    zeta: float
    varrho: float
    coding_gain: float
    diversity: float
    value: float
    direct: float = math.nan
    regime_warning: bool = False


def power_factor(model: SystemModel, theta) -> float:
    """zeta(theta) = prod (m / (theta_k sigma_k^2))^m / Gamma(m)."""
    m = model.m
    theta = np.asarray(theta, dtype=float)
    logz = np.sum(m * np.log(m / (theta * np.asarray(model.sigma2)))) - model.K * special.gammaln(m)
    return math.exp(logz)


def asymptotic_outage(model: SystemModel, alloc: PowerAllocation, rate: float, contour: ContourSpec | None = None) -> AsymptoticBreakdown:
    """High-SNR outage, both factorized and as the direct product."""
    if not rate > 0:
        raise DomainError("rate must be positive")
    m, K = model.m, model.K
    d = m * K
    g0 = g_ell((0,) * K, m, 2.0**rate, contour)
    zeta = power_factor(model, alloc.theta)
    _, varrho = correlation_factor(model.lam, K, m)
    cgain = g0 ** (-1.0 / d)
    # in logs: (C gamma)^-d underflows long before the product does
    value = math.exp(math.log(zeta) + math.log(varrho) - d * (math.log(cgain) + math.log(alloc.gamma)))
    # direct form: W_0 gamma^-mK g_0 prod (m / (theta sigma^2 (1 - lam^2)))^m / Gamma(m)
    wp = weight_params(model)
    theta = np.asarray(alloc.theta)
    lam = np.asarray(model.lam)
    log_direct = (
        wp.log_w0
        - d * math.log(alloc.gamma)
        + math.log(g0)
        + float(np.sum(m * np.log(m / (theta * np.asarray(model.sigma2) * (1.0 - lam**2)))))
        - K * special.gammaln(m)
    )
    return AsymptoticBreakdown(
        zeta=zeta,
        varrho=varrho,
        coding_gain=cgain,
        diversity=float(d),
        value=value,
        direct=math.exp(log_direct),
        regime_warning=value > REGIME_WARNING_LEVEL,
    )


@dataclass(frozen=True)
class QuasiStaticAsymptotic:
    zeta: float
    coding_gain: float
    diversity: float

    def value(self, gamma: float) -> float:
        return self.zeta * (self.coding_gain * gamma) ** (-self.diversity)


def quasi_static_asymptotic(m: int, K: int, theta: float, sigma2: float, rate: float) -> QuasiStaticAsymptotic:
    """Asymptote of the fully correlated channel (equal power theta per round)."""
    if not rate > 0:
        raise DomainError("rate must be positive")
    zeta = (m / (theta * sigma2)) ** m
    cgain = special.gamma(m + 1) ** (1.0 / m) / math.expm1(rate * LN2 / K)
    return QuasiStaticAsymptotic(zeta, cgain, float(m))


def diversity_order_estimate(evaluator, gamma_low: float, gamma_high: float) -> float:
    """-d log p / d log gamma from two points (linear SNR values)."""
    if not gamma_high > gamma_low > 0:
        raise DomainError("need 0 < gamma_low < gamma_high")
    p_lo, p_hi = evaluator(gamma_low), evaluator(gamma_high)
    if not (p_lo > 0 and p_hi > 0):
        raise DomainError("outage underflowed; move the window to lower SNR")
    return -(math.log(p_hi) - math.log(p_lo)) / (math.log(gamma_high) - math.log(gamma_low))


# --------------------------------------------------------------------------
# structural lemmas


@dataclass(frozen=True)
class Lemma3Witness:
    passed: bool
    ell1: float
    ell2: float
    varrho1: float
    varrho2: float
    strict: bool = False


# entries below this count as zero when deciding whether strict decrease is expected
STRICT_RESOLUTION = 1e-2


def lemma3_check(lam1, lam2, K: int, m: int, tol: float = 1e-12) -> Lemma3Witness:
    """lam1 <= lam2 (componentwise) implies l(lam1) >= l(lam2), varrho(lam1) <= varrho(lam2).

    d l / d(lam_k^2) = -sum_{i != k} lam_i^2 prod_{j != i, k} (1 - lam_j^2), so l = 1
    exactly when at most one entry is nonzero, and the decrease is strict
    once lam2 has two nonzero entries and differs from lam1.  ``strict``
    records that case (with entries and gaps above STRICT_RESOLUTION so the
    difference is resolvable in floating point).
    """
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    if np.any(lam1 > lam2):
        raise DomainError("the monotonicity check needs lam1 <= lam2 componentwise")
    e1, r1 = correlation_factor(lam1, K, m)
    e2, r2 = correlation_factor(lam2, K, m)
    ok = 1.0 + tol >= e1 >= e2 * (1.0 - tol) and 1.0 - tol <= r1 <= r2 * (1.0 + tol)
    strict = bool(np.sum(lam2 >= STRICT_RESOLUTION) >= 2 and np.max(lam2 - lam1) >= STRICT_RESOLUTION)
    if strict:
        ok = ok and e1 > e2 and r1 < r2
    if np.sum(lam1 > 0) <= 1:
        ok = ok and abs(e1 - 1.0) <= tol
    return Lemma3Witness(bool(ok), e1, e2, r1, r2, strict)


@dataclass
class Lemma4Report:
    rates: np.ndarray
    g: np.ndarray
    increasing: bool
    convex: bool
    recurrence_residuals: np.ndarray
    recurrence_ok: bool

    @property
    def passed(self) -> bool:
        return self.increasing and self.convex and self.recurrence_ok


def _h(shapes, rate, contour):
    return g_shapes(shapes, 2.0**rate, contour)


def _dh(shapes, rate, step, contour):
    # derivative of g(2^R) in R by a fourth-order central difference
    f = [_h(shapes, rate + k * step, contour) for k in (-2, -1, 1, 2)]
    return (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * step)


def recurrence_residual(shapes, rate: float, step: float = 1e-3, contour=None) -> float:
    """Relative gap between d2/dR2 g(2^R) and its first-derivative recurrence.

    With a_1 the largest shape:
        a_1 = 1: h'' = ln2 h'_{rest} + ln2 h'
        a_1 > 1: h'' = ln2 (a_1 - 1) h'_{a_1 - 1} + ln2 a_1 h'
    where h' are first derivatives in R of the reduced/full shape vectors.
    """
    shapes = sorted(shapes, reverse=True)
    a1 = shapes[0]
    f = [_h(shapes, rate + k * step, contour) for k in (-2, -1, 0, 1, 2)]
    second = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * step**2)
    first = _dh(shapes, rate, step, contour)
    if a1 == 1:
        reduced = shapes[1:]
        d_red = _dh(reduced, rate, step, contour) if reduced else 0.0
        rhs = LN2 * d_red + LN2 * first
    else:
        reduced = [a1 - 1] + shapes[1:]
        rhs = LN2 * (a1 - 1) * _dh(reduced, rate, step, contour) + LN2 * a1 * first
    return abs(second - rhs) / abs(rhs)


def lemma4_check(m: int, K: int, rate_grid, contour=None, recurrence_points: int = 10, tol: float = 1e-4) -> Lemma4Report:
    """g_0(2^R) increasing and discretely convex on the grid; recurrence residuals."""
    rates = np.asarray(rate_grid, dtype=float)
    shapes = (m,) * K
    g = np.array([_h(shapes, r, contour) for r in rates])
    increasing = bool(np.all(np.diff(g) > 0))
    # convexity on a possibly non-uniform grid via divided differences
    slopes = np.diff(g) / np.diff(rates)
    convex = bool(np.all(np.diff(slopes) >= -1e-12 * np.max(np.abs(slopes))))
    pick = np.unique(np.linspace(0, len(rates) - 1, min(recurrence_points, len(rates))).round().astype(int))
    res = np.array([recurrence_residual(shapes, rates[i], contour=contour) for i in pick])
    return Lemma4Report(rates, g, increasing, convex, res, bool(np.all(res <= tol)))
