"""Hypergeometric series and Tricomi's confluent function Psi.

All series stop once the newest term falls below ``SERIES_TOL`` times the
partial sum; running past ``SERIES_CAP`` terms raises instead of truncating.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from ..errors import ConvergenceError, DomainError, PoleError

SERIES_CAP = 10_000
SERIES_TOL = 1e-16

# Psi switches from the Kummer decomposition to quadrature along a rotated
# ray once z exceeds this; the two 1F1 terms cancel like e^z, and below
# the limit the per-node cancellation check catches the bad cases.
PSI_KUMMER_MAX_Z = 8.0
INTEGER_GAMMA_STEP = 1e-6
# above this ratio of |term1| + |term2| to |Psi| the Kummer result is dropped
# in favour of quadrature (this always happens at integer b, where the
# perturbation alone costs about 1/INTEGER_GAMMA_STEP)
KUMMER_MAX_CANCELLATION = 1e2


def _check_parameter(b, name="b"):
    b = complex(b)
    if b.imag == 0.0 and b.real <= 0.0 and b.real == math.floor(b.real):
        raise PoleError(f"{name}={b.real:g} is a non-positive integer")


def hyp_0f1(b: float, z: float) -> float:
    """0F1(;b;z) by direct summation."""
    _check_parameter(b)
    term = 1.0
    total = 1.0
    for s in range(SERIES_CAP):
        term *= z / ((b + s) * (s + 1))
        total += term
        if abs(term) <= SERIES_TOL * abs(total):
            return total
    raise ConvergenceError("0F1 series did not converge within the term cap")


def _hyp1f1_array(a, b, z: float):
    """Kummer series M(a, b, z), vectorised over broadcastable complex a, b."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    a, b = np.broadcast_arrays(a, b)
    term = np.ones(a.shape, dtype=complex)
    total = term.copy()
    if z == 0.0:
        return total
    for s in range(SERIES_CAP):
        term = term * (a + s) / (b + s) * (z / (s + 1))
        total += term
        # ratio test: terms only shrink once |s| exceeds |a|, |b| and z
        if s > 2 and np.all(np.abs(term) <= SERIES_TOL * np.abs(total)):
            return total
    raise ConvergenceError("1F1 series did not converge within the term cap")


def hyp_1f1(a: float, b, z: float) -> complex:
    """Confluent hypergeometric 1F1(a; b; z); b may be complex."""
    _check_parameter(b)
    return complex(_hyp1f1_array(a, b, z))


def hyp_2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss series 2F1(a, b; c; z) for |z| < 1."""
    if not abs(z) < 1.0:
        raise DomainError(f"2F1 series diverges for |z|={abs(z):g} >= 1")
    _check_parameter(c, "c")
    term = 1.0
    total = 1.0
    for s in range(SERIES_CAP):
        term *= (a + s) * (b + s) / ((c + s) * (s + 1)) * z
        total += term
        if term == 0.0 or (s > 2 and abs(term) <= SERIES_TOL * abs(total)):
            return total
    raise ConvergenceError("2F1 series did not converge within the term cap")


# --------------------------------------------------------------------------
# Tricomi Psi


def _psi_kummer(a: float, b, z: float, log_scale: float = 0.0, with_condition=False):
    """exp(log_scale) * Psi(a, b; z) via the two-term 1F1 decomposition."""
    b = np.asarray(b, dtype=complex)
    lz = math.log(z)
    lg_a = special.loggamma(a)
    t1 = np.exp(special.loggamma(1 - b) - special.loggamma(a - b + 1) + log_scale)
    t2 = np.exp(special.loggamma(b - 1) - lg_a + (1 - b) * lz + log_scale)
    p1 = t1 * _hyp1f1_array(a, b, z)
    p2 = t2 * _hyp1f1_array(a - b + 1, 2 - b, z)
    out = p1 + p2
    if with_condition:
        with np.errstate(divide="ignore", invalid="ignore"):
            return out, (np.abs(p1) + np.abs(p2)) / np.abs(out)
    return out


def _psi_kummer_safe(a: float, b, z: float, log_scale: float = 0.0, with_condition=False):
    """Kummer path with a symmetric perturbation at integer real b."""
    b = np.asarray(b, dtype=complex)
    near_int = (np.abs(b.imag) < 1e-9) & (np.abs(b.real - np.round(b.real)) < 1e-9)
    if not np.any(near_int):
        return _psi_kummer(a, b, z, log_scale, with_condition)
    out = np.empty(b.shape, dtype=complex)
    cond = np.empty(b.shape)
    ok = ~near_int
    log_scale = np.broadcast_to(np.asarray(log_scale, dtype=complex), b.shape)
    if np.any(ok):
        out[ok], cond[ok] = _psi_kummer(a, b[ok], z, log_scale[ok], True)
    bi = b[near_int]
    ls = log_scale[near_int]
    h = INTEGER_GAMMA_STEP
    up, cu = _psi_kummer(a, bi + h, z, ls, True)
    dn, cd = _psi_kummer(a, bi - h, z, ls, True)
    out[near_int] = 0.5 * (up + dn)
    cond[near_int] = np.maximum(cu, cd)
    if with_condition:
        return out, cond
    return out


@lru_cache(maxsize=None)
def _ray_grid(smooth_below: float = 0.0, lo: float = 1e-15, hi: float = 3000.0, ratio: float = 1.8,
              per_panel: int = 20, smooth_panel: int = 10):
    # geometric panels resolve both the u^(a-1) endpoint and the near-origin
    # scale z/|Im b| that dominates once the imaginary part is large; panels
    # ending below smooth_below only see u^(a-1) times a nearly constant
    # phase, where 10 nodes already reach double precision
    count = int(math.ceil(math.log(hi / lo) / math.log(ratio)))
    edges = np.concatenate(([0.0], lo * (hi / lo) ** np.linspace(0, 1, count + 1)))
    nodes, weights = [], []
    for n, sel in ((smooth_panel, edges[1:] <= smooth_below), (per_panel, edges[1:] > smooth_below)):
        x, w = np.polynomial.legendre.leggauss(n)
        a, b = edges[:-1][sel, None], edges[1:][sel, None]
        nodes.append((0.5 * (b - a) * x + 0.5 * (b + a)).ravel())
        weights.append((0.5 * (b - a) * w).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def _smooth_limit(z: float, a: float, imag_max: float) -> float:
    # a decade below the phase scale z/|Im b| (and below u ~ 1), snapped
    # to a power of ten so the grid cache stays small
    scale = min(1.0, z / max(imag_max, 1.0), a) * 1e-2
    return 10.0 ** math.floor(math.log10(scale))


def _psi_ray(a: float, b, z: float, log_scale: float = 0.0, block: int = 2048):
    """exp(log_scale) * Psi(a, b; z) by quadrature of the defining integral.

    After t = u/z the integrand is u^(a-1) e^(-u) (1 + u/z)^(b-a-1).  The
    path u = rho cos(phi) e^(i phi), tan(phi) ~ Im(b)/(z + a), cancels the
    oscillation near the origin to first order and damps the far field by
    exp(-|Im b| phi).
    """
    b = np.asarray(b, dtype=complex)
    shape = b.shape
    b = b.ravel()
    log_scale = np.broadcast_to(np.asarray(log_scale, dtype=complex), shape).ravel()
    out = np.empty(b.shape, dtype=complex)
    base = -a * math.log(z) - special.gammaln(a)
    for lo in range(0, b.size, block):
        bb = b[lo : lo + block]
        rho, wts = _ray_grid(_smooth_limit(z, a, float(np.max(np.abs(bb.imag)))))
        phi = np.clip(np.arctan(bb.imag / (z + a)), -0.9, 0.9)
        w = np.cos(phi) * np.exp(1j * phi)
        u = rho[None, :] * w[:, None]
        logf = (a - 1) * np.log(u) - u + (bb[:, None] - a - 1) * np.log1p(u / z)
        peak = np.max(logf.real, axis=1, keepdims=True)
        integral = np.sum(wts[None, :] * np.exp(logf - peak), axis=1) * w
        out[lo : lo + block] = np.exp(base + log_scale[lo : lo + block] + peak[:, 0]) * integral
    return out.reshape(shape)


def psi_array(a: float, b, z: float, log_scale: float = 0.0):
    """Vectorised exp(log_scale) * Psi(a, b; z) over complex b.

    ``log_scale`` (scalar or array shaped like b, possibly complex) lets
    callers fold a large prefactor such as z**(b-1) in before exponentiation
    so extreme arguments neither overflow nor underflow.
    The Kummer form is used where its two terms do not cancel badly;
    elsewhere the rotated-ray quadrature takes over.
    """
    if not a > 0:
        raise DomainError(f"alpha must be positive, got {a}")
    if not z > 0:
        raise DomainError(f"z must be positive, got {z}")
    b = np.asarray(b, dtype=complex)
    log_scale = np.broadcast_to(np.asarray(log_scale, dtype=complex), b.shape)
    if z > PSI_KUMMER_MAX_Z:
        return _psi_ray(a, b, z, log_scale)
    out, cancel = _psi_kummer_safe(a, b, z, log_scale, with_condition=True)
    bad = ~(cancel < KUMMER_MAX_CANCELLATION)
    if np.any(bad):
        out = np.array(out, dtype=complex)
        out[bad] = _psi_ray(a, b[bad], z, log_scale[bad])
    return out


def tricomi_psi(alpha: float, gamma_param, z: float) -> complex:
    """Tricomi's Psi(alpha, gamma; z) = U(alpha, gamma, z)."""
    out = complex(psi_array(alpha, np.asarray([gamma_param], dtype=complex), z)[0])
    if not np.isfinite(out):
        raise ConvergenceError("Psi evaluation produced a non-finite value")
    return out


def psi_kummer_reference(alpha: float, gamma_param, z: float) -> complex:
    """The two-1F1 decomposition on its own, for cross-checks."""
    return complex(_psi_kummer_safe(alpha, np.asarray([gamma_param], dtype=complex), z)[0])
