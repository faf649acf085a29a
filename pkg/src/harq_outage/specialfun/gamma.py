"""Gamma-family kernels."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from ..errors import DomainError, PoleError


def _is_nonpositive_integer(z) -> bool:
    z = complex(z)
    return z.imag == 0.0 and z.real <= 0.0 and z.real == math.floor(z.real)


def log_gamma(z):
    """Principal branch of log Gamma(z).

    Real input gives a real result when Gamma(z) > 0 and a complex one
    otherwise; complex input always gives a complex result.
    """
    if np.ndim(z) == 0:
        if _is_nonpositive_integer(z):
            raise PoleError(f"log_gamma has a pole at z={z}")
        if isinstance(z, complex) or np.iscomplexobj(z):
            return complex(special.loggamma(complex(z)))
        val = special.loggamma(complex(z))
        return float(val.real) if val.imag == 0.0 else complex(val)
    arr = np.asarray(z)
    bad = (arr.imag == 0) & (arr.real <= 0) & (arr.real == np.floor(arr.real))
    if np.any(bad):
        raise PoleError("log_gamma has a pole at a non-positive integer argument")
    return special.loggamma(arr.astype(complex))


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x) = lower incomplete gamma(a, x) / Gamma(a)."""
    if not a > 0:
        raise DomainError(f"shape a must be positive, got {a}")
    if not x >= 0:
        raise DomainError(f"argument x must be non-negative, got {x}")
    return float(special.gammainc(a, x))


def pochhammer(a: float, n: int) -> float:
    """Rising factorial (a)_n as an explicit product."""
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a non-negative integer, got {n}")
    out = 1.0
    for j in range(int(n)):
        out *= a + j
    return out
