"""Numerical Mellin-Barnes integration along a vertical line.

The integral (1/2 pi i) int K(s) x^(-s) ds over s = c + iv is folded onto
v >= 0 with the conjugate symmetry of K.  The interval [0, half_extent] is
covered by Gauss-Legendre panels.  Beyond it the integrand decays only
algebraically in most of our kernels, so the tail is summed panel by panel
(half periods of x^(-iv)) and the partial sums are accelerated with Wynn's
epsilon algorithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from ..errors import ConvergenceError, DomainError

Kernel = Callable[[np.ndarray], np.ndarray]

PANEL_NODES = 16
TAIL_PANELS = 48
MAX_GEOMETRIC_PANELS = 400
IMAG_RESIDUE_TOL = 1e-8


@dataclass(frozen=True)
class ContourSpec:
    c: float
    half_extent: float = 24.0
    nodes: int = 768
    refinement: float = 1e-9
    max_nodes: int = 2**20
    debug: bool = False

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise DomainError("contour abscissa must be finite")
        if not self.half_extent > 0:
            raise DomainError("half_extent must be positive")
        if self.nodes < 16:
            raise DomainError("at least 16 quadrature nodes are required")
        if not self.refinement > 0:
            raise DomainError("refinement tolerance must be positive")

    def with_c(self, c: float) -> "ContourSpec":
        return replace(self, c=float(c))


@lru_cache(maxsize=None)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panel_nodes(edges: np.ndarray, n: int = PANEL_NODES):
    x, w = _gl(n)
    a = edges[:-1, None]
    b = edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w
    return nodes, weights


def wynn_epsilon(seq) -> tuple[float, float]:
    """Limit of a sequence of partial sums by Wynn's epsilon algorithm.

    Returns (estimate, error estimate); the error is the gap between the
    last two even-column entries.
    """
    s = [float(v) for v in seq]
    if len(s) < 3:
        return s[-1], abs(s[-1] - s[-2]) if len(s) > 1 else math.inf
    prev = [0.0] * (len(s) + 1)
    cur = s[:]
    evens = [s[-1]]
    for k in range(1, len(s)):
        nxt = []
        for j in range(len(cur) - 1):
            d = cur[j + 1] - cur[j]
            if d == 0.0:
                # exact convergence of this column
                return cur[j + 1], 0.0
            nxt.append(prev[j + 1] + 1.0 / d)
        prev, cur = cur, nxt
        if not cur:
            break
        if k % 2 == 0:
            evens.append(cur[-1])
    if len(evens) < 2:
        return evens[-1], math.inf
    return evens[-1], abs(evens[-1] - evens[-2])


class _Integrand:
    """Re[K(c+iv) exp(-iv w)] with the x^(-c) prefactor kept separate.

    The kernel returns one row per integrand (shape (rows, len(s))), so a
    batch of kernels sharing an abscissa runs on common nodes.
    """

    def __init__(self, kernel: Kernel, c: float, omega: float):
        self.kernel = kernel
        self.c = c
        self.omega = omega
        self.evaluations = 0

    def complex_values(self, v: np.ndarray) -> np.ndarray:
        s = self.c + 1j * v
        k = np.atleast_2d(np.asarray(self.kernel(s), dtype=complex))
        return k * np.exp(-1j * v * self.omega)[None, :]

    def frequency(self, v: float) -> float:
        """Largest local angular frequency among the rows near v."""
        h = 1e-3 * (1.0 + v)
        vals = self.complex_values(np.array([v - h, v + h]))
        self.evaluations += 2
        ok = (vals[:, 0] != 0) & np.all(np.isfinite(vals), axis=1)
        if not np.any(ok):
            return abs(self.omega)
        return float(np.max(np.abs(np.angle(vals[ok, 1] / vals[ok, 0]))) / (2 * h))

    def __call__(self, v: np.ndarray) -> np.ndarray:
        shape = v.shape
        s = self.c + 1j * v.ravel()
        k = np.atleast_2d(np.asarray(self.kernel(s), dtype=complex))
        self.evaluations += s.size
        vals = (k * np.exp(-1j * v.ravel() * self.omega)[None, :]).real
        return vals.reshape((k.shape[0],) + shape)


def _integrate_edges(f: _Integrand, edges: np.ndarray):
    """Per-row panel integrals (rows, panels) and L1 norms (rows,)."""
    nodes, weights = _panel_nodes(edges)
    vals = f(nodes)
    if not np.all(np.isfinite(vals)):
        raise ConvergenceError("kernel returned non-finite values on the contour")
    panel = np.sum(vals * weights[None], axis=2)
    return panel, np.sum(np.abs(vals) * weights[None], axis=(1, 2))


def _body(f: _Integrand, half_extent: float, width: float):
    count = max(1, int(math.ceil(half_extent / width)))
    edges = np.linspace(0.0, half_extent, count + 1)
    # grade the first unit towards v = 0 where 1/s-type factors live
    head = np.array([0.0, 1 / 64, 1 / 16, 1 / 4])
    head = head[head < edges[1]]
    edges = np.concatenate((head, edges[1:]))
    panel, l1 = _integrate_edges(f, edges)
    return np.array([math.fsum(row) for row in panel]), l1


def _wynn_rows(sums: np.ndarray):
    out = [wynn_epsilon(row) for row in sums]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])


def _tail(f: _Integrand, start: float, scale: np.ndarray):
    """Integral over [start, inf) per row; returns (value, error, l1)."""
    # the kernel may carry its own phase (e.g. a factor y^(-s)), so the
    # panel length follows the measured frequency rather than ln x; with
    # several rows the fastest one sets it, and shorter-than-half-period
    # panels do not upset the extrapolation
    omega = f.frequency(start)
    half_period = math.pi / omega if omega > 0 else math.inf
    rows = scale.shape[0]
    partial = []
    total = np.zeros(rows)
    l1 = np.zeros(rows)
    v = start
    # geometric panels until one half period fits inside a doubling
    quiet = 0
    for _ in range(MAX_GEOMETRIC_PANELS):
        if v >= half_period:
            break
        hi = min(2.0 * v, v + half_period) if half_period < math.inf else 2.0 * v
        val, a1 = _integrate_edges(f, np.array([v, hi]))
        total = total + val[:, 0]
        l1 += a1
        partial.append(total)
        v = hi
        quiet = quiet + 1 if np.all(a1 <= 1e-17 * scale) else 0
        if quiet >= 3:
            return total, np.zeros(rows), l1
    else:
        est, err = _wynn_rows(np.array(partial[-24:]).T)
        return est, err, l1
    if half_period == math.inf:
        est, err = _wynn_rows(np.array(partial[-24:]).T)
        return est, err, l1
    # half-period panels; partial sums alternate and Wynn's algorithm
    # removes the algebraic tail
    edges = v + half_period * np.arange(TAIL_PANELS + 1)
    sub = 2
    fine = np.linspace(edges[0], edges[-1], TAIL_PANELS * sub + 1)
    vals, a1 = _integrate_edges(f, fine)
    vals = vals.reshape(rows, TAIL_PANELS, sub).sum(axis=2)
    l1 += a1
    sums = total[:, None] + np.cumsum(vals, axis=1)
    est, err = _wynn_rows(sums[:, 8:])
    quiet_rows = a1 <= 1e-17 * scale
    est = np.where(quiet_rows, sums[:, -1], est)
    err = np.where(quiet_rows, 0.0, err)
    return est, err, l1


def _conjugate_check(kernel: Kernel, c: float, half_extent: float, rng_seed: int = 0):
    rng = np.random.default_rng(rng_seed)
    v = rng.uniform(-half_extent, half_extent, size=100)
    s = c + 1j * v
    k1 = np.asarray(kernel(s), dtype=complex)
    k2 = np.asarray(kernel(np.conj(s)), dtype=complex)
    gap = np.abs(k2 - np.conj(k1))
    scale = np.maximum(np.abs(k1), np.max(np.abs(k1)) * 1e-12)
    if np.any(gap > 1e-9 * scale + 1e-300):
        raise ConvergenceError("kernel violates conjugate symmetry on the contour")
    return float(np.max(gap / scale))


def _imag_residue(kernel: Kernel, c: float, omega: float, half_extent: float, width: float):
    # integrate Im[K(s) x^(-s)] over [-H, H]; zero for a symmetric kernel
    count = max(1, int(math.ceil(half_extent / width)))
    edges = np.linspace(0.0, half_extent, count + 1)
    nodes, weights = _panel_nodes(edges)
    v = nodes.ravel()
    plus = np.atleast_2d(kernel(c + 1j * v)) * np.exp(-1j * v * omega)
    minus = np.atleast_2d(kernel(c - 1j * v)) * np.exp(1j * v * omega)
    w = weights.ravel()
    return np.sum((plus.imag + minus.imag) * w, axis=1), np.sum((np.abs(plus) + np.abs(minus)) * w, axis=1)


@dataclass
class MBResult:
    value: float
    error: float
    l1_norm: float
    evaluations: int
    levels: int


def _mellin_barnes_rows(kernel: Kernel, x: float, contour: ContourSpec, atol: float):
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    omega = math.log(x)
    c = contour.c
    pref = math.exp(-c * omega) / math.pi
    if contour.debug:
        _conjugate_check(kernel, c, contour.half_extent)
    half_extent = contour.half_extent
    width = 16.0 * half_extent / contour.nodes
    half_period = math.pi / abs(omega) if omega != 0 else math.inf
    f = _Integrand(kernel, c, omega)
    previous = None
    level = 0
    while True:
        w = min(width, 0.5 * half_period)
        body, l1_body = _body(f, half_extent, w)
        tail, tail_err, l1_tail = _tail(f, half_extent, l1_body)
        value = pref * (body + tail)
        l1 = pref * (l1_body + l1_tail)
        level += 1
        nodes_used = half_extent / w * PANEL_NODES
        if previous is not None:
            change = np.abs(value - previous)
            floor = np.maximum(1e-14 * l1, atol)
            if np.all((change <= contour.refinement * np.abs(value)) | (change <= floor)):
                err = np.maximum(change, pref * tail_err)
                break
        if nodes_used * 4 > contour.max_nodes:
            last = np.max(np.abs(value - (previous if previous is not None else 0.0)))
            raise ConvergenceError(
                f"Mellin-Barnes quadrature did not settle (last change {last:.3e} at {int(nodes_used)} nodes)"
            )
        previous = value
        half_extent *= 2.0
        width *= 0.5
    if contour.debug:
        im, scale = _imag_residue(kernel, c, omega, half_extent, w)
        if np.any(np.abs(im) > IMAG_RESIDUE_TOL * np.maximum(scale, 1e-300)):
            raise ConvergenceError("imaginary residue too large; check the contour abscissa")
    return value, err, l1, f.evaluations, level


def mellin_barnes_detail(kernel: Kernel, x: float, contour: ContourSpec, atol: float = 0.0) -> MBResult:
    """Evaluate (1/2 pi i) int K(s) x^(-s) ds and report diagnostics.

    Refinement stops once successive levels agree to ``contour.refinement``
    relative, to 1e-14 of the L1 norm, or to ``atol`` absolute.
    """
    value, err, l1, evals, levels = _mellin_barnes_rows(kernel, x, contour, atol)
    return MBResult(float(value[0]), float(err[0]), float(l1[0]), evals, levels)


def mellin_barnes_batch(kernel: Kernel, x: float, contour: ContourSpec, atol: float = 0.0) -> MBResult:
    """Row-wise integrals of a kernel returning (rows, len(s)); array fields."""
    value, err, l1, evals, levels = _mellin_barnes_rows(kernel, x, contour, atol)
    return MBResult(value, err, l1, evals, levels)


def mellin_barnes(kernel: Kernel, x: float, contour: ContourSpec) -> float:
    """(1/2 pi i) int_{c - i inf}^{c + i inf} kernel(s) x^(-s) ds."""
    return mellin_barnes_detail(kernel, x, contour).value


def best_half_integer(log_bound: Callable[[float], float], candidates) -> float:
    """Candidate abscissa minimising a real log-bound on |integral|."""
    best_c, best_v = None, math.inf
    for c in candidates:
        v = log_bound(c)
        if v < best_v:
            best_c, best_v = c, v
    if best_c is None:
        raise DomainError("no admissible contour abscissa")
    return best_c
