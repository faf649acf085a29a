"""Exact series outage probability, its truncation bound and the quasi-static form.

p_out,K = sum_l W_l F_{A_l}(2^R), where W_l are negative-multinomial weights
and F_{A_l} is the CDF of prod_k (1 + R_k), R_k ~ Gamma(m + l_k, Omega_k)
(independent).  F_{A_l} is evaluated as a Mellin-Barnes integral whose
kernel is a product of Tricomi Psi factors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .channel import MCEstimate, PowerAllocation, SystemModel, _rng, derive_params
from .errors import ConvergenceError, DomainError
from .specialfun.contour import ContourSpec, mellin_barnes_batch, mellin_barnes_detail
from .specialfun.foxh import FoxHSpec
from .specialfun.gamma import pochhammer, regularized_lower_gamma
from .specialfun.hypergeometric import hyp_2f1, psi_array

DEFAULT_EPSILON = 1e-8
DEFAULT_N_CAP = 12
FMAX_ENUM_CAP = 100_000
TERM_CAP = 200_000
# candidate abscissae for the Chernoff-optimal contour: half-integers keep
# every Gamma/Psi argument clear of integer poles
# (unit steps first, then geometric steps up to ~1000 for very peaked laws)
ABSCISSA_CANDIDATES = tuple(0.5 + j for j in range(80)) + tuple(math.floor(80 * 1.25**k) + 0.5 for k in range(1, 12))
# skip the quadrature when a Chernoff bound already pins the answer:
# 1 - F below 1e-18 rounds to F = 1, F below 1e-300 underflows anyway
CHERNOFF_SKIP = math.log(1e-18)
UNDERFLOW_SKIP = math.log(1e-300)
MAX_EXTENT_RATIO = 8.0


@dataclass(frozen=True, order=True)
class MultiIndex:
    entries: tuple

    def __post_init__(self):
        entries = tuple(int(v) for v in self.entries)
        if any(v < 0 for v in entries):
            raise DomainError("multi-index entries must be non-negative")
        object.__setattr__(self, "entries", entries)

    @property
    def order(self) -> int:
        return sum(self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def compositions(total: int, parts: int):
    """All non-negative integer vectors of length ``parts`` summing to ``total``, colex order."""
    if parts == 1:
        return [(total,)]
    out = []
    # colex: compare from the last entry, so iterate the last entry slowest
    for last in range(total + 1):
        for head in compositions(total - last, parts - 1):
            out.append(head + (last,))
    return out


def enumerate_indices(K: int, N: int):
    """Multi-indices with order <= N, by nondecreasing order then colex."""
    for n in range(N + 1):
        for c in compositions(n, K):
            yield MultiIndex(c)


def term_count(K: int, N: int) -> int:
    return math.comb(N + K, K)


# --------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightParams:
    w: tuple
    w_sum: float
    log_w0: float
    m: int


def weight_params(model: SystemModel) -> WeightParams:
    lam2 = np.asarray(model.lam) ** 2
    if np.any(lam2 >= 1.0):
        raise DomainError("weights are singular at lambda = 1")
    ratio = lam2 / (1.0 - lam2)
    big_s = float(ratio.sum())
    w = ratio / (1.0 + big_s)
    return WeightParams(tuple(w), float(w.sum()), -model.m * math.log1p(big_s), model.m)


def log_weight(params: WeightParams, index) -> float:
    ell = tuple(index)
    n = sum(ell)
    out = special.gammaln(params.m + n) - special.gammaln(params.m) + params.log_w0
    for wk, lk in zip(params.w, ell):
        if lk == 0:
            continue
        if wk == 0.0:
            return -math.inf
        out += lk * math.log(wk) - special.gammaln(lk + 1)
    return float(out)


def weight(model: SystemModel, index) -> float:
    """Negative-multinomial weight W_l."""
    return math.exp(log_weight(weight_params(model), index))


@dataclass
class WeightTable:
    w: tuple
    w_sum: float
    weights: dict = field(default_factory=dict)
    max_order: int = 0

    @classmethod
    def build(cls, model: SystemModel, max_order: int) -> "WeightTable":
        params = weight_params(model)
        table = {idx: math.exp(log_weight(params, idx)) for idx in enumerate_indices(model.K, max_order)}
        return cls(params.w, params.w_sum, table, max_order)


def xi_tail(w_sum: float, m: int, N: int) -> float:
    """xi(N): tail mass of the order |l| beyond N, divided by W_0."""
    if w_sum == 0.0:
        return 0.0
    lead = w_sum ** (N + 1) * pochhammer(m, N + 1) / math.factorial(N + 1)
    return lead * hyp_2f1(m + N + 1, 1.0, N + 2, w_sum)


# --------------------------------------------------------------------------
# CDF of a product of independent shifted Gamma variates


@lru_cache(maxsize=65536)
def _log_moment(shape: int, omega: float, c: float) -> float:
    """log E[(1+R)^c] for R ~ Gamma(shape, omega); any real c."""
    z = 1.0 / omega
    val = psi_array(shape, np.array([shape + 1.0 + c], dtype=complex), z, log_scale=shape * math.log(z))
    return float(np.log(val[0].real))


def choose_abscissa(shapes, omegas, x: float):
    """Side and abscissa minimising the Chernoff bound on the tail to compute.

    Returns (side, c) with side 'lower' (integrate F directly, c < 0) or
    'upper' (integrate 1 - F, c > 0).
    """
    lx = math.log(x)
    best = (math.inf, None, None)
    for side, sign in (("lower", -1.0), ("upper", 1.0)):
        prev = math.inf
        for c in ABSCISSA_CANDIDATES:
            # lower: x^c E[A^-c] / c ; upper: x^-c E[A^c] / c
            val = sign * -c * lx + sum(_log_moment(k, o, sign * c) for k, o in zip(shapes, omegas)) - math.log(c)
            if val < best[0]:
                best = (val, side, sign * c)
            if val > prev:
                break
            prev = val
    return best[1], best[2], best[0]


def product_cdf_kernel(shapes, omegas):
    """-1/s prod_k E[(1 + R_k)^s] (Mellin kernel of the CDF, x^-s convention)."""
    zs = [1.0 / o for o in omegas]

    def kernel(s):
        s = np.asarray(s, dtype=complex)
        logk = -np.log(-s)  # log(-1/s)
        for a, z in zip(shapes, zs):
            logk = logk + np.log(psi_array(a, a + 1.0 + s, z, log_scale=a * math.log(z)))
        return np.exp(logk)

    return kernel


def _contour_for(omegas, c, contour):
    # for z = 1/omega >> 1 a factor varies on the scale z in v: the panel
    # width follows the fastest factor, the body extent the slowest one,
    # capped so that very unequal powers cannot blow up the node count
    # (beyond the cap the slow factors are smooth and the tail
    # extrapolation absorbs them)
    zs = [1.0 / o for o in omegas]
    stretch_width = max(1.0, min(zs) / 4.0)
    stretch_extent = min(max(1.0, max(zs) / 4.0), MAX_EXTENT_RATIO * stretch_width)
    base = contour if contour is not None else ContourSpec(c=c)
    return ContourSpec(
        c=c,
        half_extent=base.half_extent * stretch_extent,
        nodes=max(16, int(base.nodes * stretch_extent / stretch_width)),
        refinement=base.refinement,
        max_nodes=base.max_nodes,
        debug=base.debug,
    )


def _shortcut(side, c, logbound):
    """0 or 1 when a Chernoff bound already fixes F to double precision."""
    # logbound + log|c| is a Chernoff bound on the tail being integrated
    chernoff = logbound + math.log(abs(c))
    if side == "upper" and chernoff < CHERNOFF_SKIP:
        return 1.0
    if side == "lower" and chernoff < UNDERFLOW_SKIP:
        return 0.0
    return None


def product_cdf(shapes, omegas, x: float, contour: ContourSpec | None = None, detail: bool = False, abscissa=None):
    """Pr(prod_k (1 + R_k) <= x) for independent R_k ~ Gamma(shape_k, omega_k).

    ``contour`` supplies quadrature settings; its abscissa is ignored unless
    ``abscissa`` is given, whose sign then selects the side (c < 0: F
    directly, c > 0: the complement).  A fixed abscissa far from the
    Chernoff-optimal one can be very slow when some omega is small, since
    the integrand then decays only on the scale 1/omega.
    """
    if x <= 1.0:
        return (0.0, None) if detail else 0.0
    if len(shapes) == 1 and abscissa is None:
        # a single factor is a plain Gamma CDF
        value = float(special.gammainc(shapes[0], (x - 1.0) / omegas[0]))
        return (value, None) if detail else value
    if abscissa is None:
        side, c, logbound = choose_abscissa(shapes, omegas, x)
        short = _shortcut(side, c, logbound)
        if short is not None:
            return (short, None) if detail else short
    else:
        c = float(abscissa)
        if c == 0.0:
            raise DomainError("the contour cannot pass through the pole at s = 0")
        side = "lower" if c < 0 else "upper"
    spec = _contour_for(omegas, c, contour)
    # on the upper side only F - 1 to double precision matters
    atol = 1e-17 if side == "upper" else 0.0
    res = mellin_barnes_detail(product_cdf_kernel(shapes, omegas), x, spec, atol=atol)
    if side == "lower":
        value = res.value
    else:
        # crossing the pole at s = 0 (residue -1) turns the integral into F - 1
        value = 1.0 + res.value
    value = min(max(value, 0.0), 1.0)
    return (value, res) if detail else value


def _snap(c: float) -> float:
    # coarse abscissa grid shared by batched terms: half-integers near
    # 2^j so that terms with similar optimal contours share nodes
    mag = abs(c)
    j = round(math.log2(mag + 0.5))
    return math.copysign(max(0.5, 2.0**j - 0.5), c)


@lru_cache(maxsize=256)
def _log_psi_factor(a: int, z: float, nodes: bytes) -> np.ndarray:
    # successive shells of the series reuse the same (shape, node set)
    # pairs, so the expensive Psi factors are memoised on the node bytes
    s = np.frombuffer(nodes, dtype=complex)
    out = np.log(psi_array(a, a + 1.0 + s, z, log_scale=a * math.log(z)))
    out.flags.writeable = False
    return out


def product_cdf_many(shape_lists, omegas, x: float, contour: ContourSpec | None = None) -> np.ndarray:
    """product_cdf for many shape vectors over the same omegas.

    Terms are grouped by a snapped Chernoff abscissa and each group is
    integrated on common nodes, so every Psi factor is evaluated once per
    distinct shape.
    """
    shape_lists = [tuple(int(a) for a in sh) for sh in shape_lists]
    out = np.zeros(len(shape_lists))
    if x <= 1.0:
        return out
    groups: dict = {}
    for i, sh in enumerate(shape_lists):
        if len(sh) == 1:
            out[i] = special.gammainc(sh[0], (x - 1.0) / omegas[0])
            continue
        side, c, logbound = choose_abscissa(sh, omegas, x)
        short = _shortcut(side, c, logbound)
        if short is not None:
            out[i] = short
            continue
        groups.setdefault(_snap(c), []).append(i)
    zs = [1.0 / o for o in omegas]
    for c, members in groups.items():
        rows = [shape_lists[i] for i in members]
        needed = sorted({(a, k) for sh in rows for k, a in enumerate(sh)})

        def kernel(s, rows=rows, needed=needed):
            s = np.asarray(s, dtype=complex)
            key = s.tobytes()
            logs = {(a, k): _log_psi_factor(a, zs[k], key).reshape(s.shape) for a, k in needed}
            base = -np.log(-s)
            return np.exp(np.array([base + sum(logs[(a, k)] for k, a in enumerate(sh)) for sh in rows]))

        atol = 1e-17 if c > 0 else 0.0
        res = mellin_barnes_batch(kernel, x, _contour_for(omegas, c, contour), atol=atol)
        vals = res.value + (1.0 if c > 0 else 0.0)
        out[members] = np.clip(vals, 0.0, 1.0)
    return out


def product_cdf_spec(shapes, omegas) -> FoxHSpec:
    """Fox H parameters whose value at x / prod(omega) is the product CDF."""
    lower = [(1.0, 1.0, 1.0 / o, float(a)) for a, o in zip(shapes, omegas)] + [(0.0, 1.0, 0.0, 1.0)]
    return FoxHSpec(((1.0, 1.0, 0.0, 1.0),), tuple(lower), (len(shapes), 1))


def cdf_A(index, model: SystemModel, alloc: PowerAllocation, x: float, contour: ContourSpec | None = None) -> float:
    """F_{A_l}(x): CDF of prod_k (1 + R_k), R_k ~ Gamma(m + l_k, Omega_k)."""
    index = tuple(index)
    if len(index) != model.K:
        raise DomainError("multi-index length does not match K")
    params = derive_params(model, alloc)
    shapes = [model.m + lk for lk in index]
    return product_cdf(shapes, params.omega, x, contour)


def cdf_A_oracle_mc(index, model: SystemModel, alloc: PowerAllocation, x: float, n: int, seed: int) -> MCEstimate:
    """Monte Carlo estimate of F_{A_l}(x) from independent Gamma draws."""
    params = derive_params(model, alloc)
    shapes = np.array([model.m + lk for lk in tuple(index)], dtype=float)
    count = 0
    chunk = 1 << 16
    for i in range((n + chunk - 1) // chunk):
        size = min(chunk, n - i * chunk)
        rng = _rng(seed, i)
        r = rng.gamma(shapes[None, :], np.asarray(params.omega)[None, :], size=(size, len(shapes)))
        count += int(np.sum(np.sum(np.log1p(r), axis=1) <= math.log(x)))
    return MCEstimate.from_count(count, n, seed)


# --------------------------------------------------------------------------
# truncated series


@dataclass
class OutageResult:
    value: float
    method: str
    truncation_order: int | None = None
    error_bound: float | None = None
    terms_evaluated: int = 0
    flags: tuple = ()
    terms: list | None = None


def _shell_cdfs(model, alloc, rate, order, contour):
    params = derive_params(model, alloc)
    idx = list(compositions(order, model.K))
    vals = product_cdf_many([[model.m + lk for lk in c] for c in idx], params.omega, 2.0**rate, contour)
    return {MultiIndex(c): float(v) for c, v in zip(idx, vals)}


def truncation_bound_detail(model: SystemModel, alloc: PowerAllocation, rate: float, N: int, contour=None, shells=None):
    """(B_u, F^max, flags) for truncation order N.

    ``shells`` optionally caches {order: {index: F}} across calls.
    """
    if N < 0:
        raise DomainError("truncation order must be non-negative")
    wp = weight_params(model)
    if wp.w_sum >= 1.0:
        raise DomainError("weights do not sum below one")
    xi = xi_tail(wp.w_sum, model.m, N)
    if xi == 0.0:
        return 0.0, 0.0, ()
    if term_count(model.K, N) > FMAX_ENUM_CAP:
        fmax, flags = 1.0, ("fmax_fallback",)
    elif rate <= 0:
        fmax, flags = 0.0, ()
    else:
        if shells is None:
            shells = {}
        if N + 1 not in shells:
            shells[N + 1] = _shell_cdfs(model, alloc, rate, N + 1, contour)
        fmax, flags = max(shells[N + 1].values()), ()
    return math.exp(wp.log_w0) * fmax * xi, fmax, flags


def truncation_bound(model: SystemModel, alloc: PowerAllocation, rate: float, N: int, contour=None, shells=None) -> float:
    """Upper bound B_u on the tail of the series beyond order N."""
    return truncation_bound_detail(model, alloc, rate, N, contour, shells)[0]


def uniform_bound(model: SystemModel, N: int) -> float:
    """B_u with F^max replaced by 1; independent of the rate."""
    wp = weight_params(model)
    return math.exp(wp.log_w0) * xi_tail(wp.w_sum, model.m, N)


def min_truncation_order(model, alloc, rate, epsilon: float, contour=None, cap: int = 60) -> int:
    """Smallest N with B_u(N) <= epsilon."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    for n in range(cap + 1):
        if truncation_bound(model, alloc, rate, n, contour) <= epsilon:
            return n
    raise ConvergenceError(f"no truncation order up to {cap} meets epsilon={epsilon:g}")


def outage_truncated(
    model: SystemModel,
    alloc: PowerAllocation,
    rate: float,
    N: int | None = None,
    contour: ContourSpec | None = None,
    epsilon: float = DEFAULT_EPSILON,
    n_cap: int = DEFAULT_N_CAP,
    with_bound: bool = True,
    keep_terms: bool = False,
) -> OutageResult:
    """Truncated series sum over |l| <= N of W_l F_{A_l}(2^R)."""
    flags = []
    if rate < 0:
        raise DomainError("rate must be non-negative")
    wp = weight_params(model)
    shells: dict = {}
    if N is None:
        N = 0
        while truncation_bound(model, alloc, rate, N, contour, shells) > epsilon:
            if N >= n_cap:
                flags.append("n_capped")
                break
            N += 1
    if term_count(model.K, N) > TERM_CAP:
        raise ConvergenceError(f"{term_count(model.K, N)} series terms exceed the cap {TERM_CAP}")
    contributions = []
    terms = [] if keep_terms else None
    count = 0
    for n in range(N + 1):
        if n not in shells:
            shells[n] = _shell_cdfs(model, alloc, rate, n, contour)
        for idx, f in shells[n].items():
            lw = log_weight(wp, idx)
            if lw == -math.inf:
                continue
            contributions.append(math.exp(lw) * f)
            count += 1
            if keep_terms:
                terms.append((idx.entries, math.exp(lw), f))
    value = math.fsum(contributions)
    bound = None
    if with_bound:
        bound, _, extra = truncation_bound_detail(model, alloc, rate, N, contour, shells)
        flags.extend(extra)
    return OutageResult(
        value=min(max(value, 0.0), 1.0),
        method="truncated_series",
        truncation_order=N,
        error_bound=bound,
        terms_evaluated=count,
        flags=tuple(flags),
        terms=terms,
    )


def write_terms_csv(result: OutageResult, path):
    if result.terms is None:
        raise DomainError("result was computed without keep_terms=True")
    with open(path, "w") as fh:
        fh.write("# ell,W_ell,F_A_ell\n")
        for ell, w, f in result.terms:
            fh.write(f"{' '.join(map(str, ell))},{w:.12g},{f:.12g}\n")


def prefix_outages(model, alloc, rate, evaluator="truncated", **kw) -> list:
    """[p_out,0 = 1, p_out,1, ..., p_out,K] with the chosen backend."""
    out = [1.0]
    for k in range(1, model.K + 1):
        sub_m, sub_a = model.prefix(k), alloc.prefix(k)
        if evaluator == "truncated":
            out.append(outage_truncated(sub_m, sub_a, rate, with_bound=False, **kw).value)
        else:
            from .asymptotic import asymptotic_outage

            out.append(asymptotic_outage(sub_m, sub_a, rate).value)
    return out


# --------------------------------------------------------------------------
# quasi-static channel


def outage_quasi_static(model: SystemModel, alloc: PowerAllocation, rate: float) -> OutageResult:
    """Closed-form outage when every round sees the same channel."""
    theta = np.asarray(alloc.theta)
    if np.ptp(theta) > 1e-12:
        raise DomainError("the quasi-static closed form assumes equal power per round")
    if np.ptp(model.sigma2) > 0:
        raise DomainError("the quasi-static closed form assumes a common Nakagami spread")
    if rate <= 0:
        return OutageResult(0.0, "quasi_static")
    snr = alloc.gamma * theta[0] * model.sigma2[0]
    arg = model.m * math.expm1(rate * math.log(2.0) / model.K) / snr
    return OutageResult(regularized_lower_gamma(model.m, arg), "quasi_static")
