"""Power allocation under an average-energy budget and LTAT-maximizing rate
selection (Dinkelbach) for HARQ-IR.

Outage backends: 'asymptotic' (closed-form in the powers once g_0 is known)
or 'truncated' (the exact series).  Prefix outages p_out,0 = 1, p_out,1, ...
enter both the energy constraint and the throughput.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt
from scipy import special

from .asymptotic import g_shapes
from .channel import PowerAllocation, SystemModel
from .errors import ConvergenceError, DomainError, InfeasibleError
from .outage import outage_truncated, weight_params

BACKENDS = ("asymptotic", "truncated")
FIXED_POINT_CAP = 200
DINKELBACH_CAP = 60
DINKELBACH_TOL = 1e-8
PRESCAN_POINTS = 32


def ltat(rate: float, outage_sequence) -> float:
    """R (1 - p_K) / sum_{k<K} p_k for the sequence p_0 = 1, p_1, ..., p_K."""
    p = np.asarray(outage_sequence, dtype=float)
    if p.size < 2 or p[0] != 1.0:
        raise DomainError("outage sequence must start with p_out,0 = 1 and hold K >= 1 entries after it")
    if np.any(np.diff(p) > 1e-12):
        raise DomainError("outage sequence must be nonincreasing")
    return float(rate * (1.0 - p[-1]) / np.sum(p[:-1]))


# --------------------------------------------------------------------------
# prefix-outage backends


class _AsymptoticPrefix:
    """p_asy,k(P) = exp(const_k - m sum_{j<=k} ln P_j), vectorised over P rows."""

    def __init__(self, model: SystemModel, rate: float):
        if not rate > 0:
            raise DomainError("rate must be positive")
        m = model.m
        self.model = model
        self.consts = []
        for k in range(1, model.K + 1):
            sub = model.prefix(k)
            g0 = g_shapes((m,) * k, 2.0**rate)
            sig = np.asarray(sub.sigma2)
            lam = np.asarray(sub.lam)
            const = (
                weight_params(sub).log_w0
                + math.log(g0)
                - k * special.gammaln(m)
                + float(np.sum(m * np.log(m * model.n0 / (sig * (1.0 - lam**2)))))
            )
            self.consts.append(const)

    def prefixes(self, powers) -> np.ndarray:
        """Rows [1, p_1, ..., p_K] (clamped to 1) for each power row."""
        P = np.atleast_2d(np.asarray(powers, dtype=float))
        logs = -self.model.m * np.cumsum(np.log(P), axis=1) + np.asarray(self.consts)[None, :]
        p = np.minimum(np.exp(logs), 1.0)
        return np.hstack((np.ones((P.shape[0], 1)), p))

    def log_outage(self, powers) -> np.ndarray:
        P = np.atleast_2d(np.asarray(powers, dtype=float))
        return self.consts[-1] - self.model.m * np.sum(np.log(P), axis=1)

    def outage_after(self, powers, k: int) -> np.ndarray:
        """p_out,k per row; only the first k columns are read."""
        P = np.atleast_2d(np.asarray(powers, dtype=float))[:, :k]
        return np.minimum(np.exp(self.consts[k - 1] - self.model.m * np.sum(np.log(P), axis=1)), 1.0)


class _TruncatedPrefix:
    def __init__(self, model: SystemModel, rate: float, **kw):
        self.model = model
        self.rate = rate
        self.kw = kw

    def _row(self, P):
        out = [1.0]
        for k in range(1, self.model.K + 1):
            alloc = PowerAllocation.from_powers(P[:k], self.model.n0)
            out.append(outage_truncated(self.model.prefix(k), alloc, self.rate, with_bound=False, **self.kw).value)
        return out

    def prefixes(self, powers) -> np.ndarray:
        P = np.atleast_2d(np.asarray(powers, dtype=float))
        return np.array([self._row(row) for row in P])

    def outage_after(self, powers, k: int) -> np.ndarray:
        P = np.atleast_2d(np.asarray(powers, dtype=float))
        sub = self.model.prefix(k)
        return np.array([
            outage_truncated(sub, PowerAllocation.from_powers(row[:k], self.model.n0), self.rate, with_bound=False,
                             **self.kw).value
            for row in P
        ])

    def log_outage(self, powers) -> np.ndarray:
        P = np.atleast_2d(np.asarray(powers, dtype=float))
        vals = []
        for row in P:
            alloc = PowerAllocation.from_powers(row, self.model.n0)
            v = outage_truncated(self.model, alloc, self.rate, with_bound=False, **self.kw).value
            vals.append(math.log(v) if v > 0 else -745.0)
        return np.array(vals)


def _backend(name: str, model: SystemModel, rate: float):
    if name == "asymptotic":
        return _AsymptoticPrefix(model, rate)
    if name == "truncated":
        return _TruncatedPrefix(model, rate)
    raise DomainError(f"unknown outage backend {name!r}; choose from {BACKENDS}")


# --------------------------------------------------------------------------
# power allocation


@dataclass(frozen=True)
class PowerProblem:
    model: SystemModel
    rate: float
    p_given: float
    evaluator: str = "asymptotic"

    def __post_init__(self):
        if not self.p_given > 0:
            raise DomainError("energy budget must be positive")
        if not self.rate > 0:
            raise DomainError("rate must be positive")
        if self.evaluator not in BACKENDS:
            raise DomainError(f"unknown outage backend {self.evaluator!r}")


@dataclass
class OptimResult:
    x: object
    objective: float
    iterations: int
    converged: bool
    certificate_gap: float = math.nan
    slack: float = math.nan
    reported_outage: float = math.nan
    flags: tuple = ()
    extra: dict = field(default_factory=dict)


def _energy(backend, P) -> np.ndarray:
    P = np.atleast_2d(P)
    pre = backend.prefixes(P)
    return np.sum(P * pre[:, :-1], axis=1)


def _scale_to_budget(backend, direction, budget, iters: int = 200) -> np.ndarray:
    """Largest s with energy(s * direction) <= budget, per row (bisection)."""
    d = np.atleast_2d(np.asarray(direction, dtype=float))
    lo = np.zeros(d.shape[0])
    # the energy is at least s * d_1 (first round always sent)
    hi = budget / d[:, 0]
    while True:
        over = _energy(backend, hi[:, None] * d) > budget
        if np.all(over):
            break
        hi = np.where(over, hi, 2.0 * hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = _energy(backend, mid[:, None] * d) <= budget
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
        if np.all(hi - lo <= 1e-15 * hi):
            break
    return lo


def _powers_from_shares(backend, shares, budget) -> np.ndarray:
    """Powers spending shares[k] * budget in round k, row by row.

    Round k is only sent after k failures, so its expected energy is
    p_out,k-1 P_k and the budget is met exactly.  Shares are the natural
    scale here: the powers themselves span many decades.
    """
    E = np.atleast_2d(np.asarray(shares, dtype=float)) * budget
    P = np.empty_like(E)
    P[:, 0] = E[:, 0]
    for k in range(1, E.shape[1]):
        P[:, k] = E[:, k] / backend.outage_after(P, k)
    return P


def _shares(backend, P) -> np.ndarray:
    P = np.atleast_2d(P)
    E = P * backend.prefixes(P)[:, :-1]
    return (E / E.sum(axis=1, keepdims=True))[0]


def _softmax(z) -> np.ndarray:
    z = np.append(np.asarray(z, dtype=float), 0.0)
    e = np.exp(z - z.max())
    return e / e.sum()


def _simplex_grid(K: int, step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    if K == 1:
        return np.ones((1, 1))
    if K == 2:
        t = np.arange(1, n) / n
        return np.column_stack((t, 1 - t))
    if K == 3:
        pts = [(i / n, j / n, (n - i - j) / n) for i in range(1, n) for j in range(1, n - i)]
        return np.array(pts)
    raise DomainError("grid certificates are limited to K <= 3")


def grid_certificate(problem: PowerProblem, step: float | None = None, equal_only: bool = False):
    """(best log-outage, best powers) over a grid of per-round energy shares.

    ``equal_only`` instead scales the all-equal power vector to the budget.
    """
    model = problem.model
    backend = _backend(problem.evaluator, model, problem.rate)
    if equal_only:
        dirs = np.ones((1, model.K)) / model.K
        P = _scale_to_budget(backend, dirs, problem.p_given)[:, None] * dirs
    else:
        if step is None:
            step = 1e-3 if model.K <= 2 else 1e-2
        P = _powers_from_shares(backend, _simplex_grid(model.K, step), problem.p_given)
    obj = backend.log_outage(P)
    i = int(np.argmin(obj))
    return float(obj[i]), P[i]


def _report(problem, P):
    alloc = PowerAllocation.from_powers(P, problem.model.n0)
    return outage_truncated(problem.model, alloc, problem.rate, with_bound=False).value


def optimize_equal_power(problem: PowerProblem, report: bool = True) -> OptimResult:
    """Largest common per-round power meeting the budget."""
    model = problem.model
    backend = _backend(problem.evaluator, model, problem.rate)
    direction = np.ones((1, model.K))
    s = float(_scale_to_budget(backend, direction, problem.p_given)[0])
    if not s > 0:
        raise InfeasibleError("no positive equal power meets the energy budget")
    P = np.full(model.K, s)
    slack = problem.p_given - float(_energy(backend, P)[0])
    obj = float(backend.log_outage(P)[0])
    return OptimResult(
        x=P,
        objective=math.exp(obj),
        iterations=1,
        converged=True,
        certificate_gap=0.0,
        slack=slack,
        reported_outage=_report(problem, P) if report else math.nan,
    )


def optimize_power(problem: PowerProblem, certify: bool = True, report: bool = True, tol: float = 1e-10) -> OptimResult:
    """Minimise the outage over per-round powers under the energy budget.

    A fixed point (prefix outages frozen, inner problem P_k ~ 1/p_out,k-1
    in closed form) gives the start; SLSQP on log-powers then solves the
    coupled problem with the true constraint, and a Nelder-Mead pass over
    the per-round energy shares polishes whichever of the two is better.
    """
    model = problem.model
    K = model.K
    budget = problem.p_given
    backend = _backend(problem.evaluator, model, problem.rate)
    flags = []
    if K == 1:
        P = np.array([budget])
        obj = float(backend.log_outage(P)[0])
        return OptimResult(P, math.exp(obj), 0, True, 0.0, 0.0, _report(problem, P) if report else math.nan)

    # fixed point on the frozen-prefix problem
    P = np.full(K, budget / K)
    iterations = 0
    converged = False
    for iterations in range(1, FIXED_POINT_CAP + 1):
        q = backend.prefixes(P)[0, :-1]
        new = budget / (K * q)
        if np.max(np.abs(new - P) / P) < tol:
            P = new
            converged = True
            break
        P = new
    if not converged:
        flags.append("fixed_point_capped")

    # coupled refinement
    def objective(y):
        return float(backend.log_outage(np.exp(y))[0])

    def constraint(y):
        # log scale keeps the gradient bounded when powers span decades
        return math.log(budget) - math.log(float(_energy(backend, np.exp(y))[0]))

    y0 = np.log(P)
    # trial steps may overflow; such points simply lose the comparison below
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        res = sopt.minimize(
            objective,
            y0,
            method="SLSQP",
            # the first round is always sent, so P_1 <= budget
            bounds=[(None, math.log(budget))] + [(None, None)] * (K - 1),
            constraints=[{"type": "ineq", "fun": constraint}],
            options={"ftol": 1e-14, "maxiter": 500},
        )
    if not res.success:
        flags.append("slsqp:" + str(res.message))
    # keep the better of the fixed point and the (projected) SLSQP point
    candidates = [P]
    if np.all(np.isfinite(res.x)):
        Q = np.exp(res.x)
        if _energy(backend, Q)[0] > budget:
            # same per-round energy split, rescaled onto the budget
            Q = _powers_from_shares(backend, _shares(backend, Q), budget)[0]
        candidates.append(Q)
    P = min(candidates, key=lambda c: float(backend.log_outage(c)[0]))

    # polish over energy shares, which meet the budget by construction
    e0 = np.clip(_shares(backend, P), 1e-300, None)
    z0 = np.log(e0[:-1] / e0[-1])

    def share_objective(z):
        Q = _powers_from_shares(backend, _softmax(z), budget)
        v = float(backend.log_outage(Q)[0])
        return v if math.isfinite(v) else math.inf

    # explicit simplex: scipy's default scales with |z0| and degenerates at 0
    simplex = np.vstack([z0, z0 + 0.5 * np.eye(K - 1)])
    polish = sopt.minimize(share_objective, z0, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400 * K, "initial_simplex": simplex})
    Q = _powers_from_shares(backend, _softmax(polish.x), budget)[0]
    if float(backend.log_outage(Q)[0]) < float(backend.log_outage(P)[0]):
        P = Q
    obj = float(backend.log_outage(P)[0])
    slack = budget - float(_energy(backend, P)[0])
    gap = math.nan
    if certify and K <= 3 and problem.evaluator == "asymptotic":
        best, _ = grid_certificate(problem)
        gap = (math.exp(obj) - math.exp(best)) / math.exp(best)
    return OptimResult(
        x=P,
        objective=math.exp(obj),
        iterations=iterations,
        converged=converged and "slsqp" not in " ".join(flags),
        certificate_gap=gap,
        slack=slack,
        reported_outage=_report(problem, P) if report else math.nan,
        flags=tuple(flags),
    )


# --------------------------------------------------------------------------
# rate selection


@dataclass(frozen=True)
class RateProblem:
    model: SystemModel
    alloc: PowerAllocation
    epsilon: float
    evaluator: str = "truncated"

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise DomainError("outage constraint must lie in (0, 1]")
        if self.evaluator not in BACKENDS:
            raise DomainError(f"unknown outage backend {self.evaluator!r}")


def _rate_sequence(problem: RateProblem, rate: float) -> np.ndarray:
    """[1, p_1(R), ..., p_K(R)] with the chosen backend."""
    model, alloc = problem.model, problem.alloc
    if problem.evaluator == "asymptotic":
        return _AsymptoticPrefix(model, rate).prefixes(alloc.powers(model.n0))[0]
    return _TruncatedPrefix(model, rate).prefixes(alloc.powers(model.n0))[0]


class _RateCache:
    def __init__(self, problem):
        self.problem = problem
        self.store = {}

    def __call__(self, rate: float) -> np.ndarray:
        key = float(rate)
        if key not in self.store:
            seq = _rate_sequence(self.problem, key)
            # asymptotic prefixes need not be monotone once clamped
            self.store[key] = np.minimum.accumulate(seq)
        return self.store[key]

    def ltat(self, rate: float) -> float:
        return ltat(rate, self(rate))


SMALL_RATE = 1e-3


def feasible_interval(problem: RateProblem, seq=None, r_cap: float = 64.0):
    """(R_lo, R_hi) on which p_out,K(R) <= epsilon."""
    seq = seq or _RateCache(problem)
    eps = problem.epsilon
    if seq(SMALL_RATE)[-1] > eps:
        raise InfeasibleError(f"outage exceeds {eps:g} even at R = {SMALL_RATE:g}")
    target = eps if eps < 1.0 else 1.0 - 1e-9
    hi = 1.0
    while seq(hi)[-1] <= target:
        hi *= 2.0
        if hi > r_cap:
            return SMALL_RATE, r_cap
    lo = hi / 2.0 if hi > 1.0 else SMALL_RATE
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if seq(mid)[-1] <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    return SMALL_RATE, lo


def _maximise_scalar(f, lo: float, hi: float, tol: float = 1e-9):
    """Prescan then golden section around the best prescan point."""
    xs = np.linspace(lo, hi, PRESCAN_POINTS)
    vals = [f(x) for x in xs]
    i = int(np.argmax(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, len(xs) - 1)]
    res = sopt.minimize_scalar(lambda r: -f(r), bounds=(a, b), method="bounded", options={"xatol": tol})
    best_x, best_v = (res.x, -res.fun) if -res.fun >= vals[i] else (xs[i], vals[i])
    return float(best_x), float(best_v)


def optimize_rate(problem: RateProblem, certify: bool = False, grid_step: float = 1e-3) -> OptimResult:
    """Dinkelbach iterations for max LTAT subject to p_out,K <= epsilon."""
    seq = _RateCache(problem)
    lo, hi = feasible_interval(problem, seq)

    def num(r):
        return r * (1.0 - seq(r)[-1])

    def den(r):
        return float(np.sum(seq(r)[:-1]))

    rate = 0.5 * (lo + hi)
    mu = num(rate) / den(rate)
    residual = math.inf
    converged = False
    it = 0
    for it in range(1, DINKELBACH_CAP + 1):
        rate, _ = _maximise_scalar(lambda r: num(r) - mu * den(r), lo, hi)
        residual = num(rate) - mu * den(rate)
        mu_new = num(rate) / den(rate)
        if abs(residual) < DINKELBACH_TOL:
            mu = max(mu, mu_new)
            converged = True
            break
        mu = mu_new
    flags = () if converged else ("dinkelbach_capped",)
    gap = math.nan
    if certify:
        grid = np.arange(lo, hi + 0.5 * grid_step, grid_step)
        best = max(seq.ltat(r) for r in grid)
        gap = (best - seq.ltat(rate)) / best
    return OptimResult(
        x=rate,
        objective=seq.ltat(rate),
        iterations=it,
        converged=converged,
        certificate_gap=gap,
        slack=problem.epsilon - seq(rate)[-1],
        flags=flags,
        extra={"residual": residual, "interval": (lo, hi), "mu": mu},
    )
