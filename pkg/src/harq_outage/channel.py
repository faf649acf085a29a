"""Time-correlated Nakagami-m channel: model types, sampler and Monte Carlo outage.

Each round draws |h_k| = sqrt(sigma_k^2/m) * || sqrt(1 - lam_k^2) v_k + lam_k v_0 ||
where v_0, v_1, ..., v_K are independent m-dimensional CN(0, I) vectors;
v_0 is shared by every round and carries the time correlation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class SystemModel:
    K: int
    m: int
    sigma2: tuple
    lam: tuple
    n0: float = 1.0

    def __post_init__(self):
        sigma2 = tuple(float(v) for v in np.broadcast_to(self.sigma2, (self.K,)))
        lam = tuple(float(v) for v in np.broadcast_to(self.lam, (self.K,)))
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "lam", lam)
        if int(self.K) != self.K or self.K < 1:
            raise DomainError(f"K must be a positive integer, got {self.K}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"fading order m must be a positive integer, got {self.m}")
        if any(not s > 0 for s in sigma2):
            raise DomainError("Nakagami spreads must be positive")
        if any(not 0.0 <= v < 1.0 for v in lam):
            raise DomainError(
                "time correlation must satisfy 0 <= lambda < 1; "
                "use the quasi-static path for fully correlated rounds"
            )
        if not self.n0 > 0:
            raise DomainError("noise power must be positive")

    @classmethod
    def homogeneous(cls, K: int, m: int, sigma2: float = 1.0, lam: float = 0.0, n0: float = 1.0):
        return cls(K, m, (sigma2,) * K, (lam,) * K, n0)

    def prefix(self, k: int) -> "SystemModel":
        """The first k rounds as a model of their own."""
        return SystemModel(k, self.m, self.sigma2[:k], self.lam[:k], self.n0)


@dataclass(frozen=True)
class PowerAllocation:
    gamma: float
    theta: tuple

    def __post_init__(self):
        theta = tuple(float(v) for v in np.atleast_1d(self.theta))
        object.__setattr__(self, "theta", theta)
        if not self.gamma > 0:
            raise DomainError("total SNR gamma must be positive")
        if any(not t > 0 for t in theta):
            raise DomainError("power fractions theta must be positive")
        if abs(math.fsum(theta) - 1.0) > 1e-12:
            raise DomainError(f"theta must sum to 1, sums to {math.fsum(theta)!r}")

    @classmethod
    def equal(cls, K: int, gamma: float) -> "PowerAllocation":
        return cls(gamma, (1.0 / K,) * K)

    @classmethod
    def from_powers(cls, powers, n0: float = 1.0) -> "PowerAllocation":
        powers = np.asarray(powers, dtype=float)
        total = float(powers.sum())
        theta = powers / total
        theta = theta / theta.sum()
        return cls(total / n0, tuple(theta))

    def powers(self, n0: float = 1.0) -> np.ndarray:
        return self.gamma * np.asarray(self.theta) * n0

    def prefix(self, k: int) -> "PowerAllocation":
        """Allocation restricted to the first k rounds (same per-round powers)."""
        th = np.asarray(self.theta[:k])
        total = th.sum()
        return PowerAllocation(self.gamma * total, tuple(th / total))


@dataclass(frozen=True)
class DerivedChannelParams:
    u: tuple
    omega: tuple


def derive_params(model: SystemModel, alloc: PowerAllocation) -> DerivedChannelParams:
    if len(alloc.theta) != model.K:
        raise DomainError("allocation length does not match K")
    p = alloc.powers(model.n0)
    u = p * np.asarray(model.sigma2) / (model.m * model.n0)
    omega = u * (1.0 - np.asarray(model.lam) ** 2)
    return DerivedChannelParams(tuple(u), tuple(omega))


@dataclass(frozen=True)
class MCEstimate:
    p_hat: float
    stderr: float
    n: int
    seed: int
    count: int = 0

    @classmethod
    def from_count(cls, count: int, n: int, seed: int) -> "MCEstimate":
        p = count / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n, seed, int(count))


# --------------------------------------------------------------------------
# sampling


def _rng(seed: int, chunk: int) -> np.random.Generator:
    # counter-based stream keyed by (seed, chunk): chunks are independent of
    # the order or thread they run on
    key = np.array([seed % (1 << 64), chunk % (1 << 64)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_gains(model: SystemModel, count: int, rng: np.random.Generator, quasi_static=False):
    """|h_k|^2 (count x K) and the shared statistic T = ||v_0||^2."""
    K, m = model.K, model.m
    lam = np.asarray(model.lam)
    if quasi_static:
        lam = np.ones(K)
    g = rng.standard_normal((count, K + 1, m, 2)) * math.sqrt(0.5)
    v0 = g[:, 0]
    vk = g[:, 1:]
    mix = np.sqrt(1.0 - lam**2)[None, :, None, None] * vk + lam[None, :, None, None] * v0[:, None]
    h2 = np.sum(mix**2, axis=(2, 3)) * (np.asarray(model.sigma2) / m)[None, :]
    t = np.sum(v0**2, axis=(1, 2))
    return h2, t


def sample_channel_block(model: SystemModel, count: int, seed: int, quasi_static: bool = False, return_t: bool = False):
    """count x K matrix of channel magnitudes |h_k|."""
    if count < 1:
        raise DomainError("count must be at least 1")
    rng = _rng(seed, 0)
    h2, t = _draw_gains(model, count, rng, quasi_static)
    if return_t:
        return np.sqrt(h2), t
    return np.sqrt(h2)


def empirical_cross_correlation(samples: np.ndarray, l: int, k: int) -> float:
    """Pearson correlation of |h_l|^2 and |h_k|^2 (columns of |h| samples)."""
    if l == k:
        raise DomainError("cross-correlation needs two distinct rounds")
    a = samples[:, l] ** 2
    b = samples[:, k] ** 2
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        raise DomainError("degenerate variance in cross-correlation")
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def accumulated_mutual_information(snrs) -> float:
    snrs = np.asarray(snrs, dtype=float)
    if np.any(snrs < 0):
        raise DomainError("SNRs must be non-negative")
    return float(np.sum(np.log2(1.0 + snrs)))


def _chunk_counts(model, alloc, rate, n, seed, chunk_size, quasi_static, threads):
    powers = alloc.powers(model.n0) / model.n0
    chunks = [(i, min(chunk_size, n - i * chunk_size)) for i in range((n + chunk_size - 1) // chunk_size)]

    def work(item):
        idx, size = item
        h2, _ = _draw_gains(model, size, _rng(seed, idx), quasi_static)
        info = np.cumsum(np.log2(1.0 + h2 * powers[None, :]), axis=1)
        return np.sum(info < rate, axis=0).astype(np.int64)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return np.sum(parts, axis=0)


def mc_outage_sequence(
    model: SystemModel,
    alloc: PowerAllocation,
    rate: float,
    n: int,
    seed: int,
    quasi_static: bool = False,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> list:
    """Monte Carlo p_out,k for k = 1..K on shared channel draws."""
    if n < 1:
        raise DomainError("sample count must be positive")
    counts = _chunk_counts(model, alloc, rate, n, seed, chunk_size, quasi_static, threads)
    return [MCEstimate.from_count(int(c), n, seed) for c in counts]


def mc_outage(
    model: SystemModel,
    alloc: PowerAllocation,
    rate: float,
    n: int,
    seed: int,
    quasi_static: bool = False,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> MCEstimate:
    """Monte Carlo estimate of Pr(I_K < R)."""
    return mc_outage_sequence(model, alloc, rate, n, seed, quasi_static, threads, chunk_size)[-1]


def dump_samples(model: SystemModel, alloc: PowerAllocation, count: int, seed: int, path, quasi_static=False):
    """Write (draw, round, |h|^2, snr) rows for external validation."""
    h = sample_channel_block(model, count, seed, quasi_static)
    h2 = h**2
    snr = h2 * (alloc.powers(model.n0) / model.n0)[None, :]
    with open(path, "w") as fh:
        fh.write("# draw,round,h2,snr\n")
        for i in range(count):
            for k in range(model.K):
                fh.write(f"{i},{k + 1},{h2[i, k]:.12g},{snr[i, k]:.12g}\n")


# --------------------------------------------------------------------------
# conditional density


def log_hyp0f1(b: float, y):
    """log 0F1(;b;y) for y >= 0 via the scaled modified Bessel function."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    pos = y > 0
    r = 2.0 * np.sqrt(y[pos])
    out[pos] = special.gammaln(b) + 0.5 * (1 - b) * np.log(y[pos]) + np.log(special.ive(b - 1, r)) + r
    return out


def conditional_snr_pdf(model: SystemModel, alloc: PowerAllocation, k: int, x, t: float):
    """Density of gamma_k given T = t (noncentral chi-square type)."""
    lam = model.lam[k]
    if lam >= 1.0:
        raise DomainError("conditional density is singular at lambda = 1")
    if t < 0:
        raise DomainError("t must be non-negative")
    params = derive_params(model, alloc)
    u, om = params.u[k], params.omega[k]
    m = model.m
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x must be non-negative")
    nc = u * lam**2 * t
    with np.errstate(divide="ignore"):
        logx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
    logf = (
        -m * math.log(om)
        + (m - 1) * logx
        - special.gammaln(m)
        - (nc + x) / om
        + log_hyp0f1(m, nc * x / om**2)
    )
    if m == 1:
        logf = np.where(x > 0, logf, -m * math.log(om) - nc / om)
    out = np.exp(logf)
    return float(out) if out.ndim == 0 else out
