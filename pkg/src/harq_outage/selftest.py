"""Invariant suites behind ``harq-outage selftest``.

Each check returns (passed, detail).  ``quick`` stays well under a minute;
``full`` adds Monte Carlo agreement, the rate-convexity lemma and the
optimizers.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy import integrate, special

from . import asymptotic as asy
from .channel import PowerAllocation, SystemModel, mc_outage
from .optimize import PowerProblem, RateProblem, optimize_equal_power, optimize_power, optimize_rate
from .outage import product_cdf_spec, outage_quasi_static, outage_truncated, product_cdf
from .specialfun import foxh
from .specialfun.contour import ContourSpec, mellin_barnes
from .specialfun.gamma import log_gamma, pochhammer, regularized_lower_gamma
from .specialfun.hypergeometric import hyp_0f1, hyp_1f1, hyp_2f1, psi_kummer_reference, tricomi_psi


def _close(a, b, rtol, atol=0.0):
    return abs(a - b) <= atol + rtol * abs(b)


# --------------------------------------------------------------------------
# special functions


def check_gamma():
    ok = _close(log_gamma(0.5), 0.5 * math.log(math.pi), 1e-13) and _close(log_gamma(5.0), math.log(24.0), 1e-13)
    ok = ok and _close(regularized_lower_gamma(2, 3), 1 - 4 * math.exp(-3), 1e-12)
    ok = ok and pochhammer(0.5, 2) == 0.75 and pochhammer(1, 4) == 24
    return ok, "log_gamma, regularized gamma, pochhammer"


def check_hypergeometric():
    ref0f1 = math.fsum(1.0 / (special.poch(2, s) * math.factorial(s)) for s in range(50))
    ok = _close(hyp_0f1(2, 1.0), ref0f1, 1e-12)
    ok = ok and _close(hyp_1f1(1, 2, 1.0).real, math.e - 1, 1e-12)
    ok = ok and _close(hyp_2f1(1, 1, 2, 0.5), 2 * math.log(2), 1e-10)
    return ok, "0F1, 1F1, 2F1 closed forms"


def check_psi():
    worst = 0.0
    for a, b, z in [(1.0, 1.0, 1.0), (2.0, 3.5 + 2j, 0.7), (1.5, 0.3 - 4j, 2.5), (3.0, 4.0 + 10j, 1.2)]:
        direct = tricomi_psi(a, b, z)
        kummer = psi_kummer_reference(a, b, z)
        worst = max(worst, abs(direct - kummer) / abs(kummer))
    ref = integrate.quad(lambda t: math.exp(-t) / (1 + t), 0, math.inf, epsabs=0, epsrel=1e-13)[0]
    ok = worst < 1e-8 and _close(tricomi_psi(1, 1, 1.0).real, ref, 1e-10)
    return ok, f"Psi quadrature vs Kummer form, worst rel {worst:.2e}"


def check_mellin_pairs():
    gamma_kernel = lambda s: special.gamma(s)
    step_kernel = lambda s: special.gamma(s) / special.gamma(s + 1)
    spec = ContourSpec(c=1.0)
    e1 = abs(mellin_barnes(gamma_kernel, 1.0, spec) - math.exp(-1))
    e2 = abs(mellin_barnes(step_kernel, 0.5, spec) - 1.0)
    e3 = abs(mellin_barnes(step_kernel, 2.0, spec))
    worst = max(e1, e2, e3)
    return worst < 1e-8, f"Mellin pair / step function, worst abs {worst:.2e}"


def check_fox_properties(count: int = 20, seed: int = 7):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        K = int(rng.integers(1, 4))
        shapes = rng.integers(1, 4, size=K)
        omegas = rng.uniform(0.3, 3.0, size=K)
        spec = product_cdf_spec(shapes, omegas)
        x = rng.uniform(1.5, 12.0) / float(np.prod(omegas))
        rho = rng.uniform(-0.3, 0.3)
        base = foxh.fox_h(spec, x)
        shifted = foxh.fox_h_property_shift(spec, rho, x)
        inverted = foxh.fox_h_property_invert(spec, x)
        worst = max(worst, abs(x**rho * base - shifted) / abs(shifted), abs(inverted - base) / abs(base))
    return worst < 1e-7, f"shift/invert properties on {count} specs, worst rel {worst:.2e}"


def check_meijer_closed_forms():
    worst = 0.0
    for m in (1, 2, 3):
        for x in (1.5, 4.0, 9.0):
            val = asy.g_shapes((m,), x, closed_form=False)
            worst = max(worst, abs(val - (x - 1) ** m / m) / ((x - 1) ** m / m))
    return worst < 1e-8, f"K=1 Meijer-G vs (x-1)^m/m, worst rel {worst:.2e}"


def check_product_cdf():
    # F(x) = int f_1(r) G_2(x / (1 + r) - 1) dr for two Gamma factors
    worst = 0.0
    for (a1, o1), (a2, o2), x in [((1, 1.0), (1, 0.5), 3.0), ((2, 0.5), (1, 2.0), 4.0), ((3, 2.0), (2, 1.5), 20.0)]:
        val = product_cdf([a1, a2], [o1, o2], x)

        def inner(r):
            return special.gammainc(a2, max(x / (1 + r) - 1, 0.0) / o2) * math.exp(
                (a1 - 1) * math.log(r) - r / o1 - special.gammaln(a1) - a1 * math.log(o1)
            )

        ref = integrate.quad(inner, 0, x - 1, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        worst = max(worst, abs(val - ref))
    return worst < 1e-8, f"two-factor CDF vs 1-D quadrature, worst abs {worst:.2e}"


SPECIALFUN_CHECKS = [
    check_gamma,
    check_hypergeometric,
    check_psi,
    check_mellin_pairs,
    check_fox_properties,
    check_meijer_closed_forms,
    check_product_cdf,
]


# --------------------------------------------------------------------------
# model-level invariants


def check_quasi_static():
    model = SystemModel.homogeneous(2, 1, lam=0.0)
    alloc = PowerAllocation.equal(2, 10.0)
    p = outage_quasi_static(model, alloc, 1.5).value
    x = math.expm1(1.5 * math.log(2) / 2) / 5.0
    return _close(p, -math.expm1(-x), 1e-12), "quasi-static m=1 closed form"


def check_factorization():
    model = SystemModel.homogeneous(2, 2, lam=0.5)
    res = asy.asymptotic_outage(model, PowerAllocation.equal(2, 1e4), 2.0)
    return _close(res.value, res.direct, 1e-10), "zeta * varrho * (C gamma)^-d equals the direct asymptote"


def check_lemma3(pairs: int = 50, seed: int = 11):
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(pairs):
        K = int(rng.integers(2, 6))
        lam1 = rng.uniform(0, 0.95, size=K)
        lam2 = np.minimum(lam1 + rng.uniform(0, 0.3, size=K), 0.99)
        fails += not asy.lemma3_check(lam1, lam2, K, int(rng.integers(1, 4))).passed
    return fails == 0, f"correlation factor monotone on {pairs} ordered pairs, {fails} failures"


def check_series_vs_k1():
    model = SystemModel.homogeneous(1, 2, lam=0.0)
    alloc = PowerAllocation.equal(1, 10.0)
    p = outage_truncated(model, alloc, 2.0, N=0).value
    return _close(p, special.gammainc(2, 3.0 / 5.0), 1e-12), "K=1 series equals the Gamma CDF"


def check_mc_agreement(n: int = 200_000):
    model = SystemModel.homogeneous(2, 1, lam=0.5)
    alloc = PowerAllocation.equal(2, 10.0)
    p = outage_truncated(model, alloc, 2.0).value
    est = mc_outage(model, alloc, 2.0, n, seed=5)
    ok = abs(p - est.p_hat) <= max(3 * est.stderr, 2e-3)
    return ok, f"series {p:.6f} vs MC {est.p_hat:.6f} +- {est.stderr:.1e}"


def check_lemma4():
    rates = np.linspace(0.25, 8.0, 33)
    details = []
    ok = True
    for m in (1, 2, 3):
        rep = asy.lemma4_check(m, 2, rates)
        ok = ok and rep.passed
        details.append(f"m={m} max residual {np.max(rep.recurrence_residuals):.1e}")
    return ok, "g_0(2^R) increasing and convex; " + ", ".join(details)


def check_optimizers():
    model = SystemModel.homogeneous(2, 1, lam=0.5)
    prob = PowerProblem(model, 2.0, 100.0)
    opa = optimize_power(prob, report=False)
    oepa = optimize_equal_power(prob, report=False)
    ok = opa.objective <= oepa.objective and opa.certificate_gap <= 1e-3 and opa.slack >= -1e-9
    rate = optimize_rate(RateProblem(SystemModel.homogeneous(1, 1), PowerAllocation.equal(1, 10.0), 1.0), certify=True)
    ok = ok and abs(rate.certificate_gap) <= 1e-3
    return ok, f"OPA {opa.objective:.3e} <= OEPA {oepa.objective:.3e}; LTAT certificate gap {rate.certificate_gap:.1e}"


QUICK_CHECKS = SPECIALFUN_CHECKS + [check_quasi_static, check_factorization, check_lemma3, check_series_vs_k1]
FULL_CHECKS = QUICK_CHECKS + [check_mc_agreement, check_lemma4, check_optimizers]


def run(checks, out=print) -> bool:
    all_ok = True
    for check in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok = all_ok and ok
        out(f"{'PASS' if ok else 'FAIL'} {check.__name__[6:]:<22} {time.perf_counter() - t0:6.1f}s  {detail}")
    return all_ok
