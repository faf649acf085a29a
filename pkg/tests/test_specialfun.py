import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from harq_outage.errors import ConvergenceError, DomainError, PoleError
from harq_outage.outage import product_cdf_spec
from harq_outage.specialfun import foxh
from harq_outage.specialfun.contour import ContourSpec, mellin_barnes, wynn_epsilon
from harq_outage.specialfun.gamma import log_gamma, pochhammer, regularized_lower_gamma
from harq_outage.specialfun.hypergeometric import (
    hyp_0f1,
    hyp_1f1,
    hyp_2f1,
    psi_kummer_reference,
    tricomi_psi,
)


# ---------------------------------------------------------------- gamma family


def test_log_gamma_examples():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-14)
    assert log_gamma(0.5) == pytest.approx(0.5723649429247001, rel=1e-13)


@given(st.floats(0.5, 170.0))
def test_log_gamma_real_range(z):
    ref = float(mpmath.loggamma(z))
    assert abs(log_gamma(z) - ref) <= 1e-13 * max(1.0, abs(ref))


def test_log_gamma_complex_and_poles():
    z = 2.5 + 3j
    assert abs(log_gamma(z) - complex(mpmath.loggamma(z))) < 1e-13
    for bad in (0, -1, -7.0):
        with pytest.raises(PoleError):
            log_gamma(bad)


def test_regularized_lower_gamma_examples():
    assert regularized_lower_gamma(1, 1) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert regularized_lower_gamma(2, 0) == 0.0
    assert regularized_lower_gamma(2, 3) == pytest.approx(1 - 4 * math.exp(-3), rel=1e-14)
    with pytest.raises(DomainError):
        regularized_lower_gamma(0, 1)
    with pytest.raises(DomainError):
        regularized_lower_gamma(1, -1)


@given(st.floats(0.1, 20), st.floats(0, 50), st.floats(0, 50))
def test_regularized_lower_gamma_monotone(a, x1, x2):
    lo, hi = sorted((x1, x2))
    assert regularized_lower_gamma(a, lo) <= regularized_lower_gamma(a, hi) <= 1.0


def test_pochhammer():
    assert pochhammer(3, 0) == 1
    assert pochhammer(1, 4) == 24
    assert pochhammer(0.5, 2) == 0.75
    with pytest.raises(DomainError):
        pochhammer(1.0, -1)


# ---------------------------------------------------------------- hypergeometric


def test_hyp_0f1():
    assert hyp_0f1(1, 0.0) == 1.0
    ref = math.fsum(1.0 / (special.poch(2, s) * math.factorial(s)) for s in range(50))
    assert hyp_0f1(2, 1.0) == pytest.approx(ref, rel=1e-12)
    ref = math.fsum(0.25**s / (special.poch(1.5, s) * math.factorial(s)) for s in range(30))
    assert hyp_0f1(1.5, 0.25) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(PoleError):
        hyp_0f1(-2, 1.0)


@given(st.floats(-5, 5))
def test_hyp_1f1_exponential(x):
    assert hyp_1f1(1, 1, x).real == pytest.approx(math.exp(x), rel=1e-12)


def test_hyp_1f1_examples():
    assert hyp_1f1(2, 3, 0.0) == 1.0
    assert hyp_1f1(1, 2, 1.0).real == pytest.approx(math.e - 1, rel=1e-12)
    b = 2.5 + 4j
    assert abs(hyp_1f1(1.5, b, 0.8) - complex(mpmath.hyp1f1(1.5, b, 0.8))) < 1e-12
    with pytest.raises(PoleError):
        hyp_1f1(1, 0, 1.0)


def test_hyp_2f1():
    assert hyp_2f1(1.3, 2.1, 0.7, 0.0) == 1.0
    assert hyp_2f1(1, 1, 2, 0.5) == pytest.approx(-math.log(0.5) / 0.5, rel=1e-10)
    for N in range(6):
        assert hyp_2f1(N + 2, 1, N + 2, 0.3) == pytest.approx(1 / 0.7, rel=1e-10)
    with pytest.raises(DomainError):
        hyp_2f1(1, 1, 2, 1.0)


# ---------------------------------------------------------------- Tricomi Psi


def test_tricomi_psi_integral_representation():
    ref = integrate.quad(lambda t: math.exp(-t) / (1 + t), 0, math.inf, epsabs=0, epsrel=1e-12)[0]
    assert tricomi_psi(1, 1, 1.0).real == pytest.approx(ref, rel=1e-10)
    assert tricomi_psi(1, 1, 1.0).real == pytest.approx(0.5963473623231940, rel=1e-10)
    ref = integrate.quad(lambda t: math.exp(-2 * t) / (1 + t) ** 2, 0, math.inf, epsabs=0, epsrel=1e-12)[0]
    assert tricomi_psi(1, 0, 2.0).real == pytest.approx(ref, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(-3.0, 6.0), st.floats(-25.0, 25.0), st.floats(0.05, 40.0))
def test_tricomi_psi_matches_mpmath(a, br, bi, z):
    b = complex(br, bi)
    ref = complex(mpmath.hyperu(a, b, z))
    val = tricomi_psi(a, b, z)
    assert abs(val - ref) <= 1e-8 * abs(ref)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.2, 5.0), st.floats(-8.0, 8.0), st.floats(0.1, 3.0))
def test_tricomi_psi_agrees_with_kummer_form(a, br, bi, z):
    b = complex(br + 0.37, bi)  # keep clear of integer b where the 1F1 form is singular
    direct = tricomi_psi(a, b, z)
    kummer = psi_kummer_reference(a, b, z)
    assert abs(direct - kummer) <= 1e-8 * abs(kummer)


def test_psi_small_z_limit():
    # z^(a + s) Psi(1, 1 + a + s; z) -> Gamma(a + s) as z -> 0
    a, s = 2.0, 0.3 + 1.1j
    z = 1e-7
    val = z ** (a + s) * tricomi_psi(1, 1 + a + s, z)
    assert abs(val - special.gamma(a + s)) <= 1e-5 * abs(special.gamma(a + s))


@pytest.mark.parametrize("p,order", [(0.5, 0.5), (2.5, 1.0)])
def test_psi_small_z_error_order(p, order):
    # u^p Psi(1, 1 + p; u) = e^u Gamma(p, u); the gap to Gamma(p) is O(u^min(p, 1))
    errs = [abs(u**p * tricomi_psi(1, 1 + p, u).real - special.gamma(p)) for u in (1e-3, 1e-4, 1e-5)]
    rates = [math.log10(a / b) for a, b in zip(errs, errs[1:])]
    assert rates == pytest.approx([order, order], abs=0.05)


def test_psi_small_z_exact_at_unit_shape():
    # p = 1: e^u Gamma(1, u) = 1 for every u
    for u in (1e-3, 1e-4, 1e-5):
        assert u * tricomi_psi(1, 2, u).real == pytest.approx(1.0, abs=1e-9)


def test_psi_domain():
    with pytest.raises(DomainError):
        tricomi_psi(0, 1, 1.0)
    with pytest.raises(DomainError):
        tricomi_psi(1, 1, -1.0)


# ---------------------------------------------------------------- Mellin-Barnes


def test_contour_spec_invariants():
    with pytest.raises(DomainError):
        ContourSpec(c=math.inf)
    with pytest.raises(DomainError):
        ContourSpec(c=1.0, half_extent=0.0)
    with pytest.raises(DomainError):
        ContourSpec(c=1.0, nodes=8)


def test_mellin_pairs():
    spec = ContourSpec(c=1.0)
    assert mellin_barnes(special.gamma, 1.0, spec) == pytest.approx(math.exp(-1), abs=1e-12)
    step = lambda s: special.gamma(s) / special.gamma(s + 1)
    assert mellin_barnes(step, 0.5, spec) == pytest.approx(1.0, abs=1e-8)
    assert mellin_barnes(step, 2.0, spec) == pytest.approx(0.0, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 8.0), st.sampled_from([0.5, 1.0, 2.5]))
def test_mellin_gamma_pair_any_abscissa(x, c):
    assert mellin_barnes(special.gamma, x, ContourSpec(c=c)) == pytest.approx(math.exp(-x), abs=1e-11)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_mellin_nonconvergence_reported():
    # |x^-s| grows without bound along the line when the kernel does not decay
    with pytest.raises(ConvergenceError):
        mellin_barnes(lambda s: np.exp(0.3 * np.abs(s.imag)) + 0j, 1.0, ContourSpec(c=1.0, max_nodes=4096))


def test_wynn_epsilon_accelerates_alternating_series():
    partial = np.cumsum([(-1) ** k / (k + 1) for k in range(12)])
    value, _ = wynn_epsilon(partial)
    assert value == pytest.approx(math.log(2), abs=1e-8)


# ---------------------------------------------------------------- Fox H / Meijer G


def test_fox_h_spec_invariants():
    with pytest.raises(DomainError):
        foxh.FoxHSpec(((1.0, 1.0, 0.0, 1.0),), (), (0, 2))
    with pytest.raises(DomainError):
        foxh.FoxHSpec(((1.0, -1.0, 0.0, 1.0),), (), (0, 1))


@pytest.mark.parametrize("m,omega,x", [(1, 1.0, 3.0), (2, 0.5, 2.0), (3, 4.0, 20.0), (1, 0.1, 1.05)])
def test_fox_h_single_factor_is_gamma_cdf(m, omega, x):
    spec = product_cdf_spec([m], [omega])
    val = foxh.fox_h(spec, x / omega)
    assert val == pytest.approx(special.gammainc(m, (x - 1) / omega), abs=1e-10)


def test_fox_h_two_factor_vs_nested_quadrature():
    # Pr((1 + R1)(1 + R2) <= 4) for unit exponentials
    spec = product_cdf_spec([1, 1], [1.0, 1.0])
    ref = integrate.quad(lambda r: math.exp(-r) * -math.expm1(-(4 / (1 + r) - 1)), 0, 3, epsabs=1e-14, epsrel=1e-12)[0]
    assert foxh.fox_h(spec, 4.0) == pytest.approx(ref, abs=1e-8)


def test_fox_h_below_support_is_zero():
    spec = product_cdf_spec([2, 1], [0.7, 1.3])
    assert abs(foxh.fox_h(spec, 0.9 / (0.7 * 1.3))) < 1e-10


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.integers(1, 3), min_size=1, max_size=3),
    st.lists(st.floats(0.3, 3.0), min_size=3, max_size=3),
    st.floats(1.5, 12.0),
    st.floats(-0.3, 0.3),
)
def test_fox_h_properties(shapes, omegas, x, rho):
    omegas = omegas[: len(shapes)]
    spec = product_cdf_spec(shapes, omegas)
    arg = x / float(np.prod(omegas))
    base = foxh.fox_h(spec, arg)
    assert foxh.fox_h_property_shift(spec, rho, arg) == pytest.approx(arg**rho * base, rel=1e-7)
    assert foxh.fox_h_property_invert(spec, arg) == pytest.approx(base, rel=1e-7)


def test_fox_h_abscissa_validation():
    spec = product_cdf_spec([1, 2], [1.0, 1.0])
    with pytest.raises(PoleError):
        foxh.fox_h(spec, 2.0, ContourSpec(c=0.5))


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("x", [1.2, 3.0, 10.0])
def test_meijer_g_region_integral_k1(m, x):
    # Gamma(m) G^{0,2}_{2,2}(x | 1, 1 + m; 1, 0) = (x - 1)^m / m
    val = special.gamma(m) * foxh.meijer_g([1.0, 1.0 + m], [1.0, 0.0], x, m=0, n=2)
    assert val == pytest.approx((x - 1) ** m / m, rel=1e-9)


def test_meijer_g_below_one_is_zero():
    assert abs(foxh.meijer_g([1.0, 2.0], [1.0, 0.0], 0.5, m=0, n=2)) < 1e-10


def test_meijer_g_strip_error():
    with pytest.raises(PoleError):
        foxh.meijer_g([1.0, 2.0], [1.0, 0.0], 2.0, ContourSpec(c=0.5), m=0, n=2)
