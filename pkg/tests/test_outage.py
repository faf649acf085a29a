import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from harq_outage.channel import PowerAllocation, SystemModel, mc_outage
from harq_outage.errors import DomainError
from harq_outage.outage import (
    MultiIndex,
    WeightTable,
    cdf_A,
    cdf_A_oracle_mc,
    compositions,
    enumerate_indices,
    log_weight,
    outage_quasi_static,
    outage_truncated,
    prefix_outages,
    product_cdf,
    product_cdf_many,
    term_count,
    truncation_bound,
    uniform_bound,
    weight,
    weight_params,
    write_terms_csv,
    xi_tail,
)

lam_st = st.lists(st.floats(0.0, 0.95), min_size=1, max_size=4)


def test_multi_index():
    assert MultiIndex((1, 0, 2)).order == 3
    with pytest.raises(DomainError):
        MultiIndex((1, -1))


@pytest.mark.parametrize("K,N", [(1, 5), (2, 4), (3, 3), (4, 2)])
def test_enumeration_counts(K, N):
    idx = list(enumerate_indices(K, N))
    assert len(idx) == term_count(K, N) == math.comb(N + K, K)
    assert len(set(idx)) == len(idx)
    orders = [i.order for i in idx]
    assert orders == sorted(orders)


def test_compositions_colex():
    assert compositions(2, 2) == [(2, 0), (1, 1), (0, 2)]


@settings(max_examples=40, deadline=None)
@given(lam_st, st.integers(1, 4), st.integers(0, 6))
def test_weights_plus_tail_sum_to_one(lam, m, N):
    model = SystemModel(len(lam), m, 1.0, tuple(lam))
    wp = weight_params(model)
    head = math.fsum(math.exp(log_weight(wp, i)) for i in enumerate_indices(model.K, N))
    assert head + math.exp(wp.log_w0) * xi_tail(wp.w_sum, m, N) == pytest.approx(1.0, abs=1e-12)


def test_weights_independent_rounds():
    model = SystemModel.homogeneous(3, 2, lam=0.0)
    assert weight(model, (0, 0, 0)) == 1.0
    assert weight(model, (1, 0, 0)) == 0.0


def test_weight_table():
    model = SystemModel.homogeneous(2, 1, lam=0.5)
    table = WeightTable.build(model, 3)
    assert len(table.weights) == term_count(2, 3)
    # m=1, K=2, lambda=0.5: S = 2/3, W_0 = 3/5
    assert table.weights[MultiIndex((0, 0))] == pytest.approx(0.6)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.floats(1e-3, 1e4), st.floats(1.0001, 1e3))
def test_product_cdf_single_factor(a, omega, x):
    ref = special.gammainc(a, (x - 1) / omega)
    assert product_cdf([a], [omega], x) == pytest.approx(ref, abs=1e-14)
    # the contour path on an explicit abscissa gives the same number
    if 1e-4 < ref < 1 - 1e-4 and 0.05 < omega < 50:
        assert product_cdf([a], [omega], x, abscissa=-0.5) == pytest.approx(ref, abs=1e-9)


def _two_factor_oracle(a1, o1, a2, o2, x):
    def inner(r):
        return special.gammainc(a2, max(x / (1 + r) - 1, 0.0) / o2) * math.exp(
            (a1 - 1) * math.log(r) - r / o1 - special.gammaln(a1) - a1 * math.log(o1)
        )

    return integrate.quad(inner, 0, x - 1, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


@settings(max_examples=12, deadline=None)
@given(st.integers(1, 3), st.floats(0.2, 5.0), st.integers(1, 3), st.floats(0.2, 5.0), st.floats(1.1, 40.0))
def test_product_cdf_two_factors_vs_quadrature(a1, o1, a2, o2, x):
    assert product_cdf([a1, a2], [o1, o2], x) == pytest.approx(_two_factor_oracle(a1, o1, a2, o2, x), abs=1e-9)


def test_product_cdf_both_sides_agree():
    shapes, omegas, x = [2, 1, 3], [0.8, 1.5, 0.4], 6.0
    lower = product_cdf(shapes, omegas, x, abscissa=-1.5)
    upper = product_cdf(shapes, omegas, x, abscissa=1.5)
    assert lower == pytest.approx(upper, abs=1e-12)


def test_product_cdf_many_matches_single():
    omegas = [0.7, 2.0, 1.1]
    shapes = [[1, 1, 1], [2, 1, 1], [1, 3, 2], [4, 1, 1]]
    many = product_cdf_many(shapes, omegas, 5.0)
    single = [product_cdf(s, omegas, 5.0) for s in shapes]
    assert np.allclose(many, single, atol=1e-13)


def test_product_cdf_support():
    assert product_cdf([1, 2], [1.0, 1.0], 1.0) == 0.0
    assert product_cdf([1, 2], [1.0, 1.0], 0.5) == 0.0


def test_cdf_A_vs_gamma_mc():
    model = SystemModel.homogeneous(2, 1, lam=0.6)
    alloc = PowerAllocation.equal(2, 6.0)
    exact = cdf_A((1, 0), model, alloc, 4.0)
    est = cdf_A_oracle_mc((1, 0), model, alloc, 4.0, 400_000, seed=3)
    assert abs(exact - est.p_hat) <= 4 * est.stderr
    with pytest.raises(DomainError):
        cdf_A((1,), model, alloc, 4.0)


def test_xi_tail_closed_form():
    # m=1: xi(N) = sum_{n>N} w^n = w^(N+1) / (1 - w)
    for N in range(5):
        assert xi_tail(0.4, 1, N) == pytest.approx(0.4 ** (N + 1) / 0.6, rel=1e-12)


def test_truncation_single_round_exact():
    model = SystemModel.homogeneous(1, 2)
    alloc = PowerAllocation.equal(1, 10.0)
    res = outage_truncated(model, alloc, 2.0)
    assert res.value == pytest.approx(special.gammainc(2, 3 * 2 / 10.0), rel=1e-13)
    assert res.truncation_order == 0 and res.error_bound == 0.0


def test_truncation_bound_decreasing_and_valid():
    model = SystemModel.homogeneous(3, 1, lam=0.7)
    alloc = PowerAllocation.equal(3, 20.0)
    bounds = [truncation_bound(model, alloc, 2.0, n) for n in range(7)]
    assert all(a > b for a, b in zip(bounds, bounds[1:]))
    assert all(b <= uniform_bound(model, n) for n, b in enumerate(bounds))
    ref = outage_truncated(model, alloc, 2.0, N=14, with_bound=False).value
    for n in range(5):
        assert ref - outage_truncated(model, alloc, 2.0, N=n, with_bound=False).value <= bounds[n]


def test_truncated_vs_mc():
    model = SystemModel.homogeneous(2, 2, lam=0.5)
    alloc = PowerAllocation.equal(2, 10.0)
    p = outage_truncated(model, alloc, 3.0).value
    est = mc_outage(model, alloc, 3.0, 400_000, seed=11)
    assert abs(p - est.p_hat) <= max(3 * est.stderr, 2e-3)


def test_outage_monotone_in_gamma_and_rate():
    model = SystemModel.homogeneous(2, 1, lam=0.4)
    p = [outage_truncated(model, PowerAllocation.equal(2, g), 2.0).value for g in (3.0, 10.0, 30.0)]
    assert p[0] > p[1] > p[2]
    alloc = PowerAllocation.equal(2, 10.0)
    q = [outage_truncated(model, alloc, r).value for r in (1.0, 2.0, 3.0)]
    assert q[0] < q[1] < q[2]
    assert outage_truncated(model, alloc, 0.0).value == 0.0


def test_prefix_outages_nonincreasing():
    model = SystemModel.homogeneous(3, 1, lam=0.5)
    seq = prefix_outages(model, PowerAllocation.equal(3, 30.0), 2.0)
    assert seq[0] == 1.0
    assert all(a >= b for a, b in zip(seq, seq[1:]))


def test_terms_csv(tmp_path):
    model = SystemModel.homogeneous(2, 1, lam=0.5)
    res = outage_truncated(model, PowerAllocation.equal(2, 10.0), 2.0, N=2, keep_terms=True)
    path = tmp_path / "terms.csv"
    write_terms_csv(res, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + term_count(2, 2)
    total = sum(float(l.split(",")[1]) * float(l.split(",")[2]) for l in lines[1:])
    assert total == pytest.approx(res.value, rel=1e-10)
    with pytest.raises(DomainError):
        write_terms_csv(outage_truncated(model, PowerAllocation.equal(2, 10.0), 2.0, N=1), path)


def test_quasi_static_closed_form():
    model = SystemModel.homogeneous(3, 1)
    alloc = PowerAllocation.equal(3, 12.0)
    x = math.expm1(2.0 * math.log(2) / 3) / 4.0
    assert outage_quasi_static(model, alloc, 2.0).value == pytest.approx(-math.expm1(-x), rel=1e-12)
    with pytest.raises(DomainError):
        outage_quasi_static(model, PowerAllocation(12.0, (0.5, 0.25, 0.25)), 2.0)
