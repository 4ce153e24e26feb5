import math

import mpmath as mp
import pytest
from hypothesis import given, strategies as st

from conftest import rel
from dcapprox import carleman as C, errors, measures

SEQS = ("factorial", "subgaussian", "quasi")


@pytest.mark.parametrize("name", SEQS)
def test_sequence_invariants(name):
    s = C.get_sequence(name)
    assert s.M(0) == 1 and s.a(0) == 1
    assert s.is_log_convex(upto=200)
    a = [s.a(k) for k in range(1, 300)]
    assert all(y <= x for x, y in zip(a, a[1:]))
    for k in (1, 7, 50):
        assert rel(s.a(k), s.M(k - 1) / s.M(k)) < 1e-25


def test_closed_form_sequences():
    assert rel(C.factorial_sequence().M(5), 120) < 1e-25
    assert rel(C.subgaussian_sequence().M(4), 16) < 1e-25
    q = C.quasi_sequence().M(3)
    assert rel(q, 6 * 1 * (1 + mp.log(2)) * (1 + mp.log(3))) < 1e-25


def test_custom_sequence_requires_unit_start():
    with pytest.raises(ValueError):
        C.custom_sequence([2, 3, 5])
    s = C.custom_sequence([1, 1, 2, 6])
    assert rel(s.a(3), mp.mpf(1) / 3) < 1e-25


def test_unknown_sequence():
    with pytest.raises(ValueError):
        C.get_sequence("nope")


# -- tau --------------------------------------------------------------------------------

@pytest.mark.parametrize("name", SEQS)
def test_tau_is_one_below_one(name):
    assert C.tau(C.get_sequence(name), mp.mpf("0.5")) == 1


def test_tau_examples():
    f = C.factorial_sequence()
    assert rel(C.tau(f, 2), mp.mpf("0.5")) < 1e-25
    r = mp.mpf("3.5")
    oracle = min(mp.factorial(n) / r ** n for n in range(201))
    assert rel(C.tau(f, r), oracle) < 1e-20


# the brute-force window n <= 200 must contain the active index set
WINDOW = {"factorial": 150, "subgaussian": 20, "quasi": 60}


@given(name=st.sampled_from(SEQS), u=st.floats(0, 1))
def test_tau_product_equals_bruteforce(name, u):
    r = 0.1 + u * (WINDOW[name] - 0.1)
    s = C.get_sequence(name)
    assert rel(C.tau(s, r), C.tau_bruteforce(s, r, 200)) <= 1e-20


@given(r1=st.floats(0.1, 60), r2=st.floats(0.1, 60))
def test_tau_nonincreasing(r1, r2):
    s = C.factorial_sequence()
    lo, hi = sorted((r1, r2))
    assert C.tau(s, hi) <= C.tau(s, lo) * (1 + mp.mpf(10) ** -25)


def test_factorial_tau_decay():
    # floor(r)!/r^floor(r) <= e sqrt(n) e^{-n} by Stirling, n = floor(r)
    s = C.factorial_sequence()
    for r in [mp.mpf(k) / 4 for k in range(8, 201)]:
        n = int(mp.floor(r))
        assert rel(C.tau(s, r), mp.factorial(n) / r ** n) < 1e-25
        assert C.tau(s, r) <= mp.e * mp.sqrt(n) * mp.exp(-n)


def test_plain_exponential_decay_bound_fails_at_integers():
    # n!/n^n > e^{-n} for every n >= 1, so tau(r) <= e^{-floor r} cannot hold there
    s = C.factorial_sequence()
    assert rel(C.tau(s, 2), mp.mpf("0.5")) < 1e-25
    assert all(C.tau(s, n) > mp.exp(-n) for n in range(1, 51))


def test_tau_N_examples():
    f = C.factorial_sequence()
    assert C.tau_N(f, 7, 0) == 1
    assert rel(C.tau_N(f, 2, 5), mp.mpf("0.5")) < 1e-25
    assert rel(C.tau_N(f, 10, 2), mp.mpf(2) / 100) < 1e-25


@given(name=st.sampled_from(SEQS), r=st.floats(0.2, 30), N=st.integers(0, 40))
def test_tau_N_is_restricted_infimum(name, r, N):
    s = C.get_sequence(name)
    r = mp.mpf(r)
    oracle = min(mp.exp(s.log_M(n) - n * mp.log(r)) for n in range(N + 1))
    assert rel(C.tau_N(s, r, N), oracle) < 1e-20


# -- qdc bound --------------------------------------------------------------------------

def test_qdc_without_vanishing():
    f = C.factorial_sequence()
    x = mp.mpf("0.1")
    q = C.qdc_bound(f, 1, 1, 0, x, Y=1, alpha_grid=[1], refine=False)
    assert q.components["integral_term"] == 1
    expected = 1 * 1 * mp.exp(x) / (1 * mp.pi * 1) * (1 + C.tau(f, 1))
    assert rel(q.value, expected) < 1e-25


def test_qdc_dual_integral_evaluation():
    f = C.factorial_sequence()
    a = C.log_integral(f, 10, 1, "analytic")
    b = C.log_integral(f, 10, 1, "quadrature")
    assert abs(a - b) <= 1e-10
    qa = C.qdc_bound(f, 1, 1, 10, 0, Y=11, alpha_grid=[1], refine=False, method="analytic")
    qb = C.qdc_bound(f, 1, 1, 10, 0, Y=11, alpha_grid=[1], refine=False, method="quadrature")
    assert rel(qa.value, qb.value) <= 1e-10


def test_qdc_value_matches_components():
    s = C.subgaussian_sequence()
    q = C.qdc_bound(s, 2, mp.mpf("1.5"), 12, mp.mpf("0.2"))
    c = q.components
    assert rel(q.value, c["prefactor"] * (c["integral_term"] + c["tail_term"])) < 1e-20
    assert q.value == min(e[-1] for e in q.evaluations)


def test_qdc_y_range():
    with pytest.raises(errors.YOutOfRange):
        C.qdc_bound(C.factorial_sequence(), 1, 1, 10, 0, Y=12)


def test_qdc_tends_to_zero_for_divergent_sums():
    f = C.factorial_sequence()
    x = mp.mpf("0.1")
    big = C.qdc_bound(f, 1, 1, 200, x, Y=1 / f.a(201))
    small = C.qdc_bound(f, 1, 1, 5, x, Y=1 / f.a(6))
    assert big.value < mp.mpf("1e-6") * small.value


# -- real-variable bound ----------------------------------------------------------------

def test_real_variable_bound_basics():
    f = C.factorial_sequence()
    assert C.real_variable_bound(f, 1, 1, 5, 0) == 0
    with pytest.raises(errors.XOutOfRange):
        C.real_variable_bound(f, 1, 1, 5, 100)
    x = mp.mpf("0.1")
    assert rel(C.real_variable_bound(f, 2, 1, 5, x), 16 * x / mp.harmonic(5)) < 1e-25


def test_subgaussian_a_sum_grows_like_sqrt():
    s = C.subgaussian_sequence()
    c = 2 / math.sqrt(math.e)
    for m in (100, 1000, 10000):
        ratio = float(s.a_sum(m)) / math.sqrt(m)
        assert 0.5 * c <= ratio <= 2 * c, (m, ratio)


def test_factorial_a_sum_grows_like_log():
    f = C.factorial_sequence()
    for m in (100, 1000, 10000):
        ratio = float(f.a_sum(m)) / math.log(m)
        assert 0.9 <= ratio <= 1.2, (m, ratio)


# -- fitted sequences -------------------------------------------------------------------

@pytest.mark.parametrize("B,K", [(1, 1), (1, 2), (2, 1)])
def test_from_moments_majorises_norms(B, K):
    lap = measures.laplace(1, precision_digits=30, max_degree=20)
    s = C.from_moments(lap, B=B, K=K)
    assert s.is_log_convex(upto=19)
    for k in range(21):
        norm = mp.sqrt(lap.moment(2 * k))
        assert norm <= B * mp.mpf(K) ** k * s.M(k) * (1 + mp.mpf(10) ** -25)
