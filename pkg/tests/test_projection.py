import math
import random

import mpmath as mp
import pytest
from hypothesis import given, strategies as st

from conftest import rel
from dcapprox import bounds, errors, measures, projection as P

DIG = 30


@pytest.fixture(scope="module")
def g_basis():
    return P.build_basis(measures.gaussian(1, precision_digits=DIG), 30)


@pytest.fixture(scope="module")
def lap():
    return measures.laplace(1, precision_digits=DIG)


# -- bases ------------------------------------------------------------------------------

def test_gaussian_recurrence_is_hermite(g_basis):
    tol = mp.mpf(10) ** (-DIG + 10)
    assert all(abs(a) <= tol for a in g_basis.alpha[:31])
    assert all(abs(b - k) <= tol for k, b in enumerate(g_basis.beta[1:31], start=1))


def test_uniform_recurrence_is_legendre():
    b = P.build_basis(measures.uniform(-1, 1, precision_digits=DIG), 25)
    tol = mp.mpf(10) ** (-DIG + 10)
    assert all(abs(a) <= tol for a in b.alpha[:26])
    for k in range(1, 26):
        assert abs(b.beta[k] - mp.mpf(k * k) / (4 * k * k - 1)) <= tol


def test_laplace_recurrence_two_constructions(lap):
    a1, b1 = lap.recurrence(30)
    a2, b2 = lap.recurrence_from_moments(30)
    tol = mp.mpf(10) ** (-DIG + 10)
    for x, y in zip(a1 + b1, a2 + b2):
        assert abs(x - y) <= tol * max(1, abs(y))


@pytest.mark.parametrize("name,args", [("gaussian", (1,)), ("laplace", (1,)), ("freud", (1.5,)),
                                       ("uniform", (-1, 1)), ("one_sided_exp", (0,))])
def test_basis_invariants(name, args):
    m = measures.builtin(name, precision_digits=DIG, **dict(zip(measures._BUILTINS[name][1], args)))
    b = P.build_basis(m, 20)
    assert b.orthonormality_error() <= mp.mpf(10) ** (-DIG + 8)
    with mp.workdps(m.working_digits):
        assert abs(mp.fsum(b.weights) - 1) <= mp.mpf(10) ** (-DIG + 8)
        assert all(w > 0 for w in b.weights)
        xs, ws = m.gauss_rule(12)
        for k in range(24):
            q = mp.fsum(w * x ** k for x, w in zip(xs, ws))
            assert abs(q - m.moment(k)) <= mp.mpf(10) ** (-DIG + 8) * max(1, m.moment(k))


# -- projection -------------------------------------------------------------------------

def test_projection_of_x_squared(g_basis):
    res = P.project(g_basis, P.custom_target(lambda x: x * x, "sq"), 1)
    assert rel(res.residual_norm, mp.sqrt(2)) < mp.mpf(10) ** (-DIG + 10)
    for x in (-2, 0.3, 5):
        assert abs(res.evaluate(x) - 1) < mp.mpf(10) ** (-DIG + 10)


def test_polynomials_are_fixed(g_basis):
    poly = P.custom_target(lambda x: 3 - x + 2 * x ** 4 - x ** 7 / 5, "poly")
    res = P.project(g_basis, poly, 7)
    assert res.residual_norm <= mp.mpf(10) ** (-DIG + 10)


def test_cos_coefficients(g_basis):
    res = P.project(g_basis, P.cos_target(1), 24)
    for k in range(13):
        oracle = mp.exp(-mp.mpf(1) / 2) * (-1) ** k / mp.sqrt(mp.factorial(2 * k))
        assert abs(res.coeffs[2 * k] - oracle) <= 1e-10
        if k < 12:
            assert abs(res.coeffs[2 * k + 1]) <= 1e-10


def test_degree_above_basis_rejected(g_basis):
    with pytest.raises(ValueError):
        P.project(g_basis, P.cos_target(1), 31)


def test_quadrature_insufficient_detected():
    g = measures.gaussian(1, precision_digits=DIG)
    b = P.build_basis(g, 4, n_nodes=6)
    with pytest.raises(errors.QuadratureInsufficient):
        P.project(b, P.cos_target(8), 4)
    # the automatic driver doubles the rule until the check passes
    res = P.project_auto(g, P.cos_target(8), 4, n_nodes=6)
    assert rel(res.norm_f2, (1 + mp.exp(-2 * 64)) / 2) < 1e-12


@pytest.mark.parametrize("name", ["gaussian", "laplace", "uniform"])
@pytest.mark.parametrize("target", ["cos:2", "abs", "relu"])
def test_projection_invariants(name, target):
    m = measures.builtin(name, precision_digits=DIG)
    res = P.project_auto(m, P.load_target(target), list(range(0, 21)))
    prev = None
    for D in range(21):
        r = res[D]
        # Pythagoras and Parseval
        total = mp.fsum(c * c for c in r.coeffs) + r.residual_norm ** 2
        assert rel(total, r.norm_f2) <= mp.mpf(10) ** (-DIG // 2)
        assert abs(r.residual_norm - r.residual_direct) <= mp.mpf(10) ** (-DIG // 2) * max(1, r.norm_f2)
        if prev is not None:
            assert r.residual_norm <= prev * (1 + mp.mpf(10) ** -20)
        prev = r.residual_norm
        if r.residual_norm > mp.mpf(10) ** (-DIG // 2):
            assert P.orthogonality_report(r) <= mp.mpf(10) ** (-DIG // 2)


@given(om=st.floats(0.25, 3), D=st.integers(1, 14))
def test_cos_projection_properties(g30, om, D):
    # ||f||^2 = (1 + e^{-2 om^2}) / 2 under gaussian(1), independent of the projection
    res = P.project_auto(g30, P.cos_target(om), [D - 1, D])
    f2 = (1 + mp.exp(-2 * mp.mpf(om) ** 2)) / 2
    assert rel(res[D].norm_f2, f2) <= mp.mpf(10) ** (-DIG // 2)
    total = mp.fsum(c * c for c in res[D].coeffs) + res[D].residual_norm ** 2
    assert rel(total, f2) <= mp.mpf(10) ** (-DIG // 2)
    assert res[D].residual_norm <= res[D - 1].residual_norm * (1 + mp.mpf(10) ** -20)


def test_kinked_target_norms_are_exact(lap):
    # ||abs||^2 = E X^2 = 2, ||relu||^2 = 1 under laplace(1)
    r1 = P.project_auto(lap, P.abs_target(), 6)
    r2 = P.project_auto(lap, P.relu_target(), 6)
    assert rel(r1.norm_f2, 2) <= mp.mpf(10) ** (-DIG + 8)
    assert rel(r2.norm_f2, 1) <= mp.mpf(10) ** (-DIG + 8)


# -- Fourier residual probe -------------------------------------------------------------

@pytest.mark.parametrize("name", ["gaussian", "laplace"])
def test_probe_basic_properties(name):
    m = measures.builtin(name, precision_digits=DIG)
    res = P.project_auto(m, P.cos_target(1), [4, 10])
    xi = [mp.mpf(k) / 4 for k in range(-20, 21)]
    for D in (4, 10):
        pr = P.fourier_probe(res[D], xi)
        tol = mp.mpf(10) ** (-DIG // 2)
        assert all(v <= tol * res[D].residual_norm * P.moment_norm(res[D].basis, mm)
                   for mm, v in pr.derivative_checks)
        assert abs(pr.phi_values[20]) <= tol          # xi = 0
        assert pr.sup_phi() <= res[D].residual_direct * (1 + tol)
        assert pr.max_ratio() <= 1 + 1e-6
    # the finite-order envelope applies while D > r (K xi)^r, beyond that only ||r_D||
    kind = P.envelope_value(m, 10, 1, 1)[1]
    assert kind == ("tanh" if name == "laplace" else "finite_order")
    if name == "gaussian":
        assert P.envelope_value(m, 10, 5, 1)[1] == "trivial"


def test_laplace_envelope_certificate(lap):
    K = lap.tail.K
    xi = [mp.mpf(-10) + mp.mpf(20) * i / 100 for i in range(101)]
    res = P.project_auto(lap, P.cos_target(1), list(range(2, 21)))
    for D in range(2, 21):
        pr = P.fourier_probe(res[D], xi, derivative_orders=[])
        rn = res[D].residual_norm
        for x, ph in zip(xi, pr.phi_values):
            env = mp.e * rn * mp.tanh(K * mp.pi * abs(x) / 4) ** D
            assert abs(ph) <= env * (1 + mp.mpf("1e-6")) + mp.mpf(10) ** (-DIG + 10)


@pytest.mark.parametrize("target", ["cos:1", "cos:2.5", "sin:1", "sinc:1"])
def test_plancherel_identity(target):
    g = measures.gaussian(1, precision_digits=DIG)
    t = P.load_target(target)
    res = P.project_auto(g, t, [3, 8])
    for D in (3, 8):
        assert abs(P.plancherel_residual(res[D]) - res[D].residual_norm ** 2) <= 1e-8


# -- certificates -----------------------------------------------------------------------

def test_band_limited_residual_below_plan_bound():
    g = measures.gaussian(1, precision_digits=DIG)
    t = P.cos_target(2)
    plan = bounds.plan_degree_strict(mp.mpf("1e-8"), g.tail.A, g.tail.K, g.tail.r, t.band_mass, t.tail_mass)
    res = P.project_auto(g, t, list(range(plan.floor, plan.D + 6)))
    for D, r in res.items():
        rep = P.residual_bound_check(r, plan)
        assert rep["ok"] and rep["ratio"] <= 1
    assert res[plan.D].residual_norm <= mp.mpf("1e-8")


def test_residual_check_refuses_below_floor():
    g = measures.gaussian(1, precision_digits=DIG)
    t = P.cos_target(2)
    plan = bounds.plan_degree_strict(mp.mpf("1e-4"), 1, 1, 2, t.band_mass, t.tail_mass)
    r = P.project_auto(g, t, plan.floor - 1)
    with pytest.raises(errors.PlanInvalid):
        P.residual_bound_check(r, plan)


def test_laplace_plan_uses_tanh_envelope(lap):
    t = P.cos_target(1)
    plan = bounds.plan_degree_subexp(mp.mpf("1e-2"), lap.tail.K, t.band_mass, t.tail_mass)
    assert plan.regime == "subexp"
    r = P.project_auto(lap, t, min(plan.D, 40))
    rep = P.residual_bound_check(r, plan)
    expected = bounds.subexp_band_term(r.D, lap.tail.K, plan.Omega, t.band_mass(plan.Omega))
    assert rel(rep["bound"], expected) < 1e-25 and rep["ok"]


def test_certified_bound_dominates_measured(lap):
    t = P.cos_target(1)
    res = P.project_auto(lap, t, list(range(1, 31)))
    for D, r in res.items():
        assert r.residual_norm <= P.certified_bound(lap, t, D, 1)


def test_smoothed_indicator_tail_mass():
    s = 0.5
    t = P.gauss_smoothed_indicator_target(-1, 1, s)
    for om in (1, 2, 4, 8):
        # C e^{-s^2 om^2 / 4} with a constant fixed at om = 1
        C = t.tail_mass(1) / mp.exp(-s * s / 4)
        assert t.tail_mass(om) <= C * mp.exp(-s * s * om * om / 4)


@pytest.mark.parametrize("spec", ["cos:2", "sin", "trig"])
def test_band_edge_tails_vanish(spec):
    t = P.trig_poly_target([(1, 0), (0.5, 2)], R=mp.pi) if spec == "trig" else P.load_target(spec)
    edge = t.band_edge if t.band_edge is not None else 2
    for om in (edge, edge * 2, edge * 10):
        assert t.tail_mass(om) == 0


# -- small dimensions -------------------------------------------------------------------

@pytest.fixture(scope="module")
def g2():
    g = measures.gaussian(1, precision_digits=20)
    return measures.ProductMeasure([g, g])


def test_graded_monomials():
    m = P.graded_monomials(2, 2)
    assert m == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(P.graded_monomials(4, 5)) == math.comb(9, 5)


def test_basis_too_large(g2):
    g = measures.gaussian(1, precision_digits=20, max_degree=4)
    with pytest.raises(errors.BasisTooLarge):
        P.project_d(measures.ProductMeasure([g] * 6), lambda p: 1, 40)


def test_d_dim_matches_one_dimensional_projection(g2):
    w = [mp.mpf(3) / 5, mp.mpf(4) / 5]
    tgt = lambda p: mp.cos(w[0] * p[0] + w[1] * p[1])
    zetas = [mp.mpf(z) / 2 for z in range(0, 9)]
    probes, proj = P.directional_probe_d(g2, tgt, 6, [w, [1, 0]], zetas)
    one = P.project_auto(measures.gaussian(1, precision_digits=20), P.cos_target(1), 6)
    assert rel(proj.residual_norm, one.residual_norm) < 1e-12
    tol = mp.mpf(10) ** -10
    assert all(v <= tol for _, v in probes[0].derivative_checks)
    assert abs(probes[0].phi_values[0]) <= tol
    for pr in probes:
        assert all(r <= 1 + 1e-6 for r in pr.envelope_ratio)


@pytest.mark.parametrize("k", [1, 2])
def test_directional_derivative_kappa_bound(g2, k):
    tgt = lambda p: mp.cos(p[0] + p[1] / 2)
    proj = P.project_d(g2, tgt, 6)
    rng = random.Random(k)
    u = [mp.mpf(1), mp.mpf(0)]
    for _ in range(5):
        vs = [[mp.mpf(rng.uniform(-1, 1)) for _ in range(2)] for _ in range(k)]
        kap = P.kappa4(proj, vs)
        for z in (0, mp.mpf("0.5"), 1, 2):
            dv = P.directional_derivative(proj, u, z, vs)
            # the lemma's Cauchy-Schwarz step: |d^k phi| <= ||r|| kappa_4
            assert abs(dv) <= proj.residual_norm * kap * (1 + mp.mpf("1e-10"))
            env = P.derivative_envelope(g2.tail, 6, k, z, proj.residual_norm, kap)
            assert abs(dv) <= env * (1 + mp.mpf("1e-6")) + mp.mpf(10) ** -15
