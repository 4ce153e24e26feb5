import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rel
from dcapprox import errors, measures


# -- closed-form moments ----------------------------------------------------------------

def test_moment_examples(g30, lap30, unif30):
    assert g30.moment(4) == 3
    assert lap30.moment(2) == 2
    assert unif30.moment(3) == 0
    for m in (g30, lap30, unif30):
        assert m.moment(0) == 1


def test_symmetric_odd_moments_are_exact_zero(g30, lap30):
    fr = measures.freud(1.5, precision_digits=30, max_degree=10)
    for m in (g30, lap30, fr):
        assert all(m.moment(2 * k + 1) == 0 for k in range(10))


def test_moment_order_limit(g30):
    with pytest.raises(errors.OrderTooHigh):
        g30.moment(g30.max_order + 1)


@pytest.mark.parametrize("name,args", [("gaussian", (1.5,)), ("laplace", (0.7,)), ("freud", (1.5,)),
                                       ("uniform", (-1, 2)), ("one_sided_exp", (2,))])
def test_quadrature_moments_match_closed_form(name, args):
    digits = 30
    m = measures.builtin(name, precision_digits=digits, max_degree=8,
                         **dict(zip(measures._BUILTINS[name][1], args)))
    tol = mp.mpf(10) ** (-digits + 4)
    for k in range(0, 2 * m.max_degree + 1):
        exact, quad = m.moment(k), m.moment_by_quadrature(k)
        if exact == 0:
            assert abs(quad) <= tol
        else:
            assert rel(quad, exact) <= tol, (k, exact, quad)


def test_one_sided_exp_moments_are_factorials():
    m = measures.one_sided_exp(0, precision_digits=30, max_degree=6)
    assert [m.moment(k) for k in range(8)] == [math.factorial(k) for k in range(8)]


def test_inconsistent_moments_rejected():
    # second moment below the squared mean cannot come from a measure
    mom = {0: 1, 1: 1, 2: mp.mpf("0.5")}
    with pytest.raises(errors.InconsistentMoments):
        measures.MomentModel("bad", lambda k: mom.get(k, 1), measures.TailClass("bounded"),
                             precision_digits=20, max_degree=2)


# -- tail metadata ----------------------------------------------------------------------

def test_builtin_tail_classes():
    assert measures.gaussian(1, precision_digits=20, max_degree=4).tail.r == 2
    assert measures.laplace(1, precision_digits=20, max_degree=4).tail.kind == "subexp"
    fr = measures.freud(1.5, precision_digits=20, max_degree=4).tail
    assert fr.kind == "strictly_subexp" and fr.r == pytest.approx(1.5 / 0.5)
    u = measures.uniform(-1, 1, precision_digits=20, max_degree=4).tail
    assert u.kind == "bounded" and u.r == 1


def test_laplace_normalising_constant():
    # E e^{2|X|/K} = 1/(1 - 2/K) for Laplace(1); setting it to e^2 gives K below
    K = 2 / (1 - math.exp(-2))
    assert measures.laplace(1, precision_digits=20, max_degree=4).tail.K == pytest.approx(K, rel=1e-12)
    assert measures.laplace_K(3) == pytest.approx(3 * K, rel=1e-12)
    assert measures.one_sided_exp_K(0) == pytest.approx(K, rel=1e-12)


@pytest.mark.parametrize("kind,kw", [("strictly_subexp", {"r": 0.5}), ("strictly_subexp", {"A": -1}),
                                     ("subexp", {"K": 0}), ("carleman_general", {}), ("weird", {})])
def test_tail_class_validation(kind, kw):
    with pytest.raises(ValueError):
        measures.TailClass(kind, **kw)


# -- mgf_norm ---------------------------------------------------------------------------

def test_mgf_examples(g30, lap30):
    assert rel(g30.mgf_norm(1), mp.e) < 1e-25
    for m in (g30, lap30):
        assert rel(m.mgf_norm(0), 1) < 1e-25
    assert rel(lap30.mgf_norm(mp.mpf("0.25")), mp.sqrt(mp.mpf(4) / 3)) < 1e-20


def test_mgf_diverges_outside_strip(lap30):
    with pytest.raises(errors.MGFDiverges):
        lap30.mgf_norm(1)


@settings(max_examples=10)
@given(t0=st.floats(-0.4, 0.4), h=st.floats(0.01, 0.4))
def test_mgf_log_convex(t0, h):
    lap = measures.laplace(1, precision_digits=20, max_degree=4)
    # the laplace strip is |t| < 1/2
    lo, hi = max(t0 - h, -0.45), min(t0 + h, 0.45)
    mid = (lo + hi) / 2
    a, b, c = (lap.mgf_norm(mp.mpf(t)) for t in (lo, mid, hi))
    assert b <= mp.sqrt(a * c) * (1 + mp.mpf(10) ** -20)


@pytest.mark.parametrize("name,args", [("gaussian", (1,)), ("gaussian", (2,)), ("freud", (1.5,)),
                                       ("freud", (3,))])
def test_strict_tail_metadata_holds(name, args):
    m = measures.builtin(name, precision_digits=20, max_degree=4,
                         **dict(zip(measures._BUILTINS[name][1], args)))
    t = m.tail
    for tv in np.linspace(-3, 3, 20):
        bound = t.A * mp.exp((t.K * abs(mp.mpf(tv))) ** t.r)
        assert m.mgf_norm(mp.mpf(tv)) <= bound * (1 + mp.mpf(10) ** -15), tv


# -- projections of d-dimensional measures ----------------------------------------------

def test_projected_gaussian_is_gaussian():
    g = measures.gaussian(1, precision_digits=20, max_degree=8)
    pm = measures.project_measure(measures.ProductMeasure([g] * 3), [1 / 3, 2 / 3, 2 / 3])
    assert [pm.moment(k) for k in range(9)] == [g.moment(k) for k in range(9)]


def test_coordinate_projection_of_product_uniform():
    u = measures.uniform(-1, 1, precision_digits=20, max_degree=8)
    pm = measures.project_measure(measures.ProductMeasure([u, u]), [1, 0])
    assert [pm.moment(k) for k in range(9)] == [u.moment(k) for k in range(9)]


def test_diagonal_laplace_projection_vs_monte_carlo():
    lap = measures.laplace(1, precision_digits=20, max_degree=6)
    s = 1 / math.sqrt(2)
    pm = measures.project_measure(measures.ProductMeasure([lap, lap]), [s, s])
    rng = np.random.default_rng(0)
    y = rng.laplace(size=(10 ** 6, 2)) @ np.array([s, s])
    for k in (2, 4):
        vals = y ** k
        se = vals.std() / math.sqrt(len(vals))
        assert abs(float(pm.moment(k)) - vals.mean()) <= 5 * se
    # exact convolution values: E Y^2 = 2, E Y^4 = (24 + 6*4 + 24)/4
    assert float(pm.moment(2)) == pytest.approx(2, rel=1e-15)
    assert float(pm.moment(4)) == pytest.approx(18, rel=1e-15)


def test_dimension_limit():
    g = measures.gaussian(1, precision_digits=20, max_degree=4)
    with pytest.raises(errors.DimensionTooHigh):
        measures.ProductMeasure([g] * 7)
    with pytest.raises(errors.DimensionTooHigh):
        measures.EmpiricalMeasure(np.zeros((5, 7)))


def test_empirical_projection_is_discrete():
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [0.5, 0.5]])
    pm = measures.project_measure(measures.EmpiricalMeasure(pts), [1, 0], max_degree=2)
    assert float(pm.moment(2)) == pytest.approx((1 + 1 + 0.25) / 5, rel=1e-15)


# -- config -----------------------------------------------------------------------------

def test_load_from_config_file(tmp_path):
    cfg = {"type": "laplace", "parameters": {"b": 2}, "tail": {"kind": "subexp", "K": 5},
           "precision_digits": 25, "max_degree": 6}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(cfg))
    m = measures.load_measure(str(p))
    assert m.tail.K == 5 and m.precision_digits == 25 and m.moment(2) == 8
    y = tmp_path / "m.yaml"
    y.write_text("type: gaussian\nparameters: {sigma: 2}\nprecision_digits: 20\nmax_degree: 4\n")
    assert measures.load_measure(str(y)).moment(2) == 4


def test_builtin_spec_strings():
    assert measures.load_measure("uniform:0:2", 20, 4).moment(1) == 1
    with pytest.raises(ValueError):
        measures.load_measure("cauchy")


def test_precision_env_default():
    import os
    assert measures.DEFAULT_PRECISION == int(os.environ.get("DCAPPROX_PRECISION", "60"))
