import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from dcapprox import errors, learner as L


# -- LP and L1 regression ---------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_ipm_matches_linprog(seed):
    rng = np.random.default_rng(seed)
    m, n = 6, 15
    A = rng.standard_normal((m, n))
    u = rng.uniform(0.5, 2, n)
    x0 = u * rng.uniform(0.1, 0.9, n)
    b = A @ x0
    c = rng.standard_normal(n)
    x, _, _ = L.lp_bounded_ipm(A, c, b, u, x0)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=list(zip(np.zeros(n), u)), method="highs")
    assert ref.status == 0
    assert abs(c @ x - ref.fun) <= 1e-7 * (1 + abs(ref.fun))
    assert np.allclose(A @ x, b, atol=1e-7) and np.all(x >= -1e-9) and np.all(x <= u + 1e-9)


def test_ipm_rejects_infeasible_start():
    A = np.ones((1, 3))
    with pytest.raises(errors.ParameterOutOfRange):
        L.lp_bounded_ipm(A, np.ones(3), np.array([1.0]), np.ones(3), np.full(3, 0.5))


@pytest.mark.parametrize("seed", range(3))
def test_l1_fit_matches_slack_lp(seed):
    rng = np.random.default_rng(seed)
    n, p = 40, 4
    F = rng.standard_normal((n, p))
    y = F @ rng.standard_normal(p) + rng.standard_t(2, n)
    c, _ = L.l1_fit_features(F, y)
    # primal slack form: min sum s, -s <= F c - y <= s
    obj = np.concatenate([np.zeros(p), np.ones(n)])
    A = np.block([[F, -np.eye(n)], [-F, -np.eye(n)]])
    ref = linprog(obj, A_ub=A, b_ub=np.concatenate([y, -y]),
                  bounds=[(None, None)] * p + [(0, None)] * n, method="highs")
    assert abs(np.sum(np.abs(F @ c - y)) - ref.fun) <= 1e-6 * ref.fun


def test_constant_labels():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 2))
    P = L.l1_poly_regress(X, np.full(30, 0.7), 2)
    assert P.objective <= 1e-8
    assert np.allclose(P(rng.standard_normal((5, 2))), 0.7, atol=1e-7)


def test_three_point_interpolation():
    X = np.array([[-1.0], [0.5], [2.0]])
    P = L.l1_poly_regress(X, X[:, 0], 1)
    assert np.allclose(P.coeffs, [0, 1], atol=1e-8)


def _data(seed, n=200, d=2, D=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.sin(X[:, 0]) * X[:, 1] + 0.3 * rng.standard_t(3, n)
    return X, y


@pytest.mark.parametrize("seed", range(3))
def test_l1_dominates_least_squares(seed):
    X, y = _data(seed)
    P = L.l1_poly_regress(X, y, 3)
    F = L.monomial_features(X, P.exps)
    c2, *_ = np.linalg.lstsq(F, y, rcond=None)
    assert P.objective <= np.mean(np.abs(F @ c2 - y)) + 1e-9


def test_local_optimality_probe():
    X, y = _data(9)
    P = L.l1_poly_regress(X, y, 3)
    F = L.monomial_features(X, P.exps)
    rng = np.random.default_rng(1)
    for _ in range(50):
        c = P.coeffs + 1e-3 * rng.standard_normal(len(P.coeffs)) * (1 + np.abs(P.coeffs))
        assert P.objective <= np.mean(np.abs(F @ c - y)) + 1e-10


def test_kernel_route_interpolates():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 3))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    P = L.l1_poly_regress(X, y, 4)
    assert P.method == "kernel" and P.objective <= 1e-8


def test_feature_cap():
    with pytest.raises(errors.BasisTooLarge):
        L.l1_poly_regress(np.zeros((5, 200)), np.zeros(5), 4)


def test_monomial_count():
    assert len(L.monomial_exponents(4, 3)) == math.comb(7, 3)
    assert L.monomial_exponents(2, 2).tolist()[:3] == [[0, 0], [1, 0], [0, 1]]


# -- thresholds -------------------------------------------------------------------------

@given(st.lists(st.tuples(st.integers(-1000, 1000), st.booleans()), min_size=20, max_size=20))
def test_threshold_sweep_is_exact(pairs):
    s = np.array([a / 900 for a, _ in pairs])
    y = np.array([1 if b else -1 for _, b in pairs])
    t, e = L.fit_threshold(s, y)
    _, eg = L.grid_threshold(s, y)
    assert e == eg == L.threshold_error(s, y, t)
    assert -1 <= t <= 1


def test_all_positive_labels():
    t, e = L.fit_threshold(np.array([0.3, -0.2, 0.9]), np.ones(3))
    assert t == -1 and e == 0


def test_separated_scores_take_smallest_gap_candidate():
    s = np.array([-0.8, -0.5, 0.2, 0.6])
    y = np.array([-1, -1, 1, 1])
    assert L.fit_threshold(s, y) == (0.2, 0.0)


# -- smoothed learning ------------------------------------------------------------------

def test_noiseless_separable_2d():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((300, 2))
    y = np.where(X @ [1.0, -2.0] + 0.1 >= 0, 1, -1)
    m = L.smoothed_learn(X, y, 1)
    assert m.info["train_err"] == 0


def test_validation_error_tracks_label_noise():
    rng = np.random.default_rng(4)
    eta = 0.1
    concept = L.load_concept("halfspace", 2, rng)
    X, y = L.smoothed_concept_data(concept, 4000, 2, 0.0, rng, noise=eta)
    m = L.smoothed_learn(X, y, 1, validation_size=1000)
    assert abs(m.info["val_err"] - eta) <= 0.05


def test_corrupted_fold_is_not_chosen():
    rng = np.random.default_rng(5)
    concept = L.load_concept("halfspace", 3, rng)
    X, y = L.smoothed_concept_data(concept, 3000, 3, 0.2, rng)
    folds = np.array_split(np.arange(2400), 3)
    y = y.copy()
    y[folds[1]] = -y[folds[1]]
    m = L.smoothed_learn(X, y, 2, replications=3, validation_size=600)
    errs = [r["val_err"] for r in m.info["folds"]]
    assert int(np.argmin(errs)) != 1 and m.info["val_err"] == min(errs)
    assert errs[1] > 0.5


@pytest.mark.parametrize("seed", range(4))
def test_misclassification_below_half_l1(seed):
    rng = np.random.default_rng(seed)
    concept = L.load_concept("intersection:2", 2, rng)
    X, y = L.smoothed_concept_data(concept, 500, 2, 0.3, rng, noise=0.05)
    m = L.poly_regression_classifier(X, y, 4)
    # averaging the threshold over [-1, 1] gives the half-L1 chain with no slack
    assert m.info["train_err"] <= m.info["l1"] / 2 + 1e-9


def test_smoothed_learn_is_deterministic():
    def run():
        rng = np.random.default_rng(8)
        concept = L.load_concept("ptf:2", 3, rng)
        X, y = L.smoothed_concept_data(concept, 400, 3, 0.3, rng)
        return L.smoothed_learn(X, y, 2, replications=2)
    a, b = run(), run()
    assert np.array_equal(a.poly.coeffs, b.poly.coeffs) and a.threshold == b.threshold


# -- JL ---------------------------------------------------------------------------------

def test_jl_preserves_squared_norm_in_mean():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(50)
    vals = [np.sum(L.jl_project(x, 10, rng)[1] ** 2) for _ in range(10 ** 4)]
    assert abs(np.mean(vals) / np.sum(x * x) - 1) <= 0.01


def test_jl_pairwise_distances():
    # Rademacher JL: m >= (4 + 2 beta) log N / (eps^2/2 - eps^3/3) succeeds w.p. >= 1 - N^-beta
    N, eps, d = 100, 0.3, 1000
    m = math.ceil(6 * math.log(N) / (eps ** 2 / 2 - eps ** 3 / 3))
    rng = np.random.default_rng(7)
    X = rng.standard_normal((N, d))
    iu = np.triu_indices(N, 1)
    orig = np.linalg.norm(X[:, None] - X[None], axis=2)[iu]
    ok = 0
    for _ in range(20):
        _, Z = L.jl_project(X, m, rng)
        proj = np.linalg.norm(Z[:, None] - Z[None], axis=2)[iu]
        ok += bool(np.all((proj >= (1 - eps) * orig) & (proj <= (1 + eps) * orig)))
    assert ok / 20 >= 0.95


def test_inner_product_preservation_at_planned_m():
    rng = np.random.default_rng(9)
    K, gamma, eps = 2, 0.3, 0.05
    inst = L.random_instance(K, gamma, 20, rng)
    X, _ = inst.sample(2000, rng)
    m = L.jl_dimension(K, gamma, eps)
    Q, _ = L.jl_project(X[:1], m, rng)
    assert L.inner_product_preservation(Q, X, inst.w, gamma) >= 1 - eps


def test_jl_rejects_zero_dimension():
    with pytest.raises(errors.ParameterOutOfRange):
        L.jl_project(np.zeros((2, 3)), 0, np.random.default_rng(0))


# -- halfspaces -------------------------------------------------------------------------

def test_instance_generator_respects_margin():
    rng = np.random.default_rng(10)
    inst = L.random_instance(3, 0.2, 6, rng)
    X, y = inst.sample(3000, rng)
    ip = X @ inst.w.T
    assert np.all(ip[y == 1] >= 0)
    assert np.all(np.any(ip[y == -1] <= -0.2, axis=1))
    assert np.all(np.linalg.norm(X, axis=1) <= 1 + 1e-12)


def test_wide_margin_is_easy():
    r = L.halfspace_trial(1, 0.99, 5, 5, 1, 200, seed=3, n_test=2000)
    assert 1 - r["test_err"] >= 0.99


def test_single_halfspace_acceptance():
    acc = [1 - L.halfspace_trial(1, 0.5, 10, 8, 3, 2000, seed=s, n_test=2000)["test_err"] for s in range(20)]
    assert sum(a >= 0.95 for a in acc) >= 18, acc


def test_halfspace_trial_is_deterministic():
    a = L.halfspace_trial(2, 0.3, 8, 6, 2, 500, seed=4, n_test=500)
    b = L.halfspace_trial(2, 0.3, 8, 6, 2, 500, seed=4, n_test=500)
    assert a["test_err"] == b["test_err"] and a["train_err"] == b["train_err"]


# -- robust mean ------------------------------------------------------------------------

def test_truncated_mean_constant():
    assert L.truncated_mean(np.full(100, 3.5)) == pytest.approx(3.5)
    assert L.truncated_mean(np.zeros(10)) == 0


def test_truncated_mean_unbounded_level_is_plain_mean():
    rng = np.random.default_rng(11)
    z = rng.standard_t(5, 300)
    assert L.truncated_mean(z, M=math.inf) == pytest.approx(np.mean(z), abs=1e-15)
    assert L.truncated_mean(z, M=1e12) == pytest.approx(np.mean(z), abs=1e-15)


def test_truncated_mean_coverage():
    # Student t with 5 degrees of freedom: E Z^4 = 3 * 25 / (3 * 1) = 25
    rng = np.random.default_rng(12)
    n, delta, k, m4 = 1000, 0.05, 4, 25.0
    bound = L.truncated_mean_bound(m4, k, n, delta)
    hits = sum(abs(L.truncated_mean(rng.standard_t(5, n), k, delta, moment_bound=m4)) <= bound
               for _ in range(500))
    assert hits / 500 >= 1 - delta


def test_truncation_level_forms():
    bal = L.truncation_level(2.0, 2, 400, 0.05)
    pr = L.truncation_level(2.0, 2, 400, 0.05, form="as_printed")
    assert bal > 1 > pr
    # the printed level shrinks with n, the balanced one grows
    assert L.truncation_level(2.0, 2, 4000, 0.05) > bal
    assert L.truncation_level(2.0, 2, 4000, 0.05, form="as_printed") < pr
    with pytest.raises(errors.ParameterOutOfRange):
        L.truncated_mean([1.0], k_moment=1)
