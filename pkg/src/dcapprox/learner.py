"""L1 polynomial regression with a threshold (polynomial threshold functions),
the halfspace-intersection learner built on a Rademacher projection, and the
estimators used to validate them.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import BasisTooLarge, ParameterOutOfRange, SolverStalled

MAX_FEATURES = 2 * 10 ** 5


# -- monomial features -------------------------------------------------------------------------

def monomial_exponents(d, D):
    """Exponent rows of all monomials of total degree <= D, graded lexicographic."""
    from .projection import graded_monomials
    n = math.comb(d + D, D)
    if n > MAX_FEATURES:
        raise BasisTooLarge("C(%d+%d, %d) = %d features" % (d, D, D, n))
    return np.array(graded_monomials(d, D), dtype=np.int64).reshape(-1, d)


def monomial_features(X, exps):
    """Feature matrix with columns prod_j x_j^{e_j}; built degree by degree."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    F = np.empty((n, len(exps)))
    index = {tuple(e): i for i, e in enumerate(exps)}
    for i, e in enumerate(exps):
        if not e.any():
            F[:, i] = 1.0
            continue
        j = int(np.nonzero(e)[0][-1])
        prev = e.copy()
        prev[j] -= 1
        F[:, i] = F[:, index[tuple(prev)]] * X[:, j]
    return F


# -- L1 regression as a linear program ---------------------------------------------------------

def _step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1e20
    return float(np.min(-v[neg] / dv[neg]))


def lp_bounded_ipm(A, c, b, u, x0, tol=1e-9, max_iter=200, beta=0.99995):
    """min c.x s.t. A x = b, 0 <= x <= u, by a Mehrotra predictor-corrector
    interior-point method.  Returns (x, y, iterations) with y the equality multipliers.

    Primal steps stay in the null space of A, so x0 must be feasible
    (A x0 = b) and strictly inside the box.
    """
    p, n = A.shape
    x = x0.astype(float).copy()
    if np.linalg.norm(A @ x - b) > 1e-8 * (1 + np.linalg.norm(b)) or np.any(x <= 0) or np.any(x >= u):
        raise ParameterOutOfRange("x0 must satisfy A x0 = b with 0 < x0 < u")
    s = u - x
    y = np.linalg.lstsq(A.T, c, rcond=None)[0]
    r = c - A.T @ y
    z = np.maximum(r, 0.0)
    w = z - r
    # keep the start strictly interior for the duals
    z = z + 1e-3
    w = w + 1e-3
    gap = float(c @ x - y @ b + w @ u)
    scale = 1.0 + abs(float(c @ x))
    for it in range(max_iter):
        if gap <= tol * scale:
            return x, y, it
        q = 1.0 / (z / x + w / s)
        r = z - w
        AQ = A * np.sqrt(q)
        M = AQ @ AQ.T
        try:
            cf = cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            M[np.diag_indices_from(M)] += 1e-12 * np.trace(M) / p
            cf = cho_factor(M, lower=True, check_finite=False)
        rhs = A @ (q * r)
        dy = cho_solve(cf, rhs, check_finite=False)
        dx = q * (A.T @ dy - r)
        ds = -dx
        dz = -z * (dx / x + 1.0)
        dw = -w * (ds / s + 1.0)
        fp = min(_step(x, dx), _step(s, ds))
        fd = min(_step(w, dw), _step(z, dz))
        if min(fp, fd) < 1.0:
            mu = float(z @ x + w @ s)
            g = float((z + fd * dz) @ (x + fp * dx) + (w + fd * dw) @ (s + fp * ds))
            mu = mu * (g / mu) ** 3 / (2 * n)
            dxdz = dx * dz
            dsdw = ds * dw
            xinv = 1.0 / x
            sinv = 1.0 / s
            xi = mu * (xinv - sinv)
            rhs2 = rhs + A @ (q * (dxdz - dsdw - xi))
            dy = cho_solve(cf, rhs2, check_finite=False)
            dx = q * (A.T @ dy + xi - r - dxdz + dsdw)
            ds = -dx
            dz = mu * xinv - z - xinv * z * dx - dxdz
            dw = mu * sinv - w - sinv * w * ds - dsdw
            fp = min(_step(x, dx), _step(s, ds))
            fd = min(_step(w, dw), _step(z, dz))
        fp = min(beta * fp, 1.0)
        fd = min(beta * fd, 1.0)
        x += fp * dx
        s += fp * ds
        y += fd * dy
        w += fd * dw
        z += fd * dz
        gap = float(c @ x - y @ b + w @ u)
        scale = 1.0 + abs(float(c @ x))
    raise SolverStalled("interior point method did not converge in %d iterations (gap %.3e)"
                        % (max_iter, gap))


def l1_fit_features(F, y, tol=1e-9, max_iter=200):
    """argmin_c sum_i |F_i c - y_i| via the bounded dual
    max y.v s.t. F^T v = 0, -1 <= v <= 1 (shifted to [0, 1])."""
    n, p = F.shape
    A = F.T
    b = 0.5 * A @ np.ones(n)
    x, ydual, it = lp_bounded_ipm(A, -y, b, np.ones(n), 0.5 * np.ones(n), tol, max_iter)
    return -ydual, it


@dataclass
class PolyModel:
    """A polynomial in graded monomial features (coefficients un-normalised),
    or, when there are more features than samples, the minimum-norm
    interpolant written through its kernel (1 + z.z')^D."""

    D: int
    d: int
    exps: np.ndarray = None
    coeffs: np.ndarray = None
    kernel_alpha: np.ndarray = None
    kernel_points: np.ndarray = None
    method: str = "lp"
    kernel_scale: float = 1.0
    objective: float = None
    iterations: int = 0

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.method == "kernel":
            out = np.empty(len(X))
            for i in range(0, len(X), 2048):
                G = (X[i:i + 2048] / math.sqrt(self.kernel_scale)) @ self.kernel_points.T
                G += 1.0
                G **= self.D
                out[i:i + 2048] = G @ self.kernel_alpha
            return out
        return monomial_features(X, self.exps) @ self.coeffs


def l1_poly_regress(X, y, D, tol=1e-9, max_iter=200, method="auto",
                    kernel_scale=1.0, kernel_dtype=np.float64):
    """Degree-D polynomial minimising the empirical L1 loss.

    With at least as many samples as monomial features the LP is solved by
    the interior-point routine on normalised features.  Otherwise the optimum
    is 0 and is attained by every interpolant; the minimum-norm one for the
    kernel (1 + z.z'/s)^D is returned, s = kernel_scale.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    p = math.comb(d + D, D)
    if method == "auto":
        method = "lp" if n >= p else "kernel"
    if method == "kernel":
        if p > MAX_FEATURES:
            raise BasisTooLarge("C(d+D, D) = %d features" % p)
        jitter = 0.0
        Xk = (X / math.sqrt(kernel_scale)).astype(kernel_dtype)
        for _ in range(8):
            G = Xk @ Xk.T
            G += 1.0
            G **= D
            if jitter:
                G[np.diag_indices_from(G)] += jitter
            try:
                # factor in place: the Gram matrix is the dominant memory cost
                # G is symmetric, so G.T is the same matrix in Fortran order and
                # LAPACK can overwrite it without a copy
                cf = cho_factor(G.T, lower=True, overwrite_a=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                del G
                jitter = max(jitter * 100, (1e-13 if kernel_dtype == np.float64 else 1e-6)
                             * (1.0 + float(np.max(np.sum(Xk * Xk, axis=1)))) ** D)
        else:
            raise SolverStalled("kernel system is numerically singular")
        alpha = cho_solve(cf, y.astype(kernel_dtype), check_finite=False).astype(float)
        del G, cf
        model = PolyModel(D, d, kernel_alpha=alpha, kernel_points=Xk.astype(float), method="kernel",
                          kernel_scale=kernel_scale)
        model.objective = float(np.mean(np.abs(model(X) - y)))
        return model
    exps = monomial_exponents(d, D)
    F = monomial_features(X, exps)
    scale = np.sqrt(np.mean(F ** 2, axis=0))
    scale[scale == 0] = 1.0
    c, it = l1_fit_features(F / scale, y, tol, max_iter)
    coeffs = c / scale
    model = PolyModel(D, d, exps, coeffs, method="lp", iterations=it)
    model.objective = float(np.mean(np.abs(F @ coeffs - y)))
    return model


def l1_objective(P, X, y):
    return float(np.mean(np.abs(P(X) - np.asarray(y, dtype=float))))


# -- thresholds and classifiers --------------------------------------------------------------------

def threshold_error(scores, y, t):
    pred = np.where(np.asarray(scores) >= t, 1, -1)
    return float(np.mean(pred != np.asarray(y)))


def fit_threshold(scores, y):
    """argmin over t in [-1, 1] of the 0-1 error of sign(P - t) (sign(0) = +1),
    by sorting the candidates {P(x_i)} and {-1, 1}; ties go to the smallest t."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y)
    n = len(y)
    cand = np.unique(np.concatenate([scores[(scores >= -1) & (scores <= 1)], [-1.0, 1.0]]))
    order = np.argsort(scores, kind="mergesort")
    s_sorted = scores[order]
    y_sorted = y[order]
    # errors(t) = #{P >= t, y = -1} + #{P < t, y = +1}
    neg_suffix = np.concatenate([np.cumsum((y_sorted == -1)[::-1])[::-1], [0]])
    pos_prefix = np.concatenate([[0], np.cumsum(y_sorted == 1)])
    idx = np.searchsorted(s_sorted, cand, side="left")
    errs = (neg_suffix[idx] + pos_prefix[idx]) / n
    best = int(np.argmin(errs))
    return float(cand[best]), float(errs[best])


def grid_threshold(scores, y, n_grid=100001):
    """Brute-force oracle over a uniform grid in [-1, 1]."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y)
    grid = np.linspace(-1, 1, n_grid)
    s_sorted = np.sort(scores)
    ys = y[np.argsort(scores, kind="mergesort")]
    neg_suffix = np.concatenate([np.cumsum((ys == -1)[::-1])[::-1], [0]])
    pos_prefix = np.concatenate([[0], np.cumsum(ys == 1)])
    idx = np.searchsorted(s_sorted, grid, side="left")
    errs = (neg_suffix[idx] + pos_prefix[idx]) / len(y)
    b = int(np.argmin(errs))
    return float(grid[b]), float(errs[b])


@dataclass
class PTFModel:
    poly: PolyModel
    threshold: float
    transform: object = None
    info: dict = field(default_factory=dict)

    def scores(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = self.transform(X) if self.transform is not None else X
        return self.poly(Z)

    def predict(self, X):
        return np.where(self.scores(X) >= self.threshold, 1, -1)

    def error(self, X, y):
        return float(np.mean(self.predict(X) != np.asarray(y)))


def poly_regression_classifier(X, y, D, **kw):
    """L1 regression followed by the threshold search."""
    P = l1_poly_regress(X, y, D, **kw)
    s = P(X)
    t, err = fit_threshold(s, y)
    return PTFModel(P, t, info={"train_err": err, "l1": P.objective})


# -- robust estimation -----------------------------------------------------------------------

def truncation_level(moment_k, k, n, delta, form="balanced"):
    """Truncation level of the robust mean.

    "balanced": ((k-1) E|Z|^k / sqrt(4 log(2/delta)/n))^{1/k}, the level that
    balances Hoeffding and bias terms and yields the stated deviation bound.
    "as_printed": ((k-1) E|Z|^k sqrt(4 log(2/delta)/n))^{1/k}, which shrinks
    with n and leaves a bias that does not vanish.
    """
    rate = math.sqrt(4 * math.log(2 / delta) / n)
    if form == "balanced":
        return ((k - 1) * moment_k / rate) ** (1.0 / k)
    if form == "as_printed":
        return ((k - 1) * moment_k * rate) ** (1.0 / k)
    raise ValueError("form must be 'balanced' or 'as_printed'")


def truncated_mean_bound(moment_k, k, n, delta):
    """(2 sqrt(log(2/delta)/n))^{(k-1)/k} k E|Z|^k^{1/k} / (k-1)^{1-1/k}."""
    return ((2 * math.sqrt(math.log(2 / delta) / n)) ** ((k - 1) / k)
            * k * moment_k ** (1.0 / k) / (k - 1) ** (1 - 1.0 / k))


def truncated_mean(values, k_moment=2, delta=0.05, moment_bound=None, M=None, form="balanced"):
    """Mean of values clipped to [-M, M]; M from the moment bound (plug-in if absent)."""
    if k_moment < 2:
        raise ParameterOutOfRange("k_moment must be at least 2")
    z = np.asarray(values, dtype=float)
    n = len(z)
    if M is None:
        mk = moment_bound if moment_bound is not None else float(np.mean(np.abs(z) ** k_moment))
        if mk == 0:
            return 0.0
        M = truncation_level(mk, k_moment, n, delta, form)
    if math.isinf(M):
        return float(np.mean(z))
    return float(np.mean(np.clip(z, -M, M)))


# -- smoothed learning -----------------------------------------------------------------------------

def smoothed_learn(X, y, D, replications=1, validation_size=None, **kw):
    """Algorithm 1 on each of `replications` folds; the fold with the smallest
    validation 0-1 error wins (ties to the earlier fold)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    n = len(y)
    nv = validation_size if validation_size is not None else (n // 5 if replications > 1 else 0)
    Xtr, ytr = X[: n - nv], y[: n - nv]
    Xv, yv = X[n - nv:], y[n - nv:]
    folds = np.array_split(np.arange(len(ytr)), replications)
    best, best_err, reports = None, None, []
    for i, idx in enumerate(folds):
        model = poly_regression_classifier(Xtr[idx], ytr[idx], D, **kw)
        if nv:
            losses = (model.predict(Xv) != yv).astype(float)
            verr = truncated_mean(losses, 2, 0.05, M=1.0)
        else:
            verr = model.info["train_err"]
        reports.append({"fold": i, "train_err": model.info["train_err"], "val_err": verr})
        if best is None or verr < best_err:
            best, best_err = model, verr
    best.info["folds"] = reports
    best.info["val_err"] = best_err
    return best


def smoothed_concept_data(concept, n, d, sigma, rng, noise=0.0):
    """x ~ N(0, I_d) + sigma z, labels from a ±1 concept on the clean input, flipped w.p. noise."""
    X = rng.standard_normal((n, d))
    y = concept(X)
    Xs = X + sigma * rng.standard_normal((n, d))
    if noise:
        flip = rng.random(n) < noise
        y = np.where(flip, -y, y)
    return Xs, y


def load_concept(spec, d, rng):
    """'halfspace', 'intersection:K', 'ptf:deg' as ±1 concepts on R^d."""
    name, _, arg = spec.partition(":")
    if name == "halfspace":
        w = rng.standard_normal(d)
        w /= np.linalg.norm(w)
        return lambda X: np.where(X @ w >= 0, 1, -1)
    if name == "intersection":
        K = int(arg or 2)
        W = rng.standard_normal((K, d))
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        return lambda X: np.where(np.all(X @ W.T >= 0, axis=1), 1, -1)
    if name == "ptf":
        deg = int(arg or 2)
        exps = monomial_exponents(d, deg)
        c = rng.standard_normal(len(exps))
        return lambda X: np.where(monomial_features(X, exps) @ c >= 0, 1, -1)
    raise ValueError("unknown concept %r" % spec)


# -- intersections of halfspaces ---------------------------------------------------------------

@dataclass
class HalfspaceInstance:
    """K unit normals with margin gamma.  Points are uniform in the unit ball
    of R^d conditioned on B+ (all <w_i, x> >= 0) or B- (some <w_i, x> <= -gamma)."""

    w: np.ndarray
    gamma: float

    @property
    def K(self):
        return self.w.shape[0]

    @property
    def d(self):
        return self.w.shape[1]

    def label(self, X):
        ip = X @ self.w.T
        pos = np.all(ip >= 0, axis=1)
        neg = np.any(ip <= -self.gamma, axis=1)
        return np.where(pos, 1, np.where(neg, -1, 0))

    def sample(self, n, rng):
        out_x, out_y, have = [], [], 0
        while have < n:
            m = max(2 * (n - have), 256)
            g = rng.standard_normal((m, self.d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            X = g * rng.random(m)[:, None] ** (1.0 / self.d)
            y = self.label(X)
            keep = y != 0
            out_x.append(X[keep])
            out_y.append(y[keep])
            have += int(keep.sum())
        return np.concatenate(out_x)[:n], np.concatenate(out_y)[:n]


def random_instance(K, gamma, d, rng):
    if not gamma > 0:
        raise ParameterOutOfRange("gamma must be positive")
    W = rng.standard_normal((K, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    return HalfspaceInstance(W, float(gamma))


def jl_project(X, m, rng):
    """Q = A / sqrt(m) with i.i.d. Rademacher A; returns (Q, X Q^T)."""
    if m < 1:
        raise ParameterOutOfRange("m must be at least 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A = rng.choice(np.array([-1.0, 1.0]), size=(m, X.shape[1]))
    Q = A / math.sqrt(m)
    return Q, X @ Q.T


JL_CONSTANT = 200.0


def jl_dimension(K, gamma, eps, C=JL_CONSTANT):
    """m = C log(K/eps) / gamma^2.  The default C makes a +-gamma/10 window
    about 2.4 standard deviations of <Qx, Qw> - <x, w> for unit vectors."""
    return max(1, int(math.ceil(C * math.log(K / eps) / gamma ** 2)))


def inner_product_preservation(Q, X, W, gamma):
    """Fraction of points with max_i |<Qx, Qw_i> - <x, w_i>| <= gamma/10."""
    # <Qx, Qw> = x^T (Q^T Q) w, so only the d x d Gram matrix is needed
    G = Q.T @ Q
    err = np.abs(X @ G @ W.T - X @ W.T)
    return float(np.mean(np.max(err, axis=1) <= gamma / 10))


def halfspace_learn(X, y, m, D, rng, replications=1, validation_size=0, **kw):
    """Project with Q, keep ||Qx|| <= 2, L1-regress at degree D on Qx, and
    classify by sign(f_D(Qx)) (threshold 0)."""
    Q, Z = jl_project(X, m, rng)
    keep = np.linalg.norm(Z, axis=1) <= 2
    Zk, yk = Z[keep], np.asarray(y)[keep]
    n = len(yk)
    nv = validation_size
    folds = np.array_split(np.arange(n - nv), replications)
    best, best_err = None, None
    for idx in folds:
        P = l1_poly_regress(Zk[idx], yk[idx], D, **kw)
        model = PTFModel(P, 0.0, transform=lambda A, Q=Q: A @ Q.T,
                         info={"m": m, "D": D, "kept": int(keep.sum()), "method": P.method})
        err = (float(np.mean(np.where(P(Zk[n - nv:]) >= 0, 1, -1) != yk[n - nv:]))
               if nv else float(np.mean(np.where(P(Zk[idx]) >= 0, 1, -1) != yk[idx])))
        if best is None or err < best_err:
            best, best_err = model, err
    best.info["train_err"] = best_err
    return best


def halfspace_trial(K, gamma, d, m, D, N, seed, n_test=5000, **kw):
    """One seeded experiment: instance, training set, learner, test error."""
    rng = np.random.default_rng(seed)
    inst = random_instance(K, gamma, d, rng)
    X, y = inst.sample(N, rng)
    Xt, yt = inst.sample(n_test, rng)
    t0 = time.perf_counter()
    model = halfspace_learn(X, y, m, D, rng, **kw)
    ms = (time.perf_counter() - t0) * 1e3
    return {"seed": seed, "m": m, "D": D, "train_err": model.info["train_err"],
            "test_err": model.error(Xt, yt), "runtime_ms": ms, "method": model.poly.method}
