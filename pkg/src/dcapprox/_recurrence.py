"""Three-term recurrences and Gauss rules in extended precision.

Recurrences use the monic convention
    p_{k+1}(x) = (x - alpha_k) p_k(x) - beta_k p_{k-1}(x),   beta_0 = mass,
so the orthonormal polynomials satisfy
    sqrt(beta_{k+1}) q_{k+1} = (x - alpha_k) q_k - sqrt(beta_k) q_{k-1},  q_0 = 1/sqrt(beta_0).

Public functions take and return mpmath numbers; inner loops run on gmpy2.
"""

import gmpy2
import mpmath as mp
import numpy as np
from gmpy2 import mpfr
from scipy.linalg import eigvalsh_tridiagonal

from ._hp import precision, to_mpfr, vec_mpf, vec_mpfr
from .errors import InconsistentMoments, PrecisionExhausted


def chebyshev_algorithm(moments, n):
    """Recurrence coefficients (alpha_k, beta_k), k < n, from mu_0..mu_{2n-1}.

    Classical Chebyshev algorithm at the current precision.  Badly
    conditioned, so callers raise the working precision.  A nonpositive beta
    means the Hankel matrix is not positive definite.
    """
    mu = vec_mpfr(moments)
    if len(mu) < 2 * n:
        raise ValueError("need 2n moments")
    zero = mpfr(0)
    alpha = [mu[1] / mu[0]]
    beta = [mu[0]]
    sig_old = [zero] * (2 * n)
    sig = mu[: 2 * n]
    for k in range(1, n):
        a, b = alpha[k - 1], beta[k - 1]
        new = [zero] * (2 * n)
        for l in range(k, 2 * n - k):
            new[l] = sig[l + 1] - a * sig[l] - b * sig_old[l]
        if not new[k] > 0:
            raise InconsistentMoments("Hankel determinant lost positivity at order %d" % k)
        alpha.append(new[k + 1] / new[k] - sig[k] / sig[k - 1])
        beta.append(new[k] / sig[k - 1])
        sig_old, sig = sig, new
    return vec_mpf(alpha), vec_mpf(beta)


def chebyshev_adaptive(moment_fn, n, digits, start_extra=None, max_digits=6000):
    """Chebyshev algorithm repeated at growing precision until two runs agree.

    moment_fn(k) must evaluate the k-th moment at the current mpmath precision.
    """
    extra = start_extra if start_extra is not None else max(20, n // 2)
    prev = None
    failed_at = None
    tol = mp.mpf(10) ** (-digits - 2)
    while True:
        work = digits + extra
        if work > max_digits:
            raise PrecisionExhausted("moment recursion unstable beyond %d digits" % max_digits)
        try:
            with precision(work):
                a, b = chebyshev_algorithm([moment_fn(k) for k in range(2 * n)], n)
        except InconsistentMoments as exc:
            # round-off loses positivity at an order that moves with precision;
            # genuinely inconsistent data fails at the same order twice
            order = int(str(exc).rsplit(" ", 1)[-1])
            if failed_at == order:
                raise
            failed_at = order
            extra *= 2
            continue
        if prev is not None:
            with mp.workdps(digits + 10):
                ok = all(abs(x - y) <= tol * (1 + abs(y)) for x, y in zip(a, prev[0]))
                ok = ok and all(abs(x - y) <= tol * abs(y) for x, y in zip(b, prev[1]))
            if ok:
                return a, b
        prev = (a, b)
        extra *= 2


def stieltjes(nodes, weights, n):
    """Discretized Stieltjes procedure on a discrete measure, orthonormal form."""
    x = vec_mpfr(nodes)
    w = vec_mpfr(weights)
    m0 = gmpy2.fsum(w)
    zero = mpfr(0)
    q_prev = [zero] * len(x)
    q = [1 / gmpy2.sqrt(m0)] * len(x)
    alpha, beta = [], [m0]
    sb = zero
    for k in range(n):
        wq = [wi * qi for wi, qi in zip(w, q)]
        a = gmpy2.fsum([u * xi * qi for u, xi, qi in zip(wq, x, q)])
        alpha.append(a)
        if k == n - 1:
            break
        r = [(xi - a) * qi - sb * qp for xi, qi, qp in zip(x, q, q_prev)]
        b = gmpy2.fsum([wi * ri * ri for wi, ri in zip(w, r)])
        if not b > 0:
            raise InconsistentMoments("discrete measure exhausted at order %d" % (k + 1))
        beta.append(b)
        sb = gmpy2.sqrt(b)
        inv = 1 / sb
        q_prev, q = q, [ri * inv for ri in r]
    return vec_mpf(alpha), vec_mpf(beta)


class OrthonormalEvaluator:
    """Evaluates q_0..q_{n-1} at many points with cached mpfr coefficients."""

    def __init__(self, alpha, beta, n):
        if len(alpha) < n - 1 or len(beta) < n:
            raise ValueError("recurrence too short for degree %d" % (n - 1))
        self.n = n
        self.alpha = vec_mpfr(alpha[: max(n - 1, 0)])
        self.sqb = [gmpy2.sqrt(to_mpfr(b)) for b in beta[:n]]
        self.inv = [1 / s for s in self.sqb]

    def values(self, x):
        """List of mpfr q_k(x) for a single mpfr x."""
        n = self.n
        out = [self.inv[0]]
        prev, cur = mpfr(0), out[0]
        sqb, inv, al = self.sqb, self.inv, self.alpha
        for k in range(n - 1):
            nxt = ((x - al[k]) * cur - sqb[k] * prev) * inv[k + 1] if k else (x - al[0]) * cur * inv[1]
            out.append(nxt)
            prev, cur = cur, nxt
        return out

    def table(self, xs):
        """Rows q_k(x_i): table[k][i]."""
        cols = [self.values(x) for x in xs]
        return [list(r) for r in zip(*cols)] if cols else [[] for _ in range(self.n)]


def orthonormal_values(alpha, beta, x, n):
    """[q_0(x), ..., q_{n-1}(x)] as mpmath numbers."""
    ev = OrthonormalEvaluator(alpha, beta, n)
    return vec_mpf(ev.values(to_mpfr(x)))


def _newton(al, sqb, inv, x, n, want_sum):
    zero = mpfr(0)
    q_prev, q = zero, inv[0]
    d_prev, d = zero, zero
    s = q * q
    for k in range(n):
        xa = x - al[k]
        nq = (xa * q - sqb[k] * q_prev) * inv[k + 1]
        nd = (xa * d + q - sqb[k] * d_prev) * inv[k + 1]
        q_prev, q = q, nq
        d_prev, d = d, nd
        if want_sum and k < n - 1:
            s += q * q
    return q, d, s


def gauss_rule(alpha, beta, n, digits):
    """n-point Gauss rule from recurrence coefficients.

    Float64 Golub-Welsch eigenvalues seed a Newton iteration on q_n run in
    extended precision; weights are Christoffel numbers 1/sum_{k<n} q_k(x)^2.
    """
    if len(alpha) < n or len(beta) < n + 1:
        raise ValueError("need alpha[:n] and beta[:n+1]")
    af = np.array([float(a) for a in alpha[:n]])
    bf = np.sqrt(np.array([float(b) for b in beta[1:n]]))
    guess = eigvalsh_tridiagonal(af, bf) if n > 1 else af.copy()
    with precision(digits + 10):
        al = vec_mpfr(alpha[:n])
        sqb = [mpfr(0)] + [gmpy2.sqrt(to_mpfr(b)) for b in beta[1 : n + 1]]
        inv = [1 / gmpy2.sqrt(to_mpfr(beta[0]))] + [1 / s for s in sqb[1:]]
        half = mpfr(10) ** (-(digits + 5) // 2)
        nodes, weights = [], []
        for g in guess:
            x = mpfr(float(g))
            for _ in range(80):
                q, d, _ = _newton(al, sqb, inv, x, n, False)
                step = q / d
                x -= step
                if abs(step) <= half * (1 + abs(x)):
                    break
            else:
                raise PrecisionExhausted("Newton refinement of a Gauss node did not converge")
            # one more step is quadratic, and yields the Christoffel sum at the refined node
            q, d, _ = _newton(al, sqb, inv, x, n, False)
            x -= q / d
            _, _, s = _newton(al, sqb, inv, x, n, True)
            nodes.append(x)
            weights.append(1 / s)
        for i in range(1, n):
            if not nodes[i] > nodes[i - 1]:
                raise PrecisionExhausted("Gauss nodes collided during refinement")
        return vec_mpf(nodes), vec_mpf(weights)
