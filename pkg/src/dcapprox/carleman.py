"""Denjoy-Carleman sequences, the associated function tau, the quantitative
quasianalyticity bound and the real-variable comparison bound."""

from dataclasses import dataclass, field

import gmpy2
import mpmath as mp

from ._hp import precision, to_mpf, to_mpfr, vec_mpfr
from .errors import XOutOfRange, YOutOfRange

K_MAX = 10 ** 4
_DIGITS = 30


class CarlemanSequence:
    """Log-convex M_0 = 1, M_1, ... with ratios a_k = M_{k-1}/M_k (a_0 = 1).

    `log_M(n)` and `a(n)` are evaluated lazily and cached.
    """

    def __init__(self, source, log_M, a=None, params=None, max_order=K_MAX):
        self.source = source
        self.params = dict(params or {})
        self.max_order = max_order
        self._log_M = log_M
        self._a = a
        self._cache_a = {}

    def __repr__(self):
        return "CarlemanSequence(%s)" % self.source

    def log_M(self, n):
        with mp.workdps(_DIGITS):
            return mp.mpf(0) if n == 0 else self._log_M(n)

    def M(self, n):
        with mp.workdps(_DIGITS):
            return mp.exp(self.log_M(n))

    def a(self, n):
        if n == 0:
            return mp.mpf(1)
        if n not in self._cache_a:
            with mp.workdps(_DIGITS):
                if self._a is not None:
                    self._cache_a[n] = self._a(n)
                else:
                    self._cache_a[n] = mp.exp(self.log_M(n - 1) - self.log_M(n))
        return self._cache_a[n]

    def is_log_convex(self, upto=200, rtol=mp.mpf(10) ** -30):
        with mp.workdps(_DIGITS):
            for k in range(1, upto):
                lhs = 2 * self.log_M(k)
                rhs = self.log_M(k - 1) + self.log_M(k + 1)
                if lhs > rhs + rtol * (1 + abs(rhs)):
                    return False
        return True

    def a_sum(self, m):
        with mp.workdps(_DIGITS):
            return mp.fsum(self.a(j) for j in range(1, m + 1))


def factorial_sequence():
    return CarlemanSequence("factorial", lambda n: mp.loggamma(n + 1), lambda n: mp.mpf(1) / n)


def subgaussian_sequence():
    def a(n):
        n = mp.mpf(n)
        return mp.exp((n - 1) / 2 * mp.log(n - 1) - n / 2 * mp.log(n)) if n > 1 else mp.mpf(1)

    return CarlemanSequence("subgaussian", lambda n: mp.mpf(n) / 2 * mp.log(n), a)


def quasi_sequence():
    def log_M(n):
        return mp.loggamma(n + 1) + mp.fsum(mp.log(1 + mp.log(j)) for j in range(1, n + 1))

    return CarlemanSequence("quasi", log_M, lambda n: 1 / (n * (1 + mp.log(n))))


def custom_sequence(M_values):
    """Finite custom sequence given as M_0..M_n (M_0 must be 1)."""
    vals = [mp.mpf(v) for v in M_values]
    if vals[0] != 1:
        raise ValueError("M_0 must equal 1")
    logs = [mp.log(v) for v in vals]
    seq = CarlemanSequence("custom", lambda n: logs[n], None, max_order=len(vals) - 1)
    return seq


def from_moments(model, B=1, K=1, order=None):
    """Sequence fitted to a measure: M_k is the smallest increment-monotone
    (log-convex) majorant of ||x^k||_mu / (B K^k), with M_0 = 1.

    By construction ||x^k||_mu <= B K^k M_k for every fitted k.
    """
    order = order if order is not None else model.max_degree
    B, K = mp.mpf(B), mp.mpf(K)
    with mp.workdps(_DIGITS):
        raw = [mp.log(mp.sqrt(model.moment(2 * k))) - mp.log(B) - k * mp.log(K)
               for k in range(order + 1)]
        logs = [mp.mpf(0)]
        inc = None
        for k in range(1, order + 1):
            d = raw[k] - logs[-1]
            if inc is not None and d < inc:
                d = inc
            # never drop below the raw value
            d = max(d, raw[k] - logs[-1])
            logs.append(logs[-1] + d)
            inc = d
    seq = CarlemanSequence("from_moments", lambda n: logs[n], None,
                           params={"measure": repr(model), "B": float(B), "K": float(K)},
                           max_order=order)
    seq.norms_log = raw
    return seq


SEQUENCES = {"factorial": factorial_sequence, "subgaussian": subgaussian_sequence,
             "quasi": quasi_sequence}


def get_sequence(name):
    try:
        return SEQUENCES[name]()
    except KeyError:
        raise ValueError("unknown sequence %r" % name) from None


# -- associated function --------------------------------------------------------------

def _active(seq, r):
    # k >= 1 with a_k r > 1; finite since a_k is nonincreasing
    out = []
    k = 1
    while k <= min(seq.max_order, K_MAX):
        if seq.a(k) * r > 1:
            out.append(k)
            k += 1
        else:
            break
    return out


def log_tau(seq, r):
    r = mp.mpf(r)
    with mp.workdps(_DIGITS):
        if r <= 1:
            return mp.mpf(0)
        return -mp.fsum(mp.log(seq.a(k) * r) for k in _active(seq, r))


def tau(seq, r):
    """tau(r) = prod_{k: a_k r > 1} (a_k r)^{-1}; equals 1 for r <= 1."""
    if not r > 0:
        raise ValueError("r must be positive")
    with mp.workdps(_DIGITS):
        return mp.exp(log_tau(seq, r))


def tau_bruteforce(seq, r, n_max=200):
    """inf_{n <= n_max} M_n / r^n straight from the sequence values."""
    r = mp.mpf(r)
    with mp.workdps(_DIGITS):
        return mp.exp(min(seq.log_M(n) - n * mp.log(r) for n in range(0, n_max + 1)))


def tau_N(seq, r, N):
    """tau_N(r) = inf_{0<=n<=N} M_n/r^n, via tau below 1/a_{N+1} and M_N/r^N above."""
    r = mp.mpf(r)
    with mp.workdps(_DIGITS):
        if N == 0:
            return mp.mpf(1)
        if r <= 1 / seq.a(N + 1):
            return tau(seq, r)
        return mp.exp(seq.log_M(N) - N * mp.log(r))


# -- quantitative bound ---------------------------------------------------------------

@dataclass
class QdcBound:
    value: object
    alpha_star: object
    Y: object
    N: int
    components: dict
    evaluations: list = field(default_factory=list)


_GL = {}


def _gl_rule(n=32):
    # Gauss-Legendre on [0, 1], cached per working precision
    key = (n, mp.mp.prec)
    if key not in _GL:
        from ._recurrence import gauss_rule
        beta = [mp.mpf(2)] + [mp.mpf(k * k) / (4 * k * k - 1) for k in range(1, n + 1)]
        x, w = gauss_rule([mp.mpf(0)] * n, beta, n, mp.mp.dps)
        _GL[key] = ([(xi + 1) / 2 for xi in x], [wi / 2 for wi in w])
    return _GL[key]


def _ti2(u):
    """Inverse tangent integral Ti_2(u) = int_0^u atan(t)/t dt.

    For |u| <= 1 the integrand is analytic in an ellipse reaching +-i, so a
    fixed Gauss-Legendre rule converges geometrically; larger |u| use the
    reflection Ti_2(u) = Ti_2(1/u) + (pi/2) log u.
    """
    u = mp.mpf(u)
    if u < 0:
        return -_ti2(-u)
    if u == 0:
        return mp.mpf(0)
    if u > 1:
        return _ti2(1 / u) + mp.pi / 2 * mp.log(u)
    x, w = _gl_rule()
    return mp.fsum(wi * mp.atan(u * xi) / xi for xi, wi in zip(x, w))


def _log_integral_term(a_k, lo, hi, alpha):
    # closed form of int_lo^hi -log(a_k t)/(alpha^2 + t^2) dt
    def F(t):
        return (mp.log(a_k * t) * mp.atan(t / alpha) - _ti2(t / alpha)) / alpha
    return -(F(hi) - F(lo))


def _ti2_fast(u, gx, gw):
    # gmpy2 twin of _ti2 for the hot loop
    if u > 1:
        return _ti2_fast(1 / u, gx, gw) + gmpy2.const_pi() / 2 * gmpy2.log(u)
    return gmpy2.fsum([w * gmpy2.atan(u * x) / x for x, w in zip(gx, gw)])


def _log_integral_analytic(seq, N, alpha):
    x, w = _gl_rule()
    with precision(_DIGITS):
        gx, gw = vec_mpfr(x), vec_mpfr(w)
        al = to_mpfr(alpha)
        upper = 1 / to_mpfr(seq.a(N + 1))
        at_up = gmpy2.atan(upper / al)
        ti_up = _ti2_fast(upper / al, gx, gw)
        terms = []
        for k in range(1, N + 1):
            a_k = to_mpfr(seq.a(k))
            lo = 1 / a_k
            if not lo < upper:
                continue
            # F(t) = (log(a_k t) atan(t/alpha) - Ti2(t/alpha)) / alpha, with log(a_k lo) = 0
            f_hi = gmpy2.log(a_k * upper) * at_up - ti_up
            f_lo = -_ti2_fast(lo / al, gx, gw)
            terms.append(-(f_hi - f_lo) / al)
        return to_mpf(gmpy2.fsum(terms))


def log_integral(seq, N, alpha, method="analytic"):
    """int_1^{1/a_{N+1}} log tau(t)/(alpha^2+t^2) dt, per-k sum or adaptive quadrature."""
    alpha = mp.mpf(alpha)
    with mp.workdps(_DIGITS):
        if N == 0:
            return mp.mpf(0)
        upper = 1 / seq.a(N + 1)
        if method == "analytic":
            return _log_integral_analytic(seq, N, alpha)
        if method == "analytic-mp":
            return mp.fsum(_log_integral_term(seq.a(k), 1 / seq.a(k), upper, alpha)
                           for k in range(1, N + 1) if 1 / seq.a(k) < upper)
        # breakpoints where log tau changes formula
        pts = sorted({mp.mpf(1)} | {1 / seq.a(k) for k in range(1, N + 1) if 1 / seq.a(k) < upper} | {upper})
        pts = [p for p in pts if p >= 1]

        def integrand(t):
            return -mp.fsum(mp.log(seq.a(k) * t) for k in range(1, N + 1) if seq.a(k) * t > 1) / (alpha ** 2 + t ** 2)

        return mp.fsum(mp.quad(integrand, [u, v]) for u, v in zip(pts[:-1], pts[1:]))


def _qdc_at(seq, B, K, N, x, Y, alpha, method):
    I = log_integral(seq, N, alpha, method)
    integral_term = mp.exp(2 * alpha / mp.pi * I)
    tail_term = tau(seq, Y / K)
    prefactor = B * Y * mp.exp(K * alpha * x) / (alpha * mp.pi * K)
    return prefactor, integral_term, tail_term, prefactor * (integral_term + tail_term)


def default_alpha_grid(n=25, lo=-3, hi=3):
    return [mp.mpf(10) ** (lo + (hi - lo) * mp.mpf(i) / (n - 1)) for i in range(n)]


def qdc_bound(seq, B, K, N, x, Y=None, alpha_grid=None, method="analytic", refine=True):
    """Evaluate the quasianalyticity bound on an alpha grid and refine the
    minimum by golden-section search in log(alpha)."""
    with mp.workdps(_DIGITS):
        B, K, x = mp.mpf(B), mp.mpf(K), mp.mpf(x)
        ymax = K / seq.a(N + 1)
        Y = ymax if Y is None else mp.mpf(Y)
        if not (0 < Y <= ymax * (1 + mp.mpf(10) ** -40)):
            raise YOutOfRange("Y must lie in (0, K/a_{N+1}] = (0, %s]" % mp.nstr(ymax, 10))
        grid = list(alpha_grid) if alpha_grid is not None else default_alpha_grid()
        if not grid:
            raise ValueError("alpha_grid must be nonempty")
        evals = []
        for al in grid:
            al = mp.mpf(al)
            pre, it, tt, val = _qdc_at(seq, B, K, N, x, Y, al, method)
            evals.append((al, pre, it, tt, val))
        best = min(evals, key=lambda e: (e[4], e[0]))
        if refine and len(grid) > 2:
            i = [e[0] for e in evals].index(best[0])
            lo = mp.log(evals[max(i - 1, 0)][0])
            hi = mp.log(evals[min(i + 1, len(evals) - 1)][0])
            f = lambda la: _qdc_at(seq, B, K, N, x, Y, mp.exp(la), method)[3]
            g = (mp.sqrt(5) - 1) / 2
            c, d = hi - g * (hi - lo), lo + g * (hi - lo)
            fc, fd = f(c), f(d)
            for _ in range(30):
                if fc < fd:
                    hi, d, fd = d, c, fc
                    c = hi - g * (hi - lo)
                    fc = f(c)
                else:
                    lo, c, fc = c, d, fd
                    d = lo + g * (hi - lo)
                    fd = f(d)
            al = mp.exp((lo + hi) / 2)
            pre, it, tt, val = _qdc_at(seq, B, K, N, x, Y, al, method)
            if val < best[4]:
                best = (al, pre, it, tt, val)
                evals.append(best)
        al, pre, it, tt, val = best
        return QdcBound(val, al, Y, N, {"integral_term": it, "tail_term": tt, "prefactor": pre}, evals)


def real_variable_bound(seq, B, K, m, x):
    """8 B K |x| / (a_1 + ... + a_m), valid for |x| <= (a_1+...+a_m)/(8K)."""
    with mp.workdps(_DIGITS):
        S = seq.a_sum(m)
        x = abs(mp.mpf(x))
        if x > S / (8 * mp.mpf(K)):
            raise XOutOfRange("x exceeds (a_1+...+a_m)/(8K) = %s" % mp.nstr(S / (8 * K), 10))
        return 8 * mp.mpf(B) * mp.mpf(K) * x / S
