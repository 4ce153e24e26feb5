"""Polynomial approximation of C^k targets with bounded k-th derivative:
Taylor jet at 0, Bernoulli boundary corrector, Jackson trigonometric
approximation on [-R, R], and conversion of the trigonometric part into an
algebraic polynomial in L2(mu).
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath as mp
import numpy as np

from . import bounds, projection
from .errors import NormalizationFailed, ParameterOutOfRange

KERNEL_TOL = 1e-8


# -- small polynomial helpers (ascending coefficients, any number type) ---------------------

def poly_eval(c, x):
    acc = 0 * x
    for a in reversed(c):
        acc = acc * x + a
    return acc


def poly_deriv(c, times=1):
    for _ in range(times):
        c = [k * c[k] for k in range(1, len(c))]
    return c


def _poly_integral0(c):
    return [0 * c[0] if c else 0] + [a / (k + 1) for k, a in enumerate(c)]


def poly_affine(c, scale, shift):
    """Coefficients of x -> p(scale * x + shift)."""
    out = [0 * scale] * len(c)
    # Horner in polynomial arithmetic
    for a in reversed(c):
        nxt = [0 * scale] * len(c)
        for i, v in enumerate(out):
            if v:
                nxt[i] += v * shift
                if i + 1 < len(nxt):
                    nxt[i + 1] += v * scale
        nxt[0] += a
        out = nxt
    return out


# -- Bernoulli corrector --------------------------------------------------------------------

def bernoulli_polys(n, recursion="mean_zero"):
    """B_0..B_n with B_0 = 1, B_1 = x - 1/2 and B_{l+1}' = (l+1) B_l.

    "mean_zero" fixes the constant by int_0^1 B_{l+1} = 0 (the classical
    Bernoulli polynomials), which gives B_l(1) = B_l(0) for l != 1.
    "literal" uses B_{l+1} = (l+1)(int_0^x B_l - int_0^1 B_l); from B_3 on
    the endpoint values differ and the jump identities break.
    """
    B = [[Fraction(1)], [Fraction(-1, 2), Fraction(1)]]
    for l in range(1, n):
        I = [(l + 1) * a for a in _poly_integral0(B[l])]
        if recursion == "mean_zero":
            I[0] -= sum(a / (i + 1) for i, a in enumerate(I))
        elif recursion == "literal":
            I[0] -= (l + 1) * sum(a / (i + 1) for i, a in enumerate(B[l]))
        else:
            raise ValueError("recursion must be 'mean_zero' or 'literal'")
        B.append(I)
    return B[: n + 1]


def bernoulli_corrector(jumps, recursion="mean_zero"):
    """p_k = sum_l a_l B_{l+1} / (l+1)!, of degree k+1, with p^{(l)}(1) - p^{(l)}(0) = a_l.

    Exact when the jumps are integers or Fractions.
    """
    k = len(jumps) - 1
    B = bernoulli_polys(k + 1, recursion)
    exact = all(isinstance(a, (int, Fraction)) for a in jumps)
    out = [Fraction(0)] * (k + 2) if exact else [mp.mpf(0)] * (k + 2)
    for l, a in enumerate(jumps):
        fac = math.factorial(l + 1)
        for i, b in enumerate(B[l + 1]):
            if exact:
                out[i] += Fraction(a) * b / fac
            else:
                out[i] += mp.mpf(a) * mp.mpf(b.numerator) / b.denominator / fac
    return out


def corrector_growth_bound(jumps, x, form="degree"):
    """(1 + |x|)^{k+1} sum_l 2^{l+1} |a_l| / (l+1)!.

    p_k has degree k+1, so the power must be k+1; form="as_printed" uses k,
    which fails for large |x| (e.g. jumps = [1] at x = 10).
    """
    k = len(jumps) - 1
    s = sum(2 ** (l + 1) * abs(a) / math.factorial(l + 1) for l, a in enumerate(jumps))
    if form == "degree":
        return (1 + abs(x)) ** (k + 1) * s
    if form == "as_printed":
        return (1 + abs(x)) ** k * s
    raise ValueError("form must be 'degree' or 'as_printed'")


# -- targets ----------------------------------------------------------------------------------

@dataclass
class LipschitzTarget:
    """f in C^k with |f^{(k)}| <= M.  `derivative(l, x)` may be supplied;
    otherwise numeric differentiation is used."""

    f: object
    k: int
    M: float
    derivative: object = None
    name: str = "custom"
    kinks: tuple = ()

    def __post_init__(self):
        if self.k < 1:
            raise ParameterOutOfRange("k must be a positive integer")
        if not self.M > 0:
            raise ParameterOutOfRange("M must be positive")

    def __call__(self, x):
        return self.f(x)

    def deriv(self, l, x):
        if l == 0:
            return self.f(mp.mpmathify(x))
        if self.derivative is not None:
            return self.derivative(l, mp.mpmathify(x))
        return mp.diff(self.f, mp.mpmathify(x), l)

    def derivatives_at_0(self):
        return [self.deriv(l, 0) for l in range(self.k + 1)]

    def check_lipschitz(self, lo=-10, hi=10, n=2001):
        """max |f^{(k)}| seen through k-th divided differences on a grid."""
        xs = np.linspace(lo, hi, n)
        h = xs[1] - xs[0]
        v = np.array([float(self.f(mp.mpf(float(x)))) for x in xs])
        d = np.diff(v, self.k) / h ** self.k
        return float(np.max(np.abs(d))) if d.size else 0.0


def abs_lipschitz():
    return LipschitzTarget(lambda x: abs(x), 1, 1.0,
                           derivative=lambda l, x: mp.sign(x) if l == 1 else mp.mpf(0),
                           name="abs", kinks=(0,))


def relu_lipschitz():
    return LipschitzTarget(lambda x: x if x > 0 else 0 * x, 1, 1.0,
                           derivative=lambda l, x: (mp.mpf(1) if x > 0 else mp.mpf(0)) if l == 1 else mp.mpf(0),
                           name="relu", kinks=(0,))


def smooth_relu_lipschitz(k=2):
    """relu^k / k!, whose k-th derivative is the Heaviside step (M = 1)."""
    fk = math.factorial(k)

    def f(x):
        return x ** k / fk if x > 0 else 0 * x

    def d(l, x):
        if x <= 0:
            return mp.mpf(0)
        return x ** (k - l) / math.factorial(k - l)

    return LipschitzTarget(f, k, 1.0, derivative=d, name="relu^%d/%d!" % (k, k), kinks=(0,))


# -- Jackson trigonometric approximation ------------------------------------------------------

@dataclass
class TrigPoly:
    """a_0 + sum_{m<=D0} a_m cos(m pi (x+R)/R) + b_m sin(m pi (x+R)/R)."""

    R: float
    a: np.ndarray
    b: np.ndarray
    combination: str = "weighted"
    sup_error: float = None
    kernel_order: int = None

    @property
    def D0(self):
        return len(self.a) - 1

    @property
    def C_D0(self):
        return float(np.sum(np.abs(self.a[1:])) + np.sum(np.abs(self.b[1:])))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        m = np.arange(len(self.a))
        th = np.pi * (x[..., None] + self.R) / self.R * m
        return (np.cos(th) @ self.a) + (np.sin(th) @ self.b)

    def eval_mp(self, x):
        th = mp.pi * (x + self.R) / self.R
        return mp.fsum(mp.mpf(float(a)) * mp.cos(m * th) + mp.mpf(float(b)) * mp.sin(m * th)
                       for m, (a, b) in enumerate(zip(self.a, self.b)))

    def as_target(self):
        """The same function as a projection target (the shift by R turns into (-1)^m)."""
        coeffs = [((-1) ** m * float(a), (-1) ** m * float(b)) for m, (a, b) in enumerate(zip(self.a, self.b))]
        return projection.trig_poly_target(coeffs, self.R)

    def coefficient_bound(self, k, M):
        """(2^{k+2} M R^k / pi^{k+1}) sum_{m<=D0} m^{-k}."""
        s = sum(m ** -float(k) for m in range(1, self.D0 + 1))
        return 2 ** (k + 2) * M * self.R ** k / math.pi ** (k + 1) * s


def kernel_power(k):
    """Half the exponent of the kernel.  The exponent 2k of the k = 1 case is
    the Fejer kernel, whose first absolute moment is log(n)/n, not 1/n; at
    least 4 is needed for the first-order rate."""
    return max(2, k)


def kernel_order(D0, k):
    """n in (sin(n t/2)/sin(t/2))^{2p}, p = kernel_power(k); degree p(n-1) <= D0."""
    return D0 // kernel_power(k) + 1


def jackson_kernel(t, n, k):
    """Unnormalised (sin(n t/2) / sin(t/2))^{2k} with the removable points filled in."""
    t = np.asarray(t, dtype=float)
    s = np.sin(t / 2)
    num = np.sin(n * t / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(np.abs(s) < 1e-300, float(n), num / np.where(s == 0, 1, s))
    return q ** (2 * k)


def kernel_normalisation(n, k, N=None):
    """lambda with int_0^{2pi} lambda K = 1, and the independent check on a 2N grid."""
    deg = k * (n - 1)
    N = N or max(64, 4 * deg + 8)
    t = 2 * np.pi * np.arange(N) / N
    integral = 2 * np.pi * np.mean(jackson_kernel(t, n, k))
    lam = 1.0 / integral
    t2 = 2 * np.pi * (np.arange(2 * N) + 0.5) / (2 * N)
    check = lam * 2 * np.pi * np.mean(jackson_kernel(t2, n, k))
    if abs(check - 1) > KERNEL_TOL:
        raise NormalizationFailed("kernel integrates to %.3e, not 1" % check)
    return lam, check


def _combination_weights(k, combination):
    if combination == "weighted":
        return [(-1) ** (j + 1) * math.comb(k, j) for j in range(1, k + 1)]
    if combination == "unweighted":
        return [(-1) ** (j + 1) for j in range(1, k + 1)]
    raise ValueError("combination must be 'weighted' or 'unweighted'")


def jackson_approx(fn, R, D0, k, combination="weighted", grid=None):
    """Degree-D0 trigonometric approximation of a 2R-periodic-compatible fn on [-R, R].

    T = sum_j w_j int f(x + j t) K(t) dt is formed through Fourier coefficients:
    c_m(T) = c_m(g) sum_j w_j c_{-mj}(K), with g(t) = fn(R t/pi - R) sampled on
    a uniform grid and the kernel's coefficients computed from its samples.
    """
    R = float(R)
    n = kernel_order(D0, k)
    p = kernel_power(k)
    lam, _ = kernel_normalisation(n, p)
    N = grid or max(16 * D0 * k, 1024)
    N = 1 << (int(N) - 1).bit_length()
    t = 2 * np.pi * np.arange(N) / N
    x = R * t / np.pi - R
    g = np.array([float(fn(mp.mpf(float(v)))) for v in x])
    cg = np.fft.fft(g) / N  # cg[m] ~ (1/2pi) int g e^{-imt}
    Kt = lam * jackson_kernel(t, n, p)
    cK = np.real(np.fft.fft(Kt)) / N * 2 * np.pi  # int K e^{-imt}; K is even and real
    w = _combination_weights(k, combination)
    a = np.zeros(D0 + 1)
    b = np.zeros(D0 + 1)
    for m in range(D0 + 1):
        mult = sum(wj * cK[(m * j) % N] for j, wj in enumerate(w, start=1)) if m * k < N // 2 else 0.0
        c = cg[m] * mult
        if m == 0:
            a[0] = np.real(c)
        else:
            a[m] = 2 * np.real(c)
            b[m] = -2 * np.imag(c)
    tp = TrigPoly(R, a, b, combination, kernel_order=n)
    xs = np.linspace(-R, R, 4 * N + 1)
    fx = np.array([float(fn(mp.mpf(float(v)))) for v in xs[::4]])
    tp.sup_error = float(np.max(np.abs(tp(xs[::4]) - fx)))
    return tp


# -- trigonometric to algebraic --------------------------------------------------------------

def trig_to_algebraic(tp, model, eps, max_degree=256, degree=None):
    """Plan the degree for tp at band edge Omega = D0 pi / R with the measure's
    envelope, then project.  Returns (result, plan, capped)."""
    target = tp.as_target()
    t = model.tail
    edge = max(mp.mpf(tp.D0) * mp.pi / tp.R, mp.mpf(1))
    plan = None
    if tp.D0 == 0 or tp.C_D0 == 0:
        D = 0
    elif t.kind == "subexp":
        plan = bounds.plan_degree_subexp(eps, t.K, target.band_mass, target.tail_mass, Omega=edge)
        D = plan.D
    elif t.kind in ("strictly_subexp", "bounded"):
        plan = bounds.plan_degree_strict(eps, t.A, t.K, t.r, target.band_mass, target.tail_mass, Omega=edge)
        D = plan.D
    else:
        raise ParameterOutOfRange("trig_to_algebraic needs a strict, bounded or sub-exponential measure")
    if degree is not None:
        D = degree
    capped = D > max_degree
    D = min(D, max_degree)
    res = projection.project_auto(model, target, D, tol=mp.mpf(10) ** -12)
    return res, plan, capped


# -- full pipeline ------------------------------------------------------------------------

@dataclass
class PipelineResult:
    degree: int
    planned_degree: object
    capped: bool
    R: float
    D0: int
    measured_error: object
    terms: dict
    stage_report: list = field(default_factory=list)
    jet: list = None
    corrector: list = None
    trig: TrigPoly = None
    projection: object = None

    def __call__(self, x):
        x = mp.mpmathify(x)
        out = poly_eval(self.jet, x)
        if self.projection is None:
            return out
        q = poly_eval(self.corrector, (x + self.R) / (2 * self.R))
        return out + q + self.projection.evaluate(x)


def truncation_radius_lip(tail, k, M, eps):
    """R from the regime formulas with unit constants."""
    L = max(math.log(M / eps), 1.0)
    if tail.kind == "bounded":
        return float(tail.K)
    if tail.kind == "strictly_subexp":
        r = tail.r
        return float(tail.K) * (L + (r - 1) * k / r * math.log(max(k, 1))) ** ((r - 1) / r)
    return float(tail.K) * (L + k * math.log(max(k, 1)))


def _tail_norm(model, fn, R, digits=15):
    """|| fn 1{|x| > R} ||_mu by quadrature of the density (or the rule)."""
    lo, hi = model.support
    with mp.workdps(digits):
        if model.density_eval is None:
            xs, ws = model.gauss_rule(model.max_degree)
            return mp.sqrt(mp.fsum(w * fn(x) ** 2 for x, w in zip(xs, ws) if abs(x) > R))
        out = mp.mpf(0)
        R = mp.mpf(R)
        cut = R + 40 * max(1, model.tail.K) + 60
        g = lambda x: fn(x) ** 2 * model.density_eval(x)
        if hi > R:
            top = min(hi, cut) if hi != mp.inf else cut
            out += mp.quad(g, mp.linspace(R, top, 12))
        if lo < -R:
            bot = max(lo, -cut) if lo != -mp.inf else -cut
            out += mp.quad(g, mp.linspace(bot, -R, 12))
        return mp.sqrt(out)


def lipschitz_pipeline(target, model, eps, D0=None, R=None, max_degree=256, combination="weighted",
                       max_doublings=6, D0_max=96, degree=None):
    """Jet, truncation radius, corrector, Jackson step, trig-to-algebraic, jet re-added.

    Reports the four terms of the error split
        sup_{|x|<=R}|f~ - q_k - T| + ||(f~ - q_k) 1{|x|>R}|| + ||T - p_T|| + ||T 1{|x|>R}||
    and the measured ||f - p||_mu.
    """
    k, M = target.k, float(target.M)
    stages = []
    with mp.workdps(30):
        jet = [target.deriv(l, 0) / math.factorial(l) for l in range(k + 1)]
    stages.append({"stage": "jet", "coefficients": [float(c) for c in jet]})

    def ftilde(x):
        return target(x) - poly_eval(jet, x)

    def ftilde_d(l, x):
        d = target.deriv(l, x)
        dj = poly_eval(poly_deriv(jet, l), x) if l <= k else 0
        return d - dj

    R_val = float(R) if R is not None else truncation_radius_lip(model.tail, k, M, eps)
    # a target of degree <= k is its own jet; skip the later stages rather than fit round-off
    with mp.workdps(30):
        probe = [mp.mpf(v) for v in np.linspace(-2 * R_val, 2 * R_val, 97)]
        if max(abs(ftilde(x)) for x in probe) <= mp.mpf(10) ** -15:
            terms = dict.fromkeys(("inner_sup", "tail_f_minus_q", "trig_minus_poly", "tail_T"), 0.0)
            out = PipelineResult(k, 0, False, R_val, 0, None, terms, stages, jet)
            out.measured_error = measure_error(model, target, out)
            stages.append({"stage": "total", "measured": float(out.measured_error), "sum_of_terms": 0.0})
            return out
    for attempt in range(max_doublings + 1):
        with mp.workdps(30):
            jumps = [(2 * mp.mpf(R_val)) ** l * (ftilde_d(l, mp.mpf(R_val)) - ftilde_d(l, -mp.mpf(R_val)))
                     for l in range(k + 1)]
            pk = bernoulli_corrector(jumps)
        Rm = mp.mpf(R_val)

        def qk(x, pk=pk, Rm=Rm):
            return poly_eval(pk, (x + Rm) / (2 * Rm))

        def fcheck(x, qk=qk):
            return ftilde(x) - qk(x)

        t2 = _tail_norm(model, fcheck, R_val)
        if model.tail.kind == "bounded" or t2 <= eps / 4 or R is not None:
            break
        R_val *= 2
    stages.append({"stage": "radius", "R": R_val, "tail_f_minus_q": float(t2), "doublings": attempt})
    stages.append({"stage": "corrector", "jumps": [float(j) for j in jumps]})

    if D0 is None:
        D0 = int(math.ceil(R_val * (M / eps) ** (1.0 / k)))
        D0 = max(1, min(D0, D0_max))
    tp = jackson_approx(fcheck, R_val, D0, k, combination)
    stages.append({"stage": "jackson", "D0": D0, "kernel_order": tp.kernel_order,
                   "combination": combination, "sup_error": tp.sup_error, "C_D0": tp.C_D0,
                   "C_D0_bound": tp.coefficient_bound(k, 3 * M)})

    res, plan, capped = trig_to_algebraic(tp, model, eps / 4, max_degree, degree)
    stages.append({"stage": "trig_to_algebraic", "degree": res.D,
                   "planned_degree": plan.D if plan else 0, "capped": capped,
                   "residual": float(res.residual_norm)})

    def pT(x):
        return res.evaluate(x)

    # the four terms; the inner term is measured against T (a sup-norm
    # statement), and the trig-to-algebraic term over the whole line, since
    # p_T only approximates T in L2(mu)
    xs = [mp.mpf(v) for v in np.linspace(-R_val, R_val, 801)]
    with mp.workdps(30):
        t1 = max(abs(fcheck(x) - tp.eval_mp(x)) for x in xs)
        t4 = _tail_norm(model, tp.eval_mp, R_val)
    t3 = res.residual_norm
    terms = {"inner_sup": float(t1), "tail_f_minus_q": float(t2),
             "trig_minus_poly": float(t3), "tail_T": float(t4)}

    out = PipelineResult(max(res.D, k + 1), plan.D if plan else 0, capped, R_val, D0, None, terms,
                         stages, jet, pk, tp, res)
    out.measured_error = measure_error(model, target, out)
    stages.append({"stage": "total", "measured": float(out.measured_error),
                   "sum_of_terms": float(sum(terms.values()))})
    return out


def measure_error(model, target, approx, n_nodes=None):
    """||f - p||_mu on a split rule (exact for |x|-type targets against polynomials)."""
    deg = getattr(approx, "degree", 0)
    n = n_nodes or max(deg, 8) + 48
    xs, ws = model.split_rule(n) if model.pieces else model.gauss_rule(n)
    with mp.workdps(30):
        return mp.sqrt(mp.fsum(w * (target(x) - approx(x)) ** 2 for x, w in zip(xs, ws)))


# -- rates --------------------------------------------------------------------------------------

def projection_error_sweep(model, target, degrees):
    """Best L2(mu) error ||f - p_D|| for each D (the polynomial the pipeline is measured against)."""
    res = projection.project_auto(model, target, list(degrees), tol=mp.mpf(10) ** -12)
    if not isinstance(res, dict):
        res = {res.D: res}
    return {D: res[D].residual_norm for D in degrees}


def fit_line(xs, ys):
    """Least-squares slope, intercept and R^2."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = slope * x + icpt
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), r2
