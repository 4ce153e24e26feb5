"""Probability measures on the line presented through moments, tail metadata
and Gauss quadrature, plus small-dimensional product and sample measures."""

import functools
import json
import math
import os
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from . import _recurrence as rec
from ._hp import GUARD_DIGITS, precision
from .errors import (DimensionTooHigh, InconsistentMoments, MGFDiverges,
                     OrderTooHigh, ParameterOutOfRange)

DEFAULT_PRECISION = int(os.environ.get("DCAPPROX_PRECISION", "60"))
DEFAULT_MAX_DEGREE = 64
TAIL_KINDS = ("bounded", "strictly_subexp", "subexp", "carleman_general")


@dataclass(frozen=True)
class TailClass:
    """Tail metadata: ||e^{tX}|| <= A exp((K|t|)^r) for strictly_subexp,
    E e^{2|X|/K} <= e^2 for subexp."""

    kind: str
    A: float = 1.0
    K: float = 1.0
    r: float = 1.0
    sequence: object = None

    def __post_init__(self):
        if self.kind not in TAIL_KINDS:
            raise ValueError("unknown tail kind %r" % (self.kind,))
        if not (self.K > 0):
            raise ValueError("K must be positive")
        if self.kind in ("strictly_subexp", "bounded"):
            if not (self.r >= 1) or not math.isfinite(float(self.A)) or not math.isfinite(float(self.K)):
                raise ValueError("strictly sub-exponential tails need r >= 1 and finite A, K")
            if not (self.A > 0):
                raise ValueError("A must be positive")
        if self.kind == "carleman_general" and self.sequence is None:
            raise ValueError("carleman_general tails need an attached sequence")

    def as_dict(self):
        return {"kind": self.kind, "A": float(self.A), "K": float(self.K), "r": float(self.r)}


# -- pieces: sub-measures on intervals, each with its own Gauss rule -------------------

class _Piece:
    lo = hi = None

    def moment(self, k):
        raise NotImplementedError

    def recurrence(self, m, digits):
        return rec.chebyshev_adaptive(self.moment, m, digits)


class _LaguerrePiece(_Piece):
    """mass * Gamma(a+1)-normalised density of (side*x)^a e^{-side*x/b} on a half line."""

    def __init__(self, b, side=1, a=0, mass=1):
        self.b, self.side, self.a, self.mass = b, side, a, mass
        self.lo, self.hi = (0, mp.inf) if side > 0 else (-mp.inf, 0)

    def moment(self, k):
        b, a = mp.mpf(self.b), mp.mpf(self.a)
        return mp.mpf(self.mass) * (self.side * b) ** k * mp.rf(a + 1, k)

    def recurrence(self, m, digits):
        b, a = mp.mpf(self.b), mp.mpf(self.a)
        alpha = [self.side * b * (2 * k + a + 1) for k in range(m)]
        beta = [mp.mpf(self.mass)] + [b * b * k * (k + a) for k in range(1, m)]
        return alpha, beta


class _LegendrePiece(_Piece):
    def __init__(self, lo, hi, mass=1):
        self.lo, self.hi, self.mass = lo, hi, mass

    def moment(self, k):
        lo, hi = mp.mpf(self.lo), mp.mpf(self.hi)
        return mp.mpf(self.mass) * (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))

    def recurrence(self, m, digits):
        lo, hi = mp.mpf(self.lo), mp.mpf(self.hi)
        c, h = (lo + hi) / 2, (hi - lo) / 2
        alpha = [c] * m
        beta = [mp.mpf(self.mass)] + [h * h * k * k / (4 * mp.mpf(k) * k - 1) for k in range(1, m)]
        return alpha, beta


class _MomentPiece(_Piece):
    """Half-line piece known only through exact moments (recurrence by the
    Chebyshev algorithm at elevated precision)."""

    def __init__(self, half_moment, side, mass_scale):
        self._half, self.side, self.scale = half_moment, side, mass_scale
        self.lo, self.hi = (0, mp.inf) if side > 0 else (-mp.inf, 0)

    def moment(self, k):
        return self.scale(k) * self._half(k) * (1 if self.side > 0 or k % 2 == 0 else -1)

    def recurrence(self, m, digits):
        key = (self._half, self.scale, m, digits)
        a, b = _cached_chebyshev(key, lambda k: self._half(k) * self.scale(k), m, digits)
        if self.side < 0:
            a = [-x for x in a]
        return list(a), list(b)


_CHEB_CACHE = {}


def _cached_chebyshev(key, fn, m, digits):
    for (kk, mm, dd), val in list(_CHEB_CACHE.items()):
        if kk == key[:2] and mm >= m and dd >= digits:
            return val[0][:m], val[1][:m]
    val = rec.chebyshev_adaptive(fn, m, digits)
    _CHEB_CACHE[(key[:2], m, digits)] = val
    return val


# -- the measure object --------------------------------------------------------------

class MomentModel:
    """A probability measure on R given by moments, tail class and quadrature.

    The recurrence is built at construction up to `max_degree + 1`; a
    nonpositive beta on the way raises InconsistentMoments.
    """

    def __init__(self, name, moment_fn, tail, precision_digits=DEFAULT_PRECISION,
                 max_degree=DEFAULT_MAX_DEGREE, symmetric=False, density=None,
                 pieces=None, recurrence_fn=None, discrete=None, support=(-mp.inf, mp.inf),
                 mgf_strip=(-mp.inf, mp.inf), mgf_peak=None, sampler=None, params=None,
                 check=True):
        self.name = name
        self.params = dict(params or {})
        self.tail = tail
        self.precision_digits = int(precision_digits)
        self.max_degree = int(max_degree)
        self.max_order = 2 * self.max_degree + 2
        self.symmetric = symmetric
        self.density_eval = density
        self.pieces = list(pieces or [])
        self.support = support
        self.mgf_strip = mgf_strip
        self._moment_fn = moment_fn
        self._recurrence_fn = recurrence_fn
        self._discrete = discrete
        self._mgf_peak = mgf_peak
        self._sampler = sampler
        self._rec = None
        self._rules = {}
        self._split = {}
        if check:
            self.recurrence(self.max_degree + 2)

    # identity
    def key(self):
        return (self.name, tuple(sorted((k, str(v)) for k, v in self.params.items())),
                self.precision_digits)

    def __repr__(self):
        ps = ", ".join("%s=%s" % kv for kv in self.params.items())
        return "%s(%s)" % (self.name, ps)

    @property
    def working_digits(self):
        return self.precision_digits + GUARD_DIGITS

    def spec(self):
        return {"type": self.name, "parameters": {k: _plain(v) for k, v in self.params.items()},
                "tail": self.tail.as_dict(), "precision_digits": self.precision_digits,
                "max_degree": self.max_degree}

    # moments
    def moment(self, k):
        """E[X^k] at the model's precision."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        if k > self.max_order:
            raise OrderTooHigh("moment order %d exceeds configured maximum %d" % (k, self.max_order))
        with mp.workdps(self.working_digits):
            if self.symmetric and k % 2:
                return mp.mpf(0)
            return +self._moment_fn(k)

    def moment_by_quadrature(self, k):
        """E[X^k] by adaptive quadrature of the density, domain truncated
        where the weight falls below 10^(-digits-10)."""
        if self.density_eval is None:
            raise ValueError("%s has no closed-form density" % self.name)
        with mp.workdps(self.working_digits):
            pts = self._quad_points(k)
            return mp.quad(lambda x: x ** k * self.density_eval(x), pts, maxdegree=10)

    def _quad_points(self, k=0, t=0):
        lo, hi = self.support
        cut = self._truncation(k, t)
        a = max(lo, -cut) if lo != -mp.inf else -cut
        b = min(hi, cut) if hi != mp.inf else cut
        pts = [a]
        mid = [p.hi for p in self.pieces if p.hi not in (mp.inf,) and a < p.hi < b]
        if self._mgf_peak is not None and t != 0:
            pk = self._mgf_peak(t)
            if pk is not None and a < pk < b:
                mid.append(pk)
        pts.extend(sorted(set(mid)))
        pts.append(b)
        # refine wide intervals so tanh-sinh sees the bulk
        out = [pts[0]]
        for u, v in zip(pts[:-1], pts[1:]):
            steps = max(1, int(min(64, abs(v - u) / 4)))
            for j in range(1, steps + 1):
                out.append(u + (v - u) * j / steps)
        return out

    def _truncation(self, k, t):
        # where density * |x|^k * e^{2tx} drops below 10^{-digits-10}
        if self.density_eval is None:
            return mp.mpf(50)
        target = mp.mpf(10) ** (-(self.working_digits + 10))
        x = mp.mpf(1)
        for _ in range(200):
            val = max(self.density_eval(x), self.density_eval(-x)) * x ** k * mp.exp(2 * abs(t) * x)
            if val < target and x > 1:
                return x
            x *= mp.mpf("1.25")
        return x

    # MGF
    def mgf_norm(self, t):
        """||e^{tX}||_mu = sqrt(E e^{2tX}) by quadrature."""
        t = mp.mpf(t)
        lo, hi = self.mgf_strip
        if not (lo < t < hi):
            raise MGFDiverges("E exp(2tX) diverges at t=%s for %s" % (mp.nstr(t, 8), self))
        if t == 0:
            return mp.mpf(1)
        with mp.workdps(self.working_digits):
            if self._discrete is not None:
                xs, ws = self._discrete
                return mp.sqrt(mp.fsum(w * mp.exp(2 * t * x) for x, w in zip(xs, ws)))
            if self.density_eval is None:
                return self._mgf_from_rule(t)
            pts = self._quad_points(0, t)
            val = mp.quad(lambda x: mp.exp(2 * t * x) * self.density_eval(x), pts, maxdegree=10)
            return mp.sqrt(val)

    def _mgf_from_rule(self, t):
        xs, ws = self.gauss_rule(self.max_degree + 1)
        return mp.sqrt(mp.fsum(w * mp.exp(2 * t * x) for x, w in zip(xs, ws)))

    def subexp_normaliser(self, K):
        """E e^{2|X|/K} (the sub-exponential normalisation is <= e^2)."""
        K = mp.mpf(K)
        with mp.workdps(self.working_digits):
            f = lambda x: mp.exp(2 * abs(x) / K) * self.density_eval(x)
            return mp.quad(f, self._quad_points(0, 1 / K), maxdegree=10)

    # recurrence and quadrature
    def recurrence(self, m):
        """(alpha[:m], beta[:m]) of the monic recurrence, beta[0] = 1."""
        if self._rec is not None and len(self._rec[0]) >= m:
            return self._rec[0][:m], self._rec[1][:m]
        m_build = max(m, len(self._rec[0]) if self._rec else 0)
        digits = self.working_digits
        with precision(digits):
            if self._recurrence_fn is not None:
                a, b = self._recurrence_fn(m_build)
            elif self._discrete is not None:
                a, b = rec.stieltjes(self._discrete[0], self._discrete[1], m_build)
            elif self.pieces:
                xs, ws = self.split_rule(m_build + 8)
                a, b = rec.stieltjes(xs, ws, m_build)
            else:
                a, b = rec.chebyshev_adaptive(self._moment_fn, m_build, digits)
        if any(not (x > 0) for x in b):
            raise InconsistentMoments("nonpositive recurrence coefficient for %s" % self)
        self._rec = (list(a), list(b))
        return self._rec[0][:m], self._rec[1][:m]

    def recurrence_from_moments(self, m):
        """Independent construction by the Chebyshev algorithm on exact moments."""
        with precision(self.working_digits):
            return rec.chebyshev_adaptive(self._moment_fn, m, self.working_digits)

    def gauss_rule(self, n):
        """n-point Gauss rule (nodes, weights) for the measure."""
        if n not in self._rules:
            if self._discrete is not None and n >= len(self._discrete[0]):
                self._rules[n] = (list(self._discrete[0]), list(self._discrete[1]))
            else:
                a, b = self.recurrence(n + 1)
                self._rules[n] = rec.gauss_rule(a, b, n, self.working_digits)
        return self._rules[n]

    @property
    def breakpoints(self):
        return sorted({p.hi for p in self.pieces if p.hi != mp.inf and p.hi != self.support[1]})

    def split_rule(self, n):
        """Union of n-point Gauss rules of the pieces: exact for polynomials of
        degree < 2n on each piece, hence for |x|*poly and relu*poly."""
        if not self.pieces:
            return self.gauss_rule(n)
        if n not in self._split:
            xs, ws = [], []
            digits = self.working_digits
            with precision(digits):
                for p in self.pieces:
                    a, b = p.recurrence(n + 1, digits)
                    x, w = rec.gauss_rule(a, b, n, digits)
                    xs.extend(x)
                    ws.extend(w)
            order = sorted(range(len(xs)), key=lambda i: xs[i])
            self._split[n] = ([xs[i] for i in order], [ws[i] for i in order])
        return self._split[n]

    def sample(self, n, rng):
        if self._sampler is None:
            raise ValueError("%s cannot be sampled" % self.name)
        return self._sampler(n, rng)

    def with_options(self, precision_digits=None, max_degree=None):
        kw = dict(self.params)
        return builtin(self.name, precision_digits=precision_digits or self.precision_digits,
                       max_degree=max_degree or self.max_degree, **kw)


def _plain(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return v


# -- builtin families ----------------------------------------------------------------

def _mp(x):
    return mp.mpf(x) if not isinstance(x, mp.mpf) else x


@functools.lru_cache(maxsize=64)
def gaussian(sigma=1, precision_digits=DEFAULT_PRECISION, max_degree=DEFAULT_MAX_DEGREE):
    """N(0, sigma^2).  Tail: ||e^{tX}|| = exp(sigma^2 t^2), so A=1, K=sigma, r=2."""
    s = _mp(sigma)
    if not s > 0:
        raise ParameterOutOfRange("sigma must be positive")

    def mom(k):
        return s ** k * mp.fac2(k - 1) if k % 2 == 0 else mp.mpf(0)

    scale = _ScalePow(float(sigma))
    return MomentModel(
        "gaussian", mom, TailClass("strictly_subexp", A=1.0, K=float(sigma), r=2.0),
        precision_digits, max_degree, symmetric=True,
        density=lambda x: mp.npdf(x, 0, s),
        pieces=[_MomentPiece(_half_gauss, -1, scale), _MomentPiece(_half_gauss, 1, scale)],
        recurrence_fn=lambda m: ([mp.mpf(0)] * m, [mp.mpf(1)] + [s * s * k for k in range(1, m)]),
        mgf_peak=lambda t: 2 * t * s * s,
        sampler=lambda n, rng: float(sigma) * rng.standard_normal(n),
        params={"sigma": sigma})


def _half_gauss(k):
    return mp.power(2, mp.mpf(k) / 2) * mp.gamma(mp.mpf(k + 1) / 2) / (2 * mp.sqrt(mp.pi))


class _ScalePow:
    """k -> c^k, hashable so Chebyshev results can be cached per scale."""

    def __init__(self, c):
        self.c = c

    def __call__(self, k):
        return mp.mpf(self.c) ** k

    def __eq__(self, other):
        return isinstance(other, _ScalePow) and other.c == self.c

    def __hash__(self):
        return hash(("pow", self.c))


@functools.lru_cache(maxsize=64)
def laplace_K(b=1, digits=40):
    """Minimal K with E e^{2|X|/K} <= e^2 for Laplace(b), found by root-finding
    on the quadrature value of the normaliser."""
    with mp.workdps(digits):
        b = mp.mpf(b)
        dens = lambda x: mp.exp(-abs(x) / b) / (2 * b)

        def g(K):
            val = mp.quad(lambda x: mp.exp(2 * x / K) * dens(x) * 2, [0, 5 * b, 20 * b, mp.inf])
            return mp.log(val) - 2

        return mp.findroot(g, 2.3 * b, tol=mp.mpf(10) ** (-digits + 5))


@functools.lru_cache(maxsize=64)
def laplace(b=1, precision_digits=DEFAULT_PRECISION, max_degree=DEFAULT_MAX_DEGREE):
    """Density e^{-|x|/b}/(2b).  Sub-exponential; K computed numerically."""
    bb = _mp(b)
    if not bb > 0:
        raise ParameterOutOfRange("b must be positive")
    K = float(laplace_K(float(b)))

    def mom(k):
        return mp.factorial(k) * bb ** k if k % 2 == 0 else mp.mpf(0)

    return MomentModel(
        "laplace", mom, TailClass("subexp", A=1.0, K=K, r=1.0),
        precision_digits, max_degree, symmetric=True,
        density=lambda x: mp.exp(-abs(x) / bb) / (2 * bb),
        pieces=[_LaguerrePiece(bb, -1, 0, mp.mpf(1) / 2), _LaguerrePiece(bb, 1, 0, mp.mpf(1) / 2)],
        mgf_strip=(-1 / (2 * bb), 1 / (2 * bb)),
        sampler=lambda n, rng: rng.laplace(0.0, float(b), n),
        params={"b": b})


def _freud_const(alpha):
    return 2 * mp.gamma(1 + 1 / mp.mpf(alpha))


class _FreudHalf:
    def __init__(self, alpha):
        self.alpha = alpha

    def __call__(self, k):
        a = mp.mpf(self.alpha)
        return mp.gamma((k + 1) / a) / a / _freud_const(self.alpha)

    def __eq__(self, other):
        return isinstance(other, _FreudHalf) and other.alpha == self.alpha

    def __hash__(self):
        return hash(("freud", self.alpha))


@functools.lru_cache(maxsize=16)
def freud_tail(alpha, rel_margin=0.05, digits=20):
    """Fit (A, K) for freud(alpha): r = alpha/(alpha-1); K slightly above the
    Laplace-method asymptote, A the supremum of the normalised MGF ratio."""
    a = mp.mpf(alpha)
    r = a / (a - 1)
    with mp.workdps(digits):
        K_asym = (2 / a) * ((a - 1) / 2) ** (1 / r)
        K = K_asym * (1 + mp.mpf(rel_margin))
        c = _freud_const(alpha)
        dens = lambda x: mp.exp(-abs(x) ** a) / c
        # ratio decays once (K^r - K_asym^r) t^r exceeds ~50
        T = (50 / (K ** r - K_asym ** r)) ** (1 / r)
        best = mp.mpf(1)
        for t in mp.linspace(0, T, 40)[1:]:
            pk = (2 * t / a) ** (1 / (a - 1))
            val = mp.quad(lambda x: mp.exp(2 * t * x) * dens(x), [-mp.inf, 0, pk, 2 * pk + 5, mp.inf])
            ratio = mp.sqrt(val) / mp.exp((K * t) ** r)
            best = max(best, ratio)
        A = best * (1 + mp.mpf("1e-6"))
    return float(A), float(K), float(r)


@functools.lru_cache(maxsize=32)
def freud(alpha, precision_digits=DEFAULT_PRECISION, max_degree=DEFAULT_MAX_DEGREE):
    """Density proportional to exp(-|x|^alpha), alpha > 1; strictly
    sub-exponential of order r = alpha/(alpha-1)."""
    if not alpha > 1:
        raise ParameterOutOfRange("freud weight needs alpha > 1")
    a = _mp(alpha)
    half = _FreudHalf(float(alpha))
    one = _ScalePow(1.0)

    def mom(k):
        return 2 * half(k) if k % 2 == 0 else mp.mpf(0)

    A, K, r = freud_tail(float(alpha))

    def sampler(n, rng):
        g = rng.gamma(1.0 / float(alpha), 1.0, n) ** (1.0 / float(alpha))
        return np.where(rng.random(n) < 0.5, -g, g)

    return MomentModel(
        "freud", mom, TailClass("strictly_subexp", A=A, K=K, r=r),
        precision_digits, max_degree, symmetric=True,
        density=lambda x: mp.exp(-abs(x) ** a) / _freud_const(alpha),
        pieces=[_MomentPiece(half, -1, one), _MomentPiece(half, 1, one)],
        mgf_peak=lambda t: mp.sign(t) * (2 * abs(t) / a) ** (1 / (a - 1)),
        sampler=sampler, params={"alpha": alpha})


@functools.lru_cache(maxsize=32)
def uniform(a=-1, b=1, precision_digits=DEFAULT_PRECISION, max_degree=DEFAULT_MAX_DEGREE):
    """Uniform on [a, b]; bounded tail with r=1, K = max(|a|, |b|)."""
    lo, hi = _mp(a), _mp(b)
    if not hi > lo:
        raise ParameterOutOfRange("uniform needs a < b")
    sym = lo == -hi

    def mom(k):
        return (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))

    if lo < 0 < hi:
        pieces = [_LegendrePiece(lo, 0, -lo / (hi - lo)), _LegendrePiece(0, hi, hi / (hi - lo))]
    else:
        pieces = [_LegendrePiece(lo, hi, 1)]
    c, h = (lo + hi) / 2, (hi - lo) / 2
    K = float(max(abs(lo), abs(hi)))
    return MomentModel(
        "uniform", mom, TailClass("bounded", A=1.0, K=K, r=1.0),
        precision_digits, max_degree, symmetric=sym,
        density=lambda x: 1 / (hi - lo) if lo <= x <= hi else mp.mpf(0),
        pieces=pieces, support=(lo, hi),
        recurrence_fn=lambda m: ([c] * m, [mp.mpf(1)] + [h * h * k * k / (4 * mp.mpf(k) * k - 1) for k in range(1, m)]),
        sampler=lambda n, rng: rng.uniform(float(a), float(b), n),
        params={"a": a, "b": b})


@functools.lru_cache(maxsize=32)
def one_sided_exp_K(alpha=0):
    """Minimal sub-exponential K for the density x^alpha e^{-x}/Gamma(alpha+1)."""
    with mp.workdps(40):
        a = mp.mpf(alpha)
        g = lambda K: (a + 1) * -mp.log(1 - 2 / K) - 2
        return float(mp.findroot(g, 2 / (1 - mp.exp(-2 / (a + 1)))))


@functools.lru_cache(maxsize=32)
def one_sided_exp(alpha=0, precision_digits=DEFAULT_PRECISION, max_degree=DEFAULT_MAX_DEGREE):
    """Density x^alpha e^{-x}/Gamma(alpha+1) on [0, inf)."""
    a = _mp(alpha)
    if not a > -1:
        raise ParameterOutOfRange("alpha must exceed -1")
    K = one_sided_exp_K(float(alpha))
    return MomentModel(
        "one_sided_exp", lambda k: mp.rf(a + 1, k), TailClass("subexp", A=1.0, K=K, r=1.0),
        precision_digits, max_degree, symmetric=False,
        density=lambda x: x ** a * mp.exp(-x) / mp.gamma(a + 1) if x > 0 else mp.mpf(0),
        pieces=[_LaguerrePiece(1, 1, a, 1)], support=(mp.mpf(0), mp.inf),
        recurrence_fn=lambda m: ([2 * k + a + 1 for k in range(m)],
                                 [mp.mpf(1)] + [k * (k + a) for k in range(1, m)]),
        mgf_strip=(-mp.inf, mp.mpf(1) / 2),
        mgf_peak=lambda t: a / (1 - 2 * t) if t < mp.mpf(1) / 2 else None,
        sampler=lambda n, rng: rng.gamma(float(alpha) + 1, 1.0, n),
        params={"alpha": alpha})


_BUILTINS = {
    "gaussian": (gaussian, ("sigma",)),
    "laplace": (laplace, ("b",)),
    "freud": (freud, ("alpha",)),
    "uniform": (uniform, ("a", "b")),
    "one_sided_exp": (one_sided_exp, ("alpha",)),
}


def builtin(name, precision_digits=DEFAULT_PRECISION, max_degree=DEFAULT_MAX_DEGREE, **params):
    name = name.replace("-", "_")
    if name not in _BUILTINS:
        raise ValueError("unknown measure %r (builtins: %s)" % (name, ", ".join(_BUILTINS)))
    fn, names = _BUILTINS[name]
    args = tuple(params[k] for k in names if k in params)
    return fn(*args, precision_digits=precision_digits, max_degree=max_degree)


def from_config(cfg):
    """Build a measure from a key-value tree
    {type, parameters, tail:{kind,A,K,r}, precision_digits, max_degree}."""
    params = {k: _num(v) for k, v in (cfg.get("parameters") or {}).items()}
    model = builtin(cfg["type"], precision_digits=int(cfg.get("precision_digits", DEFAULT_PRECISION)),
                    max_degree=int(cfg.get("max_degree", DEFAULT_MAX_DEGREE)), **params)
    if cfg.get("tail"):
        t = cfg["tail"]
        override = TailClass(t.get("kind", model.tail.kind), float(t.get("A", model.tail.A)),
                             float(t.get("K", model.tail.K)), float(t.get("r", model.tail.r)))
        model = _retail(model, override)
    return model


def _retail(model, tail):
    clone = object.__new__(MomentModel)
    clone.__dict__.update(model.__dict__)
    clone._rules, clone._split = model._rules, model._split
    clone.tail = tail
    return clone


def _num(v):
    if isinstance(v, str):
        try:
            f = float(v)
        except ValueError:
            return v
        return int(f) if f.is_integer() and "." not in v else f
    return v


def load_measure(spec, precision_digits=None, max_degree=None):
    """'gaussian', 'laplace:2', 'freud:1.5', 'uniform:-1:1' or a JSON/YAML file."""
    if os.path.exists(spec):
        with open(spec) as fh:
            text = fh.read()
        if spec.endswith((".yaml", ".yml")):
            import yaml
            cfg = yaml.safe_load(text)
        else:
            cfg = json.loads(text)
        if precision_digits:
            cfg["precision_digits"] = precision_digits
        if max_degree:
            cfg["max_degree"] = max_degree
        return from_config(cfg)
    parts = spec.split(":")
    name = parts[0].replace("-", "_")
    if name not in _BUILTINS:
        raise ValueError("unknown measure %r" % spec)
    names = _BUILTINS[name][1]
    params = {k: _num(v) for k, v in zip(names, parts[1:])}
    return builtin(name, precision_digits=precision_digits or DEFAULT_PRECISION,
                   max_degree=max_degree or DEFAULT_MAX_DEGREE, **params)


# -- small-dimensional measures --------------------------------------------------------

MAX_DIM = 6


@dataclass
class ProductMeasure:
    """Product of one-dimensional models; the tail class is the common tail of
    identical factors (directional uniformity is assumed, not derived)."""

    factors: list
    tail: TailClass = field(init=False)

    def __post_init__(self):
        if len(self.factors) > MAX_DIM:
            raise DimensionTooHigh("d=%d exceeds %d" % (len(self.factors), MAX_DIM))
        self.tail = self.factors[0].tail

    @property
    def d(self):
        return len(self.factors)

    @property
    def precision_digits(self):
        return min(f.precision_digits for f in self.factors)

    def sample(self, n, rng):
        return np.column_stack([f.sample(n, rng) for f in self.factors])

    def moment_multi(self, alpha):
        with mp.workdps(self.precision_digits + GUARD_DIGITS):
            out = mp.mpf(1)
            for f, a in zip(self.factors, alpha):
                out *= f.moment(a)
            return out


@dataclass
class EmpiricalMeasure:
    """Uniform measure on a finite cloud of points in R^d."""

    samples: np.ndarray
    tail: TailClass = None
    precision_digits: int = DEFAULT_PRECISION

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[1] > MAX_DIM:
            raise DimensionTooHigh("d=%d exceeds %d" % (self.samples.shape[1], MAX_DIM))
        if self.tail is None:
            self.tail = TailClass("bounded", 1.0, float(np.abs(self.samples).max() or 1.0), 1.0)

    @property
    def d(self):
        return self.samples.shape[1]

    def sample(self, n, rng):
        return self.samples[rng.integers(0, len(self.samples), n)]


def discrete_model(points, tail, name="empirical", precision_digits=DEFAULT_PRECISION,
                   max_degree=None, weights=None):
    """One-dimensional measure on finitely many atoms (equal weights by default)."""
    with mp.workdps(precision_digits + GUARD_DIGITS):
        xs = [mp.mpf(float(p)) for p in points]
        ws = [mp.mpf(1) / len(xs)] * len(xs) if weights is None else [mp.mpf(w) for w in weights]
        distinct = len(set(float(x) for x in xs))
        md = min(max_degree if max_degree is not None else DEFAULT_MAX_DEGREE, distinct - 2)

        def mom(k):
            return mp.fsum(w * x ** k for x, w in zip(xs, ws))

    return MomentModel(name, mom, tail, precision_digits, max(md, 0), discrete=(xs, ws),
                       support=(min(xs), max(xs)),
                       sampler=lambda n, rng: np.asarray([float(x) for x in xs])[rng.integers(0, len(xs), n)],
                       params={"atoms": len(xs)})


def _unit(direction, d):
    u = np.asarray(direction, dtype=float).ravel()
    if u.size != d:
        raise ValueError("direction has dimension %d, measure has %d" % (u.size, d))
    nrm = np.linalg.norm(u)
    if not abs(nrm - 1) < 1e-9:
        raise ValueError("direction must be a unit vector")
    return u


def project_measure(model_d, direction, max_degree=DEFAULT_MAX_DEGREE):
    """One-dimensional pushforward x -> <u, x>; the tail class is inherited."""
    if model_d.d > MAX_DIM:
        raise DimensionTooHigh("d=%d exceeds %d" % (model_d.d, MAX_DIM))
    u = _unit(direction, model_d.d)
    if isinstance(model_d, EmpiricalMeasure):
        pts = model_d.samples @ u
        return discrete_model(pts, model_d.tail, precision_digits=model_d.precision_digits,
                              max_degree=max_degree)
    factors = model_d.factors
    nz = [i for i in range(len(u)) if u[i] != 0]
    if len(nz) == 1 and abs(u[nz[0]]) == 1 and (u[nz[0]] > 0 or factors[nz[0]].symmetric):
        return factors[nz[0]]
    if all(f.name == "gaussian" for f in factors) and len({str(f.params["sigma"]) for f in factors}) == 1:
        return factors[0]
    return _convolved(factors, u, model_d.tail, max_degree)


def _convolved(factors, u, tail, max_degree):
    digits = min(f.precision_digits for f in factors)
    order = 2 * max_degree + 6
    with mp.workdps(digits + GUARD_DIGITS + 10):
        uu = [mp.mpf(repr(float(x))) for x in u]
        # exact moments of sum_i u_i X_i by binomial convolution
        mom = [mp.mpf(1)] + [mp.mpf(0)] * order
        for f, ui in zip(factors, uu):
            fm = [ui ** k * f._moment_fn(k) for k in range(order + 1)]
            mom = [mp.fsum(mp.binomial(k, j) * mom[j] * fm[k - j] for j in range(k + 1))
                   for k in range(order + 1)]
    sym = all(f.symmetric for f in factors)

    def moment(k):
        if k > order:
            raise OrderTooHigh("projected moments stored to order %d" % order)
        return mom[k]

    def sampler(n, rng):
        return np.column_stack([f.sample(n, rng) for f in factors]) @ np.asarray(u)

    return MomentModel("projected", moment, tail, digits, max_degree, symmetric=sym,
                       sampler=sampler, params={"factors": ",".join(repr(f) for f in factors),
                                                "direction": ",".join("%.12g" % x for x in u)})
