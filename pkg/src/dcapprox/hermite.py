"""Hermite polynomials and functions, closed-form expansions, the Bargmann
transform and coefficient-decay certificates.

Conventions: h_n = He_n / sqrt(n!) is orthonormal in L2(N(0,1));
phi_n(x) = pi^{-1/4} (2^n n!)^{-1/2} H_n(x) e^{-x^2/2} is orthonormal in L2(R).
If f = sum a_n h_n then r(x) = pi^{-1/4} e^{-x^2/2} f(sqrt(2) x) = sum a_n phi_n.
"""

from dataclasses import dataclass, field

import mpmath as mp

from .errors import ParameterOutOfRange, QuadratureInsufficient

DEFAULT_DIGITS = 40
LOG_SWITCH = 80


# -- polynomials -------------------------------------------------------------------------

def hermite_poly(n, x, flavor="probabilists"):
    """He_n(x) or H_n(x) by the three-term recurrence (n <= 500)."""
    if n < 0 or n > 500:
        raise ValueError("n must lie in [0, 500]")
    x = mp.mpmathify(x)
    if flavor in ("probabilists", "He"):
        p0, p1 = mp.mpf(1), x
        if n == 0:
            return p0 + 0 * x
        for k in range(1, n):
            p0, p1 = p1, x * p1 - k * p0
        return p1
    if flavor in ("physicists", "H"):
        p0, p1 = mp.mpf(1), 2 * x
        if n == 0:
            return p0 + 0 * x
        for k in range(1, n):
            p0, p1 = p1, 2 * x * p1 - 2 * k * p0
        return p1
    raise ValueError("flavor must be 'probabilists' or 'physicists'")


def hermite_values(n_max, x):
    """[h_0(x), ..., h_{n_max}(x)], orthonormal probabilists' polynomials."""
    x = mp.mpmathify(x)
    out = [mp.mpf(1)]
    if n_max >= 1:
        out.append(x)
    for k in range(1, n_max):
        # sqrt(k+1) h_{k+1} = x h_k - sqrt(k) h_{k-1}
        out.append((x * out[k] - mp.sqrt(k) * out[k - 1]) / mp.sqrt(k + 1))
    return out[: n_max + 1]


def hermite_function(n, x):
    """phi_n(x) by the normalised recurrence (stable for large n)."""
    x = mp.mpmathify(x)
    p0 = mp.pi ** (-mp.mpf(1) / 4) * mp.exp(-x * x / 2)
    if n == 0:
        return p0
    p1 = mp.sqrt(2) * x * p0
    for k in range(1, n):
        p0, p1 = p1, mp.sqrt(mp.mpf(2) / (k + 1)) * x * p1 - mp.sqrt(mp.mpf(k) / (k + 1)) * p0
    return p1


def generating_partial_sum(x, t, N):
    """sum_{n <= N} He_n(x) t^n / n!, which tends to exp(x t - t^2/2)."""
    x, t = mp.mpmathify(x), mp.mpmathify(t)
    s, p0, p1 = mp.mpf(1), mp.mpf(1), x
    term = mp.mpf(1)
    for n in range(1, N + 1):
        term = term * t / n
        if n > 1:
            p0, p1 = p1, x * p1 - (n - 1) * p0
        s += p1 * term
    return s


# -- expansions --------------------------------------------------------------------------------

@dataclass
class HermiteExpansion:
    """Coefficients a_n in the h_n basis.  Past n = 80 entries are also kept
    as (sign, log|a_n|) so very small values never underflow."""

    coeffs: list
    source: str
    params: dict = field(default_factory=dict)
    log_coeffs: list = None

    @property
    def max_n(self):
        return len(self.coeffs) - 1

    def log_abs(self, n):
        if self.log_coeffs is not None:
            return self.log_coeffs[n][1]
        a = self.coeffs[n]
        return mp.log(abs(a)) if a != 0 else -mp.inf

    def sign(self, n):
        if self.log_coeffs is not None:
            return self.log_coeffs[n][0]
        return int(mp.sign(self.coeffs[n]))

    def norm2(self):
        return mp.fsum(a * a for a in self.coeffs)

    def __call__(self, x):
        return mp.fsum(a * h for a, h in zip(self.coeffs, hermite_values(self.max_n, x)))


def _finish(pairs, source, params):
    coeffs = [s * mp.exp(la) if s else mp.mpf(0) for s, la in pairs]
    return HermiteExpansion(coeffs, source, params, list(pairs))


def expand_cos(max_n=60, Omega=1, digits=DEFAULT_DIGITS):
    """cos(Omega x) = e^{-Omega^2/2} sum_k (-1)^k Omega^{2k} h_{2k} / sqrt((2k)!)."""
    with mp.workdps(digits):
        Om = mp.mpf(Omega)
        pairs = []
        for n in range(max_n + 1):
            if n % 2:
                pairs.append((0, -mp.inf))
                continue
            k = n // 2
            la = -Om ** 2 / 2 + (n * mp.log(Om) if Om != 1 else 0) - mp.loggamma(n + 1) / 2
            pairs.append(((-1) ** k, la))
        return _finish(pairs, "closed_form_cos", {"Omega": Omega})


def expand_exp_quadratic(c, max_n=60, digits=DEFAULT_DIGITS):
    """exp(c x^2) = (1-2c)^{-1/2} sum_k (sqrt((2k)!)/k!) (c/(1-2c))^k h_{2k}, c < 1/2."""
    with mp.workdps(digits):
        c = mp.mpf(c)
        if not c < mp.mpf(1) / 2:
            raise ParameterOutOfRange("exp(c x^2) is not in L2(N(0,1)) for c >= 1/4 and has no "
                                      "expansion for c >= 1/2")
        q = c / (1 - 2 * c)
        base = -mp.log(1 - 2 * c) / 2
        pairs = []
        for n in range(max_n + 1):
            if n % 2 or (c == 0 and n > 0):
                pairs.append((0, -mp.inf))
                continue
            k = n // 2
            la = base + mp.loggamma(n + 1) / 2 - mp.loggamma(k + 1)
            s = 1
            if k:
                la += k * mp.log(abs(q))
                s = 1 if q > 0 or k % 2 == 0 else -1
            pairs.append((s, la))
        return _finish(pairs, "closed_form_exp_quadratic", {"c": float(c)})


def expand_numeric(fn, max_n=60, digits=DEFAULT_DIGITS, nodes=None):
    """a_n = E[f(X) h_n(X)], X ~ N(0,1), by a Gauss-Hermite rule."""
    from .measures import gaussian
    with mp.workdps(digits):
        g = gaussian(1, precision_digits=digits, max_degree=max_n + 1)
        xs, ws = g.gauss_rule(nodes or max_n + 40)
        acc = [mp.mpf(0)] * (max_n + 1)
        for x, w in zip(xs, ws):
            fx = w * fn(x)
            for n, h in enumerate(hermite_values(max_n, x)):
                acc[n] += fx * h
        return HermiteExpansion(acc, "numeric", {})


def expand_sinc_numeric(max_n=60, digits=DEFAULT_DIGITS):
    """sin(x)/x through the projection route."""
    from . import measures, projection
    g = measures.gaussian(1, precision_digits=digits, max_degree=max_n + 1)
    res = projection.project_auto(g, projection.sinc_target(1), max_n)
    with mp.workdps(digits):
        return HermiteExpansion([+c for c in res.coeffs], "numeric", {"target": "sinc"})


def sinc_closed_form(k, digits=DEFAULT_DIGITS):
    """(-1)^k 2^k / sqrt(2 (2k)!) * gamma_lower(k + 1/2, 1/2).  Cross-check only:
    the incomplete-gamma normalisation here is a reading, not a definition."""
    with mp.workdps(digits):
        return ((-1) ** k * mp.mpf(2) ** k / mp.sqrt(2 * mp.factorial(2 * k))
                * mp.gammainc(k + mp.mpf(1) / 2, 0, mp.mpf(1) / 2))


def exp_quadratic_ratio(c, k):
    """|a_{2k+2}| / |a_{2k}| from the closed form; tends to 2c/(1-2c)."""
    c = mp.mpf(c)
    q = c / (1 - 2 * c)
    return abs(q) * mp.sqrt(mp.mpf(2 * k + 2) * (2 * k + 1)) / (k + 1)


# -- Bargmann transform ------------------------------------------------------------------------

def _as_function(obj):
    if isinstance(obj, HermiteExpansion):
        coeffs = obj.coeffs

        def r(x):
            # r = sum a_n phi_n evaluated with the stable recurrence
            x = mp.mpmathify(x)
            p0 = mp.pi ** (-mp.mpf(1) / 4) * mp.exp(-x * x / 2)
            s = coeffs[0] * p0 if coeffs else mp.mpf(0)
            if len(coeffs) > 1:
                p1 = mp.sqrt(2) * x * p0
                s += coeffs[1] * p1
                for k in range(1, len(coeffs) - 1):
                    p0, p1 = p1, mp.sqrt(mp.mpf(2) / (k + 1)) * x * p1 - mp.sqrt(mp.mpf(k) / (k + 1)) * p0
                    s += coeffs[k + 1] * p1
            return s
        return r
    return obj


_GH = {}


def _gauss_hermite(n):
    """Nodes and weights for int e^{-x^2} g(x) dx, cached per precision."""
    key = (n, mp.mp.dps)
    if key not in _GH:
        from .measures import gaussian
        g = gaussian(1 / mp.sqrt(2), precision_digits=mp.mp.dps, max_degree=n + 1)
        xs, ws = g.gauss_rule(n)
        _GH[key] = (list(xs), [w * mp.sqrt(mp.pi) for w in ws])
    return _GH[key]


def _bargmann_hermite(fn, z, n):
    # e^{-x^2} times the entire factor e^{x^2/2} f(x) e^{sqrt2 x z - z^2/2}
    xs, ws = _gauss_hermite(n)
    r2 = mp.sqrt(2)
    return mp.fsum(w * mp.exp(x * x / 2 + r2 * x * z - z * z / 2) * fn(x) for x, w in zip(xs, ws))


def bargmann_eval(f, z, digits=30, check=True, method="auto"):
    """(Bf)(z) = pi^{-1/4} int exp(-x^2/2 + sqrt(2) x z - z^2/2) f(x) dx.

    `f` is a function in L2(R) or a HermiteExpansion (taken as sum a_n phi_n).
    method "hermite" uses Gauss-Hermite rules of 60 and 120 nodes (fast when
    f decays like e^{-x^2/2}); "quad" uses adaptive piecewise quadrature;
    "auto" tries the first and falls back when the two rules disagree.
    """
    z = mp.mpmathify(z)
    if abs(z) > 20:
        raise ValueError("|z| must not exceed 20")
    fn = _as_function(f)
    if method in ("auto", "hermite"):
        with mp.workdps(digits + 10):
            v1 = _bargmann_hermite(fn, z, 60)
            v2 = _bargmann_hermite(fn, z, 120)
            if abs(v1 - v2) <= mp.mpf(10) ** (-digits // 2) * max(abs(v2), mp.mpf(1)):
                return mp.pi ** (-mp.mpf(1) / 4) * v2
        if method == "hermite":
            raise QuadratureInsufficient("Gauss-Hermite rules disagree at z=%s" % z)
    elif method != "quad":
        raise ValueError("method must be 'auto', 'hermite' or 'quad'")
    with mp.workdps(digits + 10):
        c = mp.sqrt(2) * mp.re(z)
        T = mp.sqrt(2 * digits * mp.log(10)) + mp.sqrt(2) * abs(z)
        # the integrand peaks near x = sqrt(2) Re z / 2 for f ~ e^{-x^2/2}
        centre = c / 2

        def g(x):
            return mp.exp(-x * x / 2 + mp.sqrt(2) * x * z - z * z / 2) * fn(x)

        lo, hi = min(-T, centre - T), max(T, centre + T)

        def integrate(pieces):
            pts = [lo + (hi - lo) * j / pieces for j in range(pieces + 1)]
            return mp.quad(g, pts)

        pieces = max(8, int((hi - lo) * (1 + abs(mp.im(z))) / 2))
        val = integrate(pieces)
        if check:
            val2 = integrate(2 * pieces)
            scale = max(abs(val), mp.mpf(1))
            if abs(val - val2) > mp.mpf(10) ** (-digits // 2) * scale:
                raise QuadratureInsufficient("Bargmann quadrature self-check failed at z=%s" % z)
        return mp.pi ** (-mp.mpf(1) / 4) * val


def bargmann_series(expansion, z):
    """sum a_n z^n / sqrt(n!)."""
    z = mp.mpmathify(z)
    return mp.fsum(a * z ** n / mp.sqrt(mp.factorial(n)) for n, a in enumerate(expansion.coeffs) if a)


def fock_norm(F, n_radial=12, n_angle=24):
    """||F||_{F^2} = (pi^{-1} int |F|^2 e^{-|z|^2} dA)^{1/2} with Gauss-Laguerre
    in |z|^2 and the trapezoid rule in the angle."""
    u, w = _laguerre(n_radial)
    total = mp.mpf(0)
    for uj, wj in zip(u, w):
        rho = mp.sqrt(uj)
        s = mp.fsum(abs(F(rho * mp.expj(2 * mp.pi * m / n_angle))) ** 2 for m in range(n_angle))
        total += wj * s / n_angle
    return mp.sqrt(total)


def _laguerre(n):
    from .measures import one_sided_exp
    return one_sided_exp(0, precision_digits=mp.mp.dps, max_degree=n + 1).gauss_rule(n)


# -- certificates --------------------------------------------------------------------------------

@dataclass
class PWCertificate:
    Omega: object
    M: object
    holds: bool
    scaled: list
    tail_norms: list
    envelope: list
    C: object

    def as_rows(self):
        return [{"n": n, "scaled": s, "tail": t, "envelope": e}
                for n, (s, t, e) in enumerate(zip(self.scaled, self.tail_norms, self.envelope))]


def pw_envelope(Omega, m):
    """(Omega sqrt(e))^m / m^{m/2}."""
    m = mp.mpf(m)
    if m == 0:
        return mp.mpf(1)
    return mp.exp(m * (mp.log(Omega) + mp.mpf(1) / 2) - m * mp.log(m) / 2)


def pw_coefficient_certificate(expansion, Omega, growth_tol=mp.mpf("1e-6")):
    """Fit M = max_n |a_n| sqrt(n!) / Omega^n and compare truncation norms with
    C (Omega sqrt(e))^m / m^{m/2}.

    On a finite horizon a bound holds when the scaled coefficients of the upper
    half of the range never exceed the maximum over the lower half; growth
    there means no finite M exists at this scale.
    """
    Om = mp.mpf(Omega)
    N = expansion.max_n
    scaled = []
    for n in range(N + 1):
        la = expansion.log_abs(n)
        if la == -mp.inf:
            scaled.append(mp.mpf(0))
        else:
            scaled.append(mp.exp(la + mp.loggamma(n + 1) / 2 - n * mp.log(Om)))
    M = max(scaled) if scaled else mp.mpf(0)
    half = N // 2
    lower = max(scaled[: half + 1]) if scaled else mp.mpf(0)
    upper = max(scaled[half + 1:]) if N > half else mp.mpf(0)
    holds = bool(upper <= lower * (1 + growth_tol)) or M == 0
    # tail norms sqrt(sum_{n > m} a_n^2)
    sq = [a * a for a in expansion.coeffs]
    tails, acc = [mp.mpf(0)] * (N + 1), mp.mpf(0)
    for m in range(N, -1, -1):
        tails[m] = mp.sqrt(acc)
        acc += sq[m]
    env = [pw_envelope(Om, m) for m in range(N + 1)]
    C = max((t / e for t, e in zip(tails[1:], env[1:]) if e > 0), default=mp.mpf(0))
    return PWCertificate(Om, M, holds, scaled, tails, env, C)


def gelfand_shilov_fit(expansion, k_min=30):
    """Least-squares slope t in log|a_{2k}| ~ log C - t 2k over k >= k_min."""
    pts = [(2 * k, expansion.log_abs(2 * k)) for k in range(k_min, expansion.max_n // 2 + 1)
           if expansion.log_abs(2 * k) != -mp.inf]
    if len(pts) < 2:
        raise ValueError("need at least two nonzero even coefficients past k_min")
    n = len(pts)
    mx = mp.fsum(p[0] for p in pts) / n
    my = mp.fsum(p[1] for p in pts) / n
    sxy = mp.fsum((p[0] - mx) * (p[1] - my) for p in pts)
    sxx = mp.fsum((p[0] - mx) ** 2 for p in pts)
    t = -sxy / sxx
    logC = max(p[1] + t * p[0] for p in pts)
    return t, mp.exp(logC)


def gelfand_shilov_asymptote(c):
    """t* = (1/2) log((1-2c)/(2c)) for exp(c x^2)."""
    c = mp.mpf(c)
    return mp.log((1 - 2 * c) / (2 * c)) / 2
