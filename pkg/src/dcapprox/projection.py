"""Best L2(mu) polynomial approximation through orthonormal recurrences, and
probes of the Fourier transform of the weighted residual.

Everything is computed against one discrete rule (a Gauss rule of the
measure, or the union of Gauss rules of its pieces when the density is
split at 0).  Coefficients, norms and probes therefore refer to the same
discrete measure, so orthogonality holds to working precision.
"""

import itertools
import json
import math
from dataclasses import dataclass, field

import gmpy2
import mpmath as mp
from gmpy2 import mpfr

from . import bounds
from ._hp import precision, to_mpf, to_mpfr, vec_mpf, vec_mpfr
from ._recurrence import OrthonormalEvaluator
from .errors import (BasisTooLarge, DimensionTooHigh, PlanInvalid, PrecisionExhausted,
                     QuadratureInsufficient)
from .measures import MAX_DIM, EmpiricalMeasure, ProductMeasure

DEFAULT_EXTRA_NODES = 32
MAX_NODES = 4096


# -- orthonormal basis ----------------------------------------------------------------

class OrthoBasis:
    """Recurrence coefficients, a quadrature rule and the orthonormal
    polynomials tabulated on its nodes."""

    def __init__(self, model, max_degree, alpha, beta, nodes, weights, split):
        self.model = model
        self.max_degree = max_degree
        self.alpha = alpha
        self.beta = beta
        self.nodes = nodes
        self.weights = weights
        self.split = split
        self.digits = model.working_digits
        with precision(self.digits):
            self._x = vec_mpfr(nodes)
            self._w = vec_mpfr(weights)
            ev = OrthonormalEvaluator(alpha, beta, max_degree + 1)
            self._table = ev.table(self._x)
        self._trig = {}

    @property
    def n(self):
        return len(self.nodes)

    def __repr__(self):
        return "OrthoBasis(%r, max_degree=%d, nodes=%d)" % (self.model, self.max_degree, self.n)

    def values(self, j):
        """p_j at the nodes (mpfr list)."""
        return self._table[j]

    def evaluate(self, coeffs, x):
        """sum_j coeffs[j] p_j(x) at a single point."""
        with precision(self.digits):
            ev = OrthonormalEvaluator(self.alpha, self.beta, len(coeffs))
            vals = ev.values(to_mpfr(x))
            return to_mpf(gmpy2.fsum([to_mpfr(c) * v for c, v in zip(coeffs, vals)]))

    def inner(self, f_vals, g_vals):
        with precision(self.digits):
            return gmpy2.fsum([w * a * b for w, a, b in zip(self._w, f_vals, g_vals)])

    def orthonormality_error(self):
        with precision(self.digits):
            worst = mpfr(0)
            for i in range(self.max_degree + 1):
                for j in range(i + 1):
                    g = self.inner(self._table[i], self._table[j])
                    worst = max(worst, abs(g - (1 if i == j else 0)))
            return to_mpf(worst)

    def integrate(self, fn):
        """Apply the rule to a python callable of one mpmath argument."""
        with mp.workdps(self.digits):
            return mp.fsum(w * fn(x) for x, w in zip(self.nodes, self.weights))

    def trig_table(self, xi_grid):
        key = tuple(str(x) for x in xi_grid)
        if key not in self._trig:
            with precision(self.digits):
                xs = [to_mpfr(x) for x in xi_grid]
                cos_t, sin_t = [], []
                for xi in xs:
                    cos_t.append([gmpy2.cos(xi * x) for x in self._x])
                    sin_t.append([gmpy2.sin(xi * x) for x in self._x])
                self._trig = {key: (cos_t, sin_t)}
        return self._trig[key]


_BASES = {}


def build_basis(model, max_degree, n_nodes=None, check=True):
    """Orthonormal basis up to `max_degree` with an n-node rule
    (n = max_degree + 32 by default).

    Measures split at 0 use the union of per-piece Gauss rules, so targets
    with a kink at 0 are integrated exactly against polynomials.
    """
    n = int(n_nodes or max_degree + DEFAULT_EXTRA_NODES)
    if n < max_degree + 1:
        raise ValueError("need at least max_degree + 1 nodes")
    key = (model.key(), max_degree, n)
    if key in _BASES:
        return _BASES[key]
    if model.max_degree < max_degree + 1:
        model = model.with_options(max_degree=max_degree + 1)
    alpha, beta = model.recurrence(max_degree + 2)
    if model.pieces:
        nodes, weights = model.split_rule(n)
        split = True
    else:
        nodes, weights = model.gauss_rule(n)
        split = False
    with mp.workdps(model.working_digits):
        mass = mp.fsum(weights)
        beta = [mp.mpf(1)] + list(beta[1:]) if abs(beta[0] - 1) < mp.mpf(10) ** (-model.precision_digits) else list(beta)
        if abs(mass - 1) > mp.mpf(10) ** (-model.precision_digits + 8):
            raise PrecisionExhausted("quadrature weights sum to %s, not 1" % mp.nstr(mass, 20))
    basis = OrthoBasis(model, max_degree, alpha, beta, nodes, weights, split)
    if check:
        err = basis.orthonormality_error()
        if err > mp.mpf(10) ** (-model.precision_digits + 8):
            raise PrecisionExhausted("orthonormality lost (error %s); raise the precision"
                                     % mp.nstr(err, 5))
    _BASES[key] = basis
    return basis


# -- targets ----------------------------------------------------------------------------

def _zero(_omega):
    return mp.mpf(0)


@dataclass
class TargetFunction:
    """A function on R with what is known about its Fourier transform.

    `band_mass(Omega)` is the total variation of fhat (or of the finite
    measure part used by the residual bound) on [-Omega, Omega];
    `tail_mass(Omega)` the mass outside.  `atoms` lists (frequency, weight)
    pairs for purely atomic spectra.
    """

    kind: str
    params: dict
    f: object
    band_mass: object = None
    tail_mass: object = None
    kinks: tuple = ()
    atoms: tuple = None
    fhat_density: object = None
    band_edge: object = None

    def __call__(self, x):
        return self.f(x)

    def __repr__(self):
        if not self.params:
            return self.kind
        return "%s(%s)" % (self.kind, ", ".join("%s=%s" % kv for kv in self.params.items()))

    def label(self):
        return repr(self)


def cos_target(Omega=1):
    Om = mp.mpf(Omega)
    return TargetFunction("cos", {"Omega": Omega}, lambda x: mp.cos(Om * x),
                          band_mass=lambda w: 2 * mp.pi if w >= Om else mp.mpf(0),
                          tail_mass=lambda w: mp.mpf(0) if w >= Om else 2 * mp.pi,
                          atoms=((Om, mp.pi), (-Om, mp.pi)), band_edge=Om)


def sin_target(Omega=1):
    Om = mp.mpf(Omega)
    # fhat = -i pi delta_Omega + i pi delta_{-Omega}
    return TargetFunction("sin", {"Omega": Omega}, lambda x: mp.sin(Om * x),
                          band_mass=lambda w: 2 * mp.pi if w >= Om else mp.mpf(0),
                          tail_mass=lambda w: mp.mpf(0) if w >= Om else 2 * mp.pi,
                          atoms=((Om, mp.mpc(0, -1) * mp.pi), (-Om, mp.mpc(0, 1) * mp.pi)),
                          band_edge=Om)


def sinc_target(Omega=1):
    """sin(Omega x)/(Omega x), whose transform is (pi/Omega) on [-Omega, Omega]."""
    Om = mp.mpf(Omega)

    def f(x):
        return mp.sinc(Om * x)

    return TargetFunction("sinc", {"Omega": Omega}, f,
                          band_mass=lambda w: 2 * mp.pi / Om * min(mp.mpf(w), Om),
                          tail_mass=lambda w: 2 * mp.pi / Om * max(Om - w, 0),
                          fhat_density=lambda xi: mp.pi / Om if abs(xi) <= Om else mp.mpf(0),
                          band_edge=Om)


def trig_poly_target(coeffs, R=mp.pi):
    """a_0 + sum_k a_k cos(k pi x / R) + b_k sin(k pi x / R); coeffs = [(a_k, b_k), ...]."""
    R = mp.mpf(R)
    cs = [(mp.mpf(a), mp.mpf(b)) for a, b in coeffs]

    def f(x):
        return mp.fsum(a * mp.cos(k * mp.pi * x / R) + b * mp.sin(k * mp.pi * x / R)
                       for k, (a, b) in enumerate(cs))

    atoms = []
    for k, (a, b) in enumerate(cs):
        if k == 0:
            if a:
                atoms.append((mp.mpf(0), 2 * mp.pi * a))
            continue
        fr = k * mp.pi / R
        atoms.append((fr, mp.pi * mp.mpc(a, -b)))
        atoms.append((-fr, mp.pi * mp.mpc(a, b)))

    def band(w):
        return mp.fsum(abs(c) for fr, c in atoms if abs(fr) <= w)

    def tail(w):
        return mp.fsum(abs(c) for fr, c in atoms if abs(fr) > w)

    edge = max([abs(fr) for fr, _ in atoms] or [mp.mpf(0)])
    return TargetFunction("trig_poly", {"coeffs": [[float(a), float(b)] for a, b in cs], "R": float(R)},
                          f, band, tail, atoms=tuple(atoms), band_edge=edge)


def relu_target():
    # fhat = delta_1 + delta_{-1} - 2 delta_0 - xi^{-2} 1{|xi|>1} plus a derivative part at 0
    def band(w):
        w = mp.mpf(w)
        if w < 1:
            return mp.mpf(2)
        return 4 + 2 * (1 - 1 / w)

    def tail(w):
        w = mp.mpf(w)
        if w < 1:
            return mp.mpf(4)
        return 2 / w

    return TargetFunction("relu", {}, lambda x: x if x > 0 else mp.mpf(0) * x,
                          band, tail, kinks=(0,))


def abs_target():
    # |x| = 2 relu(x) - x; the linear part lives at xi = 0 only
    r = relu_target()
    return TargetFunction("abs", {}, lambda x: abs(x),
                          lambda w: 2 * r.band_mass(w), lambda w: 2 * r.tail_mass(w), kinks=(0,))


def _sigmoid(x):
    if x >= 0:
        return 1 / (1 + mp.exp(-x))
    e = mp.exp(x)
    return e / (1 + e)


def sigmoid_masses():
    """Closed-form masses of pi delta_0 + (pi/sinh(pi xi) - 1{|xi|<=1}/xi) d xi / i."""
    c = mp.log(2 / mp.pi)

    def inner(m):
        # int_0^m (1/t - pi/sinh(pi t)) dt for m <= 1
        if m == 0:
            return mp.mpf(0)
        return mp.log(m / mp.tanh(mp.pi * m / 2)) - c

    def band(w):
        w = mp.mpf(w)
        out = mp.pi + 2 * inner(min(w, 1))
        if w > 1:
            out += 2 * (mp.log(mp.tanh(mp.pi * w / 2)) - mp.log(mp.tanh(mp.pi / 2)))
        return out

    def tail(w):
        w = mp.mpf(w)
        if w < 1:
            return 2 * (inner(1) - inner(w)) - 2 * mp.log(mp.tanh(mp.pi / 2))
        return -2 * mp.log(mp.tanh(mp.pi * w / 2))

    return band, tail


def sigmoid_target():
    band, tail = sigmoid_masses()
    return TargetFunction("sigmoid", {}, _sigmoid, band, tail)


def gauss_smoothed_indicator_target(a=-1, b=1, sigma=0.5):
    """Indicator of [a, b] convolved with N(0, sigma^2)."""
    a, b, s = mp.mpf(a), mp.mpf(b), mp.mpf(sigma)
    L = b - a

    def f(x):
        return (mp.erf((b - x) / (s * mp.sqrt(2))) - mp.erf((a - x) / (s * mp.sqrt(2)))) / 2

    def dens(xi):
        # |fhat(xi)| = |2 sin(xi L / 2) / xi| exp(-sigma^2 xi^2 / 2)
        if xi == 0:
            return L
        return abs(2 * mp.sin(xi * L / 2) / xi) * mp.exp(-(s * xi) ** 2 / 2)

    def band(w):
        w = mp.mpf(w)
        if w == 0:
            return mp.mpf(0)
        zeros = [2 * mp.pi * k / L for k in range(1, int(w * L / (2 * mp.pi)) + 1)]
        pts = [mp.mpf(0)] + [z for z in zeros if z < w] + [w]
        return 2 * mp.fsum(mp.quad(dens, [u, v]) for u, v in zip(pts[:-1], pts[1:]))

    def tail(w):
        # bounded by L * int_{|xi|>w} e^{-sigma^2 xi^2/2}
        return L * mp.sqrt(2 * mp.pi) / s * mp.erfc(s * mp.mpf(w) / mp.sqrt(2))

    return TargetFunction("gauss_smoothed_indicator", {"a": float(a), "b": float(b), "sigma": float(s)},
                          f, band, tail)


def exp_quadratic_target(c=0.1):
    c = mp.mpf(c)
    return TargetFunction("exp_quadratic", {"c": float(c)}, lambda x: mp.exp(c * x * x))


def custom_target(fn, name="custom", kinks=(), band_mass=None, tail_mass=None, **params):
    return TargetFunction(name, dict(params), fn, band_mass, tail_mass, kinks=tuple(kinks))


def lipschitz_sample_target(k, M, fn, kinks=()):
    """A C^{k-1} target with Lipschitz (k-1)-th derivative bounded by M."""
    return TargetFunction("lipschitz_sample", {"k": k, "M": M}, fn, kinks=tuple(kinks))


_TARGETS = {"cos": cos_target, "sin": sin_target, "sinc": sinc_target, "relu": relu_target,
            "sigmoid": sigmoid_target, "abs": abs_target, "exp_quadratic": exp_quadratic_target,
            "gauss_smoothed_indicator": gauss_smoothed_indicator_target,
            "smoothed_indicator": gauss_smoothed_indicator_target}


def load_target(spec):
    """'cos:2', 'relu', 'exp_quadratic:0.1', 'smoothed_indicator:-1:1:0.5',
    'trig_poly:{"coeffs": [[0,0],[1,0]], "R": 3.14}'."""
    if isinstance(spec, TargetFunction):
        return spec
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name == "trig_poly":
        cfg = json.loads(rest)
        return trig_poly_target(cfg["coeffs"], cfg.get("R", math.pi))
    if name not in _TARGETS:
        raise ValueError("unknown target %r" % name)
    args = [mp.mpf(v) for v in rest.split(":") if v.strip()] if rest else []
    return _TARGETS[name](*args)


# -- projection -------------------------------------------------------------------------

@dataclass
class ProjectionResult:
    D: int
    coeffs: list
    residual_norm: object
    target: TargetFunction
    measure: object
    basis: OrthoBasis = field(repr=False)
    norm_f2: object = None
    residual_direct: object = None
    _r_vals: list = field(default=None, repr=False)

    def residual_values(self):
        """r_D at the rule's nodes (mpfr)."""
        if self._r_vals is None:
            b = self.basis
            with precision(b.digits):
                f = _target_values(b, self.target)
                r = list(f)
                for j, c in enumerate(self.coeffs):
                    cj = to_mpfr(c)
                    pj = b.values(j)
                    r = [ri - cj * p for ri, p in zip(r, pj)]
            self._r_vals = r
        return self._r_vals

    def evaluate(self, x):
        return self.basis.evaluate(self.coeffs, x)


def _target_values(basis, target):
    cache = basis.__dict__.setdefault("_fvals", {})
    key = id(target)
    if key not in cache:
        with mp.workdps(basis.digits):
            vals = [target(x) for x in basis.nodes]
        with precision(basis.digits):
            cache[key] = (target, vec_mpfr(vals))
    return cache[key][1]


def _norm2(basis, target):
    with precision(basis.digits):
        f = _target_values(basis, target)
        return basis.inner(f, f)


def project_all(basis, target, degrees, check=True, tol=None):
    """Projections for several degrees sharing one set of coefficients."""
    degrees = sorted(set(degrees))
    if degrees and degrees[-1] > basis.max_degree:
        raise ValueError("degree %d exceeds basis max_degree %d" % (degrees[-1], basis.max_degree))
    prec = basis.model.precision_digits
    with precision(basis.digits):
        f = _target_values(basis, target)
        nf2 = basis.inner(f, f)
        if check:
            _check_norm(basis, target, nf2, tol)
        top = degrees[-1] if degrees else -1
        coeffs = [basis.inner(f, basis.values(j)) for j in range(top + 1)]
        out = {}
        partial = mpfr(0)
        r = list(f)
        for j in range(top + 1):
            partial += coeffs[j] * coeffs[j]
            r = [ri - coeffs[j] * p for ri, p in zip(r, basis.values(j))]
            if j in degrees:
                gap = nf2 - partial
                floor = -mpfr(10) ** (-prec + 10) * max(nf2, mpfr(1))
                if gap < floor:
                    raise PrecisionExhausted("negative Parseval gap %s at D=%d" % (gap, j))
                res = gmpy2.sqrt(max(gap, mpfr(0)))
                direct = gmpy2.sqrt(basis.inner(r, r))
                out[j] = ProjectionResult(j, vec_mpf(coeffs[: j + 1]), to_mpf(res), target, basis.model,
                                          basis, to_mpf(nf2), to_mpf(direct), list(r))
        return out


def project(basis, target, D, check=True, tol=None):
    """Degree-D best approximation in L2 of the rule's measure."""
    return project_all(basis, target, [D], check, tol)[D]


def _check_norm(basis, target, nf2, tol):
    """Compare ||f||^2 from the rule with a rule twice as large."""
    tol = mp.mpf(10) ** (-basis.model.precision_digits // 2) if tol is None else mp.mpf(tol)
    n2 = 2 * basis.n if not basis.split else basis.n  # split rules hold 2n nodes for n per piece
    model = basis.model
    with mp.workdps(basis.digits):
        if model.pieces:
            xs, ws = model.split_rule(n2)
        else:
            xs, ws = model.gauss_rule(n2)
        fine = mp.fsum(w * target(x) ** 2 for x, w in zip(xs, ws))
        coarse = to_mpf(nf2)
        if abs(fine - coarse) > tol * max(abs(fine), mp.mpf(10) ** (-basis.model.precision_digits)):
            raise QuadratureInsufficient("||f||^2 from %d and %d node rules differ by %s"
                                         % (basis.n, len(xs), mp.nstr(abs(fine - coarse), 5)))


def _per_piece(basis):
    return basis.n // 2 if basis.split else basis.n


def project_auto(model, target, degrees, n_nodes=None, tol=None, max_nodes=MAX_NODES):
    """project_all with the rule doubled until the norm check passes."""
    degrees = sorted(set([degrees] if isinstance(degrees, int) else degrees))
    top = degrees[-1]
    n = n_nodes or top + DEFAULT_EXTRA_NODES
    while True:
        basis = build_basis(model, top, n)
        try:
            res = project_all(basis, target, degrees, check=True, tol=tol)
            return res if len(degrees) > 1 else res[top]
        except QuadratureInsufficient:
            n *= 2
            if n > max_nodes:
                raise


# -- Fourier residual probes ---------------------------------------------------------------

@dataclass
class FourierResidualProbe:
    D: int
    xi_grid: list
    phi_values: list
    derivative_checks: list
    envelope: list
    envelope_ratio: list
    residual_norm: object
    floor: object = 0
    envelope_kind: str = ""

    def max_ratio(self):
        return max(self.envelope_ratio) if self.envelope_ratio else mp.mpf(0)

    def sup_phi(self):
        return max(abs(p) for p in self.phi_values)


def envelope_value(model, D, xi, rnorm, seq=None):
    """Certified bound on |phi(xi)| from the measure's tail class."""
    t = model.tail
    xi = abs(mp.mpf(xi))
    with mp.workdps(bounds._DIGITS):
        if t.kind == "subexp":
            return mp.e * rnorm * bounds.strip_bound(D, t.K * mp.pi * xi / 4), "tanh"
        if t.kind in ("strictly_subexp", "bounded"):
            if D > t.r * (t.K * xi) ** t.r:
                return t.A * rnorm * bounds.finite_order_bound(D, t.r, t.K, xi), "finite_order"
            return rnorm, "trivial"
        seq = seq or t.sequence
        from . import carleman
        q = carleman.qdc_bound(seq, 1, t.K, D, xi) if xi > 0 else None
        return (rnorm * min(q.value, 1) if q else mp.mpf(0)), "qdc"


def fourier_probe(result, xi_grid, derivative_orders=None, with_envelope=True):
    """phi(xi) = sum_i w_i r_D(x_i) e^{-i xi x_i} on a grid, moment checks
    |<r_D, x^m>| for m <= D and the ratio of |phi| to the certified envelope."""
    b = result.basis
    D = result.D
    with precision(b.digits):
        r = result.residual_values()
        wr = [w * ri for w, ri in zip(b._w, r)]
        cos_t, sin_t = b.trig_table(xi_grid)
        phis = []
        for ct, st in zip(cos_t, sin_t):
            re = gmpy2.fsum([a * c for a, c in zip(wr, ct)])
            im = -gmpy2.fsum([a * s for a, s in zip(wr, st)])
            phis.append(mp.mpc(to_mpf(re), to_mpf(im)))
        orders = range(D + 1) if derivative_orders is None else derivative_orders
        checks = []
        xp = [mpfr(1)] * len(wr)
        m_cur = 0
        for m in sorted(orders):
            while m_cur < m:
                xp = [p * x for p, x in zip(xp, b._x)]
                m_cur += 1
            checks.append((m, to_mpf(abs(gmpy2.fsum([a * p for a, p in zip(wr, xp)])))))
        scale = gmpy2.fsum([abs(a) for a in wr])
        floor = to_mpf(scale * mpfr(10) ** (-b.digits + 10))
    rnorm = result.residual_direct
    env, ratio, kind = [], [], ""
    if with_envelope:
        for xi, ph in zip(xi_grid, phis):
            e, kind = envelope_value(b.model, D, xi, rnorm)
            env.append(e)
            a = abs(ph)
            if e > 0:
                ratio.append(a / e)
            else:
                ratio.append(mp.mpf(0) if a <= floor else mp.inf)
    return FourierResidualProbe(D, list(xi_grid), phis, checks, env, ratio, rnorm, floor, kind)


def moment_norm(basis, m):
    """||x^m|| on the rule."""
    with precision(basis.digits):
        return to_mpf(gmpy2.sqrt(gmpy2.fsum([w * x ** (2 * m) for w, x in zip(basis._w, basis._x)])))


def orthogonality_report(result):
    """max_m |<r_D, x^m>| / (||r_D|| ||x^m||) for m <= D."""
    probe = fourier_probe(result, [], with_envelope=False)
    worst = mp.mpf(0)
    rn = result.residual_direct
    for m, v in probe.derivative_checks:
        if rn == 0:
            continue
        worst = max(worst, v / (rn * moment_norm(result.basis, m)))
    return worst


def plancherel_residual(result):
    """||r_D||^2 rebuilt from (1/2 pi) int phi conj(fhat) for band-limited targets."""
    t = result.target
    if t.atoms is not None:
        freqs = [fr for fr, _ in t.atoms]
        probe = fourier_probe(result, freqs, derivative_orders=[], with_envelope=False)
        with mp.workdps(result.basis.digits):
            return mp.re(mp.fsum(mp.conj(c) * ph for (_, c), ph in zip(t.atoms, probe.phi_values)) / (2 * mp.pi))
    if t.fhat_density is not None and t.band_edge is not None:
        # Gauss-Legendre in xi over the band; phi is entire so this converges fast
        m = 64
        with mp.workdps(result.basis.digits):
            xs, ws = _legendre(m, -t.band_edge, t.band_edge)
        probe = fourier_probe(result, xs, derivative_orders=[], with_envelope=False)
        with mp.workdps(result.basis.digits):
            return mp.re(mp.fsum(w * t.fhat_density(x) * ph for x, w, ph in zip(xs, ws, probe.phi_values)) / (2 * mp.pi))
    raise ValueError("target %s is not band-limited" % t)


def _legendre(m, lo, hi):
    from .carleman import _gl_rule
    x, w = _gl_rule(m)
    return [lo + (hi - lo) * xi for xi in x], [(hi - lo) * wi for wi in w]


# -- certificates ---------------------------------------------------------------------------

def certified_bound(model, target, D, Omega, seq=None):
    """Residual bound for degree D at frequency cutoff Omega, or None when
    the finite-order envelope is not admissible."""
    t = model.tail
    bm, tm = target.band_mass(Omega), target.tail_mass(Omega)
    with mp.workdps(bounds._DIGITS):
        tail = mp.mpf(tm) / (2 * mp.pi)
        if t.kind == "subexp":
            return bounds.subexp_band_term(D, t.K, Omega, bm) + tail
        if t.kind in ("strictly_subexp", "bounded"):
            if not D > t.r * (t.K * mp.mpf(Omega)) ** t.r:
                return None
            return bounds.strict_band_term(D, t.A, t.K, t.r, Omega, bm) + tail
        val, _ = bounds.qdc_residual_bound(seq or t.sequence, 1, t.K, D, Omega, bm, tm)
        return val


def residual_bound_check(result, plan):
    """Measured residual against the plan's bound re-evaluated at result.D."""
    if result.D < plan.floor:
        raise PlanInvalid("degree %d is below the plan's floor %d" % (result.D, plan.floor))
    e = plan.inputs_echo
    bm = e["band_mass"]
    with mp.workdps(bounds._DIGITS):
        if plan.regime == "subexp":
            band = bounds.subexp_band_term(result.D, e["K"], plan.Omega, bm)
        elif plan.regime in ("strictly_subexp", "bounded"):
            band = bounds.strict_band_term(result.D, e["A"], e["K"], e["r"], plan.Omega, bm)
        else:
            raise PlanInvalid("no closed-form bound for regime %s" % plan.regime)
        bound = band + plan.eps_split["tail_term"]
        measured = result.residual_norm
        return {"D": result.D, "measured": measured, "bound": bound,
                "ratio": measured / bound if bound > 0 else mp.inf, "ok": measured <= bound}


# -- small dimensions ---------------------------------------------------------------------------

def graded_monomials(d, D):
    """Exponent tuples of total degree <= D in graded lexicographic order."""
    out = []
    for deg in range(D + 1):
        for c in itertools.combinations_with_replacement(range(d), deg):
            e = [0] * d
            for i in c:
                e[i] += 1
            out.append(tuple(e))
    # graded lex: within a degree, larger leading exponents first
    return sorted(out, key=lambda e: (sum(e), tuple(-v for v in e)))


def _ldl_solve(G, rhs):
    """Symmetric solve with diagonal pivoting; raises on a nonpositive pivot."""
    n = G.rows
    A = G.copy()
    perm = list(range(n))
    L = mp.eye(n)
    Dg = [mp.mpf(0)] * n
    for k in range(n):
        p = max(range(k, n), key=lambda i: A[i, i])
        if p != k:
            A = _swap(A, k, p)
            L = _swap_rows_cols_L(L, k, p)
            perm[k], perm[p] = perm[p], perm[k]
        if not A[k, k] > 0:
            raise PrecisionExhausted("Gram matrix lost positivity at pivot %d" % k)
        Dg[k] = A[k, k]
        for i in range(k + 1, n):
            L[i, k] = A[i, k] / Dg[k]
        for i in range(k + 1, n):
            for j in range(k + 1, i + 1):
                A[i, j] -= L[i, k] * A[j, k]
                A[j, i] = A[i, j]
    b = [rhs[perm[i]] for i in range(n)]
    y = [mp.mpf(0)] * n
    for i in range(n):
        y[i] = b[i] - mp.fsum(L[i, j] * y[j] for j in range(i))
    z = [y[i] / Dg[i] for i in range(n)]
    x = [mp.mpf(0)] * n
    for i in reversed(range(n)):
        x[i] = z[i] - mp.fsum(L[j, i] * x[j] for j in range(i + 1, n))
    out = [mp.mpf(0)] * n
    for i in range(n):
        out[perm[i]] = x[i]
    return out


def _swap(A, i, j):
    A = A.copy()
    n = A.rows
    for k in range(n):
        A[i, k], A[j, k] = A[j, k], A[i, k]
    for k in range(n):
        A[k, i], A[k, j] = A[k, j], A[k, i]
    return A


def _swap_rows_cols_L(L, i, j):
    # swap the already computed parts of rows i and j (columns < min(i, j))
    L = L.copy()
    for k in range(min(i, j)):
        L[i, k], L[j, k] = L[j, k], L[i, k]
    return L


@dataclass
class DProjection:
    D: int
    monomials: list
    coeffs: list
    residual_norm: object
    points: list
    weights: list
    residual: list
    digits: int


def _product_rule(model_d, n):
    if isinstance(model_d, EmpiricalMeasure):
        pts = [tuple(mp.mpf(float(v)) for v in row) for row in model_d.samples]
        w = mp.mpf(1) / len(pts)
        return pts, [w] * len(pts), max(f for f in [30])
    rules = [f.gauss_rule(n) for f in model_d.factors]
    pts, wts = [], []
    for combo in itertools.product(*[list(zip(*r)) for r in rules]):
        pts.append(tuple(c[0] for c in combo))
        w = mp.mpf(1)
        for c in combo:
            w *= c[1]
        wts.append(w)
    return pts, wts, model_d.factors[0].working_digits


def project_d(model_d, target_d, D, n_nodes=None, max_points=200000):
    """Total-degree-D projection in R^d (d <= 6) by a Gram solve on a
    product Gauss grid (or on the samples of an empirical measure)."""
    d = model_d.d
    if d > MAX_DIM:
        raise DimensionTooHigh("d=%d exceeds %d" % (d, MAX_DIM))
    n_basis = math.comb(d + D, D)
    if n_basis > 2 * 10 ** 5:
        raise BasisTooLarge("C(d+D, D) = %d monomials" % n_basis)
    n = n_nodes or D + 16
    if not isinstance(model_d, EmpiricalMeasure) and n ** d > max_points:
        raise BasisTooLarge("product grid of %d^%d points" % (n, d))
    pts, wts, digits = _product_rule(model_d, n)
    mons = graded_monomials(d, D)
    with mp.workdps(digits):
        fv = [mp.mpf(target_d(p)) for p in pts]
        V = [[_mono(p, e) for e in mons] for p in pts]
        m = len(mons)
        G = mp.matrix(m, m)
        rhs = [mp.mpf(0)] * m
        for row, w, f in zip(V, wts, fv):
            for i in range(m):
                wi = w * row[i]
                rhs[i] += wi * f
                for j in range(i + 1):
                    G[i, j] += wi * row[j]
        for i in range(m):
            for j in range(i):
                G[j, i] = G[i, j]
        c = _ldl_solve(G, rhs)
        res = [f - mp.fsum(ci * vi for ci, vi in zip(c, row)) for f, row in zip(fv, V)]
        rn = mp.sqrt(mp.fsum(w * r * r for w, r in zip(wts, res)))
    return DProjection(D, mons, c, rn, pts, wts, res, digits)


def _mono(p, e):
    v = mp.mpf(1)
    for x, k in zip(p, e):
        if k:
            v *= x ** k
    return v


def kappa4(proj, vs):
    """|| (prod_j <v_j, x>)^2 ||^{1/2} = (E prod^4)^{1/4}."""
    with mp.workdps(proj.digits):
        s = mp.fsum(w * _dots(p, vs) ** 4 for p, w in zip(proj.points, proj.weights))
        return s ** (mp.mpf(1) / 4)


def _dots(p, vs):
    out = mp.mpf(1)
    for v in vs:
        out *= mp.fsum(a * b for a, b in zip(p, v))
    return out


def directional_derivative(proj, u, zeta, vs):
    """d^k/d xi^k phi(zeta u)[v_1..v_k] = sum w (-i)^k prod <v_j,x> r e^{-i zeta <u,x>}."""
    k = len(vs)
    with mp.workdps(proj.digits):
        s = mp.fsum(w * _dots(p, vs) * r * mp.expj(-zeta * mp.fsum(a * b for a, b in zip(u, p)))
                    for p, w, r in zip(proj.points, proj.weights, proj.residual))
        return (mp.mpc(0, -1) ** k) * s


def derivative_envelope(tail, D, k, zeta, rnorm, kap):
    """Bound on |d^k phi(zeta u)[v..]|: Cauchy-Schwarz with kappa_4 and the
    one-dimensional lemma applied to the order-(D-k) zero."""
    zeta = abs(mp.mpf(zeta))
    if tail.kind == "subexp":
        return mp.sqrt(mp.e) * rnorm * kap * bounds.strip_bound(D - k, tail.K * mp.pi * zeta / 2)
    if D - k > tail.r * (2 * tail.K * zeta) ** tail.r:
        return (mp.sqrt(tail.A) * rnorm * kap
                * bounds.finite_order_bound(D - k, tail.r, 2 * tail.K, zeta))
    return rnorm * kap


def directional_probe_d(model_d, target_d, D, directions, zetas, n_nodes=None):
    """Project in R^d, then probe phi(zeta u) along each unit direction u."""
    proj = project_d(model_d, target_d, D, n_nodes)
    probes = []
    with mp.workdps(proj.digits):
        floor = mp.mpf(10) ** (-proj.digits + 10)
        checks = []
        for e in proj.monomials:
            checks.append((e, abs(mp.fsum(w * r * _mono(p, e)
                                          for p, w, r in zip(proj.points, proj.weights, proj.residual)))))
        for u in directions:
            u = [mp.mpf(v) for v in u]
            nu = mp.sqrt(mp.fsum(v * v for v in u))
            u = [v / nu for v in u]
            phis = [directional_derivative(proj, u, z, []) for z in zetas]
            tail = model_d.factors[0].tail if isinstance(model_d, ProductMeasure) else None
            env, ratio = [], []
            for z, ph in zip(zetas, phis):
                if tail is None:
                    e = proj.residual_norm
                elif tail.kind == "subexp":
                    e = mp.e * proj.residual_norm * bounds.strip_bound(D, tail.K * mp.pi * abs(z) / 4)
                elif D > tail.r * (tail.K * abs(z)) ** tail.r:
                    e = tail.A * proj.residual_norm * bounds.finite_order_bound(D, tail.r, tail.K, abs(z))
                else:
                    e = proj.residual_norm
                env.append(e)
                ratio.append(abs(ph) / e if e > 0 else (mp.mpf(0) if abs(ph) <= floor else mp.inf))
            probes.append(FourierResidualProbe(D, list(zetas), phis, checks, env, ratio,
                                               proj.residual_norm, floor, "directional"))
    return probes, proj
