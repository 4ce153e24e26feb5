"""Residual envelopes from complex analysis and the degree planners built on them.

All arithmetic is done in mpmath so that envelopes far below 1e-300 stay
representable; `log_*` variants return natural logarithms.
"""

import math
from dataclasses import dataclass, field

import mpmath as mp

from . import carleman
from .errors import DegreeTooSmall, ParameterOutOfRange, PlanInvalid, TailNeverSmall

_DIGITS = 50
REGIMES = ("strictly_subexp", "subexp", "carleman_general", "bounded")


def _wd():
    # never lower a caller's precision
    return mp.workdps(max(_DIGITS, mp.mp.dps))


def _mp(x):
    return x if isinstance(x, mp.mpf) else mp.mpf(x)


def _log_tanh(y):
    # log tanh(y) = log1p(-q) - log1p(q), q = e^{-2y}; accurate for large y
    q = mp.exp(-2 * y)
    return mp.log1p(-q) - mp.log1p(q)


# -- envelopes ----------------------------------------------------------------------

def log_strip_bound(D, xi_abs):
    with _wd():
        xi = abs(_mp(xi_abs))
        if xi == 0:
            return -mp.inf
        return D * _log_tanh(xi)


def strip_bound(D, xi_abs):
    """tanh(|xi|)^D: envelope for functions bounded by 1 on the strip
    |Im z| < pi/4 with a zero of order D at the origin."""
    if D < 0:
        raise ValueError("D must be nonnegative")
    with _wd():
        if D == 0:
            return mp.mpf(1)
        return mp.exp(log_strip_bound(D, xi_abs))


def finite_order_floor(r, K, xi_abs):
    """Smallest admissible integer degree: D > r (K xi)^r."""
    with _wd():
        c = _mp(r) * (_mp(K) * abs(_mp(xi_abs))) ** _mp(r)
        return int(mp.floor(c)) + 1


def log_finite_order_bound(D, r, K, xi_abs):
    with _wd():
        r, K, xi = _mp(r), _mp(K), abs(_mp(xi_abs))
        if not D > r * (K * xi) ** r:
            raise DegreeTooSmall("need D > r (K xi)^r = %s, got D=%s"
                                 % (mp.nstr(r * (K * xi) ** r, 10), D))
        if xi == 0:
            return -mp.inf
        return (D / r) * mp.log(mp.e * r / D) + D * mp.log(K * xi)


def finite_order_bound(D, r, K, xi_abs):
    """(e r / D)^{D/r} (K |xi|)^D for entire functions of order r with
    |phi(z)| <= exp((K|z|)^r) and a zero of order D at 0."""
    if r < 1:
        raise ValueError("r must be >= 1")
    with _wd():
        return mp.exp(log_finite_order_bound(D, r, K, xi_abs))


def finite_order_bound_by_optimisation(D, r, K, xi_abs, lam_max=100, n=20001):
    """Brute-force min over lambda in [1, lam_max] of exp(-D log lambda + (lambda K xi)^r)."""
    with _wd():
        r, K, xi = _mp(r), _mp(K), _mp(xi_abs)
        best = mp.inf
        for i in range(n):
            lam = 1 + (mp.mpf(lam_max) - 1) * i / (n - 1)
            best = min(best, -D * mp.log(lam) + (lam * K * xi) ** r)
        return mp.exp(best)


# -- degree plans -------------------------------------------------------------------

@dataclass
class DegreePlan:
    D: int
    Omega: object
    eps_split: dict
    regime: str
    inputs_echo: dict
    floor: int = 1
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError("unknown regime %r" % self.regime)

    def total(self):
        return self.eps_split["band_term"] + self.eps_split["tail_term"]

    def as_row(self):
        e = self.inputs_echo
        return {"regime": self.regime, "eps": float(e["eps"]), "D": self.D,
                "Omega": float(self.Omega), "band_term": float(self.eps_split["band_term"]),
                "tail_term": float(self.eps_split["tail_term"]),
                "A": _f(e.get("A")), "K": _f(e.get("K")), "r": _f(e.get("r")),
                "band_mass": _f(e.get("band_mass"))}


def _f(v):
    return "" if v is None else float(v)


def _rel_le(a, b):
    # a <= b up to the last few working digits
    return a <= b * (1 + mp.mpf(10) ** (-max(_DIGITS, mp.mp.dps) + 8))


def choose_omega(eps, tail_mass, Omega_min=1, max_doublings=64, bisections=60):
    """Smallest Omega with tail_mass(Omega)/(2 pi) <= eps/2: doubling from
    Omega_min, then bisection between the last failure and first success."""
    with _wd():
        eps = _mp(eps)
        ok = lambda om: _rel_le(_mp(tail_mass(om)) / (2 * mp.pi), eps / 2)
        om = _mp(Omega_min)
        if ok(om):
            return om
        lo = om
        for _ in range(max_doublings):
            om = 2 * om
            if ok(om):
                break
            lo = om
        else:
            raise TailNeverSmall("tail mass stays above eps/2 up to Omega=%s" % mp.nstr(om, 6))
        hi = om
        for _ in range(bisections):
            mid = (lo + hi) / 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        return hi


def _band_budget(eps, tail_term):
    # whatever the tail leaves is available to the band term (at least eps/2)
    return eps - tail_term


def strict_band_term(D, A, K, r, Omega, band_mass):
    with _wd():
        if band_mass == 0:
            return mp.mpf(0)
        return _mp(A) * _mp(band_mass) / (2 * mp.pi) * finite_order_bound(D, r, K, Omega)


def subexp_band_term(D, K, Omega, band_mass):
    with _wd():
        if band_mass == 0:
            return mp.mpf(0)
        return mp.e * _mp(band_mass) / (2 * mp.pi) * strip_bound(D, _mp(K) * mp.pi * _mp(Omega) / 4)


def plan_degree_strict(eps, A, K, r, band_mass, tail_mass, Omega=None, Omega_min=1):
    """Minimal degree certified by the finite-order envelope.

    Omega defaults to the smallest value whose tail mass fits in eps/2; the
    band term then gets the rest of the budget.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if r < 1:
        raise ValueError("r must be >= 1")
    with _wd():
        eps, A, K, r = _mp(eps), _mp(A), _mp(K), _mp(r)
        Om = _mp(Omega) if Omega is not None else choose_omega(eps, tail_mass, Omega_min)
        tail_term = _mp(tail_mass(Om)) / (2 * mp.pi)
        if not _rel_le(tail_term, eps):
            raise TailNeverSmall("tail term %s exceeds eps at Omega=%s" % (mp.nstr(tail_term, 6), mp.nstr(Om, 6)))
        bm = _mp(band_mass(Om))
        budget = _band_budget(eps, tail_term)
        floor = int(mp.ceil(r * (K * Om) ** r)) + 1
        term = lambda D: strict_band_term(D, A, K, r, Om, bm)
        good = lambda D: _rel_le(term(D), budget)
        # the envelope decreases in D beyond the floor: gallop, then bisect
        lo, hi = floor - 1, floor
        while not good(hi):
            lo, hi = hi, 2 * hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if mid >= floor and good(mid):
                hi = mid
            else:
                lo = mid
        D = hi
        return DegreePlan(D, Om, {"band_term": term(D), "tail_term": tail_term},
                          "bounded" if r == 1 else "strictly_subexp",
                          {"eps": eps, "A": A, "K": K, "r": r, "band_mass": bm},
                          floor=floor)


def plan_degree_subexp(eps, K, band_mass, tail_mass, Omega=None, Omega_min=1):
    """Minimal degree certified by the strip envelope tanh(K pi Omega/4)^D,
    obtained by inverting the band term in closed form."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    with _wd():
        eps, K = _mp(eps), _mp(K)
        Om = _mp(Omega) if Omega is not None else choose_omega(eps, tail_mass, Omega_min)
        tail_term = _mp(tail_mass(Om)) / (2 * mp.pi)
        if not _rel_le(tail_term, eps):
            raise TailNeverSmall("tail term exceeds eps at Omega=%s" % mp.nstr(Om, 6))
        bm = _mp(band_mass(Om))
        budget = _band_budget(eps, tail_term)
        if bm == 0:
            D = 1
        else:
            x = mp.log(budget * 2 * mp.pi / (mp.e * bm)) / _log_tanh(K * mp.pi * Om / 4)
            # D can be astronomically large; resolve it to the unit
            extra = int(mp.log10(abs(x) + 1)) + 10
            with mp.workdps(_DIGITS + extra):
                x = mp.log(budget * 2 * mp.pi / (mp.e * bm)) / _log_tanh(K * mp.pi * Om / 4)
                D = max(1, int(mp.ceil(x - mp.mpf(10) ** (-_DIGITS + 10))))
                # guard the rounding of the closed form in both directions
                while not _rel_le(subexp_band_term(D, K, Om, bm), budget):
                    D += 1
                while D > 1 and _rel_le(subexp_band_term(D - 1, K, Om, bm), budget):
                    D -= 1
        return DegreePlan(D, Om, {"band_term": subexp_band_term(D, K, Om, bm), "tail_term": tail_term},
                          "subexp", {"eps": eps, "K": K, "band_mass": bm}, floor=1)


def verify_plan(plan, band_mass=None, tail_mass=None):
    """Re-evaluate a plan's bound decomposition; returns (band, tail, ok)."""
    e = plan.inputs_echo
    with _wd():
        Om = plan.Omega
        bm = _mp(band_mass(Om)) if band_mass is not None else e["band_mass"]
        tail = _mp(tail_mass(Om)) / (2 * mp.pi) if tail_mass is not None else plan.eps_split["tail_term"]
        if plan.regime in ("strictly_subexp", "bounded"):
            if plan.D < plan.floor:
                raise PlanInvalid("degree below the regime floor")
            band = strict_band_term(plan.D, e["A"], e["K"], e["r"], Om, bm)
        elif plan.regime == "subexp":
            band = subexp_band_term(plan.D, e["K"], Om, bm)
        else:
            raise PlanInvalid("plans of regime %s carry no closed-form certificate" % plan.regime)
        return band, tail, _rel_le(band + tail, e["eps"])


# -- smoothed targets -----------------------------------------------------------------

DEFAULT_SMOOTHED_CONSTANTS = {"R": 1.0, "Omega": 1.0, "D": 1.0, "exponent": 1.0}


def truncation_radius(eps, sigma, k, tail, c_R=1.0):
    """Radius beyond which the smoothed target may be cut off at cost eps/2."""
    eps, sigma = float(eps), float(sigma)
    if tail.kind == "subexp":
        return c_R * 4 * (sigma + tail.K) * (2 * math.log(4 * math.e / eps) + k * math.log(5))
    r = float(tail.r)
    if r == 1:
        return c_R * 2 * (sigma + tail.K) * math.sqrt(2 * math.log(2 / eps) + k * math.log(5))
    # Chernoff tail P(|<u,x>| > t) <= A exp(-(t/b)^c) with c = r/(r-1)
    b = tail.K * r * (r - 1) ** (1 / r - 1)
    c_prime = min(r / (r - 1), 2.0)
    return c_R * 2 * (sigma + b) * (2 * math.log(4 / eps) + k * math.log(5)) ** (1 / c_prime)


def plan_degree_smoothed(eps, sigma, k_intrinsic, tail, constants=None):
    """Degree for approximating a Gaussian-smoothed Boolean target of
    intrinsic dimension k to accuracy eps.

    Growth formulas with every unpinned constant exposed in `constants`
    (keys R, Omega, D, exponent; default 1).  Logarithms of quantities below
    1 are clipped at 0 so the formulas stay monotone in sigma.
    """
    if not sigma > 0:
        raise ParameterOutOfRange("sigma must be positive")
    if k_intrinsic < 1:
        raise ParameterOutOfRange("intrinsic dimension must be >= 1")
    if not 0 < eps < 1:
        raise ParameterOutOfRange("eps must lie in (0, 1)")
    c = dict(DEFAULT_SMOOTHED_CONSTANTS)
    c.update(constants or {})
    eps, sigma, k = float(eps), float(sigma), int(k_intrinsic)
    L_eps = math.log(1 / eps)
    R = truncation_radius(eps, sigma, k, tail, c["R"])
    pos = lambda v: max(v, 0.0)
    if tail.kind == "subexp":
        L = L_eps + k * pos(math.log(k / sigma))
        Omega = c["Omega"] * math.sqrt(L) / sigma
        log_D = c["exponent"] / sigma * L
        D = math.ceil(c["D"] * math.exp(log_D)) if log_D < 700 else int(mp.ceil(c["D"] * mp.exp(log_D)))
        regime = "subexp"
    else:
        r = float(tail.r)
        inner = math.log(k / sigma) if r > 2 else math.log(1 / sigma)
        L = L_eps + k * pos(inner)
        Omega = c["Omega"] * math.sqrt(L) / sigma
        D = math.ceil(c["D"] * sigma ** (-r) * L ** (r / 2))
        regime = "bounded" if r == 1 else "strictly_subexp"
    D = max(int(D), 1)
    return DegreePlan(D, mp.mpf(Omega), {"band_term": eps / 4, "tail_term": eps / 4}, regime,
                      {"eps": eps, "sigma": sigma, "k": k, "A": tail.A, "K": tail.K,
                       "r": tail.r, "band_mass": None},
                      details={"R": R, "truncation_term": eps / 2, "constants": c})


# -- general Carleman class: evaluation only ----------------------------------------

def qdc_residual_bound(seq, B, K, D, Omega, band_mass, tail_mass=0, **kw):
    """Residual bound with the strip envelope replaced by the quantitative
    Denjoy-Carleman estimate of sup_{|xi| <= Omega} |phi(xi)| / ||r_D||."""
    q = carleman.qdc_bound(seq, B, K, D, Omega, **kw)
    with _wd():
        env = min(q.value, mp.mpf(B))
        return _mp(band_mass) / (2 * mp.pi) * env + _mp(tail_mass) / (2 * mp.pi), q


def pessimism_table(seq, degrees, x=0.1, K=1, B=1, **kw):
    """Complex-analytic vs real-variable envelopes for |phi(x)|/||r_D|| over D."""
    rows = []
    for D in degrees:
        q = carleman.qdc_bound(seq, B, K, D, x, **kw)
        real = carleman.real_variable_bound(seq, B, K, D, x)
        rows.append({"D": D, "complex": q.value, "real": real,
                     "log_ratio": mp.log(real) - mp.log(q.value), "alpha": q.alpha_star})
    return rows
