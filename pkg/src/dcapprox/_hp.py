"""Glue between mpmath (special functions, adaptive quadrature) and gmpy2
(fast extended-precision arithmetic in the inner loops)."""

import math
from contextlib import contextmanager

import gmpy2
import mpmath as mp
from gmpy2 import mpfr

GUARD_DIGITS = 20


def bits(digits):
    return int(math.ceil(digits * 3.3219280948873626)) + 8


@contextmanager
def precision(digits):
    """Set both mpmath and gmpy2 working precision to `digits` decimal digits."""
    with gmpy2.context(gmpy2.get_context(), precision=bits(digits)), mp.workdps(digits):
        yield


def to_mpfr(x):
    if isinstance(x, type(mpfr(0))):
        return +x
    if isinstance(x, mp.mpf):
        sign, man, exp, _bc = x._mpf_
        if man == 0 and exp != 0:
            return mpfr(float(x))
        v = gmpy2.mul_2exp(mpfr(man), exp)
        return -v if sign else v
    if isinstance(x, int):
        return mpfr(x)
    if isinstance(x, str):
        return mpfr(x)
    return to_mpfr(mp.mpf(x))


def to_mpf(y):
    if isinstance(y, mp.mpf):
        return y
    if not gmpy2.is_finite(y):
        return mp.mpf(float(y))
    if y == 0:
        return mp.mpf(0)
    m, e = y.as_mantissa_exp()
    return mp.mpf((int(m), int(e)))


def vec_mpfr(xs):
    return [to_mpfr(x) for x in xs]


def vec_mpf(ys):
    return [to_mpf(y) for y in ys]


def fsum(xs):
    return gmpy2.fsum(list(xs))
