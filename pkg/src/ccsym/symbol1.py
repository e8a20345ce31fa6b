"""One-dimensional Contou-Carrere symbol on R((t))*.

Two evaluation routes: the finite product formula (total over every supported
coefficient ring), and the residue formula exp res(log f dg/g) combined
multiplicatively with the unit and monomial cases (Q-algebras only).  Over a
field both reduce to the tame symbol.
"""

from __future__ import annotations

from math import gcd

from .errors import CharacteristicObstruction, DomainViolation, NotAUnit
from .series import (
    BiSeries,
    Window,
    decompose_unit,
    invert,
    leading_data,
    mul,
    partial_derivative,
    product_coefficient,
)


def series1(ring, terms):
    """Build a u-free series (an element of R((t))) from (t-exp, coeff) pairs."""
    return BiSeries.from_terms(ring, [((i, 0), c) for i, c in terms])


def _check_series1(f: BiSeries):
    for i, row in f.rows.items():
        for j in row:
            if j != 0:
                raise DomainViolation("a one-dimensional symbol argument has u-dependence")


def exp_nilpotent(ring, x):
    """exp of a nilpotent ring element (terminating sum)."""
    if ring.is_zero(x):
        return ring.one
    if ring.nilpotency_index(x) is None:
        raise DomainViolation("exp is only taken of nilpotent elements here")
    acc = ring.one
    power = ring.one
    fact_inv = ring.one
    n = 0
    while True:
        n += 1
        power = ring.mul(power, x)
        if ring.is_zero(power):
            break
        inv_n = ring.div_int(ring.one, n)
        if inv_n is None:
            raise CharacteristicObstruction(
                f"exp demands division by {n}, not invertible in {ring}")
        fact_inv = ring.mul(fact_inv, inv_n)
        acc = ring.add(acc, ring.mul(power, fact_inv))
    return acc


def decompose1(f: BiSeries, t_max=8):
    """Canonical decomposition of a unit of R((t)).

    Returns (minus_factors, r0, nu, plus_factors) with factor lists of
    (t-exponent, coefficient) pairs for the products prod(1 - d_i t^i).
    """
    _check_series1(f)
    dec = decompose_unit(f, Window(t_max, {i: 0 for i in range(0, t_max + 1)}))
    if dec.nu2 != 0:
        raise DomainViolation("u-valuation appeared in a one-dimensional argument")
    minus = [(i, c) for (i, j, c) in dec.minus_factors]
    plus = [(i, c) for (i, j, c) in dec.plus_factors]
    return minus, dec.f0, dec.nu1, plus


def _enumeration_bound(ring, minus):
    b = 0
    for i, c in minus:
        idx = ring.nilpotency_index(c)
        b = max(b, (idx - 1) * (-i))
    return b


def cc1_product(f: BiSeries, g: BiSeries):
    """The symbol by the explicit finite product formula (any supported ring)."""
    ring = f.ring
    _check_series1(f)
    _check_series1(g)
    f_minus, a0, nu_f, _ = decompose1(f, 0)
    g_minus, b0, nu_g, _ = decompose1(g, 0)
    bf = _enumeration_bound(ring, g_minus)
    bg = _enumeration_bound(ring, f_minus)
    _, _, _, f_plus = decompose1(f, max(0, bf))
    _, _, _, g_plus = decompose1(g, max(0, bg))
    fp = dict(f_plus)
    gp = dict(g_plus)

    value = ring.pow(a0, nu_g)
    value = ring.mul(value, ring.pow(b0, -nu_f))
    if (nu_f * nu_g) % 2:
        value = ring.neg(value)
    # numerator: positive part of f against negative part of g
    for (mj, b) in g_minus:
        j = -mj
        idx = ring.nilpotency_index(b)
        for i in range(1, (idx - 1) * j + 1):
            a = fp.get(i)
            if a is None:
                continue
            d = gcd(i, j)
            bp = ring.pow(b, i // d)
            if ring.is_zero(bp):
                continue
            base = ring.sub(ring.one, ring.mul(ring.pow(a, j // d), bp))
            value = ring.mul(value, ring.pow(base, d))
    # denominator: negative part of f against positive part of g
    for (mi, a) in f_minus:
        i = -mi
        idx = ring.nilpotency_index(a)
        for j in range(1, (idx - 1) * i + 1):
            b = gp.get(j)
            if b is None:
                continue
            d = gcd(i, j)
            ap = ring.pow(a, j // d)
            if ring.is_zero(ap):
                continue
            base = ring.sub(ring.one, ring.mul(ap, ring.pow(b, i // d)))
            value = ring.mul(value, ring.pow(base, -d))
    return value


def _log_factors1(ring, minus, plus, t_max):
    """log of prod(1 - c t^i) over both factor lists, as a u-free series."""
    rows = {}
    for (i, c) in list(minus) + list(plus):
        idx = ring.nilpotency_index(c)
        n_hi = (idx - 1) if idx is not None else (t_max // i if i > 0 else 0)
        cn = c
        for n in range(1, n_hi + 1):
            if ring.is_zero(cn):
                break
            term = ring.div_int(cn, n)
            if term is None:
                raise CharacteristicObstruction(
                    f"log expansion demands division by {n}, not invertible in {ring}")
            ti = i * n
            dst = rows.setdefault(ti, {})
            s = ring.add(dst.get(0, ring.zero), ring.neg(term))
            if ring.is_zero(s):
                dst.pop(0, None)
            else:
                dst[0] = s
            cn = ring.mul(cn, c)
    rows = {i: r for i, r in rows.items() if r}
    return BiSeries(ring, rows, Window(t_max, {i: 0 for i in range(0, t_max + 1)}))


def cc1_residue(f: BiSeries, g: BiSeries):
    """The symbol via exp res(log f dg/g), combined with the unit/monomial cases."""
    from .errors import InsufficientWindow

    ring = f.ring
    if not ring.contains_rationals():
        raise CharacteristicObstruction("the residue route needs Q in the coefficient ring")
    _check_series1(f)
    _check_series1(g)
    nu_f, _, _ = leading_data(f)
    nu_g, _, _ = leading_data(g)
    _, b0, _, _ = decompose1(g, 0)

    last = None
    res = None
    t_hi = 4
    for _ in range(5):
        try:
            f_minus, a0, _nu, f_plus = decompose1(f, t_hi)
            logf = _log_factors1(ring, f_minus, f_plus, t_hi)
            w = Window(t_hi, {i: 0 for i in range(min(-t_hi, -1), t_hi + 1)})
            ginv = invert(g, w)
            gt = partial_derivative(g, "t")
            res = product_coefficient([logf, gt, ginv], -1, 0)
            break
        except InsufficientWindow as err:
            last = err
            t_hi *= 2
    if res is None:
        raise last
    value = exp_nilpotent(ring, res)
    value = ring.mul(value, ring.pow(a0, nu_g))
    value = ring.mul(value, ring.pow(b0, -nu_f))
    if (nu_f * nu_g) % 2:
        value = ring.neg(value)
    return value


def tame1(f: BiSeries, g: BiSeries):
    """Tame symbol over a field: (-1)^(nu_f nu_g) lead(f)^nu_g / lead(g)^nu_f."""
    ring = f.ring
    if not ring.is_field:
        raise DomainViolation("the tame symbol needs field coefficients")
    _check_series1(f)
    _check_series1(g)
    nu_f, _, a0 = leading_data(f)
    nu_g, _, b0 = leading_data(g)
    value = ring.mul(ring.pow(a0, nu_g), ring.pow(b0, -nu_f))
    if (nu_f * nu_g) % 2:
        value = ring.neg(value)
    return value


def cc1(f: BiSeries, g: BiSeries):
    """Route to the residue formula over Q-algebras, else the product formula."""
    if f.ring.contains_rationals():
        return cc1_residue(f, g)
    return cc1_product(f, g)
