"""Two-dimensional Contou-Carrere symbol (f, g, h) on R((u))((t))*.

Two routes again: the explicit product formula built from the canonical
decompositions and the closed-form elementary symbols T/S/Q, and the residue
formula exp Res(log f dg/g wedge dh/h) for Q-algebras.  The product route
enumerates exactly the elementary-factor combinations that can contribute
(solutions of a positive integer relation between exponent vectors, cut off
by nilpotency), then certifies the enumeration bound by re-evaluating at an
enlarged bound and demanding agreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

from .errors import (
    BadExponent,
    CharacteristicObstruction,
    DomainViolation,
    InsufficientWindow,
    NotAUnit,
    StabilizationFailure,
)
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
from .symbol1 import exp_nilpotent
from .rings import RingValue


@dataclass
class SymbolResult:
    """A symbol value with provenance."""

    value: RingValue
    path: str  # "product-formula" | "residue-formula" | "tame-closed-form"
    window_used: Window | None
    stabilized: bool
    factors: list | None = None

    def to_json(self):
        return {
            "value": repr(self.value),
            "path": self.path,
            "window": self.window_used.to_json() if self.window_used else None,
            "stabilized": self.stabilized,
            "factors": [
                {"kind": k, "exponents": list(e), "value": v}
                for (k, e, v) in (self.factors or [])
            ],
        }


# ---------------------------------------------------------------------------
# nu-pairing and the sign exponent
# ---------------------------------------------------------------------------

def nu_pair(f: BiSeries, g: BiSeries) -> int:
    """nu(f,g) = nu2(f) nu1(g) - nu2(g) nu1(f)."""
    n1f, n2f, _ = leading_data(f)
    n1g, n2g, _ = leading_data(g)
    return n2f * n1g - n2g * n1f


def _nu_det(a, b):
    # a, b are (nu1, nu2) pairs
    return a[1] * b[0] - b[1] * a[0]


def sign_exponent(f: BiSeries, g: BiSeries, h: BiSeries) -> int:
    """A = nu(f,g)nu(f,h) + nu(g,h)nu(g,f) + nu(h,f)nu(h,g) + nu(f,g)nu(f,h)nu(g,h)."""
    nf = leading_data(f)[:2]
    ng = leading_data(g)[:2]
    nh = leading_data(h)[:2]
    return _sign_exponent_nu(nf, ng, nh)


def _sign_exponent_nu(nf, ng, nh):
    fg = _nu_det(nf, ng)
    fh = _nu_det(nf, nh)
    gh = _nu_det(ng, nh)
    return fg * fh + gh * (-fg) + (-fh) * (-gh) + fg * fh * gh


# ---------------------------------------------------------------------------
# T, S, Q: closed-form symbols of elementary factors
# ---------------------------------------------------------------------------

def _check_pair(v):
    if v == (0, 0):
        raise BadExponent("elementary factor with zero exponent pair")


def symbol_T(ring, a, va, b, vb, c, vc):
    """((1 - a u^j t^i), (1 - b u^l t^k), (1 - c u^n t^m)) in closed form."""
    _check_pair(va)
    _check_pair(vb)
    _check_pair(vc)
    (i, j), (k, l), (m, n) = va, vb, vc
    p0 = l * m - n * k
    q0 = n * i - j * m
    r0 = j * k - l * i
    if not ((p0 > 0 and q0 > 0 and r0 > 0) or (p0 < 0 and q0 < 0 and r0 < 0)):
        return ring.one
    d = gcd(gcd(abs(p0), abs(q0)), abs(r0))
    if p0 < 0:
        d = -d
    prod = ring.mul(ring.mul(ring.pow(a, p0 // d), ring.pow(b, q0 // d)),
                    ring.pow(c, r0 // d))
    if ring.is_zero(prod):
        return ring.one
    return ring.pow(ring.sub(ring.one, prod), d)


def symbol_S(ring, a, va, b, vb):
    """((1 - a u^j t^i), (1 - b u^l t^k), t) in closed form."""
    _check_pair(va)
    _check_pair(vb)
    (i, j), (k, l) = va, vb
    if j * k - l * i != 0 or j * l + i * k >= 0 or j * l == 0:
        return ring.one
    d = gcd(abs(j), abs(l))
    prod = ring.mul(ring.pow(a, abs(l) // d), ring.pow(b, abs(j) // d))
    if ring.is_zero(prod):
        return ring.one
    e = -d if l > 0 else d
    return ring.pow(ring.sub(ring.one, prod), e)


def symbol_Q(ring, a, va, b, vb):
    """((1 - a u^j t^i), (1 - b u^l t^k), u) in closed form."""
    _check_pair(va)
    _check_pair(vb)
    (i, j), (k, l) = va, vb
    if j * k - l * i != 0 or j * l + i * k >= 0 or i * k == 0:
        return ring.one
    d = gcd(abs(i), abs(k))
    prod = ring.mul(ring.pow(a, abs(k) // d), ring.pow(b, abs(i) // d))
    if ring.is_zero(prod):
        return ring.one
    e = d if k > 0 else -d
    return ring.pow(ring.sub(ring.one, prod), e)


# ---------------------------------------------------------------------------
# product route
# ---------------------------------------------------------------------------

def _divisors(n):
    n = abs(n)
    out = []
    d = 1
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            if d != n // d:
                out.append(n // d)
        d += 1
    return out


def _vector_divisions(w):
    """All (r, v) with integer v and r >= 1 such that r*v == w, v != (0,0)."""
    wt, wu = w
    if wt == 0 and wu == 0:
        return []
    g = gcd(abs(wt), abs(wu))
    return [(r, (wt // r, wu // r)) for r in _divisors(g)]


@dataclass
class _ArgData:
    nu: tuple  # (nu1, nu2)
    f0: object
    minus: list  # [(pos=(i,j), coeff, idx)]
    plus: dict  # {(i,j): coeff} within the extraction window
    eff_window: Window


def _prepare(f: BiSeries, bt, bu, assume_lower):
    dec = decompose_unit(
        f, Window(bt, {r: bu for r in range(0, bt + 1)}),
        assume_window_covers_lower=assume_lower)
    ring = f.ring
    minus = [((i, j), c, ring.nilpotency_index(c)) for (i, j, c) in dec.minus_factors]
    plus = {(i, j): b for (i, j, b) in dec.plus_factors}
    return _ArgData((dec.nu1, dec.nu2), dec.f0, minus, plus, dec.plus_window)


def _filter_plus(plus, bt, bu):
    return {(i, j): b for (i, j), b in plus.items() if i <= bt and j <= bu}


def _triple_candidates(datas, bt, bu, drop):
    """Exponent triples (one per factor combination) that may contribute a T != 1.

    A nontrivial T needs a positive integer relation p v1 + q v2 + r v3 = 0;
    at least one participant is a lex-negative (nilpotent) factor whose
    nilpotency index bounds its multiplier.
    """
    plus = [d.plus for d in datas]
    minus = [d.minus for d in datas]
    out = set()

    def add(v0, v1, v2):
        out.add((v0, v1, v2))

    # three lex-negative participants
    for (va, _, _) in minus[0]:
        for (vb, _, _) in minus[1]:
            for (vc, _, _) in minus[2]:
                add(va, vb, vc)
    # two lex-negative, one lex-positive
    for s_plus in range(3):
        s_m = [s for s in range(3) if s != s_plus]
        for (va, _, ia) in minus[s_m[0]]:
            for (vb, _, ib) in minus[s_m[1]]:
                for p in range(1, ia):
                    for q in range(1, ib):
                        w = (-p * va[0] - q * vb[0], -p * va[1] - q * vb[1])
                        for _r, v in _vector_divisions(w):
                            if v in plus[s_plus]:
                                trip = [None, None, None]
                                trip[s_m[0]] = va
                                trip[s_m[1]] = vb
                                trip[s_plus] = v
                                add(*trip)
    # one lex-negative, two lex-positive
    for s_m in range(3):
        s_p = [s for s in range(3) if s != s_m]
        for (va, _, ia) in minus[s_m]:
            for p in range(1, ia):
                w = (-p * va[0], -p * va[1])
                for vb in plus[s_p[0]]:
                    k, lu = vb
                    if k > 0:
                        if w[0] < k:
                            continue
                        qmax = w[0] // k
                    else:  # k == 0, lu >= 1
                        budget = w[1] + bt * drop
                        if budget < lu:
                            continue
                        qmax = budget // lu
                    for q in range(1, qmax + 1):
                        rem = (w[0] - q * k, w[1] - q * lu)
                        for _r, v in _vector_divisions(rem):
                            if v > (0, 0) and v in plus[s_p[1]]:
                                trip = [None, None, None]
                                trip[s_m] = va
                                trip[s_p[0]] = vb
                                trip[s_p[1]] = v
                                add(*trip)
    return out


def _pair_candidates(da: _ArgData, db: _ArgData, bt, bu):
    """Exponent pairs that may contribute a nontrivial S or Q (anti-parallel)."""
    out = set()
    for (va, _, _) in da.minus:
        for (vb, _, _) in db.minus:
            out.add((va, vb))
    for (va, _, ia) in da.minus:
        for p in range(1, ia):
            w = (-p * va[0], -p * va[1])
            for _r, v in _vector_divisions(w):
                if v > (0, 0) and v in db.plus:
                    out.add((va, v))
    for (vb, _, ib) in db.minus:
        for q in range(1, ib):
            w = (-q * vb[0], -q * vb[1])
            for _r, v in _vector_divisions(w):
                if v > (0, 0) and v in da.plus:
                    out.add((v, vb))
    return out


def _coeff_of(data: _ArgData, v):
    for (pos, c, _) in data.minus:
        if pos == v:
            return c
    return data.plus[v]


def _evaluate(ring, datas, bt, bu, drop, collect):
    """The full (concar)-style product over the bounded factor data."""
    dF = _ArgData(datas[0].nu, datas[0].f0, datas[0].minus,
                  _filter_plus(datas[0].plus, bt, bu), datas[0].eff_window)
    dG = _ArgData(datas[1].nu, datas[1].f0, datas[1].minus,
                  _filter_plus(datas[1].plus, bt, bu), datas[1].eff_window)
    dH = _ArgData(datas[2].nu, datas[2].f0, datas[2].minus,
                  _filter_plus(datas[2].plus, bt, bu), datas[2].eff_window)
    ds = [dF, dG, dH]
    ledger = [] if collect else None

    nF, nG, nH = dF.nu, dG.nu, dH.nu
    a_exp = _sign_exponent_nu(nF, nG, nH)
    value = ring.one if a_exp % 2 == 0 else ring.neg(ring.one)
    value = ring.mul(value, ring.pow(dF.f0, _nu_det(nG, nH)))
    value = ring.mul(value, ring.pow(dG.f0, _nu_det(nH, nF)))
    value = ring.mul(value, ring.pow(dH.f0, _nu_det(nF, nG)))

    for (va, vb, vc) in sorted(_triple_candidates(ds, bt, bu, drop)):
        t = symbol_T(ring, _coeff_of(dF, va), va, _coeff_of(dG, vb), vb,
                     _coeff_of(dH, vc), vc)
        if t != ring.one:
            value = ring.mul(value, t)
            if collect:
                ledger.append(("T", (va, vb, vc), ring.pretty(t)))

    def pairs(dA, dB, dC_nu, kindS, kindQ):
        nonlocal value
        n1, n2 = dC_nu
        if n1 == 0 and n2 == 0:
            return
        for (va, vb) in sorted(_pair_candidates(dA, dB, bt, bu)):
            a = _coeff_of(dA, va)
            b = _coeff_of(dB, vb)
            if n1 != 0:
                s = symbol_S(ring, a, va, b, vb)
                if s != ring.one:
                    value = ring.mul(value, ring.pow(s, n1))
                    if collect:
                        ledger.append((kindS, (va, vb), ring.pretty(s)))
            if n2 != 0:
                qv = symbol_Q(ring, a, va, b, vb)
                if qv != ring.one:
                    value = ring.mul(value, ring.pow(qv, n2))
                    if collect:
                        ledger.append((kindQ, (va, vb), ring.pretty(qv)))

    # (f,g) pairs against h's monomial; (h,f) against g's; (g,h) against f's
    pairs(dF, dG, nH, "S(f,g)^nu1(h)", "Q(f,g)^nu2(h)")
    pairs(dH, dF, nG, "S(h,f)^nu1(g)", "Q(h,f)^nu2(g)")
    pairs(dG, dH, nF, "S(g,h)^nu1(f)", "Q(g,h)^nu2(f)")
    return value, ledger


def _bounds_from_minus(datas):
    vals_t = [0, 0]
    vals_u = [0, 0]
    for d in datas:
        for (pos, _c, idx) in d.minus:
            vt = (idx - 1) * max(0, -pos[0])
            vu = (idx - 1) * max(0, -pos[1])
            if vt > vals_t[0]:
                vals_t = [vt, vals_t[0]]
            elif vt > vals_t[1]:
                vals_t[1] = vt
            if vu > vals_u[0]:
                vals_u = [vu, vals_u[0]]
            elif vu > vals_u[1]:
                vals_u[1] = vu
    return vals_t[0] + vals_t[1], vals_u[0] + vals_u[1]


def cc2_product(f: BiSeries, g: BiSeries, h: BiSeries, *,
                rounds=4, collect_factors=False) -> SymbolResult:
    """The symbol by the explicit product formula, with stabilization.

    The enumeration bound is computed from the nilpotency data of the
    lex-negative factors and double-checked: the evaluation is repeated at an
    enlarged bound and the two results must agree exactly.
    """
    ring = f.ring
    assume = any(x.window is not None for x in (f, g, h))
    has_minus_probe = [_prepare(x, 0, 0, assume) for x in (f, g, h)]
    bt0, bu0 = _bounds_from_minus(has_minus_probe)
    bt, bu = bt0, bu0
    last = None
    for _ in range(rounds):
        bt_big = bt + bt // 2 + 2
        bu_big = bu + bu // 2 + 2
        try:
            datas = [_prepare(x, bt_big, bu_big, assume) for x in (f, g, h)]
        except InsufficientWindow as err:
            last = err
            bt, bu = bt_big, bu_big
            continue
        drop = 0
        for d in datas:
            for (i, j) in d.plus:
                if i >= 1 and j < 0:
                    drop = max(drop, -j)
        need_bu = bu0 + bt0 * drop
        if need_bu > bu:
            bt, bu = bt, need_bu
            continue
        v1, ledger = _evaluate(ring, datas, bt, bu, drop, collect_factors)
        v2, _ = _evaluate(ring, datas, bt_big, bu_big, drop, False)
        if v1 == v2:
            if not ring.is_unit(v1):
                raise NotAUnit("symbol value failed to be a unit")
            window = Window(bt, {r: bu for r in range(0, bt + 1)})
            return SymbolResult(RingValue(ring, v1), "product-formula",
                                window, True, ledger)
        bt, bu = bt_big, bu_big
    if last is not None:
        raise last
    raise StabilizationFailure(
        f"product formula did not stabilize within {rounds} enlargements")


# ---------------------------------------------------------------------------
# residue route
# ---------------------------------------------------------------------------

def _log_factors2(ring, dec, window):
    """log of the (1 + lower)(1 + upper) part of a decomposition, as a series."""
    from .series import _accumulate, _log_elementary

    rows = {}
    for (i, j, c) in dec.minus_factors:
        _log_elementary(ring, rows, c, i, j, None)
    for (i, j, b) in dec.plus_factors:
        _log_elementary(ring, rows, b, i, j, window)
    return BiSeries(ring, rows, Window(window.t_max, dict(window.u_caps)))


def _residue_term(logf, xu, xt, yu, yt, xinv, yinv):
    """Res(log f * dx/x wedge dy/y) for series x, y."""
    a = product_coefficient([logf, xu, yt, xinv, yinv], -1, -1)
    b = product_coefficient([logf, yu, xt, xinv, yinv], -1, -1)
    return logf.ring.sub(a, b)


def cc2_residue(f: BiSeries, g: BiSeries, h: BiSeries, *,
                collect_factors=False) -> SymbolResult:
    """exp Res(log f dg/g wedge dh/h), combined with the unit/monomial cases."""
    ring = f.ring
    if not ring.contains_rationals():
        raise CharacteristicObstruction("the residue route needs Q in the coefficient ring")
    nf = leading_data(f)[:2]
    ng = leading_data(g)[:2]
    nh = leading_data(h)[:2]

    last = None
    size = 4
    for _ in range(5):
        try:
            w = Window(size, {r: size for r in range(-size, size + 1)})
            decf = decompose_unit(f, w, assume_window_covers_lower=f.window is not None)
            decg = decompose_unit(g, w, assume_window_covers_lower=g.window is not None)
            dech = decompose_unit(h, w, assume_window_covers_lower=h.window is not None)
            logf = _log_factors2(ring, decf, decf.plus_window)
            logg = _log_factors2(ring, decg, decg.plus_window)
            ginv = invert(g, w)
            hinv = invert(h, w)
            gu, gt = partial_derivative(g, "u"), partial_derivative(g, "t")
            hu, ht = partial_derivative(h, "u"), partial_derivative(h, "t")
            # Res1 = Res(log f~ dg/g wedge dh/h)
            r1a = product_coefficient([logf, gu, ht, ginv, hinv], -1, -1)
            r1b = product_coefficient([logf, hu, gt, ginv, hinv], -1, -1)
            res = ring.sub(r1a, r1b)
            # Res2 = Res(log g~ dm_f/m_f wedge dh/h) with m_f = u^nu2 t^nu1
            n1f, n2f = nf
            if n2f:
                r2a = product_coefficient(
                    [logg, BiSeries.monomial(ring, 1, 0, -1), ht, hinv], -1, -1)
                res = ring.sub(res, ring.mul(ring.from_int(n2f), r2a))
            if n1f:
                r2b = product_coefficient(
                    [logg, BiSeries.monomial(ring, 1, -1, 0), hu, hinv], -1, -1)
                res = ring.add(res, ring.mul(ring.from_int(n1f), r2b))
            break
        except InsufficientWindow as err:
            last = err
            size *= 2
    else:
        raise last

    value = exp_nilpotent(ring, res)
    value = ring.mul(value, ring.pow(decf.f0, _nu_det(ng, nh)))
    value = ring.mul(value, ring.pow(decg.f0, _nu_det(nh, nf)))
    value = ring.mul(value, ring.pow(dech.f0, _nu_det(nf, ng)))
    if _sign_exponent_nu(nf, ng, nh) % 2:
        value = ring.neg(value)
    ledger = [("Res", ((-1, -1),), ring.pretty(res))] if collect_factors else None
    return SymbolResult(RingValue(ring, value), "residue-formula", w, True, ledger)


# ---------------------------------------------------------------------------
# tame closed form and the dispatcher
# ---------------------------------------------------------------------------

def tame2(f: BiSeries, g: BiSeries, h: BiSeries):
    """Two-dimensional tame symbol over a field, from the leading data alone.

    Over a field there are no nilpotents, so the lex-negative parts vanish
    and every T/S/Q combination needs one; only the sign and the leading
    units survive.
    """
    ring = f.ring
    if not ring.is_field:
        raise DomainViolation("the tame symbol needs field coefficients")
    n1f, n2f, a0 = leading_data(f)
    n1g, n2g, b0 = leading_data(g)
    n1h, n2h, c0 = leading_data(h)
    nf, ng, nh = (n1f, n2f), (n1g, n2g), (n1h, n2h)
    value = ring.pow(a0, _nu_det(ng, nh))
    value = ring.mul(value, ring.pow(b0, _nu_det(nh, nf)))
    value = ring.mul(value, ring.pow(c0, _nu_det(nf, ng)))
    if _sign_exponent_nu(nf, ng, nh) % 2:
        value = ring.neg(value)
    return value


def cc2(f: BiSeries, g: BiSeries, h: BiSeries, **kw) -> SymbolResult:
    """Dispatcher: residue route over Q-algebras, product route otherwise."""
    if f.ring.contains_rationals():
        return cc2_residue(f, g, h, **kw)
    return cc2_product(f, g, h, **kw)
