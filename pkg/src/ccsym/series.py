"""Windowed iterated Laurent series R((u))((t)) with exact, certified arithmetic.

A series is stored as a finite table of nonzero coefficients indexed by
(t-exponent, u-exponent), grouped by t-degree, together with an optional
Window describing the region in which coefficients are exactly known.  An
absent window means the element is exact (finite support, everything else
zero).  Within a window the rule is: row i is known for u-exponents up to
u_caps[i]; rows <= t_max without an entry in u_caps are fully known.

Every operation either returns exactly-known coefficients or raises
InsufficientWindow; nothing is silently truncated.  Lexicographic order is
t-major: (i1,j1) < (i2,j2) iff i1 < i2 or (i1 == i2 and j1 < j2).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    CharacteristicObstruction,
    DomainViolation,
    InsufficientWindow,
    InvalidParameterChange,
    NotAUnit,
    RingMismatch,
    UnboundedDemand,
)

_INF = float("inf")
_GUARD = 2_000_000  # hard cap on elementary peel operations


class Window:
    """An exactly-known coefficient region: t <= t_max, bounded per-row in u.

    `u_caps` maps a t-degree to the largest known u-exponent of that row;
    rows <= t_max absent from the map are fully known.  `default` is request
    sugar (a uniform cap for rows without an explicit entry); windows attached
    to computed series are always materialized (default None).
    """

    __slots__ = ("t_max", "u_caps", "default")

    def __init__(self, t_max, u_caps=None, default=None):
        self.t_max = t_max
        self.u_caps = dict(u_caps) if u_caps else {}
        self.default = default

    @staticmethod
    def uniform(t_max, u_max):
        return Window(t_max, None, u_max)

    def cap(self, i):
        """Largest known u-exponent in row i (None = row fully known)."""
        return self.u_caps.get(i, self.default)

    def known(self, i, j):
        if i > self.t_max:
            return False
        c = self.u_caps.get(i, self.default)
        return c is None or j <= c

    def shifted(self, di, dj):
        return Window(self.t_max + di,
                      {i + di: c + dj for i, c in self.u_caps.items()},
                      None if self.default is None else self.default + dj)

    def widened(self, dt, du):
        return Window(self.t_max + dt,
                      {i: c + du for i, c in self.u_caps.items()},
                      None if self.default is None else self.default + du)

    def materialized(self, row_lo):
        """Explicit caps for every row in [row_lo, t_max] (request windows only)."""
        caps = {}
        for i in range(row_lo, self.t_max + 1):
            c = self.cap(i)
            if c is None:
                raise UnboundedDemand(f"row t^{i} of the request window has no u bound")
            caps[i] = c
        return Window(self.t_max, caps)

    def covers(self, other) -> bool:
        """True when every coefficient known under `other` is known under self."""
        if other.t_max > self.t_max:
            return False
        for i in set(self.u_caps) | set(other.u_caps):
            if i > other.t_max:
                continue
            mine, theirs = self.cap(i), other.cap(i)
            if mine is None:
                continue
            if theirs is None or theirs > mine:
                return False
        if self.default is not None and other.default is None:
            return False
        if (self.default is not None and other.default is not None
                and other.default > self.default):
            return False
        return True

    def corners(self, row_lo):
        """Target coefficients whose knowledge forces the whole window region."""
        return {(i, c) for i, c in self.materialized(row_lo).u_caps.items()}

    def __repr__(self):
        caps = dict(sorted(self.u_caps.items()))
        d = "" if self.default is None else f", default={self.default}"
        return f"Window(t_max={self.t_max}, u_caps={caps}{d})"

    def to_json(self):
        return {"t_max": self.t_max,
                "u_caps": {str(i): c for i, c in sorted(self.u_caps.items())},
                **({"default": self.default} if self.default is not None else {})}


def intersect_windows(wa, wb):
    """The region known under both windows (None = exact = everything)."""
    if wa is None:
        return wb
    if wb is None:
        return wa
    t_max = min(wa.t_max, wb.t_max)
    caps = {}
    for i in set(wa.u_caps) | set(wb.u_caps):
        if i > t_max:
            continue
        ca, cb = wa.cap(i), wb.cap(i)
        c = cb if ca is None else ca if cb is None else min(ca, cb)
        if c is not None:
            caps[i] = c
    da, db = wa.default, wb.default
    default = db if da is None else da if db is None else min(da, db)
    return Window(t_max, caps, default)


class BiSeries:
    """An element of R((u))((t)), exact or windowed."""

    __slots__ = ("ring", "rows", "window", "res_lead")

    def __init__(self, ring, rows, window=None, res_lead=None):
        self.ring = ring
        self.rows = rows  # dict: t-exp -> {u-exp -> raw}, no zero entries
        self.window = window
        self.res_lead = res_lead

    # --- constructors ------------------------------------------------------

    @staticmethod
    def from_terms(ring, terms, window=None):
        """terms: iterable of ((i, j), coefficient), coefficients coercible."""
        rows = {}
        for (i, j), c in terms:
            raw = ring.coerce(c)
            row = rows.setdefault(i, {})
            raw = ring.add(row[j], raw) if j in row else raw
            if ring.is_zero(raw):
                row.pop(j, None)
            else:
                row[j] = raw
        return BiSeries(ring, {i: r for i, r in rows.items() if r}, window)

    @staticmethod
    def zero(ring):
        return BiSeries(ring, {})

    @staticmethod
    def one(ring):
        return BiSeries(ring, {0: {0: ring.one}})

    @staticmethod
    def monomial(ring, c, i, j):
        raw = ring.coerce(c)
        if ring.is_zero(raw):
            return BiSeries(ring, {})
        return BiSeries(ring, {i: {j: raw}})

    @staticmethod
    def t_var(ring):
        return BiSeries.monomial(ring, 1, 1, 0)

    @staticmethod
    def u_var(ring):
        return BiSeries.monomial(ring, 1, 0, 1)

    # --- structure ---------------------------------------------------------

    def is_exact(self):
        return self.window is None

    def possible_rows(self):
        """Rows that may hold nonzero coefficients (stored, or hidden above caps)."""
        rows = set(self.rows)
        if self.window is not None:
            rows.update(i for i in self.window.u_caps if i <= self.window.t_max)
        return rows

    def t_floor(self):
        rows = self.possible_rows()
        return min(rows) if rows else None

    def row_floor(self, i):
        """Least possible u-exponent in row i; None when the row is surely zero."""
        row = self.rows.get(i)
        stored = min(row) if row else None
        if self.window is not None and i <= self.window.t_max:
            c = self.window.u_caps.get(i)
            if c is not None:
                hidden = c + 1
                return hidden if stored is None else min(stored, hidden)
        return stored

    def min_floor(self):
        floors = [self.row_floor(i) for i in self.possible_rows()]
        floors = [f for f in floors if f is not None]
        return min(floors) if floors else None

    def coeff(self, i, j):
        """The exact coefficient at (i, j); raises when it is not known."""
        if self.window is not None and not self.window.known(i, j):
            raise InsufficientWindow(f"coefficient at u^{j} t^{i} is outside the window")
        return self.rows.get(i, {}).get(j, self.ring.zero)

    def support(self):
        return [(i, j) for i in sorted(self.rows) for j in sorted(self.rows[i])]

    def terms(self):
        for i in sorted(self.rows):
            for j in sorted(self.rows[i]):
                yield (i, j), self.rows[i][j]

    def is_known_zero(self):
        return not self.rows and self.window is None

    def __eq__(self, other):
        if not isinstance(other, BiSeries):
            return NotImplemented
        if self.ring != other.ring:
            return False
        if (self.window is None) != (other.window is None):
            return False
        return self.rows == other.rows

    __hash__ = None

    def agrees_with(self, other, window=None):
        """Equality of all coefficients inside `window` (default: common region)."""
        w = window if window is not None else intersect_windows(self.window, other.window)
        for i in set(self.rows) | set(other.rows):
            for j in set(self.rows.get(i, ())) | set(other.rows.get(i, ())):
                if w is not None and not w.known(i, j):
                    continue
                a = self.rows.get(i, {}).get(j, self.ring.zero)
                b = other.rows.get(i, {}).get(j, self.ring.zero)
                if a != b:
                    return False
        return True

    def __repr__(self):
        parts = []
        for (i, j), c in self.terms():
            mono = "*".join(s for s in (
                "" if j == 0 else ("u" if j == 1 else f"u^{j}"),
                "" if i == 0 else ("t" if i == 1 else f"t^{i}")) if s)
            cs = self.ring.pretty(c)
            if mono and ("+" in cs or " - " in cs or "*" in cs):
                cs = f"({cs})"
            parts.append(f"{cs}*{mono}" if mono and cs != "1" else (mono or cs))
            if len(parts) > 16:
                parts.append("...")
                break
        body = " + ".join(parts) if parts else "0"
        return body if self.window is None else f"{body}  [{self.window!r}]"

    # --- linear operations --------------------------------------------------

    def _pruned_rows(self, window):
        if window is None:
            return self.rows
        out = {}
        for i, row in self.rows.items():
            if i > window.t_max:
                continue
            c = window.cap(i)
            nr = row if c is None else {j: v for j, v in row.items() if j <= c}
            if nr:
                out[i] = dict(nr)
        return out

    def add(self, other):
        _check_ring(self, other)
        w = intersect_windows(self.window, other.window)
        ring = self.ring
        rows = {i: dict(r) for i, r in self.rows.items()}
        for i, row in other.rows.items():
            dst = rows.setdefault(i, {})
            for j, c in row.items():
                s = ring.add(dst.get(j, ring.zero), c)
                if ring.is_zero(s):
                    dst.pop(j, None)
                else:
                    dst[j] = s
            if not dst:
                del rows[i]
        res = BiSeries(ring, rows, w)
        res.rows = {i: r for i, r in res._pruned_rows(w).items() if r}
        return res

    def neg(self):
        ring = self.ring
        return BiSeries(ring, {i: {j: ring.neg(c) for j, c in r.items()}
                               for i, r in self.rows.items()}, self.window, self.res_lead)

    def sub(self, other):
        return self.add(other.neg())

    def __add__(self, other):
        return self.add(other)

    def __sub__(self, other):
        return self.sub(other)

    def __neg__(self):
        return self.neg()

    def scale(self, c):
        ring = self.ring
        raw = ring.coerce(c)
        if ring.is_zero(raw):
            return BiSeries(ring, {}, self.window)
        rows = {}
        for i, row in self.rows.items():
            nr = {}
            for j, v in row.items():
                p = ring.mul(v, raw)
                if not ring.is_zero(p):
                    nr[j] = p
            if nr:
                rows[i] = nr
        lead = self.res_lead if ring.is_unit(raw) else None
        return BiSeries(ring, rows, self.window, lead)

    def monomial_mul(self, c, di, dj):
        """Multiply by c * u^dj * t^di (exact shift)."""
        ring = self.ring
        raw = ring.coerce(c)
        rows = {}
        for i, row in self.rows.items():
            nr = {}
            for j, v in row.items():
                p = ring.mul(v, raw)
                if not ring.is_zero(p):
                    nr[j + dj] = p
            if nr:
                rows[i + di] = nr
        w = self.window.shifted(di, dj) if self.window is not None else None
        lead = None
        if self.res_lead is not None and ring.is_unit(raw):
            lead = (self.res_lead[0] + di, self.res_lead[1] + dj)
        return BiSeries(ring, rows, w, lead)

    def map_coefficients(self, new_ring, fn):
        """Apply `fn` raw -> raw (into new_ring) to every coefficient."""
        rows = {}
        for i, row in self.rows.items():
            nr = {}
            for j, v in row.items():
                nv = fn(v)
                if not new_ring.is_zero(nv):
                    nr[j] = nv
            if nr:
                rows[i] = nr
        return BiSeries(new_ring, rows, self.window, self.res_lead)

    def residue_image(self):
        ring = self.ring
        return self.map_coefficients(ring.residue_ring(), ring.residue)

    def transpose(self):
        """Swap the roles of u and t (exact series only)."""
        if self.window is not None:
            raise InsufficientWindow("transpose is only defined for exact series")
        rows = {}
        for i, row in self.rows.items():
            for j, c in row.items():
                rows.setdefault(j, {})[i] = c
        return BiSeries(self.ring, rows)

    def truncated(self, window):
        """Forget knowledge outside `window` (window must be materialized)."""
        w = intersect_windows(self.window, window)
        rows = {i: r for i, r in self._pruned_rows(w).items() if r}
        return BiSeries(self.ring, rows, w, self.res_lead)

    def __mul__(self, other):
        if isinstance(other, BiSeries):
            return mul(self, other)
        return self.scale(other)

    __rmul__ = __mul__


def _check_ring(a, b):
    if a.ring != b.ring:
        raise RingMismatch(f"{a.ring} vs {b.ring}")


# ---------------------------------------------------------------------------
# multiplication with window certification
# ---------------------------------------------------------------------------

def _sound_cap(f, g, i, rows_f, rows_g):
    """Largest u-exponent of row i of f*g certified by the inputs' windows."""
    best = _INF
    wf, wg = f.window, g.window
    for i1 in rows_f:
        i2 = i - i1
        if i2 not in rows_g:
            continue
        if wf is not None and i1 <= wf.t_max:
            c = wf.cap(i1)
            if c is not None:
                fl = g.row_floor(i2)
                if fl is not None:
                    best = min(best, c + fl)
        if wg is not None and i2 <= wg.t_max:
            c = wg.cap(i2)
            if c is not None:
                fl = f.row_floor(i1)
                if fl is not None:
                    best = min(best, c + fl)
    return best


def mul(f, g, out: Window | None = None):
    """Product of two series, exact within `out` (or the largest sound window)."""
    _check_ring(f, g)
    ring = f.ring
    rows_f, rows_g = f.possible_rows(), g.possible_rows()
    if not rows_f or not rows_g:
        return BiSeries(ring, {})
    t_sound = _INF
    if f.window is not None:
        t_sound = min(t_sound, f.window.t_max + min(rows_g))
    if g.window is not None:
        t_sound = min(t_sound, g.window.t_max + min(rows_f))

    exact = out is None and t_sound is _INF
    if out is not None and out.t_max > t_sound:
        raise InsufficientWindow(
            f"product known only to t^{t_sound}, requested t^{out.t_max}")
    out_tmax = (max(rows_f) + max(rows_g)) if exact else \
        (out.t_max if out is not None else t_sound)

    candidates = sorted({i1 + i2 for i1 in rows_f for i2 in rows_g if i1 + i2 <= out_tmax})
    res_rows = {}
    caps_out = {}
    add_, mul_, is_zero = ring.add, ring.mul, ring.is_zero
    for i in candidates:
        if exact:
            cap = None
        else:
            sc = _sound_cap(f, g, i, rows_f, rows_g)
            if out is not None:
                rc = out.cap(i)
                if rc is None:
                    if sc is not _INF:
                        raise InsufficientWindow(
                            f"row t^{i} of product known only to u^{sc}, full row requested")
                    cap = None
                else:
                    if sc is not _INF and rc > sc:
                        raise InsufficientWindow(
                            f"row t^{i} of product known only to u^{sc}, requested u^{rc}")
                    cap = rc
            else:
                cap = None if sc is _INF else sc
        if cap is not None:
            caps_out[i] = cap
        acc = {}
        get = acc.get
        for i1 in rows_f:
            row_f = f.rows.get(i1)
            row_g = g.rows.get(i - i1)
            if not row_f or not row_g:
                continue
            for j1, c1 in row_f.items():
                for j2, c2 in row_g.items():
                    j = j1 + j2
                    if cap is not None and j > cap:
                        continue
                    cur = get(j)
                    p = mul_(c1, c2)
                    acc[j] = p if cur is None else add_(cur, p)
        acc = {j: v for j, v in acc.items() if not is_zero(v)}
        if acc:
            res_rows[i] = acc
    window = None if exact else Window(out_tmax, caps_out)
    lead = None
    if f.res_lead is not None and g.res_lead is not None:
        lead = (f.res_lead[0] + g.res_lead[0], f.res_lead[1] + g.res_lead[1])
    return BiSeries(ring, res_rows, window, lead)


def mul_coefficient(f, g, i, j):
    """The single exact coefficient of f*g at (i, j)."""
    _check_ring(f, g)
    ring = f.ring
    rows_f, rows_g = f.possible_rows(), g.possible_rows()
    if not rows_f or not rows_g:
        return ring.zero
    if f.window is not None and i > f.window.t_max + min(rows_g):
        raise InsufficientWindow(f"coefficient at t^{i} of product is not determined")
    if g.window is not None and i > g.window.t_max + min(rows_f):
        raise InsufficientWindow(f"coefficient at t^{i} of product is not determined")
    sc = _sound_cap(f, g, i, rows_f, rows_g)
    if sc is not _INF and j > sc:
        raise InsufficientWindow(f"coefficient at u^{j} t^{i} of product is not determined")
    acc = ring.zero
    for i1 in rows_f:
        row_f = f.rows.get(i1)
        row_g = g.rows.get(i - i1)
        if not row_f or not row_g:
            continue
        for j1, c1 in row_f.items():
            c2 = row_g.get(j - j1)
            if c2 is not None:
                acc = ring.add(acc, ring.mul(c1, c2))
    return acc


# ---------------------------------------------------------------------------
# demand analysis
# ---------------------------------------------------------------------------

class Profile:
    """A lex lower-bound profile of a factor.

    `rows` maps a t-degree to the least possible u-exponent there; unlisted
    rows fall back to `default_u` when `open_rows` is set and are impossible
    otherwise.  t_min None means the factor is identically zero.
    """

    __slots__ = ("t_min", "rows", "default_u", "open_rows")

    def __init__(self, t_min, rows=None, default_u=None, open_rows=False):
        self.t_min = t_min
        self.rows = dict(rows) if rows else {}
        self.default_u = default_u
        self.open_rows = open_rows

    @staticmethod
    def uniform(t_min, u_min):
        return Profile(t_min, None, u_min, open_rows=True)

    @staticmethod
    def from_series(s: BiSeries):
        rows = {i: s.row_floor(i) for i in s.possible_rows()}
        if not rows:
            return Profile(None)
        return Profile(min(rows), rows)

    def u_min(self, i):
        if self.t_min is None:
            return None
        if i in self.rows:
            return self.rows[i]
        if self.open_rows and i >= self.t_min:
            if self.default_u is None:
                raise UnboundedDemand("factor profile lacks a per-row u lower bound")
            return self.default_u
        return None

    def min_floor(self):
        vals = list(self.rows.values())
        if self.open_rows and self.default_u is not None:
            vals.append(self.default_u)
        return min(vals) if vals else None

    def row_range(self, hi):
        if self.t_min is None:
            return []
        if self.open_rows:
            return range(self.t_min, hi + 1)
        return [i for i in sorted(self.rows) if i <= hi]


def _drop_solver(profiles):
    """DP over row assignments: max of sum(-u_min_k(i_k)) given sum(i_k) = t."""
    memo = {}
    suffix_tmin = [0] * (len(profiles) + 1)
    for k in range(len(profiles) - 1, -1, -1):
        t = profiles[k].t_min
        suffix_tmin[k] = (t if t is not None else 0) + suffix_tmin[k + 1]

    def best(k, t):
        if k == len(profiles):
            return 0 if t == 0 else None
        key = (k, t)
        if key in memo:
            return memo[key]
        out = None
        p = profiles[k]
        for i in p.row_range(t - suffix_tmin[k + 1]):
            um = p.u_min(i)
            if um is None:
                continue
            sub = best(k + 1, t - i)
            if sub is not None:
                val = -um + sub
                if out is None or val > out:
                    out = val
        memo[key] = out
        return out

    return best


def demand_window(targets, profiles):
    """Per-factor windows guaranteeing every target coefficient of the product.

    `targets` is a set of (t-exp, u-exp) pairs of the product; `profiles`
    are the factors' lower-bound profiles.
    """
    targets = list(targets)
    profiles = list(profiles)
    if any(p.t_min is None for p in profiles):
        lo = min(i for i, _ in targets)
        return [Window(lo - 1, {}) for _ in profiles]
    out = []
    for idx, prof in enumerate(profiles):
        others = [p for k, p in enumerate(profiles) if k != idx]
        others_tmin = sum(p.t_min for p in others)
        t_max = max(i for i, _ in targets) - others_tmin
        best = _drop_solver(others)
        caps = {}
        for i_self in prof.row_range(t_max):
            cap = None
            for (ti, tj) in targets:
                rem = ti - i_self
                if others:
                    drop = best(0, rem)
                    if drop is None:
                        continue
                    c = tj + drop
                else:
                    if rem != 0:
                        continue
                    c = tj
                cap = c if cap is None else max(cap, c)
            if cap is not None:
                caps[i_self] = cap
        out.append(Window(t_max, caps))
    return out


def product_coefficient(factors, i, j):
    """Exact coefficient of the product of `factors` at (i, j)."""
    factors = list(factors)
    if not factors:
        raise ValueError("empty product")
    if len(factors) == 1:
        return factors[0].coeff(i, j)
    profs = [Profile.from_series(f) for f in factors]
    if any(p.t_min is None for p in profs):
        return factors[0].ring.zero
    acc = factors[0]
    for k in range(1, len(factors) - 1):
        pa = Profile.from_series(acc)
        pb = profs[k]
        if pa.t_min is None:
            return factors[0].ring.zero
        part = Profile.uniform(pa.t_min + pb.t_min, pa.min_floor() + pb.min_floor())
        w = demand_window({(i, j)}, [part] + profs[k + 1:])[0]
        acc = mul(acc, factors[k], w)
    return mul_coefficient(acc, factors[-1], i, j)


# ---------------------------------------------------------------------------
# leading data
# ---------------------------------------------------------------------------

def leading_data(f: BiSeries):
    """(nu1, nu2, leading coefficient) read off the residue image's lex-min.

    Raises NotAUnit when the residue image is zero and InsufficientWindow when
    hidden coefficients could lex-precede the candidate.
    """
    ring = f.ring
    kres = ring.residue_ring()
    res = ring.residue
    best = None
    for i in sorted(f.rows):
        row = f.rows[i]
        for j in sorted(row):
            if not kres.is_zero(res(row[j])):
                best = (i, j)
                break
        if best:
            break
    if f.window is not None:
        hint = f.res_lead
        if hint is not None:
            if not f.window.known(*hint):
                raise InsufficientWindow("certified leading position lies outside the window")
            c = f.rows.get(hint[0], {}).get(hint[1])
            if c is None or kres.is_zero(res(c)):
                raise NotAUnit("certified leading coefficient is not a unit")
            return hint[0], hint[1], c
        if best is None:
            raise InsufficientWindow("no unit coefficient inside the known region")
        for i, c in f.window.u_caps.items():
            if i <= f.window.t_max and (i, c + 1) < best:
                raise InsufficientWindow(
                    f"hidden coefficients above u^{c} t^{i} may precede the leading term")
    if best is None:
        raise NotAUnit("residue image is zero; not a unit of R((u))((t))")
    i, j = best
    return i, j, f.rows[i][j]


def nu_valuations(f: BiSeries):
    nu1, nu2, _ = leading_data(f)
    return nu1, nu2


# ---------------------------------------------------------------------------
# elementary-factor peel engine
# ---------------------------------------------------------------------------

class _PeelState:
    """Mutable (rows, window) pair for in-place elementary multiplications."""

    __slots__ = ("ring", "rows", "window")

    def __init__(self, ring, rows, window):
        self.ring = ring
        self.rows = rows
        self.window = window

    def to_series(self):
        return BiSeries(self.ring, {i: dict(r) for i, r in self.rows.items() if r},
                        self.window)


def _mul_elementary_inv(state: _PeelState, b, ei, ej):
    """Multiply the state in place by (1 - b u^ej t^ei)^(-1) = sum_n b^n u^{ej n} t^{ei n}.

    Terminates through nilpotency of b or because the shifts leave the window.
    When the state is windowed, caps shrink wherever unknown source regions
    could have fed known target slots.
    """
    ring = state.ring
    rows, window = state.rows, state.window
    if not rows and window is None:
        return
    idx = ring.nilpotency_index(b)
    n_bound = None if idx is None else idx - 1
    base = [(i, list(r.items())) for i, r in rows.items()]
    if window is not None:
        t_hi = window.t_max
        if ei > 0:
            lo = min((i for i, _ in base), default=t_hi)
            lo = min(lo, min((r for r in window.u_caps), default=t_hi))
            wb = max(0, (t_hi - lo) // ei)
            n_bound = wb if n_bound is None else min(n_bound, wb)
        elif ei == 0 and ej > 0:
            caps = [window.cap(i) for i, _ in base]
            floors = [min(j for j, _ in r) for _, r in base if r]
            if any(c is None for c in caps):
                raise UnboundedDemand("peel window must be fully materialized")
            if floors and caps:
                wb = max(0, (max(caps) - min(floors)) // ej)
                n_bound = wb if n_bound is None else min(n_bound, wb)
            else:
                n_bound = 0 if n_bound is None else n_bound
    if n_bound is None:
        raise InsufficientWindow(
            "cannot bound the geometric expansion of an elementary inverse")
    add_, mul_, is_zero = ring.add, ring.mul, ring.is_zero
    zero = ring.zero
    bn = b
    ops = 0
    for n in range(1, n_bound + 1):
        if is_zero(bn):
            break
        di, dj = ei * n, ej * n
        for i, items in base:
            ti = i + di
            if window is not None and ti > window.t_max:
                continue
            cap = window.cap(ti) if window is not None else None
            dst = rows.get(ti)
            for j, c in items:
                tj = j + dj
                if cap is not None and tj > cap:
                    continue
                p = mul_(c, bn)
                if is_zero(p):
                    continue
                if dst is None:
                    dst = rows.setdefault(ti, {})
                s = add_(dst.get(tj, zero), p)
                if is_zero(s):
                    dst.pop(tj, None)
                else:
                    dst[tj] = s
                ops += 1
                if ops > _GUARD:
                    raise InsufficientWindow("elementary peel exceeded the operation budget")
        bn = mul_(bn, b)
    for i in [i for i, r in rows.items() if not r]:
        del rows[i]
    if window is not None:
        _shrink_window(state, ei, ej, n_bound)


def _shrink_window(state: _PeelState, ei, ej, n_bound):
    """Account for unknown-source contributions of the elementary expansion."""
    window = state.window
    new_tmax = window.t_max
    new_caps = dict(window.u_caps)
    lo = min(new_caps, default=new_tmax)
    if ei < 0:
        lo += ei * n_bound
    for n in range(1, n_bound + 1):
        di, dj = ei * n, ej * n
        if ei < 0:
            new_tmax = min(new_tmax, window.t_max + di)
        for r in range(lo, new_tmax + 1):
            src = r - di
            if src > window.t_max:
                new_tmax = min(new_tmax, r - 1)
                break
            sc = window.cap(src)
            if sc is not None:
                cur = new_caps.get(r, window.cap(r))
                cand = sc + dj
                if cur is None or cand < cur:
                    new_caps[r] = cand
    caps = {i: c for i, c in new_caps.items() if i <= new_tmax}
    state.window = Window(new_tmax, caps)
    rows = state.rows
    for i in list(rows):
        if i > new_tmax:
            del rows[i]
            continue
        c = caps.get(i)
        if c is not None:
            r = rows[i]
            for j in [j for j in r if j > c]:
                del r[j]
            if not r:
                del rows[i]


def _mul_two_term(state: _PeelState, c, ei, ej):
    """Multiply the state in place by the exact factor (1 - c u^ej t^ei)."""
    ring = state.ring
    rows, window = state.rows, state.window
    nc = ring.neg(c)
    snap = [(i, list(r.items())) for i, r in rows.items()]
    for i, items in snap:
        ti = i + ei
        if window is not None and ti > window.t_max:
            continue
        cap = window.cap(ti) if window is not None else None
        dst = rows.get(ti)
        for j, v in items:
            tj = j + ej
            if cap is not None and tj > cap:
                continue
            p = ring.mul(v, nc)
            if ring.is_zero(p):
                continue
            if dst is None:
                dst = rows.setdefault(ti, {})
            s = ring.add(dst.get(tj, ring.zero), p)
            if ring.is_zero(s):
                dst.pop(tj, None)
            else:
                dst[tj] = s
    for i in [i for i, r in rows.items() if not r]:
        del rows[i]
    if window is not None:
        _shrink_window(state, ei, ej, 1)


# ---------------------------------------------------------------------------
# canonical unit decomposition
# ---------------------------------------------------------------------------

@dataclass
class UnitFactorization:
    """f = f_minus * f0 * u^nu2 t^nu1 * f_plus with elementary factor lists.

    minus_factors: [(i, j, c)] with (i,j) lex < (0,0) and c nilpotent, exact
    and finite; f_minus = prod (1 - c u^j t^i).  plus_factors: [(i, j, b)]
    with (i,j) lex > (0,0), exact within `plus_window`.
    """

    ring: object
    nu1: int
    nu2: int
    f0: object
    minus_factors: list
    plus_factors: list
    plus_window: Window

    def f_minus_series(self) -> BiSeries:
        acc = BiSeries.one(self.ring)
        for (i, j, c) in self.minus_factors:
            acc = mul(acc, BiSeries.from_terms(self.ring, [((0, 0), self.ring.one),
                                                           ((i, j), self.ring.neg(c))]))
        return acc

    def f_plus_series(self, window=None) -> BiSeries:
        w = window or self.plus_window
        state = _PeelState(self.ring, {0: {0: self.ring.one}},
                           Window(w.t_max, dict(w.u_caps)))
        for (i, j, b) in self.plus_factors:
            # multiply by (1 - b u^j t^i) = two-term series, done directly
            snap = [(r, list(d.items())) for r, d in state.rows.items()]
            for r, items in snap:
                ti = r + i
                if ti > state.window.t_max:
                    continue
                cap = state.window.cap(ti)
                dst = state.rows.setdefault(ti, {})
                for jj, c in items:
                    tj = jj + j
                    if cap is not None and tj > cap:
                        continue
                    p = self.ring.mul(c, self.ring.neg(b))
                    s = self.ring.add(dst.get(tj, self.ring.zero), p)
                    if self.ring.is_zero(s):
                        dst.pop(tj, None)
                    else:
                        dst[tj] = s
        return state.to_series()

    def reconstruct(self) -> BiSeries:
        """Re-multiply the five parts; exact within the sound window of the data."""
        head = BiSeries.monomial(self.ring, self.f0, self.nu1, self.nu2)
        acc = mul(head, self.f_minus_series())
        return mul(acc, self.f_plus_series())


def _idx(ring, c):
    n = ring.nilpotency_index(c)
    return n if n is not None else 1


def decompose_unit(f: BiSeries, plus_window: Window,
                   assume_window_covers_lower=False) -> UnitFactorization:
    """Canonical five-part decomposition of a unit of R((u))((t)).

    `plus_window` bounds the extracted lex-positive factor list.  The
    lex-negative factor list is exact (nilpotent coefficients, finitely many).
    For a windowed input the lower region must be fully known unless
    `assume_window_covers_lower` is set (the caller then certifies coverage
    by an independent stabilization check).
    """
    ring = f.ring
    nu1, nu2, _c = leading_data(f)
    g = f.monomial_mul(ring.one, -nu1, -nu2)
    if g.window is not None and not assume_window_covers_lower:
        for i in g.possible_rows():
            if i <= 0 and g.window.cap(i) is not None:
                raise InsufficientWindow(
                    "lower region of a windowed unit is not fully known; "
                    "decomposition of the lex-negative part cannot be certified")
    state = _PeelState(ring, {i: dict(r) for i, r in g.rows.items()},
                       None if g.window is None else
                       Window(g.window.t_max, dict(g.window.u_caps), g.window.default))

    minus = _peel_minus(state)
    f0 = state.rows.get(0, {}).get(0, ring.zero)
    if not ring.is_unit(f0):
        raise NotAUnit("constant part after lower peel is not a unit")

    inv0 = ring.inverse(f0)
    for i, row in state.rows.items():
        for j in list(row):
            row[j] = ring.mul(row[j], inv0)

    margin = 0
    for attempt in range(4):
        ok, plus, eff = _peel_plus(state, plus_window, margin)
        if ok:
            return UnitFactorization(ring, nu1, nu2, f0, minus, plus, eff)
        margin = (margin + 2) * 2
    raise InsufficientWindow("plus-factor peel could not certify the requested window")


def _lower_positions(rows):
    return [(i, j) for i in rows if i <= 0 for j in rows[i] if i < 0 or j < 0]


def _peel_minus(state: _PeelState):
    """Clear the lex-negative region and return its canonical elementary factors.

    Phase 1 clears the region by greatest-position-first extraction; the
    upper content of the residual can repollute already-visited positions,
    so positions may repeat (each repollution carries a strictly deeper
    nilpotency degree, which bounds the passes).  Phase 2 refactors the
    collected product canonically: on a purely lower-supported element the
    greatest-position-first peel visits each position exactly once.
    """
    ring = state.ring
    raw = []
    guard = 0
    while True:
        lower = _lower_positions(state.rows)
        if not lower:
            break
        i, j = max(lower)
        a = state.rows[i][j]
        a00 = state.rows.get(0, {}).get(0, ring.zero)
        if not ring.is_unit(a00):
            raise NotAUnit("constant term lost unit status during lower peel")
        c = ring.neg(ring.mul(a, ring.inverse(a00)))
        if ring.nilpotency_index(c) is None:
            raise NotAUnit(
                f"coefficient at u^{j} t^{i} below the leading term is not nilpotent")
        raw.append((i, j, c))
        _mul_elementary_inv(state, c, i, j)
        guard += 1
        if guard > 100000:
            raise InsufficientWindow("lower peel did not terminate within budget")
    return _canonical_lower_factors(ring, raw)


def _canonical_lower_factors(ring, raw_factors):
    """Refactor a product of lower elementary factors into canonical form."""
    if not raw_factors:
        return []
    seen = {}
    repeated = False
    for (i, j, c) in raw_factors:
        if (i, j) in seen:
            repeated = True
        seen[(i, j)] = c
    if not repeated:
        return sorted(raw_factors)
    state = _PeelState(ring, {0: {0: ring.one}}, None)
    for (i, j, c) in raw_factors:
        _mul_two_term(state, c, i, j)
    out = []
    guard = 0
    while True:
        lower = _lower_positions(state.rows)
        if not lower:
            break
        i, j = max(lower)
        c = ring.neg(state.rows[i][j])
        out.append((i, j, c))
        _mul_elementary_inv(state, c, i, j)
        guard += 1
        if guard > 100000:
            raise InsufficientWindow("canonical lower refactor did not terminate")
    if state.rows != {0: {0: ring.one}}:
        raise AssertionError("lower refactor left a nontrivial residual")
    return sorted(out)


def _peel_plus(state: _PeelState, request: Window, margin: int):
    """Extract lex-positive factors; returns (ok, factors, effective_window)."""
    ring = state.ring
    t_max = request.t_max
    drop = 0
    for i, row in state.rows.items():
        if i >= 1 and row:
            fl = min(row)
            if fl < 0:
                drop = max(drop, -fl)
    req = request.materialized(0)
    base_cap = max(req.u_caps.values(), default=0)
    caps = {}
    for r in range(0, t_max + 1):
        caps[r] = max(req.u_caps.get(r, base_cap), base_cap) + (t_max - r) * drop + margin
    win = Window(t_max, caps)
    if state.window is not None:
        # respect the input's own knowledge limits: cap by the input window
        inter = intersect_windows(win, state.window)
        caps2 = {}
        for r in range(0, inter.t_max + 1):
            c = inter.cap(r)
            caps2[r] = c if c is not None else caps.get(r, base_cap)
        win = Window(inter.t_max, caps2)
    work = _PeelState(ring, {}, win)
    work.rows = {i: r for i, r in BiSeries(
        ring, {i: dict(rw) for i, rw in state.rows.items()},
        None)._pruned_rows(win).items() if r}
    factors = []
    guard = 0
    for i in range(0, work.window.t_max + 1):
        while True:
            row = work.rows.get(i)
            if not row:
                break
            cap = work.window.cap(i)
            js = [j for j in row if (i > 0 or j >= 1) and (cap is None or j <= cap)]
            if not js:
                break
            j = min(js)
            b = ring.neg(row[j])
            factors.append((i, j, b))
            _mul_elementary_inv(work, b, i, j)
            guard += 1
            if guard > 100000:
                raise InsufficientWindow("plus peel did not terminate within budget")
    # residual must be exactly 1 inside the effective window
    for i, row in work.rows.items():
        for j, c in row.items():
            if (i, j) != (0, 0) and work.window.known(i, j) and not ring.is_zero(c):
                raise AssertionError("plus peel left a nonzero residual")
    eff = work.window
    ok = eff.covers(req)
    return ok, factors, eff


# ---------------------------------------------------------------------------
# inversion, log, exp
# ---------------------------------------------------------------------------

def _minus_inverse_series(ring, minus_factors) -> BiSeries:
    """Exact product of the elementary inverses of the lex-negative factors."""
    state = _PeelState(ring, {0: {0: ring.one}}, None)
    for (i, j, c) in minus_factors:
        _mul_elementary_inv(state, c, i, j)
    return state.to_series()


def invert(f: BiSeries, out: Window | None = None) -> BiSeries:
    """Multiplicative inverse, exact within `out`.

    Without `out` the inverse must be exactly representable (unit monomial
    times nilpotent perturbations); otherwise InsufficientWindow is raised.
    """
    ring = f.ring
    nu1, nu2, lead = leading_data(f)
    if out is None:
        if f.window is None and all(
                (i, j) == (nu1, nu2) or
                ring.nilpotency_index(f.rows[i][j]) is not None
                for i in f.rows for j in f.rows[i]):
            # nilpotent perturbation of a monomial: the geometric series for
            # the inverse terminates and the result is exact
            g = f.monomial_mul(ring.inverse(lead), -nu1, -nu2)
            x = g.sub(BiSeries.one(ring)).neg()
            acc = BiSeries.one(ring)
            term = BiSeries.one(ring)
            while True:
                term = mul(term, x)
                if not term.rows:
                    break
                acc = acc.add(term)
            res = acc.monomial_mul(ring.inverse(lead), -nu1, -nu2)
            res.res_lead = (-nu1, -nu2)
            return res
        raise InsufficientWindow("inverse is an infinite series; a window is required")

    plus_req = _materialize_for(out.shifted(nu1, nu2), 0)
    dec = decompose_unit(f, plus_req)
    A = _minus_inverse_series(ring, dec.minus_factors)
    reach_t = max(0, -(A.t_floor() or 0))
    reach_u = max(0, -(A.min_floor() or 0))
    drop = max([0] + [-j for (i, j, _b) in dec.plus_factors if i >= 1 and j < 0])
    last_err = None
    for attempt in range(4):
        pad = (attempt + 1) if attempt else 0
        w_req = plus_req.widened(reach_t, reach_u)
        t_span = w_req.t_max - min(w_req.u_caps, default=0) + 1
        fallback = max(w_req.u_caps.values(), default=0)
        caps = {}
        for r in range(0, max(w_req.t_max, 0) + 1):
            c = w_req.cap(r)
            caps[r] = max(c if c is not None else fallback, fallback) \
                + (w_req.t_max - r) * drop + pad * t_span
        w_plus = Window(max(w_req.t_max, 0), caps)
        if not dec.plus_window.covers(w_plus):
            dec = decompose_unit(f, w_plus)
        state = _PeelState(ring, {0: {0: ring.one}},
                           Window(w_plus.t_max, dict(w_plus.u_caps)))
        for (i, j, b) in dec.plus_factors:
            _mul_elementary_inv(state, b, i, j)
        B = state.to_series()
        try:
            lo = (B.t_floor() or 0) + (A.t_floor() or 0)
            res = mul(B, A, _materialize_for(out.shifted(dec.nu1, dec.nu2), lo))
        except InsufficientWindow as err:
            last_err = err
            continue
        res = res.monomial_mul(ring.inverse(dec.f0), -dec.nu1, -dec.nu2)
        res.res_lead = (-dec.nu1, -dec.nu2)
        return res
    raise last_err


def _materialize_for(w: Window, row_lo: int) -> Window:
    lo = min(row_lo, min(w.u_caps, default=row_lo))
    caps = {}
    fallback = w.default if w.default is not None else max(w.u_caps.values(), default=0)
    for i in range(lo, w.t_max + 1):
        c = w.cap(i)
        caps[i] = c if c is not None else fallback
    return Window(w.t_max, caps)


def _accumulate(ring, rows, i, j, c, window):
    if window is not None and not window.known(i, j):
        return
    if ring.is_zero(c):
        return
    dst = rows.setdefault(i, {})
    s = ring.add(dst.get(j, ring.zero), c)
    if ring.is_zero(s):
        dst.pop(j, None)
        if not dst:
            del rows[i]
    else:
        dst[j] = s


def _log_elementary(ring, rows, b, ei, ej, window):
    """Accumulate log(1 - b u^ej t^ei) = -sum_n b^n u^{ej n} t^{ei n} / n."""
    idx = ring.nilpotency_index(b)
    n_bound = None if idx is None else idx - 1
    if window is not None:
        if ei > 0:
            wb = max(0, window.t_max // ei)
            n_bound = wb if n_bound is None else min(n_bound, wb)
        elif ei == 0 and ej > 0:
            top = max((c for c in window.u_caps.values()), default=0)
            wb = max(0, top // ej)
            n_bound = wb if n_bound is None else min(n_bound, wb)
        elif n_bound is None:
            raise InsufficientWindow("cannot bound the log expansion")
    elif n_bound is None:
        raise InsufficientWindow("log of a non-nilpotent factor needs a window")
    bn = b
    for n in range(1, n_bound + 1):
        if ring.is_zero(bn):
            break
        term = ring.div_int(bn, n)
        if term is None:
            raise CharacteristicObstruction(
                f"log expansion demands division by {n}, not invertible in {ring}")
        _accumulate(ring, rows, ei * n, ej * n, ring.neg(term), window)
        bn = ring.mul(bn, b)


def log_window(f: BiSeries, out: Window) -> BiSeries:
    """Logarithm of an element of the (1 + lower-nilpotent) * (1 + upper) group.

    Requires nu(f) = (0,0) with leading coefficient of residue 1; divisions
    by integers must be possible in the ring (else CharacteristicObstruction),
    which always holds when Q is contained in R or when the expansion
    terminates before a bad division.
    """
    ring = f.ring
    nu1, nu2, lead = leading_data(f)
    if (nu1, nu2) != (0, 0):
        raise DomainViolation("log requires trivial t- and u-valuation")
    kres = ring.residue_ring()
    if not kres.is_zero(kres.sub(ring.residue(lead), kres.one)):
        raise DomainViolation("log requires leading coefficient with residue 1")
    wout = _materialize_for(out, min([0] + list(f.possible_rows())))
    dec = decompose_unit(f, wout)
    rows = {}
    for (i, j, c) in dec.minus_factors:
        _log_elementary(ring, rows, c, i, j, None)
    # log f0 = log(1 + w) with w nilpotent
    w0 = ring.sub(dec.f0, ring.one)
    if not ring.is_zero(w0):
        idx = ring.nilpotency_index(w0)
        if idx is None:
            raise DomainViolation("unit part of log argument is not 1 + nilpotent")
        wn = w0
        for n in range(1, idx):
            if ring.is_zero(wn):
                break
            term = ring.div_int(wn, n)
            if term is None:
                raise CharacteristicObstruction(
                    f"log expansion demands division by {n}, not invertible in {ring}")
            if n % 2 == 1:
                _accumulate(ring, rows, 0, 0, term, None)
            else:
                _accumulate(ring, rows, 0, 0, ring.neg(term), None)
            wn = ring.mul(wn, w0)
    for (i, j, b) in dec.plus_factors:
        _log_elementary(ring, rows, b, i, j, wout)
    eff = dec.plus_window
    return BiSeries(ring, rows, Window(eff.t_max, dict(eff.u_caps)))


def exp_window(a: BiSeries, out: Window) -> BiSeries:
    """exp of an element of the lower-nilpotent + upper additive group.

    The terms are multiplied exactly and pruned outside a widened work
    region; the widening margins bound the total downward reach of the
    nilpotent lower tails and of the negative-u upper terms, so the pruned
    content can never flow back into the requested window.
    """
    ring = a.ring
    if a.window is not None:
        a = a.truncated(a.window)
    kres = ring.residue_ring()
    for (i, j), c in a.terms():
        if (i, j) <= (0, 0) and not kres.is_zero(ring.residue(c)):
            raise DomainViolation(
                "exp requires nilpotent coefficients at non-positive exponents")
    q = ring.nilradical_exponent
    neg_t = max(0, -(a.t_floor() if a.t_floor() is not None else 0))
    neg_u = max(0, -(a.min_floor() if a.min_floor() is not None else 0))
    wout = _materialize_for(out, min(list(out.u_caps) + [0]) - (q - 1) * neg_t)
    posdrop = 0
    for i in a.possible_rows():
        if i >= 1:
            fl = a.row_floor(i)
            if fl is not None and fl < 0:
                posdrop = max(posdrop, -fl)
    span = wout.t_max - min(wout.u_caps, default=0) + 1
    t_cut = wout.t_max + (q - 1) * neg_t
    u_pad = (q - 1) * neg_u + span * posdrop
    u_cut = max(wout.u_caps.values(), default=0) + u_pad

    def prune(rows):
        for i in list(rows):
            if i > t_cut:
                del rows[i]
                continue
            r = rows[i]
            for j in [j for j in r if j > u_cut]:
                del r[j]
            if not r:
                del rows[i]
        return rows

    acc = BiSeries.one(ring)
    term = BiSeries.one(ring)
    n = 0
    while True:
        n += 1
        term = BiSeries(ring, prune(mul(term, a).rows))
        scaled = {}
        for i, row in term.rows.items():
            for j, c in row.items():
                d = ring.div_int(c, n)
                if d is None:
                    raise CharacteristicObstruction(
                        f"exp expansion demands division by {n}, not invertible in {ring}")
                if not ring.is_zero(d):
                    scaled.setdefault(i, {})[j] = d
        term = BiSeries(ring, scaled)
        if not term.rows:
            break
        acc = acc.add(term)
        if n > 8 * (span + q + u_pad + 8):
            raise InsufficientWindow("exp expansion did not terminate within budget")
    return acc.truncated(wout)


# ---------------------------------------------------------------------------
# calculus
# ---------------------------------------------------------------------------

def partial_derivative(f: BiSeries, var: str) -> BiSeries:
    """Term-wise d/du or d/dt; the window shifts by -1 in that exponent."""
    ring = f.ring
    rows = {}
    if var == "u":
        for i, row in f.rows.items():
            nr = {}
            for j, c in row.items():
                if j == 0:
                    continue
                p = ring.mul(c, ring.from_int(j))
                if not ring.is_zero(p):
                    nr[j - 1] = p
            if nr:
                rows[i] = nr
        w = None if f.window is None else Window(
            f.window.t_max, {i: c - 1 for i, c in f.window.u_caps.items()},
            None if f.window.default is None else f.window.default - 1)
    elif var == "t":
        for i, row in f.rows.items():
            if i == 0:
                continue
            nr = {}
            for j, c in row.items():
                p = ring.mul(c, ring.from_int(i))
                if not ring.is_zero(p):
                    nr[j] = p
            if nr:
                rows[i - 1] = nr
        w = None if f.window is None else Window(
            f.window.t_max - 1, {i - 1: c for i, c in f.window.u_caps.items()},
            f.window.default)
    else:
        raise ValueError("var must be 'u' or 't'")
    return BiSeries(ring, rows, w)


def residue2(f: BiSeries):
    """Res(f du wedge dt) = the coefficient of u^-1 t^-1."""
    return f.coeff(-1, -1)


def wedge_residue(f: BiSeries, g: BiSeries):
    """Res(df wedge dg) computed from partial derivatives."""
    lhs = mul(partial_derivative(f, "u"), partial_derivative(g, "t"))
    rhs = mul(partial_derivative(g, "u"), partial_derivative(f, "t"))
    return residue2(lhs.sub(rhs))


# ---------------------------------------------------------------------------
# substitution of local parameters
# ---------------------------------------------------------------------------

def substitute(f: BiSeries, t_new: BiSeries, u_new: BiSeries, out: Window) -> BiSeries:
    """Image of f under t -> t_new, u -> u_new, exact within `out`.

    Requires nu1(t_new) = 1, (nu1, nu2)(u_new) = (0, 1), and u_new free of
    negative t-exponents.  The substitution is the continuous ring map
    sum a_ij u^j t^i -> sum a_ij u_new^j t_new^i.
    """
    ring = f.ring
    n1t, n2t, _ = leading_data(t_new)
    n1u, n2u, _ = leading_data(u_new)
    if n1t != 1:
        raise InvalidParameterChange("t_new must have t-valuation 1")
    if (n1u, n2u) != (0, 1):
        raise InvalidParameterChange("u_new must have valuations (0, 1)")
    if any(i < 0 for i in u_new.possible_rows()):
        raise InvalidParameterChange("u_new must have no negative t-exponents")

    if f.window is not None:
        _check_substitution_coverage(f, t_new, u_new, out)

    wref = _materialize_for(out, min(out.u_caps, default=0))
    # powers are built within a window widened by the nilpotent reach of the
    # parameters' lower tails
    q = ring.nilradical_exponent
    reach_t = (q - 1) * max(0, 1 - (t_new.t_floor() or 1))
    reach_u = (q - 1) * max(0, 1 - (t_new.min_floor() or 1)) \
        + (q - 1) * max(0, 1 - (u_new.min_floor() or 1))
    i_lo = min(list(f.rows) or [0])
    i_hi = max(list(f.rows) or [0])
    j_lo = min((min(r) for r in f.rows.values()), default=0)
    j_hi = max((max(r) for r in f.rows.values()), default=0)
    span = max(abs(i_lo), abs(i_hi)) + max(abs(j_lo), abs(j_hi)) + 1
    wbig = wref.widened(reach_t * span + 1, (reach_u + 1) * span + 1)
    wbig = _materialize_for(wbig, min(wref.u_caps, default=0) - reach_t * span - 1)

    tpow = _power_table(t_new, i_lo, i_hi, wbig)
    upow = _power_table(u_new, j_lo, j_hi, wbig)
    acc = BiSeries(ring, {}, Window(wbig.t_max, dict(wbig.u_caps)))
    for (i, j), c in f.terms():
        term = mul(tpow[i], upow[j], wbig).scale(c)
        acc = acc.add(term)
    res = acc.truncated(wref)
    if f.res_lead is not None or f.window is None:
        try:
            n1, n2, _ = leading_data(f)
            res.res_lead = (n1, n2)
        except (NotAUnit, InsufficientWindow):
            res.res_lead = None
    return res


def _power_table(base: BiSeries, lo: int, hi: int, w: Window):
    ring = base.ring
    table = {0: BiSeries.one(ring)}
    p = BiSeries.one(ring)
    for n in range(1, max(hi, 0) + 1):
        p = mul(p, base, w)
        table[n] = p
    if lo < 0:
        inv = invert(base, w)
        p = BiSeries.one(ring)
        for n in range(1, -lo + 1):
            p = mul(p, inv, w)
            table[-n] = p
    return table


def _check_substitution_coverage(f, t_new, u_new, out):
    """Certify that hidden coefficients of a windowed f cannot reach `out`."""
    q = f.ring.nilradical_exponent
    c_t = (q - 1) * max(0, 1 - (t_new.t_floor() or 1))
    w = f.window
    if w.t_max - c_t < out.t_max:
        raise InsufficientWindow(
            "window of the substituted series is too small for the requested output")
    caps = [c for i, c in w.u_caps.items()]
    if caps:
        c_u = (q - 1) * max(0, 1 - (u_new.min_floor() or 1))
        need = max((c for c in out.u_caps.values()), default=out.default or 0)
        if min(caps) - c_u < need:
            raise InsufficientWindow(
                "u-caps of the substituted series are too small for the requested output")
