"""Exact arithmetic for the supported coefficient rings.

Supported rings: the rationals, prime fields GF(p), finite extension fields
(towers allowed), Z/(p^k), and nilpotent extensions B[e1,..,er]/(e1^a1,..,er^ar)
over any of these.  Every ring here is either Q or local Artinian: each element
is a unit or nilpotent, which is what makes all downstream series algorithms
total and exact.

Raw element encodings (canonical, hashable):
  Rationals          -> fractions.Fraction
  PrimeField(p)      -> int in [0, p)
  IntegersModPK      -> int in [0, p^k)
  FiniteField        -> tuple of base-field raws, fixed length = degree
  NilpotentExtension -> tuple of base raws, dense over the monomial lattice

A thin `RingValue` wrapper provides operator syntax; performance-sensitive
code calls the ring methods on raw data directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import MalformedDescriptor, NotAUnit, RingMismatch


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def _prime_power(n: int):
    """Return (p, k) with n = p^k, or None."""
    if n < 2:
        return None
    for p in range(2, n + 1):
        if p * p > n:
            return (n, 1) if _is_prime(n) else None
        if n % p:
            continue
        k = 0
        m = n
        while m % p == 0:
            m //= p
            k += 1
        return (p, k) if m == 1 else None
    return None


# ---------------------------------------------------------------------------
# dense polynomial helpers over an arbitrary field ring (used by FiniteField)
# ---------------------------------------------------------------------------

def _poly_trim(F, c):
    i = len(c)
    while i and F.is_zero(c[i - 1]):
        i -= 1
    return list(c[:i])


def _poly_add(F, a, b):
    n = max(len(a), len(b))
    out = []
    for i in range(n):
        x = a[i] if i < len(a) else F.zero
        y = b[i] if i < len(b) else F.zero
        out.append(F.add(x, y))
    return _poly_trim(F, out)


def _poly_mul(F, a, b):
    if not a or not b:
        return []
    out = [F.zero] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if F.is_zero(x):
            continue
        for j, y in enumerate(b):
            out[i + j] = F.add(out[i + j], F.mul(x, y))
    return _poly_trim(F, out)


def _poly_divmod(F, a, b):
    """Division with remainder; leading coefficient of b must be a unit."""
    a = list(a)
    db, da = len(b) - 1, len(a) - 1
    inv_lead = F.inverse(b[-1])
    q = [F.zero] * max(0, da - db + 1)
    while len(a) - 1 >= db and a:
        da = len(a) - 1
        c = F.mul(a[-1], inv_lead)
        q[da - db] = c
        for i in range(db + 1):
            a[da - db + i] = F.sub(a[da - db + i], F.mul(c, b[i]))
        a = _poly_trim(F, a)
        if not a:
            break
    return q, a


def _poly_mod(F, a, b):
    return _poly_divmod(F, a, b)[1]


def _poly_eval(F, a, x):
    acc = F.zero
    for c in reversed(a):
        acc = F.add(F.mul(acc, x), c)
    return acc


def _monic_polys(F, deg):
    """Yield all monic degree-`deg` polynomials over the finite field F."""
    elems = list(F.enumerate())

    def rec(i, tail):
        if i == deg:
            yield tail + [F.one]
            return
        for e in elems:
            yield from rec(i + 1, tail + [e])

    yield from rec(0, [])


def _poly_is_irreducible(F, poly):
    """Trial division by all monic factors of degree <= deg/2."""
    deg = len(poly) - 1
    if deg < 1:
        return False
    if deg == 1:
        return True
    for e in F.enumerate():
        if F.is_zero(_poly_eval(F, poly, e)):
            return False
    for d in range(2, deg // 2 + 1):
        for cand in _monic_polys(F, d):
            if _poly_is_irreducible(F, cand) and not _poly_mod(F, poly, cand):
                return False
    return True


# ---------------------------------------------------------------------------
# ring descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RationalsDesc:
    pass


@dataclass(frozen=True)
class PrimeFieldDesc:
    p: int


@dataclass(frozen=True)
class FiniteFieldDesc:
    p: int
    k: int
    modulus: tuple = None  # low-to-high int coefficients, monic; None = pick default
    gen_name: str = "x"


@dataclass(frozen=True)
class IntegersModDesc:
    p: int
    k: int


@dataclass(frozen=True)
class NilpotentExtensionDesc:
    base: object
    names: tuple
    bounds: tuple


RingDescriptor = (RationalsDesc, PrimeFieldDesc, FiniteFieldDesc,
                  IntegersModDesc, NilpotentExtensionDesc)


# ---------------------------------------------------------------------------
# rings
# ---------------------------------------------------------------------------

class Ring:
    """Shared interface.  Instances are immutable and safe to share."""

    is_field = False

    # subclasses set: zero, one (raw), characteristic, nilradical_exponent

    def add(self, a, b):
        raise NotImplementedError

    def sub(self, a, b):
        raise NotImplementedError

    def neg(self, a):
        raise NotImplementedError

    def mul(self, a, b):
        raise NotImplementedError

    def is_zero(self, a):
        raise NotImplementedError

    def is_unit(self, a):
        """True iff the residue-field image is nonzero."""
        raise NotImplementedError

    def inverse(self, a):
        raise NotImplementedError

    def from_int(self, n: int):
        raise NotImplementedError

    def residue_ring(self):
        return self

    def residue(self, a):
        return a

    def contains_rationals(self):
        return False

    def pretty(self, a):
        return repr(a)

    def pow(self, a, n: int):
        """a**n; negative n demands a unit."""
        if n < 0:
            a = self.inverse(a)
            n = -n
        acc = self.one
        base = a
        while n:
            if n & 1:
                acc = self.mul(acc, base)
            n >>= 1
            if n:
                base = self.mul(base, base)
        return acc

    def nilpotency_index(self, a):
        """Least N >= 1 with a^N = 0; None for units (never nilpotent)."""
        if self.is_zero(a):
            return 1
        if self.is_unit(a):
            return None
        n = 1
        x = a
        while not self.is_zero(x):
            x = self.mul(x, a)
            n += 1
            if n > self.nilradical_exponent + 1:
                raise AssertionError("non-unit failed to nilpotate within the ring bound")
        return n

    def div_int(self, a, n: int):
        """a / n for an integer n; None when n is not invertible here."""
        u = self.from_int(n)
        if not self.is_unit(u):
            return None
        return self.mul(a, self.inverse(u))

    # element construction / randomness ------------------------------------

    def element(self, x):
        return RingValue(self, self.coerce(x))

    def is_raw(self, x) -> bool:
        """True when x is already a canonical raw element of this ring."""
        raise NotImplementedError

    def coerce(self, x):
        if isinstance(x, RingValue):
            if x.ring != self:
                raise RingMismatch(f"value from {x.ring} used in {self}")
            return x.raw
        if self.is_raw(x):
            return x
        if isinstance(x, int):
            return self.from_int(x)
        if isinstance(x, Fraction):
            if not self.contains_rationals():
                raise RingMismatch("rational constant in a ring without Q")
            num = self.from_int(x.numerator)
            d = self.div_int(num, x.denominator)
            return d
        raise RingMismatch(f"cannot coerce {x!r} into {self}")

    def random_element(self, rng):
        raise NotImplementedError

    def random_unit(self, rng):
        for _ in range(64):
            a = self.random_element(rng)
            if self.is_unit(a):
                return a
        return self.one

    def random_nilpotent(self, rng):
        """A random element of the maximal ideal (0 when the ring is a field)."""
        return self.zero


class Rationals(Ring):
    """The field Q with arbitrary-precision Fraction arithmetic."""

    is_field = True
    characteristic = 0
    nilradical_exponent = 1

    _ZERO = Fraction(0)
    _ONE = Fraction(1)

    def __init__(self):
        self.zero = self._ZERO
        self.one = self._ONE

    def __repr__(self):
        return "Q"

    def __eq__(self, other):
        return isinstance(other, Rationals)

    def __hash__(self):
        return hash("Q")

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return a * b

    def is_zero(self, a):
        return not a

    def is_unit(self, a):
        return bool(a)

    def inverse(self, a):
        if not a:
            raise NotAUnit("0 is not invertible in Q")
        return 1 / a

    def from_int(self, n):
        return Fraction(n)

    def is_raw(self, x):
        return isinstance(x, Fraction)

    def contains_rationals(self):
        return True

    def pretty(self, a):
        return str(a)

    def random_element(self, rng):
        return Fraction(rng.randint(-4, 4), rng.randint(1, 3))


class PrimeField(Ring):
    """GF(p)."""

    is_field = True
    nilradical_exponent = 1

    def __init__(self, p):
        if not _is_prime(p):
            raise MalformedDescriptor(f"{p} is not prime")
        self.p = p
        self.characteristic = p
        self.zero = 0
        self.one = 1 % p

    def __repr__(self):
        return f"GF({self.p})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self):
        return hash(("GF", self.p))

    def size(self):
        return self.p

    def enumerate(self):
        return range(self.p)

    def add(self, a, b):
        return (a + b) % self.p

    def sub(self, a, b):
        return (a - b) % self.p

    def neg(self, a):
        return (-a) % self.p

    def mul(self, a, b):
        return (a * b) % self.p

    def is_zero(self, a):
        return a == 0

    def is_unit(self, a):
        return a != 0

    def inverse(self, a):
        if a == 0:
            raise NotAUnit("0 is not invertible")
        return pow(a, -1, self.p)

    def from_int(self, n):
        return n % self.p

    def is_raw(self, x):
        return isinstance(x, int) and not isinstance(x, bool) and 0 <= x < self.p

    def pretty(self, a):
        return str(a)

    def random_element(self, rng):
        return rng.randrange(self.p)


class FiniteField(Ring):
    """An extension field base[x]/(modulus); towers of extensions are allowed.

    Raw elements are fixed-length tuples of base raws (coordinates in the
    power basis of the generator).
    """

    is_field = True
    nilradical_exponent = 1

    def __init__(self, base, modulus, gen_name="x"):
        if not base.is_field or base.characteristic == 0:
            raise MalformedDescriptor("extension base must be a finite field")
        mod = [base.coerce(c) if not _is_base_raw(base, c) else c for c in modulus]
        mod = _poly_trim(base, mod)
        deg = len(mod) - 1
        if deg < 2:
            raise MalformedDescriptor("modulus degree must be >= 2")
        if not base.is_zero(base.sub(mod[-1], base.one)):
            raise MalformedDescriptor("modulus must be monic")
        if not _poly_is_irreducible(base, mod):
            raise MalformedDescriptor("modulus is reducible over the base field")
        self.base = base
        self.modulus = tuple(mod)
        self.degree = deg
        self.gen_name = gen_name
        self.characteristic = base.characteristic
        self.zero = tuple([base.zero] * deg)
        one = [base.zero] * deg
        one[0] = base.one
        self.one = tuple(one)

    def __repr__(self):
        return f"GF({self.characteristic}^{self._total_degree()})"

    def _total_degree(self):
        d = self.degree
        b = self.base
        while isinstance(b, FiniteField):
            d *= b.degree
            b = b.base
        return d

    def __eq__(self, other):
        return (isinstance(other, FiniteField) and other.base == self.base
                and other.modulus == self.modulus)

    def __hash__(self):
        return hash(("FF", self.base, self.modulus))

    def size(self):
        return self.base.size() ** self.degree

    def enumerate(self):
        base_elems = list(self.base.enumerate())

        def rec(i):
            if i == self.degree:
                yield ()
                return
            for tail in rec(i + 1):
                for e in base_elems:
                    yield (e,) + tail

        yield from rec(0)

    def generator(self):
        g = [self.base.zero] * self.degree
        g[1] = self.base.one
        return tuple(g)

    def _wrap(self, poly):
        poly = _poly_mod(self.base, poly, list(self.modulus))
        return tuple(poly + [self.base.zero] * (self.degree - len(poly)))

    def add(self, a, b):
        B = self.base
        return tuple(B.add(x, y) for x, y in zip(a, b))

    def sub(self, a, b):
        B = self.base
        return tuple(B.sub(x, y) for x, y in zip(a, b))

    def neg(self, a):
        B = self.base
        return tuple(B.neg(x) for x in a)

    def mul(self, a, b):
        return self._wrap(_poly_mul(self.base, list(a), list(b)))

    def is_zero(self, a):
        B = self.base
        return all(B.is_zero(x) for x in a)

    def is_unit(self, a):
        return not self.is_zero(a)

    def inverse(self, a):
        if self.is_zero(a):
            raise NotAUnit("0 is not invertible")
        B = self.base
        # extended Euclid on (a, modulus)
        r0, r1 = list(self.modulus), _poly_trim(B, list(a))
        s0, s1 = [], [B.one]
        while len(r1) > 1:
            q, r = _poly_divmod(B, r0, r1)
            r0, r1 = r1, r
            s0, s1 = s1, _poly_add(B, s0, [B.neg(c) for c in _poly_mul(B, q, s1)])
        c = B.inverse(r1[0])
        return self._wrap([B.mul(c, x) for x in s1])

    def from_int(self, n):
        out = [self.base.zero] * self.degree
        out[0] = self.base.from_int(n)
        return tuple(out)

    def is_raw(self, x):
        return (isinstance(x, tuple) and len(x) == self.degree
                and all(self.base.is_raw(c) for c in x))

    def embed_base(self, braw):
        out = [self.base.zero] * self.degree
        out[0] = braw
        return tuple(out)

    def constant_part(self, a):
        """Inverse of embed_base; raises when a is not a base-field constant."""
        B = self.base
        if any(not B.is_zero(c) for c in a[1:]):
            raise RingMismatch("element does not lie in the base field")
        return a[0]

    def frobenius(self, a):
        """The base-field Frobenius x -> x^{|base|}."""
        return self.pow(a, self.base.size())

    def pretty(self, a):
        B = self.base
        terms = []
        for i, c in enumerate(a):
            if B.is_zero(c):
                continue
            cs = B.pretty(c)
            if i == 0:
                terms.append(cs)
            else:
                v = self.gen_name if i == 1 else f"{self.gen_name}^{i}"
                terms.append(v if cs == "1" else f"{cs}*{v}")
        return " + ".join(terms) if terms else "0"

    def random_element(self, rng):
        return tuple(self.base.random_element(rng) for _ in range(self.degree))


def _is_base_raw(base, c):
    if isinstance(base, (PrimeField,)):
        return isinstance(c, int)
    if isinstance(base, Rationals):
        return isinstance(c, Fraction)
    if isinstance(base, FiniteField):
        return isinstance(c, tuple)
    return False


class IntegersModPK(Ring):
    """Z/(p^k); local Artinian with maximal ideal (p)."""

    def __init__(self, p, k):
        if not _is_prime(p):
            raise MalformedDescriptor(f"{p} is not prime")
        if k < 1:
            raise MalformedDescriptor("exponent must be >= 1")
        self.p = p
        self.k = k
        self.n = p ** k
        self.characteristic = self.n
        self.nilradical_exponent = k
        self.is_field = k == 1
        self.zero = 0
        self.one = 1 % self.n

    def __repr__(self):
        return f"Z/({self.p}^{self.k})" if self.k > 1 else f"GF({self.p})"

    def __eq__(self, other):
        return isinstance(other, IntegersModPK) and (other.p, other.k) == (self.p, self.k)

    def __hash__(self):
        return hash(("Zmod", self.p, self.k))

    def add(self, a, b):
        return (a + b) % self.n

    def sub(self, a, b):
        return (a - b) % self.n

    def neg(self, a):
        return (-a) % self.n

    def mul(self, a, b):
        return (a * b) % self.n

    def is_zero(self, a):
        return a == 0

    def is_unit(self, a):
        return a % self.p != 0

    def inverse(self, a):
        if a % self.p == 0:
            raise NotAUnit(f"{a} is not invertible mod {self.p}^{self.k}")
        return pow(a, -1, self.n)

    def from_int(self, n):
        return n % self.n

    def is_raw(self, x):
        return isinstance(x, int) and not isinstance(x, bool) and 0 <= x < self.n

    def residue_ring(self):
        return PrimeField(self.p)

    def residue(self, a):
        return a % self.p

    def pretty(self, a):
        return str(a)

    def exact_div_pj(self, a, j):
        """a / p^j when p^j exactly divides the canonical representative."""
        q = self.p ** j
        if a % q:
            return None
        return a // q

    def random_element(self, rng):
        return rng.randrange(self.n)

    def random_nilpotent(self, rng):
        return (rng.randrange(self.n // self.p) * self.p) % self.n


class NilpotentExtension(Ring):
    """base[e1,..,er]/(e1^a1,..,er^ar) with dense monomial-lattice storage.

    Raw elements are tuples of base raws of length prod(bounds); index i
    encodes the exponent vector in mixed radix.  A product table built once
    at construction maps index pairs to their target slot (or None when the
    monomial dies in the quotient).
    """

    def __init__(self, base, names, bounds):
        if len(names) != len(bounds) or not names:
            raise MalformedDescriptor("generator names and bounds must align and be nonempty")
        if len(set(names)) != len(names):
            raise MalformedDescriptor("duplicate generator names")
        if any(b < 2 for b in bounds):
            raise MalformedDescriptor("exponent bounds must be >= 2")
        size = 1
        for b in bounds:
            size *= b
        if size > 4096:
            raise MalformedDescriptor("monomial lattice too large")
        self.base = base
        self.names = tuple(names)
        self.bounds = tuple(bounds)
        self.size = size
        self.characteristic = base.characteristic
        self.nilradical_exponent = base.nilradical_exponent + sum(b - 1 for b in bounds)
        strides = []
        s = 1
        for b in bounds:
            strides.append(s)
            s *= b
        self._strides = tuple(strides)
        self._exps = [self._decode(i) for i in range(size)]
        table = []
        for ia in range(size):
            row = []
            ea = self._exps[ia]
            for ib in range(size):
                eb = self._exps[ib]
                es = tuple(x + y for x, y in zip(ea, eb))
                row.append(self._encode(es) if all(e < b for e, b in zip(es, bounds)) else None)
            table.append(tuple(row))
        self._table = tuple(table)
        self.zero = tuple([base.zero] * size)
        one = [base.zero] * size
        one[0] = base.one
        self.one = tuple(one)

    def _decode(self, i):
        out = []
        for b in self.bounds:
            out.append(i % b)
            i //= b
        return tuple(out)

    def _encode(self, exps):
        return sum(e * s for e, s in zip(exps, self._strides))

    def __repr__(self):
        gens = ",".join(self.names)
        rel = ",".join(f"{n}^{b}" for n, b in zip(self.names, self.bounds))
        return f"{self.base}[{gens}]/({rel})"

    def __eq__(self, other):
        return (isinstance(other, NilpotentExtension) and other.base == self.base
                and other.names == self.names and other.bounds == self.bounds)

    def __hash__(self):
        return hash(("Nil", self.base, self.names, self.bounds))

    def generator(self, name):
        i = self.names.index(name)
        out = [self.base.zero] * self.size
        out[self._strides[i]] = self.base.one
        return tuple(out)

    def add(self, a, b):
        B = self.base
        return tuple(B.add(x, y) for x, y in zip(a, b))

    def sub(self, a, b):
        B = self.base
        return tuple(B.sub(x, y) for x, y in zip(a, b))

    def neg(self, a):
        B = self.base
        return tuple(B.neg(x) for x in a)

    def mul(self, a, b):
        B = self.base
        bz, badd, bmul = B.is_zero, B.add, B.mul
        out = list(self.zero)
        table = self._table
        for ia, ca in enumerate(a):
            if bz(ca):
                continue
            row = table[ia]
            for ib, cb in enumerate(b):
                if bz(cb):
                    continue
                io = row[ib]
                if io is not None:
                    out[io] = badd(out[io], bmul(ca, cb))
        return tuple(out)

    def is_zero(self, a):
        B = self.base
        return all(B.is_zero(x) for x in a)

    def is_unit(self, a):
        return self.base.is_unit(a[0])

    def inverse(self, a):
        if not self.base.is_unit(a[0]):
            raise NotAUnit("constant part is not a unit")
        c0inv = self.base.inverse(a[0])
        # a = c0 (1 + w) with w nilpotent: geometric series terminates
        w = list(a)
        w[0] = self.base.zero
        w = tuple(self.base.neg(self.base.mul(c0inv, x)) for x in w)  # w = -(a - c0)/c0
        acc = self.one
        term = self.one
        while True:
            term = self.mul(term, w)
            if self.is_zero(term):
                break
            acc = self.add(acc, term)
        return tuple(self.base.mul(c0inv, x) for x in acc)

    def from_int(self, n):
        out = [self.base.zero] * self.size
        out[0] = self.base.from_int(n)
        return tuple(out)

    def is_raw(self, x):
        return (isinstance(x, tuple) and len(x) == self.size
                and all(self.base.is_raw(c) for c in x))

    def embed_base(self, braw):
        out = [self.base.zero] * self.size
        out[0] = braw
        return tuple(out)

    def residue_ring(self):
        return self.base.residue_ring()

    def residue(self, a):
        return self.base.residue(a[0])

    def contains_rationals(self):
        return self.base.contains_rationals()

    def pretty(self, a):
        B = self.base
        terms = []
        for i, c in enumerate(a):
            if B.is_zero(c):
                continue
            exps = self._exps[i]
            mono = "*".join(
                (n if e == 1 else f"{n}^{e}") for n, e in zip(self.names, exps) if e)
            cs = B.pretty(c)
            if not mono:
                terms.append(cs)
            elif cs == "1":
                terms.append(mono)
            else:
                cs = f"({cs})" if ("+" in cs or " - " in cs) else cs
                terms.append(f"{cs}*{mono}")
        return " + ".join(terms) if terms else "0"

    def random_element(self, rng):
        return tuple(self.base.random_element(rng) if rng.random() < 0.6 else self.base.zero
                     for _ in range(self.size))

    def random_unit(self, rng):
        a = list(self.random_element(rng))
        a[0] = self.base.random_unit(rng)
        return tuple(a)

    def random_nilpotent(self, rng):
        a = list(self.random_element(rng))
        a[0] = self.base.random_nilpotent(rng)
        return tuple(a)


# ---------------------------------------------------------------------------
# descriptor -> ring
# ---------------------------------------------------------------------------

def default_modulus(p, k):
    """First monic irreducible of degree k over GF(p) in lexicographic order."""
    F = PrimeField(p)
    for cand in _monic_polys(F, k):
        if _poly_is_irreducible(F, cand):
            return tuple(cand)
    raise MalformedDescriptor(f"no irreducible of degree {k} over GF({p})")


def make_ring(desc) -> Ring:
    """Build a validated ring handle from a descriptor tree."""
    if isinstance(desc, RationalsDesc):
        return Rationals()
    if isinstance(desc, PrimeFieldDesc):
        return PrimeField(desc.p)
    if isinstance(desc, FiniteFieldDesc):
        base = PrimeField(desc.p)
        mod = desc.modulus if desc.modulus is not None else default_modulus(desc.p, desc.k)
        if len(mod) - 1 != desc.k:
            raise MalformedDescriptor("modulus degree does not match the extension degree")
        return FiniteField(base, [base.from_int(c) if isinstance(c, int) else c for c in mod],
                           desc.gen_name)
    if isinstance(desc, IntegersModDesc):
        return IntegersModPK(desc.p, desc.k)
    if isinstance(desc, NilpotentExtensionDesc):
        return NilpotentExtension(make_ring(desc.base), desc.names, desc.bounds)
    raise MalformedDescriptor(f"unknown descriptor {desc!r}")


# ---------------------------------------------------------------------------
# field-part utilities and the norm map
# ---------------------------------------------------------------------------

def field_part(ring: Ring):
    """The field sitting under the nilpotent structure, or None (Z/(p^k))."""
    if isinstance(ring, NilpotentExtension):
        return field_part(ring.base)
    if ring.is_field:
        return ring
    return None


def with_field(ring: Ring, new_field: Ring) -> Ring:
    """Rebuild `ring` with its field part replaced by `new_field`."""
    if isinstance(ring, NilpotentExtension):
        return NilpotentExtension(with_field(ring.base, new_field), ring.names, ring.bounds)
    if ring.is_field or isinstance(ring, Rationals):
        return new_field
    raise RingMismatch(f"{ring} has no replaceable field part")


def map_field_coeffs(raw, src: Ring, dst: Ring, fmap):
    """Apply `fmap` (a map between the two field parts' raws) coefficient-wise."""
    if isinstance(src, NilpotentExtension):
        return tuple(map_field_coeffs(c, src.base, dst.base, fmap) for c in raw)
    return fmap(raw)


def embed_element(raw, src: Ring, dst: Ring):
    """Embed along a field extension: dst = with_field(src, L), L a tower over src's field."""
    K = field_part(src)
    L = field_part(dst)

    def up(x):
        chain = []
        F = L
        while F != K:
            if not isinstance(F, FiniteField):
                raise RingMismatch(f"{L} is not a tower over {K}")
            chain.append(F)
            F = F.base
        for F in reversed(chain):
            x = F.embed_base(x)
        return x

    return map_field_coeffs(raw, src, dst, up)


def tower_path(L: Ring, K: Ring):
    """Extension steps from L down to K; raises when K is not below L."""
    path = []
    F = L
    while F != K:
        if not isinstance(F, FiniteField):
            raise RingMismatch(f"{K} is not a subfield of {L} in this tower")
        path.append(F)
        F = F.base
    return path


def norm_to_subfield(raw, src: Ring, dst: Ring):
    """Product of all Frobenius-conjugate images, landing in dst.

    src and dst must share the nilpotent structure, with src's field part a
    tower extension of dst's.  The element must be a unit.
    """
    if not src.is_unit(raw):
        raise NotAUnit("norm is only defined on units")
    K = field_part(dst)
    L = field_part(src)
    cur_ring, cur = src, raw
    for step in tower_path(L, K):
        # one tower level: conjugate by powers of x -> x^{|base|}, multiply, descend
        prod = cur
        conj = cur
        for _ in range(step.degree - 1):
            conj = map_field_coeffs(conj, cur_ring, cur_ring, step.frobenius)
            prod = cur_ring.mul(prod, conj)
        down_ring = with_field(cur_ring, step.base)
        prod = map_field_coeffs(prod, cur_ring, down_ring, step.constant_part)
        cur_ring, cur = down_ring, prod
    if cur_ring != dst:
        raise RingMismatch(f"norm landed in {cur_ring}, expected {dst}")
    return cur


# ---------------------------------------------------------------------------
# wrapped values
# ---------------------------------------------------------------------------

class RingValue:
    """An element of a coefficient ring; immutable, canonical, exact."""

    __slots__ = ("ring", "raw")

    def __init__(self, ring, raw):
        self.ring = ring
        self.raw = raw

    def _coerce(self, other):
        if isinstance(other, RingValue):
            if other.ring != self.ring:
                raise RingMismatch(f"{self.ring} vs {other.ring}")
            return other.raw
        return self.ring.coerce(other)

    def __add__(self, other):
        return RingValue(self.ring, self.ring.add(self.raw, self._coerce(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return RingValue(self.ring, self.ring.sub(self.raw, self._coerce(other)))

    def __rsub__(self, other):
        return RingValue(self.ring, self.ring.sub(self._coerce(other), self.raw))

    def __neg__(self):
        return RingValue(self.ring, self.ring.neg(self.raw))

    def __mul__(self, other):
        return RingValue(self.ring, self.ring.mul(self.raw, self._coerce(other)))

    __rmul__ = __mul__

    def __pow__(self, n):
        return RingValue(self.ring, self.ring.pow(self.raw, n))

    def __eq__(self, other):
        if isinstance(other, RingValue):
            return self.ring == other.ring and self.raw == other.raw
        try:
            return self.raw == self._coerce(other)
        except RingMismatch:
            return NotImplemented

    def __hash__(self):
        return hash((self.ring, self.raw))

    def __repr__(self):
        return self.ring.pretty(self.raw)

    def is_unit(self):
        return self.ring.is_unit(self.raw)

    def is_zero(self):
        return self.ring.is_zero(self.raw)

    def inverse(self):
        return RingValue(self.ring, self.ring.inverse(self.raw))

    def nilpotency_index(self):
        return self.ring.nilpotency_index(self.raw)

    def residue_field_image(self):
        return RingValue(self.ring.residue_ring(), self.ring.residue(self.raw))
