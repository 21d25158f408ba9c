"""Exact differential expressions over jet variables.

The coefficient world for the operator calculus: Laurent monomials in jet
variables g, g', g'', ... with rational coefficients, extended by two kinds
of formal atoms:

* J(p), a formal antiderivative with J(p)' = p.  J symbols are linear over
  the rationals and are only created when p is not an exact total
  derivative; exact parts are always integrated out.
* E(g), an exponential-integral unit with E(g)' = g*E(g) and the group law
  E(g)*E(h) = E(g+h), E(0) = 1.

Only order-zero jets of generators declared invertible (and E units) may
appear in denominators.  All arithmetic is exact; there is no floating
point anywhere.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

Rat = Union[int, Fraction]


class DiffRingError(Exception):
    pass


class MixedContextError(DiffRingError):
    pass


class NotInvertibleError(DiffRingError):
    pass


class Generator:
    """A field symbol together with its tower of jet variables."""

    __slots__ = ("name", "index", "invertible", "constant")

    def __init__(self, name: str, index: int, invertible: bool = False,
                 constant: bool = False):
        self.name = name
        self.index = index
        self.invertible = invertible
        self.constant = constant

    def __repr__(self):
        flags = "!" if self.invertible else ""
        return f"Generator({self.name}{flags})"


class Context:
    """Immutable registry of generators; shared by all expressions built on it.

    Contexts extend by appending generators, so an expression built on a
    parent context remains valid in any extension.
    """

    __slots__ = ("gens", "by_name")

    def __init__(self, names: Sequence[str] = (), invertible: Sequence[str] = (),
                 constant: Sequence[str] = (), _gens: tuple = ()):
        if _gens:
            gens = list(_gens)
        else:
            gens = []
        inv = set(invertible)
        con = set(constant)
        for name in names:
            if any(g.name == name for g in gens):
                raise DiffRingError(f"duplicate generator name {name!r}")
            gens.append(Generator(name, len(gens), name in inv, name in con))
        self.gens = tuple(gens)
        self.by_name = {g.name: g for g in self.gens}

    def extend(self, names: Sequence[str], invertible: Sequence[str] = (),
               constant: Sequence[str] = ()) -> "Context":
        ctx = Context(names, invertible, constant, _gens=self.gens)
        return ctx

    def gen(self, name: str) -> Generator:
        try:
            return self.by_name[name]
        except KeyError:
            raise DiffRingError(f"unknown generator {name!r}") from None

    def var(self, name: str, order: int = 0) -> "DiffExpr":
        g = self.gen(name)
        if order < 0:
            raise DiffRingError("jet order must be nonnegative")
        if g.constant and order > 0:
            return self.zero()
        term = ((((g.index, order), 1),), (), None)
        return DiffExpr(self, {term: Fraction(1)})

    def const(self, c: Rat) -> "DiffExpr":
        c = Fraction(c)
        if c == 0:
            return self.zero()
        return DiffExpr(self, {TERM_ONE: c})

    def zero(self) -> "DiffExpr":
        return DiffExpr(self, {})

    def one(self) -> "DiffExpr":
        return DiffExpr(self, {TERM_ONE: Fraction(1)})


TERM_ONE = ((), (), None)


def common_context(a: Context, b: Context) -> Context:
    if a is b:
        return a
    la, lb = len(a.gens), len(b.gens)
    if la <= lb and b.gens[:la] == a.gens:
        return b
    if lb < la and a.gens[:lb] == b.gens:
        return a
    raise MixedContextError("expressions built on unrelated contexts")


def _merge_jets(j1, j2):
    d = dict(j1)
    for jet, e in j2:
        ne = d.get(jet, 0) + e
        if ne:
            d[jet] = ne
        elif jet in d:
            del d[jet]
    return tuple(sorted(d.items()))


def _mul_terms(t1, c1, t2, c2, ctx):
    jets = _merge_jets(t1[0], t2[0])
    jat = tuple(sorted(t1[1] + t2[1], key=_expr_key))
    e1, e2 = t1[2], t2[2]
    if e1 is None:
        earg = e2
    elif e2 is None:
        earg = e1
    else:
        earg = e1 + e2
        if earg.is_zero():
            earg = None
    return (jets, jat, earg), c1 * c2


def _expr_key(e: "DiffExpr"):
    return e.sort_key()


def _term_key(t):
    jets, jat, earg = t
    deg = sum(e for _, e in jets)
    return (deg, jets, tuple(a.sort_key() for a in jat),
            earg.sort_key() if earg is not None else ())


class DiffExpr:
    """Normal-form sum of monomials.  Immutable; all operations are pure."""

    __slots__ = ("ctx", "terms", "_hash", "_key")

    def __init__(self, ctx: Context, terms: dict):
        self.ctx = ctx
        self.terms = terms
        self._hash = None
        self._key = None

    # -- basic protocol ----------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_one(self) -> bool:
        return self.terms == {TERM_ONE: Fraction(1)}

    def is_rational(self) -> Optional[Fraction]:
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and TERM_ONE in self.terms:
            return self.terms[TERM_ONE]
        return None

    def sort_key(self):
        if self._key is None:
            self._key = tuple(sorted((_term_key(t), c)
                                     for t, c in self.terms.items()))
        return self._key

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.ctx.const(other)
        if not isinstance(other, DiffExpr):
            return NotImplemented
        common_context(self.ctx, other.ctx)
        return self.terms == other.terms

    def __ne__(self, other):
        r = self.__eq__(other)
        return NotImplemented if r is NotImplemented else not r

    def __repr__(self):
        from .textio import expr_str
        return expr_str(self)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.ctx.const(other)
        if not isinstance(other, DiffExpr):
            return NotImplemented
        ctx = common_context(self.ctx, other.ctx)
        terms = dict(self.terms)
        for t, c in other.terms.items():
            nc = terms.get(t, ZERO_F) + c
            if nc:
                terms[t] = nc
            elif t in terms:
                del terms[t]
        return _make(ctx, terms)

    __radd__ = __add__

    def __neg__(self):
        return DiffExpr(self.ctx, {t: -c for t, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.ctx.const(other)
        if not isinstance(other, DiffExpr):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            if c == 0:
                return self.ctx.zero()
            return DiffExpr(self.ctx, {t: v * c for t, v in self.terms.items()})
        if not isinstance(other, DiffExpr):
            return NotImplemented
        ctx = common_context(self.ctx, other.ctx)
        out: dict = {}
        for t1, c1 in self.terms.items():
            for t2, c2 in other.terms.items():
                t, c = _mul_terms(t1, c1, t2, c2, ctx)
                nc = out.get(t, ZERO_F) + c
                if nc:
                    out[t] = nc
                elif t in out:
                    del out[t]
        return _make(ctx, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            return self.inverse() ** (-n)
        r = self.ctx.one()
        b = self
        while n:
            if n & 1:
                r = r * b
            b = b * b
            n >>= 1
        return r

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            if c == 0:
                raise ZeroDivisionError("division by zero")
            return self * (1 / c)
        if not isinstance(other, DiffExpr):
            return NotImplemented
        return self * other.inverse()

    def is_unit(self) -> bool:
        """A unit is a single monomial of invertible order-0 jets and E atoms."""
        if len(self.terms) != 1:
            return False
        (jets, jat, _earg), = self.terms
        if jat:
            return False
        for (gi, k), _e in jets:
            g = self.ctx.gens[gi]
            if k != 0 or not g.invertible:
                return False
        return True

    def inverse(self) -> "DiffExpr":
        if not self.is_unit():
            raise NotInvertibleError(f"not a unit: {self!r}")
        ((jets, jat, earg), c), = self.terms.items()
        njets = tuple((jet, -e) for jet, e in jets)
        nearg = (-earg) if earg is not None else None
        return DiffExpr(self.ctx, {(njets, jat, nearg): 1 / c})

    # -- calculus ----------------------------------------------------------

    def diff(self, n: int = 1) -> "DiffExpr":
        e = self
        for _ in range(n):
            e = _differentiate(e)
        return e

    def constant_term(self) -> Fraction:
        return self.terms.get(TERM_ONE, ZERO_F)

    def has_atoms(self) -> bool:
        return any(t[1] or t[2] is not None for t in self.terms)

    def jet_support(self):
        """All jet variables (gi, order) occurring outside atom arguments."""
        out = set()
        for jets, _jat, _e in self.terms:
            out.update(j for j, _ in jets)
        return out

    def max_order(self, gi: int) -> int:
        m = -1
        for jets, _jat, _e in self.terms:
            for (g, k), _e2 in jets:
                if g == gi and k > m:
                    m = k
        return m


ZERO_F = Fraction(0)


# ---------------------------------------------------------------------------
# normal form construction (J-linearity merge)
# ---------------------------------------------------------------------------

def _make(ctx: Context, terms: dict) -> DiffExpr:
    terms = {t: c for t, c in terms.items() if c}
    if any(t[1] for t in terms):
        terms = _normalize_j(ctx, terms)
    return DiffExpr(ctx, terms)


def _atom_class(arg: DiffExpr):
    # plain (jet-only, homogeneous) args merge within their degree; anything
    # containing E or nested J merges in one exotic class
    if arg.has_atoms():
        return ("exotic",)
    degs = {sum(e for _, e in t[0]) for t in arg.terms}
    if len(degs) == 1:
        return ("plain", degs.pop())
    return ("exotic",)


def _normalize_j(ctx: Context, terms: dict, _depth: int = 0) -> dict:
    """Merge c1*m*J(p1) + c2*m*J(p2) -> m*J(c1 p1 + c2 p2) (same atom class)."""
    if _depth > 10:
        return terms
    for _round in range(40):
        buckets: dict = {}
        for t, c in terms.items():
            jat = t[1]
            if not jat:
                continue
            for pos in range(len(jat)):
                rest = jat[:pos] + jat[pos + 1:]
                key = (t[0], rest, t[2], _atom_class(jat[pos]))
                buckets.setdefault(key, []).append((t, c, jat[pos]))
        merged = None
        for key, items in buckets.items():
            if len({id(a) if a._hash is None else a for _, _, a in items}) < 2:
                continue
            distinct = {}
            for t, c, a in items:
                distinct.setdefault(a, []).append((t, c))
            if len(distinct) < 2:
                continue
            merged = (key, items)
            break
        if merged is None:
            return terms
        (jets, rest, earg, _cls), items = merged
        combined = ctx.zero()
        for t, c, a in items:
            combined = combined + a * c
            del terms[t]
        cof = DiffExpr(ctx, {(jets, rest, earg): Fraction(1)})
        repl = cof * J_of(combined, _depth=_depth + 1)
        for t, c in repl.terms.items():
            nc = terms.get(t, ZERO_F) + c
            if nc:
                terms[t] = nc
            elif t in terms:
                del terms[t]
    return terms


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def _differentiate(e: DiffExpr) -> DiffExpr:
    ctx = e.ctx
    out = ctx.zero()
    plain: dict = {}
    for t, c in e.terms.items():
        jets, jat, earg = t
        for i, ((gi, k), ex) in enumerate(jets):
            if ctx.gens[gi].constant:
                continue
            njets = _merge_jets(jets, (((gi, k), -1), ((gi, k + 1), 1)))
            nt = (njets, jat, earg)
            nc = plain.get(nt, ZERO_F) + c * ex
            if nc:
                plain[nt] = nc
            elif nt in plain:
                del plain[nt]
        for i in range(len(jat)):
            # J(p)' = p: replace the atom by its argument
            cof = DiffExpr(ctx, {(jets, jat[:i] + jat[i + 1:], earg): c})
            out = out + cof * jat[i]
        if earg is not None:
            # E(g)' = g E(g)
            cof = DiffExpr(ctx, {t: c})
            out = out + cof * earg
    return out + _make(ctx, plain)


def pdiff(e: DiffExpr, gi: int, order: int) -> DiffExpr:
    """Formal partial derivative with respect to one jet variable.

    Atom arguments are treated as opaque; callers that need the chain rule
    through J/E go through frechet in the operator module.
    """
    out: dict = {}
    jet = (gi, order)
    for (jets, jat, earg), c in e.terms.items():
        d = dict(jets)
        ex = d.get(jet)
        if not ex:
            continue
        if ex == 1:
            del d[jet]
        else:
            d[jet] = ex - 1
        t = (tuple(sorted(d.items())), jat, earg)
        nc = out.get(t, ZERO_F) + c * ex
        if nc:
            out[t] = nc
        elif t in out:
            del out[t]
    return _make(e.ctx, out)


def euler_derivative(e: DiffExpr, name: str) -> DiffExpr:
    """Variational (Euler-Lagrange) derivative with respect to a generator."""
    if e.has_atoms():
        raise DiffRingError("euler_derivative requires a J/E-free density")
    ctx = e.ctx
    gi = ctx.gen(name).index
    out = ctx.zero()
    top = e.max_order(gi)
    for k in range(top + 1):
        term = pdiff(e, gi, k)
        for _ in range(k):
            term = _differentiate(term)
        out = out + term * (Fraction(-1) ** k)
    return out


# ---------------------------------------------------------------------------
# atoms
# ---------------------------------------------------------------------------

def E_of(g: DiffExpr) -> DiffExpr:
    if g.is_zero():
        return g.ctx.one()
    return DiffExpr(g.ctx, {((), (), g): Fraction(1)})


def _content_sign(e: DiffExpr):
    """Rational content and canonical sign; returns (scale, primitive)."""
    coeffs = sorted(e.terms.items(), key=lambda tc: _term_key(tc[0]))
    lead = coeffs[-1][1]
    nums = [abs(c.numerator) for _, c in coeffs]
    dens = [c.denominator for _, c in coeffs]
    from math import gcd
    g = 0
    for n in nums:
        g = gcd(g, n)
    l = 1
    for d in dens:
        l = l * d // gcd(l, d)
    scale = Fraction(g, l)
    if lead < 0:
        scale = -scale
    prim = DiffExpr(e.ctx, {t: c / scale for t, c in e.terms.items()})
    return scale, prim


def _j_components(rho: DiffExpr):
    """Split a non-integrable remainder into canonical atom arguments."""
    ctx = rho.ctx
    comps: dict = {}
    for t, c in rho.terms.items():
        if t[1] or t[2] is not None:
            key = ("exotic",)
        else:
            key = ("plain", sum(e for _, e in t[0]))
        comps.setdefault(key, {})[t] = c
    return [DiffExpr(ctx, terms) for _key, terms in sorted(comps.items())]


def J_of(p: DiffExpr, _depth: int = 0) -> DiffExpr:
    """Formal antiderivative; integrates exact parts, wraps the rest in J."""
    if p.is_zero():
        return p
    if _depth > 10:
        P, rho = p.ctx.zero(), p
    else:
        P, rho = split_integral(p)
    out = P
    for comp in _j_components(rho):
        scale, prim = _content_sign(comp)
        atom = DiffExpr(p.ctx, {((), (prim,), None): Fraction(1)})
        out = out + atom * scale
    return out


def antiderivative(e: DiffExpr) -> DiffExpr:
    """Right inverse of the derivation on the whole ring."""
    return J_of(e)


def integrate_total_derivative(e: DiffExpr) -> Optional[DiffExpr]:
    """Exact primitive when e is a total derivative, else None."""
    P, rho = split_integral(e)
    if rho.is_zero():
        return P
    return None


def is_total_derivative(e: DiffExpr) -> bool:
    return integrate_total_derivative(e) is not None


def reduce_mod_exact(e: DiffExpr) -> DiffExpr:
    """Canonical remainder of e modulo total derivatives."""
    _P, rho = split_integral(e)
    return rho


# ---------------------------------------------------------------------------
# integration engine
# ---------------------------------------------------------------------------

def split_integral(e: DiffExpr):
    """Decompose e = P' + rho with P found by homotopy and linear ansatz.

    The returned pair always satisfies differentiate(P) + rho == e exactly;
    rho == 0 certifies that e is a total derivative.  rho != 0 is a
    semi-decision: for J/E-free input it is conclusive, for atom-bearing
    input it means no primitive was found in the candidate span.
    """
    ctx = e.ctx
    if e.is_zero():
        return ctx.zero(), ctx.zero()
    plain: dict = {}
    rest: dict = {}
    for t, c in e.terms.items():
        (rest if (t[1] or t[2] is not None) else plain)[t] = c
    P = ctx.zero()
    sticky = ctx.zero()
    if plain:
        p1, r1 = _integrate_plain(DiffExpr(ctx, plain))
        P = P + p1
        sticky = sticky + r1
    target = sticky + _make(ctx, rest)
    if not target.is_zero():
        p2, r2 = _integrate_ansatz(target)
        P = P + p2
        sticky = r2
    if __debug__:
        assert (P.diff() + sticky) == e, "split_integral lost terms"
    return P, sticky


def _integrate_plain(e: DiffExpr):
    """Homotopy integration of a J/E-free expression, per degree component."""
    ctx = e.ctx
    P = ctx.zero()
    rho = ctx.zero()
    comps: dict = {}
    for t, c in e.terms.items():
        comps.setdefault(sum(ex for _, ex in t[0]), {})[t] = c
    for deg, terms in sorted(comps.items()):
        comp = DiffExpr(ctx, terms)
        if deg == 0:
            # constants and Laurent-degree-zero parts: ansatz or stuck
            const = comp.constant_term()
            if const:
                comp = comp - const
                rho = rho + const
            if comp.is_zero():
                continue
            p, r = _integrate_ansatz(comp)
            P, rho = P + p, rho + r
            continue
        exact = True
        for j in sorted({gi for jets, _a, _e in terms for (gi, _k), _x in jets}):
            if not euler_derivative(comp, ctx.gens[j].name).is_zero():
                exact = False
                break
        if not exact:
            rho = rho + comp
            continue
        prim = _homotopy(comp, deg)
        if prim is None or prim.diff() != comp:
            p, r = _integrate_ansatz(comp)
            P, rho = P + p, rho + r
        else:
            P = P + prim
    return P, rho


def _homotopy(e: DiffExpr, deg: int) -> Optional[DiffExpr]:
    """One-shot homotopy primitive for an exact homogeneous component."""
    ctx = e.ctx
    if deg == 0:
        return None
    scale = Fraction(1, deg)
    out = ctx.zero()
    gis = sorted({gi for jets, _a, _e in e.terms for (gi, _k), _x in jets})
    for gi in gis:
        if ctx.gens[gi].constant:
            continue
        top = e.max_order(gi)
        for j in range(1, top + 1):
            w = pdiff(e, gi, j) * scale
            if w.is_zero():
                continue
            dw = w
            for i in range(j):
                uterm = ctx.var(ctx.gens[gi].name, j - 1 - i)
                out = out + uterm * dw * (Fraction(-1) ** i)
                if i < j - 1:
                    dw = dw.diff()
    return out


def _divide_jets(jets, mjets):
    d = dict(jets)
    for jet, e in mjets:
        ne = d.get(jet, 0) - e
        if ne:
            d[jet] = ne
        elif jet in d:
            del d[jet]
    return tuple(sorted(d.items()))


def _jets_nonneg_ok(ctx, jets):
    for (gi, k), e in jets:
        if e < 0 and not (k == 0 and ctx.gens[gi].invertible):
            return False
    return True


def _variants(ctx: Context, t):
    """Candidate primitive monomials whose derivative can reach term t."""
    jets, jat, earg = t
    out = []
    # jet lowerings
    for (gi, k), ex in jets:
        if k >= 1:
            nj = _merge_jets(jets, (((gi, k), -1), ((gi, k - 1), 1)))
            out.append((nj, jat, earg))
    # remove one J atom, dividing by a pure-jet monomial of its argument
    for i, atom in enumerate(jat):
        rest = jat[:i] + jat[i + 1:]
        for (ajets, ajat, aearg), _c in atom.terms.items():
            if ajat or aearg is not None:
                continue
            nj = _divide_jets(jets, ajets)
            if _jets_nonneg_ok(ctx, nj):
                out.append((nj, rest, earg))
        # pairing candidate J(cofactor)*J(p) for a bare-cofactor term
        if not earg and not rest:
            cof = DiffExpr(ctx, {(jets, (), None): Fraction(1)})
            if not cof.is_one():
                _s, prim = _content_sign(cof)
                out.append(((), tuple(sorted((prim, atom), key=_expr_key)), None))
    # E-factor shift: divide the term by a pure-jet monomial of the E argument
    if earg is not None:
        for (gjets, gjat, gearg), _c in earg.terms.items():
            if gjat or gearg is not None:
                continue
            nj = _divide_jets(jets, gjets)
            if _jets_nonneg_ok(ctx, nj):
                out.append((nj, jat, earg))
    out.append(t)
    return out


def _integrate_ansatz(e: DiffExpr):
    """Canonical linear-ansatz integration over a self-generated candidate span.

    The derivative images of the candidates are put in reduced row echelon
    form with respect to the global term order, and the input is reduced to
    its normal form modulo that span.  Candidates are regenerated from the
    residual until a fixpoint, which makes the residual (and hence any J
    atom built from it) independent of which equivalent representative of
    the input arrived here.
    """
    ctx = e.ctx
    P = ctx.zero()
    rho = e
    for _round in range(4):
        if rho.is_zero():
            break
        seen = set()
        cands = []
        frontier = list(rho.terms.keys())
        for _closure in range(2):
            new = []
            for t in frontier:
                for v in _variants(ctx, t):
                    if v not in seen:
                        seen.add(v)
                        new.append(v)
            frontier = new
            cands.extend(new)
            if len(cands) > 800:
                break
        cands.sort(key=_term_key)
        basis: dict = {}  # leading term -> (vector, combo over expr space)
        for t in cands:
            vec = dict(DiffExpr(ctx, {t: Fraction(1)}).diff().terms)
            combo = {t: Fraction(1)}
            _rref_insert(basis, vec, combo)
        work = dict(rho.terms)
        resid: dict = {}
        taken: dict = {}
        while work:
            lk = max(work.keys(), key=_term_key)
            c = work.pop(lk)
            hit = basis.get(lk)
            if hit is None:
                resid[lk] = c
                continue
            vec, combo = hit
            f = c / vec[lk]
            for k, v in vec.items():
                if k == lk:
                    continue
                nv = work.get(k, ZERO_F) - f * v
                if nv:
                    work[k] = nv
                elif k in work:
                    del work[k]
            for k, v in combo.items():
                taken[k] = taken.get(k, ZERO_F) + f * v
        new_rho = _make(ctx, resid)
        P = P + DiffExpr(ctx, {t: c for t, c in taken.items() if c})
        if new_rho == rho:
            rho = new_rho
            break
        rho = new_rho
    return P, rho


def _rref_insert(basis: dict, vec: dict, combo: dict):
    """Insert a vector into a leading-term-indexed RREF basis."""
    while vec:
        lk = max(vec.keys(), key=_term_key)
        hit = basis.get(lk)
        if hit is None:
            lc = vec[lk]
            if lc != 1:
                vec = {k: v / lc for k, v in vec.items()}
                combo = {k: v / lc for k, v in combo.items()}
            # back-substitute into existing rows to keep the form reduced
            for bk, (bvec, bcombo) in list(basis.items()):
                if lk in bvec:
                    f = bvec[lk]
                    for k, v in vec.items():
                        nv = bvec.get(k, ZERO_F) - f * v
                        if nv:
                            bvec[k] = nv
                        elif k in bvec:
                            del bvec[k]
                    for k, v in combo.items():
                        nv = bcombo.get(k, ZERO_F) - f * v
                        if nv:
                            bcombo[k] = nv
                        elif k in bcombo:
                            del bcombo[k]
            basis[lk] = (vec, combo)
            return
        bvec, bcombo = hit
        f = vec[lk] / bvec[lk]
        for k, v in bvec.items():
            nv = vec.get(k, ZERO_F) - f * v
            if nv:
                vec[k] = nv
            elif k in vec:
                del vec[k]
        for k, v in bcombo.items():
            nv = combo.get(k, ZERO_F) - f * v
            if nv:
                combo[k] = nv
            elif k in combo:
                del combo[k]


# ---------------------------------------------------------------------------
# substitution and evolutionary derivations
# ---------------------------------------------------------------------------

class Substitution:
    """Differential ring morphism defined by generator images."""

    def __init__(self, src: Context, dst: Context, images: Mapping[str, DiffExpr]):
        self.src = src
        self.dst = dst
        self.images = dict(images)
        self._cache: dict = {}

    def _jet_image(self, gi: int, order: int) -> DiffExpr:
        key = (gi, order)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        name = self.src.gens[gi].name
        if order == 0:
            img = self.images.get(name)
            if img is None:
                img = self.dst.var(name)
        else:
            img = self._jet_image(gi, order - 1).diff()
        self._cache[key] = img
        return img

    def __call__(self, e: DiffExpr) -> DiffExpr:
        out = self.dst.zero()
        for (jets, jat, earg), c in e.terms.items():
            acc = self.dst.const(c)
            for (gi, k), ex in jets:
                img = self._jet_image(gi, k)
                acc = acc * (img ** ex if ex >= 0 else img.inverse() ** (-ex))
            for atom in jat:
                acc = acc * J_of(self(atom))
            if earg is not None:
                acc = acc * E_of(self(earg))
            out = out + acc
        return out


def derive_along(e: DiffExpr, images: Mapping[str, DiffExpr]) -> DiffExpr:
    """Evolutionary derivation defined on generators, commuting with d/dx.

    Used both for time flows (images = field velocities) and first
    variations (images = field deltas).  J and E atoms evolve by
    J(p) -> antiderivative(p_t) and E(g) -> E(g)*antiderivative(g_t).
    """
    ctx = e.ctx
    cache: dict = {}

    def jet_vel(gi, k):
        key = (gi, k)
        hit = cache.get(key)
        if hit is not None:
            return hit
        name = ctx.gens[gi].name
        if k == 0:
            v = images.get(name, None)
            if v is None:
                v = ctx.zero()
        else:
            v = jet_vel(gi, k - 1).diff()
        cache[key] = v
        return v

    out = ctx.zero()
    for (jets, jat, earg), c in e.terms.items():
        base = DiffExpr(ctx, {(jets, jat, earg): c})
        for i, ((gi, k), ex) in enumerate(jets):
            v = jet_vel(gi, k)
            if v.is_zero():
                continue
            lowered = _merge_jets(jets, (((gi, k), -1),))
            cof = DiffExpr(ctx, {(lowered, jat, earg): c * ex})
            out = out + cof * v
        for i in range(len(jat)):
            dv = derive_along(jat[i], images)
            if dv.is_zero():
                continue
            cof = DiffExpr(ctx, {(jets, jat[:i] + jat[i + 1:], earg): c})
            out = out + cof * antiderivative(dv)
        if earg is not None:
            dv = derive_along(earg, images)
            if not dv.is_zero():
                out = out + base * antiderivative(dv)
    return out


def first_variation(e: DiffExpr, directions: Mapping[str, DiffExpr]) -> DiffExpr:
    return derive_along(e, directions)
