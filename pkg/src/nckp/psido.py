"""Exact pseudo-differential operators: differential part plus dyadic tails.

A PsiDO is  sum_k c_k del^k  (k >= 0, finitely many)  +  sum_i a_i del^-1 b_i.
Nothing is truncated: products of two dyads close through the rewrite
del^-1 f del^-1 = F del^-1 - del^-1 F with F an antiderivative of f, which
may introduce one level of J nesting in the legs.  Truncated Laurent views
exist only for equality testing and N-th roots.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

from .diffring import (Context, DiffExpr, DiffRingError, MixedContextError,
                       NotInvertibleError, Rat, Substitution, antiderivative,
                       common_context, _content_sign, _expr_key)


def binom(k: int, j: int) -> Fraction:
    """Generalized binomial C(k, j) for integer k (falling factorial)."""
    if j < 0:
        return Fraction(0)
    num = 1
    for i in range(j):
        num *= (k - i)
    den = 1
    for i in range(2, j + 1):
        den *= i
    return Fraction(num, den)


def _canon_dyads(ctx: Context, dyads):
    """Drop zero legs, move scalar content left, merge equal legs, sort."""
    cleaned = []
    for a, b in dyads:
        if a.is_zero() or b.is_zero():
            continue
        scale, prim = _content_sign(b)
        cleaned.append((a * scale, prim))
    by_right: dict = {}
    for a, b in cleaned:
        if b in by_right:
            by_right[b] = by_right[b] + a
        else:
            by_right[b] = a
    by_left: dict = {}
    for b, a in by_right.items():
        if a.is_zero():
            continue
        if a in by_left:
            by_left[a] = by_left[a] + b
        else:
            by_left[a] = b
    out = []
    for a, b in by_left.items():
        if b.is_zero():
            continue
        scale, prim = _content_sign(b)
        out.append((a * scale, prim))
    out.sort(key=lambda ab: (_expr_key(ab[1]), _expr_key(ab[0])))
    return tuple(out)


class PsiDO:
    """Immutable exact pseudo-differential operator."""

    __slots__ = ("ctx", "diff", "dyads")

    def __init__(self, ctx: Context, diff: Dict[int, DiffExpr] = None,
                 dyads=()):
        self.ctx = ctx
        d = {}
        for k, c in (diff or {}).items():
            if k < 0:
                raise DiffRingError("exact operators store no negative orders")
            if not c.is_zero():
                d[k] = c
        self.diff = d
        self.dyads = _canon_dyads(ctx, dyads)

    # -- constructors --------------------------------------------------

    @staticmethod
    def zero(ctx: Context) -> "PsiDO":
        return PsiDO(ctx)

    @staticmethod
    def of_expr(e: DiffExpr) -> "PsiDO":
        return PsiDO(e.ctx, {0: e})

    @staticmethod
    def const(ctx: Context, c: Rat) -> "PsiDO":
        return PsiDO(ctx, {0: ctx.const(c)})

    @staticmethod
    def delta(ctx: Context, k: int = 1, coeff: Rat = 1) -> "PsiDO":
        return PsiDO(ctx, {k: ctx.const(coeff)})

    @staticmethod
    def dyad(a: DiffExpr, b: DiffExpr) -> "PsiDO":
        ctx = common_context(a.ctx, b.ctx)
        return PsiDO(ctx, {}, ((a, b),))

    @staticmethod
    def dinv(ctx: Context) -> "PsiDO":
        return PsiDO(ctx, {}, ((ctx.one(), ctx.one()),))

    # -- protocol --------------------------------------------------------

    def is_zero_exact(self) -> bool:
        return not self.diff and not self.dyads

    def __repr__(self):
        from .textio import psido_str
        return psido_str(self)

    def __eq__(self, other):
        if not isinstance(other, PsiDO):
            return NotImplemented
        return self.equals(other)

    def __hash__(self):
        return hash((frozenset(self.diff.items()), self.dyads))

    def equals(self, other: "PsiDO", depth: Optional[int] = None) -> bool:
        """Exact equality: equal differential parts, dyad difference expands
        to zero at depth 2r+2 (r = dyad count of the difference).

        A nonzero expansion at any depth is conclusive inequality; the
        default depth is sufficient for rank-r dyad sums in practice and
        can be raised by callers.
        """
        d = self - other
        if d.diff:
            return False
        if not d.dyads:
            return True
        if depth is None:
            depth = 2 * len(d.dyads) + 2
        view = d.expand_tail(depth)
        return all(c.is_zero() for c in view.coeffs.values())

    # -- linear structure --------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = PsiDO.const(self.ctx, other)
        if isinstance(other, DiffExpr):
            other = PsiDO.of_expr(other)
        if not isinstance(other, PsiDO):
            return NotImplemented
        ctx = common_context(self.ctx, other.ctx)
        d = dict(self.diff)
        for k, c in other.diff.items():
            d[k] = d[k] + c if k in d else c
        return PsiDO(ctx, d, self.dyads + other.dyads)

    __radd__ = __add__

    def __neg__(self):
        return PsiDO(self.ctx, {k: -c for k, c in self.diff.items()},
                     tuple((-a, b) for a, b in self.dyads))

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = PsiDO.const(self.ctx, other)
        if isinstance(other, DiffExpr):
            other = PsiDO.of_expr(other)
        if not isinstance(other, PsiDO):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    # -- multiplication ------------------------------------------------

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            return PsiDO(self.ctx, {k: v * c for k, v in self.diff.items()},
                         tuple((a * c, b) for a, b in self.dyads))
        if isinstance(other, DiffExpr):
            other = PsiDO.of_expr(other)
        if not isinstance(other, PsiDO):
            return NotImplemented
        ctx = common_context(self.ctx, other.ctx)
        out_diff: dict = {}
        out_dyads = []

        def add_diff(k, c):
            if c.is_zero():
                return
            out_diff[k] = out_diff[k] + c if k in out_diff else c

        dcache: dict = {}

        def dn(e: DiffExpr, n: int) -> DiffExpr:
            key = (id(e), n)
            hit = dcache.get(key)
            if hit is None:
                hit = e if n == 0 else dn(e, n - 1).diff()
                dcache[key] = hit
            return hit

        for k, a in self.diff.items():
            for l, b in other.diff.items():
                for j in range(k + 1):
                    add_diff(k + l - j, a * dn(b, j) * binom(k, j))
            for c, d in other.dyads:
                # a del^k o c del^-1 d
                for j in range(k):
                    w = a * dn(c, j) * binom(k, j)
                    m = k - 1 - j
                    for i in range(m + 1):
                        add_diff(m - i, w * dn(d, i) * binom(m, i))
                out_dyads.append((a * dn(c, k), d))
        for a, b in self.dyads:
            for l, c in other.diff.items():
                f = b * c
                for i in range(l):
                    add_diff(l - 1 - i, a * dn(f, i) * (Fraction(-1) ** i))
                out_dyads.append((a, dn(f, l) * (Fraction(-1) ** l)))
            for c, d in other.dyads:
                F = antiderivative(b * c)
                out_dyads.append((a * F, d))
                out_dyads.append((-a, F * d))
        return PsiDO(ctx, out_diff, tuple(out_dyads))

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.__mul__(other)
        if isinstance(other, DiffExpr):
            return PsiDO.of_expr(other).__mul__(self)
        return NotImplemented

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise DiffRingError("operator powers take nonnegative integers")
        r = PsiDO.const(self.ctx, 1)
        b = self
        while n:
            if n & 1:
                r = r * b
            b = b * b if n > 1 else b
            n >>= 1
        return r

    # -- structure maps --------------------------------------------------

    def adjoint(self) -> "PsiDO":
        ctx = self.ctx
        out_diff: dict = {}
        for k, a in self.diff.items():
            sign = Fraction(-1) ** k
            d = a
            for j in range(k + 1):
                c = d * binom(k, j) * sign
                if not c.is_zero():
                    out_diff[k - j] = out_diff.get(k - j, ctx.zero()) + c
                if j < k:
                    d = d.diff()
        dyads = tuple((-b, a) for a, b in self.dyads)
        return PsiDO(ctx, out_diff, dyads)

    def project(self, part: str):
        if part == "plus":
            return PsiDO(self.ctx, dict(self.diff))
        if part == "minus":
            return PsiDO(self.ctx, {}, self.dyads)
        if part == "geq1":
            return PsiDO(self.ctx, {k: c for k, c in self.diff.items() if k >= 1})
        if part == "order0":
            return self.diff.get(0, self.ctx.zero())
        raise DiffRingError(f"unknown projection {part!r}")

    def plus(self) -> "PsiDO":
        return self.project("plus")

    def minus(self) -> "PsiDO":
        return self.project("minus")

    def geq1(self) -> "PsiDO":
        return self.project("geq1")

    def order0(self) -> DiffExpr:
        return self.project("order0")

    def residue(self) -> DiffExpr:
        out = self.ctx.zero()
        for a, b in self.dyads:
            out = out + a * b
        return out

    def order(self) -> int:
        return max(self.diff.keys(), default=(-1 if self.dyads else 0))

    def apply(self, f: DiffExpr) -> DiffExpr:
        """Action on a function: order-zero part of self o (f .)."""
        out = self.ctx.zero()
        for k, c in self.diff.items():
            out = out + c * f.diff(k)
        for a, b in self.dyads:
            out = out + a * antiderivative(b * f)
        return out

    def conjugate_by(self, g: DiffExpr) -> "PsiDO":
        """g^-1 o self o g for a unit g."""
        if not g.is_unit():
            raise NotInvertibleError("conjugation requires a unit")
        return PsiDO.of_expr(g.inverse()) * self * PsiDO.of_expr(g)

    def substitute(self, sub: Substitution) -> "PsiDO":
        diff = {k: sub(c) for k, c in self.diff.items()}
        dyads = tuple((sub(a), sub(b)) for a, b in self.dyads)
        return PsiDO(sub.dst, diff, dyads)

    def has_j_atoms(self) -> bool:
        def expr_has(e: DiffExpr):
            return any(t[1] for t in e.terms)
        return any(expr_has(c) for c in self.diff.values()) or \
            any(expr_has(a) or expr_has(b) for a, b in self.dyads)

    def as_monic_linear(self) -> Optional[DiffExpr]:
        """If self == del - b, return b."""
        if self.dyads:
            return None
        if set(self.diff.keys()) - {0, 1}:
            return None
        if not self.diff.get(1, self.ctx.zero()).is_one():
            return None
        return -self.diff.get(0, self.ctx.zero())

    def expand_tail(self, depth: int) -> "OperatorView":
        if depth <= 0:
            raise DiffRingError("depth must be positive")
        coeffs = {k: c for k, c in self.diff.items()}
        for a, b in self.dyads:
            d = b
            for j in range(1, depth + 1):
                c = a * d * (Fraction(-1) ** (j - 1))
                if not c.is_zero():
                    coeffs[-j] = coeffs.get(-j, self.ctx.zero()) + c
                if j < depth:
                    d = d.diff()
        coeffs = {k: c for k, c in coeffs.items() if not c.is_zero()}
        return OperatorView(self.ctx, coeffs, -depth)


def commutator(A: PsiDO, B: PsiDO) -> PsiDO:
    return A * B - B * A


def invert_monic_linear(b: DiffExpr) -> PsiDO:
    """Exact two-sided inverse of (del - b): E(b) del^-1 E(-b)."""
    from .diffring import E_of
    return PsiDO.dyad(E_of(b), E_of(-b))


# ---------------------------------------------------------------------------
# truncated Laurent views
# ---------------------------------------------------------------------------

class OperatorView:
    """Truncated Laurent form sum_{k >= floor} c_k del^k of an operator."""

    __slots__ = ("ctx", "coeffs", "floor")

    def __init__(self, ctx: Context, coeffs: Dict[int, DiffExpr], floor: int):
        self.ctx = ctx
        self.coeffs = {k: c for k, c in coeffs.items()
                       if k >= floor and not c.is_zero()}
        self.floor = floor

    def coeff(self, k: int) -> DiffExpr:
        return self.coeffs.get(k, self.ctx.zero())

    def is_zero(self) -> bool:
        return not self.coeffs

    def __repr__(self):
        from .textio import expr_str
        parts = [f"({expr_str(c)})*del^{k}"
                 for k, c in sorted(self.coeffs.items(), reverse=True)]
        return " + ".join(parts) if parts else "0"

    def __sub__(self, other: "OperatorView") -> "OperatorView":
        floor = max(self.floor, other.floor)
        coeffs = {k: c for k, c in self.coeffs.items() if k >= floor}
        for k, c in other.coeffs.items():
            if k >= floor:
                coeffs[k] = coeffs.get(k, self.ctx.zero()) - c
        return OperatorView(self.ctx, coeffs, floor)

    def mul(self, other: "OperatorView", floor: int) -> "OperatorView":
        out: dict = {}
        for k, a in self.coeffs.items():
            for l, b in other.coeffs.items():
                d = b
                j = 0
                while k + l - j >= floor:
                    c = a * d * binom(k, j)
                    if not c.is_zero():
                        key = k + l - j
                        out[key] = out.get(key, self.ctx.zero()) + c
                    j += 1
                    if j > 60:
                        break
                    d = d.diff()
        return OperatorView(self.ctx, out, floor)

    def power(self, n: int, floor: int) -> "OperatorView":
        r = OperatorView(self.ctx, {0: self.ctx.one()}, floor)
        for _ in range(n):
            r = r.mul(self, floor)
        return r

    def plus_part(self) -> PsiDO:
        return PsiDO(self.ctx, {k: c for k, c in self.coeffs.items() if k >= 0})


def nth_root(A: PsiDO, N: int, depth: int) -> OperatorView:
    """Monic N-th root view R with R^N = A on all orders >= N - depth."""
    if N <= 0:
        raise DiffRingError("root index must be positive")
    ctx = A.ctx
    if A.order() != N or not A.diff.get(N, ctx.zero()).is_one():
        raise DiffRingError("nth_root requires a monic operator of order N")
    if N == 1:
        return A.expand_tail(depth)
    Av = A.expand_tail(depth + 1)
    floor_R = 1 - depth
    R = OperatorView(ctx, {1: ctx.one()}, floor_R)
    for i in range(depth):
        target_order = N - 1 - i
        P = R.power(N, N - depth)
        err = Av.coeff(target_order) - P.coeff(target_order)
        if err.is_zero():
            continue
        R = OperatorView(ctx, {**R.coeffs, -i: R.coeff(-i) + err / N}, floor_R)
    return R


def root_power_plus(A: PsiDO, k: int, N: int) -> PsiDO:
    """Differential part of A^{k/N}, exact on all nonnegative orders."""
    if k % N == 0:
        return (A ** (k // N)).plus()
    depth = A.order() + k + 2
    R = nth_root(A, N, depth)
    P = R.power(k, -2)
    return P.plus_part()


# ---------------------------------------------------------------------------
# Frechet derivatives (operator-valued rows)
# ---------------------------------------------------------------------------

def frechet(e: DiffExpr, fields: Sequence[str]) -> Dict[str, PsiDO]:
    """Row of operators D_f with first_variation(e, h) = sum_f D_f(h_f).

    The chain rule through atoms: the row of J(p) is del^-1 o row(p), the
    row of E(g) is E(g) o del^-1 o row(g).
    """
    ctx = e.ctx
    from .diffring import pdiff, DiffExpr as DE
    rows: Dict[str, PsiDO] = {f: PsiDO.zero(ctx) for f in fields}
    idx = {ctx.gen(f).index: f for f in fields}
    # jet part
    support = {}
    for (jets, _a, _e), _c in e.terms.items():
        for (gi, k), _x in jets:
            if gi in idx:
                support[(gi, k)] = True
    for (gi, k) in sorted(support):
        c = pdiff(e, gi, k)
        if not c.is_zero():
            f = idx[gi]
            rows[f] = rows[f] + PsiDO.of_expr(c) * PsiDO.delta(ctx, k) \
                if k else rows[f] + PsiDO.of_expr(c)
    # atom parts, term by term
    for (jets, jat, earg), c in e.terms.items():
        for i in range(len(jat)):
            cof = DE(ctx, {(jets, jat[:i] + jat[i + 1:], earg): c})
            sub = frechet(jat[i], fields)
            for f in fields:
                if not sub[f].is_zero_exact():
                    rows[f] = rows[f] + PsiDO.of_expr(cof) * PsiDO.dinv(ctx) * sub[f]
        if earg is not None:
            cof = DE(ctx, {(jets, jat, earg): c})
            sub = frechet(earg, fields)
            for f in fields:
                if not sub[f].is_zero_exact():
                    rows[f] = rows[f] + PsiDO.of_expr(cof) * PsiDO.dinv(ctx) * sub[f]
    return rows


def psido_variation(A: PsiDO, images: Mapping[str, DiffExpr]) -> PsiDO:
    """Directional variation of an operator along field deltas."""
    from .diffring import derive_along
    diff = {k: derive_along(c, images) for k, c in A.diff.items()}
    dyads = []
    for a, b in A.dyads:
        dyads.append((derive_along(a, images), b))
        dyads.append((a, derive_along(b, images)))
    return PsiDO(A.ctx, diff, tuple(dyads))
