"""Factorization of Lax operators into linear and inverse-linear factors.

Expanding (del - a_1)...(del - a_n)(del - b_1)^-1...(del - b_m)^-1, with an
optional leading del^-1, reproduces a constrained family template; reading
the product off coefficient-by-coefficient and dyad-by-dyad yields the
induced substitutions.  Transferring a constant bracket matrix on the
factorized variables through the substitutions' Frechet matrix recovers
the nonlocal structures (the Kupershmidt-Wilson mechanism).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .diffring import Context, DiffExpr, DiffRingError, Substitution
from .psido import PsiDO, frechet, invert_monic_linear
from .structures import (BracketMatrix, LaxFamily, VerificationReport,
                         compare_tables, nonstandard_family,
                         second_order_family, transfer_bracket)


class FactorizationError(DiffRingError):
    pass


@dataclass
class MiuraSpec:
    """A factorization signature together with its induced substitutions."""
    n: int
    m: int
    prefix: bool
    ctx: Context
    operator: PsiDO
    family: LaxFamily
    substitutions: Dict[str, DiffExpr]

    @property
    def ab_fields(self) -> Tuple[str, ...]:
        return tuple(f"a{i}" for i in range(1, self.n + 1)) + \
            tuple(f"b{j}" for j in range(1, self.m + 1))

    def elimination(self) -> Substitution:
        return Substitution(self.family.ctx, self.ctx, self.substitutions)


def _factor_product(ctx: Context, n: int, m: int, prefix: bool) -> PsiDO:
    op = PsiDO.const(ctx, 1)
    for i in range(1, n + 1):
        op = op * (PsiDO.delta(ctx) - PsiDO.of_expr(ctx.var(f"a{i}")))
    for j in range(1, m + 1):
        op = op * invert_monic_linear(ctx.var(f"b{j}"))
    if prefix:
        op = PsiDO.dinv(ctx) * op
    return op


def expand_factorization(n: int, m: int, prefix: bool = False) -> MiuraSpec:
    """Exact expansion of the factor product and template matching.

    Without the prefix the target is the order-(n-m) family with explicit
    coefficients; with it, the nonstandard family of order n-m-1.  Both
    sides of the read-off are verified by reproducing the product from the
    template before returning.
    """
    order = n - m - (1 if prefix else 0)
    if prefix:
        if order != 1:
            raise FactorizationError(
                f"prefix form of order {order} not supported (expected 1)")
        family = nonstandard_family(m + 1)
    else:
        if order != 2:
            raise FactorizationError(
                f"plain form of order {order} not supported (expected 2)")
        family = second_order_family()
    names = [f"a{i}" for i in range(1, n + 1)] + \
        [f"b{j}" for j in range(1, m + 1)]
    ctx = Context(names)
    op = _factor_product(ctx, n, m, prefix)
    if op.order() != order or not op.diff.get(order, ctx.zero()).is_one():
        raise FactorizationError("factor product has the wrong leading part")
    subs: Dict[str, DiffExpr] = {}
    if prefix:
        subs["v1"] = op.diff.get(0, ctx.zero())
        const_left = []
        pairs = []
        for a, b in op.dyads:
            c = a.is_rational()
            if c is not None:
                const_left.append((c, b))
            else:
                pairs.append((a, b))
        v2 = ctx.zero()
        for c, b in const_left:
            v2 = v2 + b * c
        subs["v2"] = v2
        want = family.params["pairs"]
        if len(pairs) != len(want):
            raise FactorizationError(
                f"expected {len(want)} eigenfunction dyads, found {len(pairs)}")
        for (qn, rn), (a, b) in zip(want, pairs):
            subs[qn] = a
            subs[rn] = b
    else:
        subs["u1"] = op.diff.get(1, ctx.zero())
        subs["u2"] = op.diff.get(0, ctx.zero())
        if len(op.dyads) != 1:
            raise FactorizationError(
                f"expected a single dyad, found {len(op.dyads)}")
        subs["phi"], subs["psi"] = op.dyads[0]
    rebuilt = family.operator.substitute(
        Substitution(family.ctx, ctx, subs))
    if not rebuilt.equals(op):
        raise FactorizationError("template does not reproduce the product")
    return MiuraSpec(n, m, prefix, ctx, op, family, subs)


# ---------------------------------------------------------------------------
# constant Poisson matrices and the KW transfer
# ---------------------------------------------------------------------------

@dataclass
class ConstantPoissonMatrix:
    """Bracket {f_i, f_j} = M_ij * del with a rational symmetric matrix."""
    fields: Tuple[str, ...]
    matrix: List[List[Fraction]]

    def __post_init__(self):
        n = len(self.fields)
        assert all(len(row) == n for row in self.matrix)
        assert all(self.matrix[i][j] == self.matrix[j][i]
                   for i in range(n) for j in range(n)), "matrix not symmetric"

    def table(self, ctx: Context) -> BracketMatrix:
        entries = {}
        for i, f in enumerate(self.fields):
            for j, g in enumerate(self.fields):
                if j < i:
                    continue
                entries[(f, g)] = PsiDO.delta(ctx) * self.matrix[i][j]
        return BracketMatrix(self.fields, entries)

    def __add__(self, other: "ConstantPoissonMatrix") -> "ConstantPoissonMatrix":
        assert self.fields == other.fields
        n = len(self.fields)
        return ConstantPoissonMatrix(
            self.fields,
            [[self.matrix[i][j] + other.matrix[i][j] for j in range(n)]
             for i in range(n)])


def _ab_fields(n, m):
    return tuple(f"a{i}" for i in range(1, n + 1)) + \
        tuple(f"b{j}" for j in range(1, m + 1))


def modified_second(n: int, m: int) -> ConstantPoissonMatrix:
    """Second-structure image: {a_i,a_j} = -delta_ij del, {b_i,b_j} = +delta_ij del."""
    size = n + m
    M = [[Fraction(0)] * size for _ in range(size)]
    for i in range(n):
        M[i][i] = Fraction(-1)
    for j in range(m):
        M[n + j][n + j] = Fraction(1)
    return ConstantPoissonMatrix(_ab_fields(n, m), M)


def modified_third(n: int, m: int) -> ConstantPoissonMatrix:
    """Third-structure image: every bracket equals del."""
    size = n + m
    return ConstantPoissonMatrix(_ab_fields(n, m),
                                 [[Fraction(1)] * size for _ in range(size)])


def modified_combined(n: int, m: int) -> ConstantPoissonMatrix:
    """{a_i,a_j} = (1-delta_ij) del, {b_i,b_j} = (1+delta_ij) del, {a_i,b_j} = del."""
    return modified_second(n, m) + modified_third(n, m)


def kw_transfer(modified: ConstantPoissonMatrix, spec: MiuraSpec,
                target_table: BracketMatrix,
                map_name: str = "kw") -> VerificationReport:
    """Transfer a constant matrix through the Miura Frechet matrix and
    compare entrywise with the target table written in the family fields."""
    rows = {f: frechet(expr, spec.ab_fields)
            for f, expr in spec.substitutions.items()}
    mod_table = modified.table(spec.ctx)
    transferred = transfer_bracket(mod_table, rows, spec.family.fields)
    target_ab = target_table.substitute(spec.elimination())
    rep = compare_tables(transferred, target_ab,
                         pairs=[(f, g) for f in spec.family.fields
                                for g in spec.family.fields])
    rep.family = spec.family.name
    rep.map_name = map_name
    return rep


def kw_transferred_table(modified: ConstantPoissonMatrix,
                         spec: MiuraSpec) -> BracketMatrix:
    rows = {f: frechet(expr, spec.ab_fields)
            for f, expr in spec.substitutions.items()}
    return transfer_bracket(modified.table(spec.ctx), rows, spec.family.fields)


# ---------------------------------------------------------------------------
# free-field diagonalization
# ---------------------------------------------------------------------------

def diagonalize(M: Sequence[Sequence[Fraction]]):
    """Rational congruence diagonalization T M T^t = D for symmetric M.

    Zero diagonal pivots are repaired by a congruence row/column addition;
    singular inputs come back with zero diagonal entries.  Returns
    (T, D, signature) with signature = (#positive, #negative, #zero).
    """
    n = len(M)
    A = [[Fraction(M[i][j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(n):
            assert A[i][j] == A[j][i], "matrix must be symmetric"
    T = [[Fraction(1) if i == j else Fraction(0) for j in range(n)]
         for i in range(n)]

    def row_op(dst, src, f):
        # congruence: row dst += f*row src, then same on columns
        for j in range(n):
            A[dst][j] += f * A[src][j]
        for i in range(n):
            A[i][dst] += f * A[i][src]
        for j in range(n):
            T[dst][j] += f * T[src][j]

    def swap(i, j):
        A[i], A[j] = A[j], A[i]
        for row in A:
            row[i], row[j] = row[j], row[i]
        T[i], T[j] = T[j], T[i]

    for i in range(n):
        if A[i][i] == 0:
            pivot = next((j for j in range(i + 1, n) if A[j][j] != 0), None)
            if pivot is not None:
                swap(i, pivot)
            else:
                off = next((j for j in range(i + 1, n) if A[i][j] != 0), None)
                if off is None:
                    continue
                row_op(i, off, Fraction(1))
        p = A[i][i]
        for j in range(i + 1, n):
            if A[j][i] != 0:
                row_op(j, i, -A[j][i] / p)
    D = [A[i][i] for i in range(n)]
    sig = (sum(1 for d in D if d > 0), sum(1 for d in D if d < 0),
           sum(1 for d in D if d == 0))
    return T, D, sig
