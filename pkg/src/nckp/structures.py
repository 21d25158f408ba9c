"""Lax families, covectors, Hamiltonian maps and the bracket verifier.

A bracket table is verified as an exact operator identity: build a generic
covector X for the family (free slot generators), push it through the
Hamiltonian map, and compare with the tangent vector obtained by feeding
the table's entries the induced gradient slots.  Transfers between tables
are exact chain-rule sandwiches J o P o J* followed by an elimination
morphism into the new coordinates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .diffring import (Context, DiffExpr, DiffRingError, J_of, Substitution,
                       antiderivative, reduce_mod_exact)
from .psido import PsiDO, commutator, frechet, psido_variation


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LaxFamily:
    """A named operator template with its coordinate fields.

    kind selects the covector parametrization:
      "eig"  -- order one, eigenfunction dyads only (phi_i dinv psi_i)
      "ns"   -- nonstandard shape del + v1 + dinv(1, v2) + sum q_i dinv r_i
      "u2"   -- order two with coefficients u1, u2 and one dyad pair
    """
    name: str
    ctx: Context
    fields: Tuple[str, ...]
    operator: PsiDO
    kind: str
    params: dict = field(default_factory=dict)

    def tangent(self, deltas: Mapping[str, DiffExpr]) -> PsiDO:
        return psido_variation(self.operator, deltas)

    def field_exprs(self) -> Dict[str, DiffExpr]:
        return {f: self.ctx.var(f) for f in self.fields}


def eigenfunction_family(M: int, ctx: Optional[Context] = None,
                         phi: str = "phi", psi: str = "psi") -> LaxFamily:
    """L = del + sum_{i<=M} phi_i dinv psi_i (the order-one constrained shape)."""
    names = [f"{phi}{i}" for i in range(1, M + 1)] + \
            [f"{psi}{i}" for i in range(1, M + 1)]
    if ctx is None:
        ctx = Context(names, invertible=[f"{phi}1"])
    op = PsiDO.delta(ctx)
    for i in range(1, M + 1):
        op = op + PsiDO.dyad(ctx.var(f"{phi}{i}"), ctx.var(f"{psi}{i}"))
    fields = tuple(n for i in range(1, M + 1)
                   for n in (f"{phi}{i}", f"{psi}{i}"))
    return LaxFamily(f"L(1,{M})", ctx, fields, op, "eig", {"M": M})


def nonstandard_family(M: int, ctx: Optional[Context] = None) -> LaxFamily:
    """K = del + v1 + dinv(1, v2) + sum_{i<M} q_i dinv r_i (gauge-transformed)."""
    pairs = M - 1
    qnames = ["q"] if pairs == 1 else [f"q{i}" for i in range(1, pairs + 1)]
    rnames = ["r"] if pairs == 1 else [f"r{i}" for i in range(1, pairs + 1)]
    names = ["v1", "v2"] + qnames + rnames
    if ctx is None:
        ctx = Context(names)
    op = PsiDO.delta(ctx) + PsiDO.of_expr(ctx.var("v1")) + \
        PsiDO.dyad(ctx.one(), ctx.var("v2"))
    for qn, rn in zip(qnames, rnames):
        op = op + PsiDO.dyad(ctx.var(qn), ctx.var(rn))
    fields = ("v1", "v2") + tuple(n for qr in zip(qnames, rnames) for n in qr)
    return LaxFamily(f"K(1,{M})", ctx, fields, op, "ns",
                     {"M": M, "pairs": tuple(zip(qnames, rnames))})


def second_order_family(ctx: Optional[Context] = None) -> LaxFamily:
    """L = del^2 + u1 del + u2 + phi dinv psi (the image of del o K(1,2))."""
    names = ["u1", "u2", "phi", "psi"]
    if ctx is None:
        ctx = Context(names)
    op = PsiDO(ctx, {2: ctx.one(), 1: ctx.var("u1"), 0: ctx.var("u2")},
               ((ctx.var("phi"), ctx.var("psi")),))
    return LaxFamily("L(2,1)", ctx, ("u1", "u2", "phi", "psi"), op, "u2", {})


# ---------------------------------------------------------------------------
# covectors
# ---------------------------------------------------------------------------

@dataclass
class Covector:
    """A gradient representative X with its induced slot expressions.

    The defining property (checked by verify_pairing) is
    int res(X * tangent(delta)) = sum_f slots[f] * delta_f modulo total
    derivatives, for the family's tangent template.
    """
    family: LaxFamily
    ctx: Context
    operator: PsiDO
    slots: Dict[str, DiffExpr]
    params: Tuple[str, ...]


def generic_covector(family: LaxFamily, order: int = 3,
                     parts: Optional[Sequence[str]] = None,
                     prefix: str = "c") -> Covector:
    """Fresh-slot covector for a family, per its canonical parametrization.

    parts restricts the free blocks, isolating gradient columns where the
    parametrization allows it ("v1"/"v2"/"A" for ns, "u1"/"u2"/"B" for u2).
    """
    ctx = family.ctx
    kind = family.kind
    if kind == "eig":
        names = [f"{prefix}{k}" for k in range(order + 1)]
        ctx2 = ctx.extend(names)
        X = PsiDO.zero(ctx2)
        for k, n in enumerate(names):
            X = X + PsiDO(ctx2, {k: ctx2.var(n)})
        slots = {}
        M = family.params["M"]
        Xadj = X.adjoint()
        for i in range(1, M + 1):
            phi = ctx2.var(f"phi{i}")
            psi = ctx2.var(f"psi{i}")
            slots[f"phi{i}"] = Xadj.apply(psi)
            slots[f"psi{i}"] = X.apply(phi)
        return Covector(family, ctx2, X, slots, tuple(names))
    if kind == "ns":
        want = set(parts) if parts is not None else {"v1", "v2", "A"}
        names = []
        if "v1" in want:
            names.append(f"{prefix}v1")
        if "v2" in want:
            names.append(f"{prefix}v2")
        anames = [f"{prefix}a{k}" for k in range(1, order + 1)] \
            if "A" in want else []
        ctx2 = ctx.extend(names + anames)
        zero = ctx2.zero()
        xv1 = ctx2.var(f"{prefix}v1") if "v1" in want else zero
        xv2 = ctx2.var(f"{prefix}v2") if "v2" in want else zero
        A = PsiDO.zero(ctx2)
        for k, n in enumerate(anames, start=1):
            A = A + PsiDO(ctx2, {k: ctx2.var(n)})
        X = PsiDO.dyad(ctx2.one(), xv1) + PsiDO.of_expr(xv2) + A \
            if not xv1.is_zero() else PsiDO.of_expr(xv2) + A
        slots = {"v1": xv1, "v2": xv2}
        Aadj = A.adjoint()
        for qn, rn in family.params["pairs"]:
            q = ctx2.var(qn)
            r = ctx2.var(rn)
            slots[rn] = q * xv2 + A.apply(q)
            slots[qn] = r * xv2 + Aadj.apply(r)
        return Covector(family, ctx2, X, slots, tuple(names + anames))
    if kind == "u2":
        want = set(parts) if parts is not None else {"u1", "u2", "B"}
        names = []
        if "u1" in want:
            names.append(f"{prefix}u1")
        if "u2" in want:
            names.append(f"{prefix}u2")
        bnames = [f"{prefix}b{k}" for k in range(order + 1)] \
            if "B" in want else []
        ctx2 = ctx.extend(names + bnames)
        zero = ctx2.zero()
        xu1 = ctx2.var(f"{prefix}u1") if "u1" in want else zero
        xu2 = ctx2.var(f"{prefix}u2") if "u2" in want else zero
        B = PsiDO.zero(ctx2)
        for k, n in enumerate(bnames):
            B = B + PsiDO(ctx2, {k: ctx2.var(n)})
        X = B
        # del^-1 x_{u2} + del^-2 x_{u1}, with del^-2 = J(1) del^-1 - del^-1 J(1)
        j1 = J_of(ctx2.one())
        if not xu2.is_zero() or not xu1.is_zero():
            X = X + PsiDO.dyad(ctx2.one(), xu2 - j1 * xu1) + \
                PsiDO.dyad(j1, xu1)
        phi = ctx2.var("phi")
        psi = ctx2.var("psi")
        slots = {"u1": xu1, "u2": xu2,
                 "phi": B.adjoint().apply(psi), "psi": B.apply(phi)}
        return Covector(family, ctx2, X, slots, tuple(names + bnames))
    raise DiffRingError(f"no covector parametrization for kind {family.kind!r}")


def verify_pairing(cov: Covector) -> DiffExpr:
    """Residual of the pairing identity; zero when the covector is valid."""
    fam = cov.family
    dnames = [f"dlt_{f}" for f in fam.fields]
    ctx3 = cov.ctx.extend(dnames)
    deltas = {f: ctx3.var(f"dlt_{f}") for f in fam.fields}
    T = fam.tangent(deltas)
    s = (cov.operator * T).residue()
    for f in fam.fields:
        s = s - cov.slots[f] * deltas[f]
    return reduce_mod_exact(s)


# ---------------------------------------------------------------------------
# Hamiltonian maps
# ---------------------------------------------------------------------------

def adler_gd2(L: PsiDO, X: PsiDO, N: int = 1,
              dirac_weight: Optional[Fraction] = None) -> PsiDO:
    """Second Gelfand-Dickey map with optional Dirac correction term.

    (LX)_+ L - L(XL)_+ + w [L, int res[L, X]];  w defaults to 1/N, the
    weight that enforces the vanishing of the subleading coefficient.
    Pass dirac_weight=0 for the plain Adler map.
    """
    lx = L * X
    xl = X * L
    T = lx.plus() * L - L * xl.plus()
    w = Fraction(1, N) if dirac_weight is None else Fraction(dirac_weight)
    if w:
        rho = (lx - xl).residue()
        m = PsiDO.of_expr(antiderivative(rho))
        T = T + (L * m - m * L) * w
    return T


def gd3(L: PsiDO, X: PsiDO) -> PsiDO:
    """Third Gelfand-Dickey map [L, int res[L, X]]."""
    rho = commutator(L, X).residue()
    m = PsiDO.of_expr(antiderivative(rho))
    return L * m - m * L


def omega_map(L: PsiDO, X: PsiDO) -> PsiDO:
    """Sum of the plain second and the third GD maps."""
    return adler_gd2(L, X, dirac_weight=0) + gd3(L, X)


def ns_second(K: PsiDO, X: PsiDO) -> PsiDO:
    """Second Hamiltonian map of the nonstandard hierarchy (five terms).

    (KX)_+ K - K(XK)_+ + [K, (KX)_0] + del^-1 res[K,X] K + [K, int res[K,X]].
    The commutator's middle factor is the zeroth-order part of KX; taking
    the whole product there does not produce a tangent vector.
    """
    kx = K * X
    xk = X * K
    T = kx.plus() * K - K * xk.plus()
    m0 = PsiDO.of_expr(kx.order0())
    T = T + (K * m0 - m0 * K)
    rho = (kx - xk).residue()
    T = T + PsiDO.dyad(K.ctx.one(), rho) * K
    m = PsiDO.of_expr(antiderivative(rho))
    T = T + (K * m - m * K)
    return T


# ---------------------------------------------------------------------------
# bracket tables
# ---------------------------------------------------------------------------

class BracketMatrix:
    """Square array of bracket-entry operators, indexed by field names.

    Missing transposed entries are completed by antisymmetry
    P[g,f] = -adjoint(P[f,g]).
    """

    def __init__(self, fields: Sequence[str],
                 entries: Mapping[Tuple[str, str], PsiDO]):
        self.fields = tuple(fields)
        self.entries = dict(entries)

    def entry(self, f: str, g: str) -> PsiDO:
        if (f, g) in self.entries:
            return self.entries[(f, g)]
        if (g, f) in self.entries:
            return -self.entries[(g, f)].adjoint()
        raise KeyError((f, g))

    def items(self):
        for f in self.fields:
            for g in self.fields:
                try:
                    yield (f, g), self.entry(f, g)
                except KeyError:
                    continue

    def given_pairs(self):
        return sorted(self.entries.keys())

    def apply_entry(self, f: str, g: str, x: DiffExpr) -> DiffExpr:
        return self.entry(f, g).apply(x)

    def hamiltonian_deltas(self, slots: Mapping[str, DiffExpr]) -> Dict[str, DiffExpr]:
        out = {}
        ctx = None
        for f in self.fields:
            acc = None
            for g in self.fields:
                x = slots[g]
                if x.is_zero():
                    continue
                v = self.apply_entry(f, g, x)
                acc = v if acc is None else acc + v
            out[f] = acc
        return out

    def map_entries(self, fn) -> "BracketMatrix":
        return BracketMatrix(self.fields,
                             {k: fn(v) for k, v in self.entries.items()})

    def substitute(self, sub: Substitution) -> "BracketMatrix":
        return self.map_entries(lambda P: P.substitute(sub))


# ---------------------------------------------------------------------------
# verification reports
# ---------------------------------------------------------------------------

@dataclass
class EntryStatus:
    entry: str
    status: str                      # "verified" | "mismatch" | "skipped"
    residual: Optional[str] = None


@dataclass
class VerificationReport:
    family: str
    map_name: str
    entries: List[EntryStatus] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return all(e.status == "verified" for e in self.entries) \
            and bool(self.entries)

    def add(self, entry, status, residual=None):
        self.entries.append(EntryStatus(entry, status, residual))


def verify_bracket_table(family: LaxFamily, map_fn, table: BracketMatrix,
                         order: int = 3,
                         columns: Optional[Sequence[Tuple[str, Sequence[str]]]] = None,
                         map_name: str = "map") -> VerificationReport:
    """Exact whole-identity verification of a bracket table against a map.

    Builds the generic covector X, computes T_actual = map(L, X) and
    T_expected by inserting the table-generated deltas into the family's
    tangent template, and compares exactly.  When the family's covector
    parametrization isolates gradient columns, each listed column is also
    verified in isolation for finer localization.
    """
    t0 = time.monotonic()
    rep = VerificationReport(family.name, map_name)
    runs = [("all", None)]
    if columns:
        runs += [(label, parts) for label, parts in columns]
    failed_runs = []
    for label, parts in runs:
        cov = generic_covector(family, order=order, parts=parts)
        pairing = verify_pairing(cov)
        if not pairing.is_zero():
            rep.notes.append(f"covector pairing failed for {label}: {pairing!r}")
            failed_runs.append(label)
            continue
        L = family.operator
        T_actual = map_fn(L, cov.operator)
        deltas = table.hamiltonian_deltas(cov.slots)
        T_expected = family.tangent(deltas)
        diff = T_actual - T_expected
        if not diff.equals(PsiDO.zero(cov.ctx)):
            failed_runs.append(label)
            if label == "all":
                from .textio import psido_str
                rep.notes.append(f"residual ({label}): {psido_str(diff)}")
    if not failed_runs:
        for (f, g) in table.given_pairs():
            rep.add(f"{{{f},{g}}}", "verified")
    else:
        for (f, g) in table.given_pairs():
            rep.add(f"{{{f},{g}}}", "mismatch",
                    residual=f"identity failed on runs {failed_runs}")
    rep.elapsed = time.monotonic() - t0
    return rep


def transfer_bracket(table: BracketMatrix,
                     rows: Mapping[str, Mapping[str, PsiDO]],
                     new_fields: Sequence[str],
                     elim: Optional[Substitution] = None) -> BracketMatrix:
    """Chain-rule transfer P_new = J o P_old o J* with optional elimination.

    rows[n][o] is the Frechet derivative of new field n with respect to old
    field o (an operator over the old context); elim rewrites old-context
    results into the new coordinates.
    """
    old_fields = table.fields
    entries: dict = {}
    adj_cache = {n: {o: rows[n][o].adjoint() for o in old_fields if o in rows[n]}
                 for n in new_fields}
    for i, f in enumerate(new_fields):
        for g in new_fields:
            acc = None
            for k in old_fields:
                Jf = rows[f].get(k)
                if Jf is None or Jf.is_zero_exact():
                    continue
                for l in old_fields:
                    Jg = adj_cache[g].get(l)
                    if Jg is None or Jg.is_zero_exact():
                        continue
                    term = Jf * table.entry(k, l) * Jg
                    acc = term if acc is None else acc + term
            if acc is None:
                acc = PsiDO.zero(table.entry(old_fields[0], old_fields[0]).ctx)
            if elim is not None:
                acc = acc.substitute(elim)
            entries[(f, g)] = acc
    return BracketMatrix(new_fields, entries)


def compare_tables(A: BracketMatrix, B: BracketMatrix,
                   pairs: Optional[Sequence[Tuple[str, str]]] = None,
                   postmap=None) -> VerificationReport:
    """Entrywise exact comparison of two tables over one context."""
    rep = VerificationReport("tables", "compare")
    if pairs is None:
        pairs = [(f, g) for f in A.fields for g in A.fields]
    for f, g in pairs:
        try:
            ea = A.entry(f, g)
            eb = B.entry(f, g)
        except KeyError:
            rep.add(f"{{{f},{g}}}", "skipped")
            continue
        if postmap is not None:
            ea = postmap(ea)
            eb = postmap(eb)
        d = ea - eb
        if d.equals(PsiDO.zero(ea.ctx)):
            rep.add(f"{{{f},{g}}}", "verified")
        else:
            from .textio import psido_str
            rep.add(f"{{{f},{g}}}", "mismatch", residual=psido_str(d))
    return rep
