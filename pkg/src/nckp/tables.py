"""Catalog of the claimed bracket tables and transformation formulas.

Everything here is a machine transcription of published identities (or a
derived golden produced by the transfer oracle and frozen under
tests/goldens/).  Builders return BracketMatrix instances over the
family's own context.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Tuple

from .diffring import Context, DiffExpr, E_of, J_of, Substitution
from .psido import PsiDO
from .structures import (BracketMatrix, LaxFamily, eigenfunction_family,
                         nonstandard_family, second_order_family)


def _D(ctx, k=1):
    return PsiDO.delta(ctx, k)


def _m(e: DiffExpr) -> PsiDO:
    return PsiDO.of_expr(e)


def _dy(a, b) -> PsiDO:
    return PsiDO.dyad(a, b)


# ---------------------------------------------------------------------------
# order-one constrained family: second bracket with Dirac term
# ---------------------------------------------------------------------------

def gd2_table_eigenfunction(fam: LaxFamily) -> BracketMatrix:
    """{phi_i,phi_j} = -(phi_i dinv phi_j + phi_j dinv phi_i),
    {psi_i,psi_j} likewise, {phi_i,psi_j} = delta_ij L + phi_i dinv psi_j."""
    ctx = fam.ctx
    M = fam.params["M"]
    L = fam.operator
    entries: Dict[Tuple[str, str], PsiDO] = {}
    for i in range(1, M + 1):
        for j in range(1, M + 1):
            pi, pj = ctx.var(f"phi{i}"), ctx.var(f"phi{j}")
            si, sj = ctx.var(f"psi{i}"), ctx.var(f"psi{j}")
            if i <= j:
                entries[(f"phi{i}", f"phi{j}")] = -(_dy(pi, pj) + _dy(pj, pi))
                entries[(f"psi{i}", f"psi{j}")] = -(_dy(si, sj) + _dy(sj, si))
            e = _dy(pi, sj)
            if i == j:
                e = e + L
            entries[(f"phi{i}", f"psi{j}")] = e
    return BracketMatrix(fam.fields, entries)


# ---------------------------------------------------------------------------
# nonstandard K(1,2): the ten printed entries
# ---------------------------------------------------------------------------

def ns_table_k12(fam: LaxFamily) -> BracketMatrix:
    ctx = fam.ctx
    one = ctx.one()
    v1, v2 = ctx.var("v1"), ctx.var("v2")
    q, r = ctx.var("q"), ctx.var("r")
    D = _D(ctx)
    entries = {
        ("v1", "v1"): _D(ctx) * 2,
        ("v1", "v2"): _D(ctx, 2) + D * _m(v1) + D * _dy(q, r),
        ("v1", "q"): _dy(-q.diff(), one),
        ("v1", "r"): _m(-r),
        ("v2", "v2"): D * _m(v2) + _m(v2) * D + _dy(v2 * q, r) + _dy(r, q * v2),
        ("v2", "q"): -(D * _m(q)) + _m(v1 * q) - _dy(v2 * q, one) - _dy(r, q * q),
        ("v2", "r"): D * _m(r) - _m(v1 * r) + _dy(r, q * r) - _dy(r, v2),
        ("q", "q"): _dy(-2 * q, q) + _dy(one, q * q) + _dy(q * q, one),
        ("q", "r"): D + _m(v1) + _dy(2 * q, r) + _dy(one, v2) - _dy(one, q * r),
        ("r", "r"): _dy(-2 * r, r),
    }
    return BracketMatrix(fam.fields, entries)


# ---------------------------------------------------------------------------
# order-two family: printed entries of the two competing structures
# ---------------------------------------------------------------------------

def omega_table_l21_printed(fam: LaxFamily) -> BracketMatrix:
    """The five printed entries of the second-plus-third structure."""
    ctx = fam.ctx
    u1 = ctx.var("u1")
    phi, psi = ctx.var("phi"), ctx.var("psi")
    D = _D(ctx)
    entries = {
        ("u1", "u1"): D * 2,
        ("u1", "u2"): -_D(ctx, 2) + D * _m(u1),
        ("u1", "phi"): _m(phi),
        ("u1", "psi"): _m(-psi),
        ("phi", "phi"): _dy(-2 * phi, phi),
    }
    return BracketMatrix(fam.fields, entries)


def gd2_table_l21_printed(fam: LaxFamily) -> BracketMatrix:
    """The five printed entries of the plain second structure (the published
    contrast table for the order-two one-pair family)."""
    ctx = fam.ctx
    u1 = ctx.var("u1")
    phi, psi = ctx.var("phi"), ctx.var("psi")
    D = _D(ctx)
    entries = {
        ("u1", "u1"): D * -2,
        ("u1", "u2"): _D(ctx, 2) - D * _m(u1),
        ("u1", "phi"): _m(-phi),
        ("u1", "psi"): _m(psi),
        ("phi", "phi"): _dy(-phi, phi),
    }
    return BracketMatrix(fam.fields, entries)


# ---------------------------------------------------------------------------
# gauge substitutions and coordinate changes
# ---------------------------------------------------------------------------

def gauge_substitutions(lfam: LaxFamily, kfam: LaxFamily) -> Dict[str, DiffExpr]:
    """v1 = phi1'/phi1, v2 = phi1 psi1, q_i = phi_{i+1}/phi1, r_i = phi1 psi_{i+1}."""
    ctx = lfam.ctx
    phi1 = ctx.var("phi1")
    out = {
        "v1": phi1.diff() / phi1,
        "v2": phi1 * ctx.var("psi1"),
    }
    for i, (qn, rn) in enumerate(kfam.params["pairs"], start=2):
        out[qn] = ctx.var(f"phi{i}") / phi1
        out[rn] = phi1 * ctx.var(f"psi{i}")
    return out


def gauge_elimination(lfam: LaxFamily, kfam: LaxFamily) -> Substitution:
    """Eliminate the eigenfunction coordinates: phi1 = E(v1), psi1 = v2 E(-v1),
    phi_{i+1} = q_i E(v1), psi_{i+1} = r_i E(-v1)."""
    kctx = kfam.ctx
    v1 = kctx.var("v1")
    images = {
        "phi1": E_of(v1),
        "psi1": kctx.var("v2") * E_of(-v1),
    }
    for i, (qn, rn) in enumerate(kfam.params["pairs"], start=2):
        images[f"phi{i}"] = kctx.var(qn) * E_of(v1)
        images[f"psi{i}"] = kctx.var(rn) * E_of(-v1)
    return Substitution(lfam.ctx, kctx, images)


def del_k_substitutions(kfam: LaxFamily) -> Dict[str, DiffExpr]:
    """u1 = v1, u2 = v2 + v1' + qr, phi = q', psi = r."""
    ctx = kfam.ctx
    return {
        "u1": ctx.var("v1"),
        "u2": ctx.var("v2") + ctx.var("v1").diff() + ctx.var("q") * ctx.var("r"),
        "phi": ctx.var("q").diff(),
        "psi": ctx.var("r"),
    }


def del_k_elimination(kfam: LaxFamily, lfam: LaxFamily) -> Substitution:
    """Eliminate the nonstandard coordinates through v1 = u1, r = psi,
    q = J(phi), v2 = u2 - u1' - J(phi) psi."""
    lctx = lfam.ctx
    jphi = J_of(lctx.var("phi"))
    images = {
        "v1": lctx.var("u1"),
        "v2": lctx.var("u2") - lctx.var("u1").diff() - jphi * lctx.var("psi"),
        "q": jphi,
        "r": lctx.var("psi"),
    }
    return Substitution(kfam.ctx, lctx, images)


# ---------------------------------------------------------------------------
# Virasoro claims
# ---------------------------------------------------------------------------

def virasoro_generator(fam: LaxFamily) -> DiffExpr:
    ctx = fam.ctx
    if fam.kind == "eig":
        M = fam.params["M"]
        t = ctx.zero()
        for i in range(1, M + 1):
            t = t + ctx.var(f"phi{i}") * ctx.var(f"psi{i}")
        return t
    if fam.kind == "ns":
        t = ctx.var("v2") + ctx.var("v1").diff() / 2
        for qn, rn in fam.params["pairs"]:
            t = t + ctx.var(qn) * ctx.var(rn)
        return t
    if fam.kind == "u2":
        return ctx.var("u2") - ctx.var("u1").diff() / 2
    raise ValueError(fam.kind)


def spin_claims(fam: LaxFamily) -> Dict[str, Fraction]:
    """Claimed conformal spins of the coordinate fields against t."""
    if fam.kind == "eig":
        return {f: Fraction(1) for f in fam.fields}
    if fam.kind == "ns":
        out = {"v1": Fraction(1)}
        for qn, rn in fam.params["pairs"]:
            out[rn] = Fraction(3, 2)
        return out
    if fam.kind == "u2":
        return {"u1": Fraction(1), "phi": Fraction(3, 2), "psi": Fraction(3, 2)}
    raise ValueError(fam.kind)


def central_term(fam: LaxFamily) -> PsiDO:
    """Claimed central part of {t,t}: none for the order-one family,
    (1/2) del^3 for the nonstandard and order-two families."""
    ctx = fam.ctx
    if fam.kind == "eig":
        return PsiDO.zero(ctx)
    return PsiDO.delta(ctx, 3) * Fraction(1, 2)


def q_anomaly_claim(fam: LaxFamily) -> PsiDO:
    """The claimed obstruction in {q, t}: -(1/2) dinv(1, q) del^2."""
    ctx = fam.ctx
    return PsiDO.dyad(ctx.one(), ctx.var("q")) * PsiDO.delta(ctx, 2) * Fraction(-1, 2)


# ---------------------------------------------------------------------------
# published Miura closed forms
# ---------------------------------------------------------------------------

def miura_printed_substitutions(ctx: Context) -> Dict[str, DiffExpr]:
    """Published closed forms for the (n,m) = (3,1) factorization."""
    a1, a2, a3, b1 = (ctx.var(n) for n in ("a1", "a2", "a3", "b1"))
    u1 = b1 - (a1 + a2 + a3)
    u2 = u1 * b1 + 2 * b1.diff() + a1 * a2 + a2 * a3 + a1 * a3 \
        - a2.diff() - 2 * a3.diff()
    phi = E_of(b1) * (u2 * b1 + u1 * b1.diff() + b1.diff(2)
                      - a1 * a2 * a3 + a1 * a3.diff() + a2.diff() * a3
                      + a2 * a3.diff() - a3.diff(2))
    psi = E_of(-b1)
    return {"u1": u1, "u2": u2, "phi": phi, "psi": psi}
