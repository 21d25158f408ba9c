"""Canonical text form and parser for expressions and operators.

Grammar (round-trips bit-exactly with the printers):

    identifiers   jet variables, primes for derivatives: u, u', u''
    del, del^k    the derivation symbol and its powers
    dinv(a, b)    the nonlocal dyad  a o del^-1 o b
    inv(del - b)  exact inverse of a monic linear factor
    J(...), E(...)  formal antiderivative / exponential-integral atoms
    + - * / ^     arithmetic; rational literals written as p/q
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Union

from .diffring import (Context, DiffExpr, DiffRingError, E_of, J_of,
                       _term_key, common_context)


class ParseError(DiffRingError):
    def __init__(self, msg, line=1, col=0):
        super().__init__(f"{msg} (line {line}, col {col})")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def _frac_str(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _jet_str(ctx, gi, order):
    return ctx.gens[gi].name + "'" * order


def _term_str(ctx, t, c) -> str:
    jets, jat, earg = t
    num = []
    den = []
    ac = abs(c)
    for (gi, k), e in sorted(jets):
        base = _jet_str(ctx, gi, k)
        if e > 0:
            num.append(base if e == 1 else f"{base}^{e}")
        else:
            den.append(base if e == -1 else f"{base}^{-e}")
    seen = {}
    for a in jat:
        seen[a] = seen.get(a, 0) + 1
    for a, mult in sorted(seen.items(), key=lambda kv: kv[0].sort_key()):
        base = f"J({expr_str(a)})"
        num.append(base if mult == 1 else f"{base}^{mult}")
    if earg is not None:
        num.append(f"E({expr_str(earg)})")
    if not num or ac != 1:
        num.insert(0, _frac_str(ac))
    s = "*".join(num)
    for d in den:
        s += "/" + d
    return s


def expr_str(e: DiffExpr) -> str:
    if e.is_zero():
        return "0"
    items = sorted(e.terms.items(), key=lambda tc: _term_key(tc[0]), reverse=True)
    parts = []
    for i, (t, c) in enumerate(items):
        body = _term_str(e.ctx, t, c)
        if i == 0:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append((" - " if c < 0 else " + ") + body)
    return "".join(parts)


def _coeff_factor(e: DiffExpr) -> str:
    s = expr_str(e)
    if len(e.terms) > 1:
        return f"({s})"
    if s.startswith("-"):
        return f"({s})"
    return s


def psido_str(A) -> str:
    from .psido import PsiDO
    assert isinstance(A, PsiDO)
    parts = []
    for k in sorted(A.diff.keys(), reverse=True):
        c = A.diff[k]
        if k == 0:
            parts.append(expr_str(c))
        elif c.is_one():
            parts.append("del" if k == 1 else f"del^{k}")
        else:
            parts.append(f"{_coeff_factor(c)}*" + ("del" if k == 1 else f"del^{k}"))
    for a, b in A.dyads:
        parts.append(f"dinv({expr_str(a)}, {expr_str(b)})")
    if not parts:
        return "0"
    out = parts[0]
    for p in parts[1:]:
        if p.startswith("-"):
            out += " - " + p[1:]
        else:
            out += " + " + p
    return out


def bracket_line(f: str, g: str, A) -> str:
    return f"{{{f}, {g}}} = {psido_str(A)}"


# ---------------------------------------------------------------------------
# lexer
# ---------------------------------------------------------------------------

_SYMBOLS = "+-*/^(),="


class _Tok:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind, value, line, col):
        self.kind = kind
        self.value = value
        self.line = line
        self.col = col

    def __repr__(self):
        return f"{self.kind}:{self.value}"


def _lex(src: str):
    toks = []
    line, col = 1, 0
    i = 0
    n = len(src)
    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            col = 0
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(_Tok("int", int(src[i:j]), line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            name = src[i:j]
            col += j - i
            i = j
            primes = 0
            while i < n and src[i] == "'":
                primes += 1
                i += 1
                col += 1
            toks.append(_Tok("name", (name, primes), line, col))
            continue
        if ch in _SYMBOLS:
            toks.append(_Tok(ch, ch, line, col))
            i += 1
            col += 1
            continue
        if ch == "{" or ch == "}":
            toks.append(_Tok(ch, ch, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    toks.append(_Tok("end", None, line, col))
    return toks


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str, ctx: Context):
        self.toks = _lex(src)
        self.pos = 0
        self.ctx = ctx

    def peek(self):
        return self.toks[self.pos]

    def take(self, kind=None):
        t = self.toks[self.pos]
        if kind is not None and t.kind != kind:
            raise ParseError(f"expected {kind!r}, found {t.kind!r}", t.line, t.col)
        self.pos += 1
        return t

    # values are DiffExpr or PsiDO; promote lazily
    def _promote(self, a, b):
        from .psido import PsiDO
        if isinstance(a, PsiDO) or isinstance(b, PsiDO):
            if not isinstance(a, PsiDO):
                a = PsiDO.of_expr(a)
            if not isinstance(b, PsiDO):
                b = PsiDO.of_expr(b)
        return a, b

    def parse_expr(self):
        t = self.peek()
        left = self.parse_term()
        while self.peek().kind in ("+", "-"):
            op = self.take().kind
            right = self.parse_term()
            left, right = self._promote(left, right)
            left = left + right if op == "+" else left - right
        return left

    def parse_term(self):
        left = self.parse_factor()
        while self.peek().kind in ("*", "/"):
            op = self.take()
            right = self.parse_factor()
            if op.kind == "*":
                left, right = self._promote(left, right)
                left = left * right
            else:
                from .psido import PsiDO
                if isinstance(right, PsiDO):
                    raise ParseError("cannot divide by an operator",
                                     op.line, op.col)
                try:
                    if isinstance(left, PsiDO):
                        left = left * PsiDO.of_expr(right.inverse())
                    else:
                        left = left / right
                except DiffRingError as exc:
                    raise ParseError(str(exc), op.line, op.col) from None
        return left

    def parse_factor(self):
        sign = 1
        while self.peek().kind in ("+", "-"):
            if self.take().kind == "-":
                sign = -sign
        v = self.parse_power()
        return v if sign == 1 else v * -1

    def parse_power(self):
        base = self.parse_atom()
        if self.peek().kind == "^":
            op = self.take()
            neg = False
            if self.peek().kind == "-":
                self.take()
                neg = True
            t = self.take("int")
            n = -t.value if neg else t.value
            from .psido import PsiDO
            if isinstance(base, PsiDO):
                if n < 0:
                    raise ParseError("negative operator powers are not exact",
                                     op.line, op.col)
                return base ** n
            return base ** n
        return base

    def parse_atom(self):
        from .psido import PsiDO
        t = self.peek()
        if t.kind == "int":
            self.take()
            return self.ctx.const(t.value)
        if t.kind == "(":
            self.take()
            v = self.parse_expr()
            self.take(")")
            return v
        if t.kind == "name":
            name, primes = t.value
            if name == "del":
                if primes:
                    raise ParseError("del carries no primes", t.line, t.col)
                self.take()
                return PsiDO.delta(self.ctx)
            if name in ("J", "E", "dinv", "inv") and primes == 0 \
                    and self.toks[self.pos + 1].kind == "(":
                self.take()
                self.take("(")
                first = self.parse_expr()
                if name == "dinv":
                    self.take(",")
                    second = self.parse_expr()
                    self.take(")")
                    if isinstance(first, PsiDO) or isinstance(second, PsiDO):
                        raise ParseError("dinv takes expression legs",
                                         t.line, t.col)
                    return PsiDO.dyad(first, second)
                self.take(")")
                if name == "inv":
                    from .psido import invert_monic_linear
                    if not isinstance(first, PsiDO):
                        raise ParseError("inv expects (del - b)", t.line, t.col)
                    b = first.as_monic_linear()
                    if b is None:
                        raise ParseError("inv expects (del - b)", t.line, t.col)
                    return invert_monic_linear(b)
                if isinstance(first, PsiDO):
                    raise ParseError(f"{name} takes an expression", t.line, t.col)
                return J_of(first) if name == "J" else E_of(first)
            self.take()
            try:
                return self.ctx.var(name, primes)
            except DiffRingError:
                raise ParseError(f"unknown generator {name!r}",
                                 t.line, t.col) from None
        raise ParseError(f"unexpected token {t.kind!r}", t.line, t.col)


def parse_expression(src: str, ctx: Context):
    """Parse the documented syntax; returns a DiffExpr or a PsiDO."""
    p = _Parser(src, ctx)
    v = p.parse_expr()
    t = p.peek()
    if t.kind != "end":
        raise ParseError(f"trailing input at {t.kind!r}", t.line, t.col)
    return v


def parse_bracket_line(src: str, ctx: Context):
    """Parse a table line '{f, g} = <operator>'."""
    from .psido import PsiDO
    p = _Parser(src, ctx)
    p.take("{")
    f = p.take("name").value[0]
    p.take(",")
    g = p.take("name").value[0]
    p.take("}")
    p.take("=")
    v = p.parse_expr()
    t = p.peek()
    if t.kind != "end":
        raise ParseError(f"trailing input at {t.kind!r}", t.line, t.col)
    if not isinstance(v, PsiDO):
        v = PsiDO.of_expr(v)
    return (f, g), v
