"""Exact pseudo-differential operator calculus and bracket verification
for constrained KP hierarchies."""

from .diffring import (Context, DiffExpr, DiffRingError, E_of, J_of,
                       MixedContextError, NotInvertibleError, Substitution,
                       antiderivative, derive_along, euler_derivative,
                       first_variation, integrate_total_derivative,
                       is_total_derivative, reduce_mod_exact)
from .psido import (OperatorView, PsiDO, commutator, frechet,
                    invert_monic_linear, nth_root, psido_variation,
                    root_power_plus)
from .textio import ParseError, bracket_line, expr_str, parse_bracket_line, \
    parse_expression, psido_str

__version__ = "0.1.0"
