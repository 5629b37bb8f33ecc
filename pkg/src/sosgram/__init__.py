"""Sum-of-squares programming through Gram matrices and an embedded SDP solver."""

from .constraints import Constraint, ConstraintList, eq, sos_ge, sos_le
from .gram import GramDecomposition, sos_factors
from .parse import PolySyntaxError, parse
from .poly import Monomial, Polynomial, monomials, poly_decision_var, sos_decision_var, substitute, var_matrix
from .solve import GOptions, Options, SolveResult, check_feasibility, gsosopt, issos, pcontain, sosopt

__all__ = [
    "Constraint",
    "ConstraintList",
    "eq",
    "sos_ge",
    "sos_le",
    "GramDecomposition",
    "sos_factors",
    "PolySyntaxError",
    "parse",
    "Monomial",
    "Polynomial",
    "monomials",
    "poly_decision_var",
    "sos_decision_var",
    "substitute",
    "var_matrix",
    "GOptions",
    "Options",
    "SolveResult",
    "check_feasibility",
    "gsosopt",
    "issos",
    "pcontain",
    "sosopt",
]
