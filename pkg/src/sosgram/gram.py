"""Gram-matrix bookkeeping: basis selection, pair tables and coefficient matching.

A polynomial ``p`` is SOS iff ``p = z' Q z`` for some monomial vector ``z``
and ``Q >= 0``. Everything here works on exponent structure only; the
semidefinite programs are assembled in :mod:`sosgram.forms`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .poly import Monomial, Polynomial, _names, affine_split, grlex_key, monomials

__all__ = [
    "OddDegree",
    "StructuralInfeasible",
    "NotPSD",
    "AffineCoeff",
    "GramDecomposition",
    "candidate_basis",
    "simplify_basis",
    "pair_table",
    "match_coefficients",
    "sos_factors",
    "x_support",
]


class OddDegree(ValueError):
    """The x-part of the polynomial has a d-free term of odd extreme degree."""


class StructuralInfeasible(ValueError):
    """A monomial with a fixed nonzero coefficient cannot be produced by z'Qz."""

    def __init__(self, beta, coefficient):
        self.beta = beta
        self.coefficient = coefficient
        super().__init__(
            f"monomial {beta} has coefficient {coefficient:g} but no basis pair produces it"
        )


class NotPSD(ValueError):
    def __init__(self, min_eig, threshold):
        self.min_eig = min_eig
        super().__init__(f"Gram matrix has eigenvalue {min_eig:.3g} below {-threshold:.3g}")


@dataclass(frozen=True)
class AffineCoeff:
    """``const + sum(terms[d] * d)``: a coefficient affine in the decision variables."""

    const: float = 0.0
    terms: tuple = ()  # ((name, value), ...) sorted by name, nonzero values

    @property
    def depends_on_d(self):
        return bool(self.terms)

    def value(self, dvals):
        return self.const + sum(v * dvals[n] for n, v in self.terms)

    def __add__(self, other):
        merged = dict(self.terms)
        for n, v in other.terms:
            merged[n] = merged.get(n, 0.0) + v
        return AffineCoeff(self.const + other.const,
                           tuple(sorted((n, v) for n, v in merged.items() if v != 0.0)))

    def scaled(self, a):
        if a == 0:
            return AffineCoeff()
        return AffineCoeff(self.const * a, tuple((n, v * a) for n, v in self.terms))

    def __bool__(self):
        return self.const != 0.0 or bool(self.terms)


def x_support(p, x_vars):
    """x-parts of the monomials of ``p``, each flagged True if some term for it
    carries a decision variable."""
    xs = set(_names(x_vars))
    out = {}
    for mono, _ in Polynomial.coerce(p).items():
        xpart, dpart = mono.restrict(xs)
        out[xpart] = out.get(xpart, False) or dpart.degree > 0
    return out


def _basis_from_support(support, x_vars):
    """Candidate basis from a ``{x-monomial: d_dependent}`` map."""
    if not support:
        return []
    xs = set(_names(x_vars))
    present = sorted({n for m in support for n in m.variables if n in xs})
    degs = {m.degree for m in support}
    dmin, dmax = min(degs), max(degs)
    if dmax % 2 == 1 and any(not dep for m, dep in support.items() if m.degree == dmax):
        raise OddDegree(f"highest-degree terms have odd degree {dmax}")
    if dmin % 2 == 1 and any(not dep for m, dep in support.items() if m.degree == dmin):
        raise OddDegree(f"lowest-degree terms have odd degree {dmin}")
    lo, hi = math.ceil(dmin / 2), dmax // 2
    if lo > hi:
        return []
    if not present:
        return [Monomial()] if lo == 0 else []
    return monomials(present, range(lo, hi + 1))


def candidate_basis(p, x_vars):
    """All monomials in the x-variables of ``p`` with degree in
    ``[ceil(dmin/2), floor(dmax/2)]``.

    >>> [str(m) for m in candidate_basis("x1^4 + 1", ["x1"])]
    ['1', 'x1', 'x1^2']
    """
    return _basis_from_support(x_support(p, x_vars), x_vars)


def pair_table(z):
    """Map each product monomial to the index pairs ``(i, j)``, ``i <= j``,
    producing it; pairs listed in lexicographic order, keys in grlex order."""
    table = {}
    for i in range(len(z)):
        for j in range(i, len(z)):
            table.setdefault(z[i] * z[j], []).append((i, j))
    return {b: table[b] for b in sorted(table, key=grlex_key)}


def _removable(i, z, table, support):
    a = z[i]
    sq = a * a
    if sq in support:
        return False
    # no other pair can put mass on the diagonal monomial: Q_ii is forced to 0
    if all(j == k == i for j, k in table[sq]):
        return True
    # every product with another basis element is absent from p and made by
    # this pair alone, so row i of Q is zero off the diagonal
    for j in range(len(z)):
        if j == i:
            continue
        b = a * z[j]
        if b in support or len(table[b]) != 1:
            return False
    return True


def simplify_basis(z, support):
    """Drop basis monomials that no Gram matrix needs.

    ``z_i`` is removed when ``2*alpha_i`` is not in ``support`` and either no
    other retained pair produces ``2*alpha_i`` (so ``Q_ii = 0``), or row ``i``
    of every admissible ``Q`` is zero off the diagonal. Candidates are tried
    in descending grlex order with a full rescan after each removal.
    """
    z = list(dict.fromkeys(Monomial(m) for m in z))
    support = set(support)
    changed = True
    while changed:
        changed = False
        table = pair_table(z)
        for i in sorted(range(len(z)), key=lambda k: grlex_key(z[k]), reverse=True):
            if _removable(i, z, table, support):
                del z[i]
                changed = True
                break
    return z


def match_coefficients(one_side, x_vars, z):
    """Pair table for ``z`` plus the affine coefficient of every monomial.

    Returns ``(table, coeffs)`` where ``coeffs`` maps each monomial of
    ``products(z) U support(one_side)`` to an :class:`AffineCoeff`; monomials
    outside the products have an empty pair list in ``table``. Raises
    :class:`StructuralInfeasible` for an uncovered monomial whose coefficient
    is a nonzero constant.
    """
    table = pair_table(z)
    coeffs = affine_coefficients(one_side, x_vars)
    for b, c in coeffs.items():
        if b not in table:
            if not c.depends_on_d and c.const != 0.0:
                raise StructuralInfeasible(b, c.const)
            table[b] = []
    for b in table:
        coeffs.setdefault(b, AffineCoeff())
    order = sorted(table, key=grlex_key)
    return {b: table[b] for b in order}, {b: coeffs[b] for b in order}


def affine_coefficients(p, x_vars):
    """``{x-monomial: AffineCoeff}`` for a polynomial affine in the decision variables."""
    dec = affine_split(p, x_vars)
    out = {}
    for m, c in dec.base.items():
        out[m] = AffineCoeff(c)
    for name, q in dec.coeffs:
        for m, c in q.items():
            prev = out.get(m, AffineCoeff())
            out[m] = AffineCoeff(prev.const, tuple(sorted(prev.terms + ((name, c),))))
    return out


@dataclass
class GramDecomposition:
    z: list
    Q: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        self.z = list(self.z)
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float)).reshape(len(self.z), len(self.z))
        if not np.allclose(self.Q, self.Q.T, atol=1e-12, rtol=0):
            raise ValueError("Gram matrix is not symmetric")

    @property
    def empty(self):
        return not self.z

    def polynomial(self):
        """``z' Q z`` as a polynomial."""
        terms = {}
        n = len(self.z)
        for i in range(n):
            for j in range(n):
                q = self.Q[i, j]
                if q != 0.0:
                    m = self.z[i] * self.z[j]
                    terms[m] = terms.get(m, 0.0) + q
        return Polynomial(terms)

    def min_eig(self):
        if self.empty:
            return 0.0
        return float(np.linalg.eigvalsh(self.Q)[0])


def sos_factors(dec, tol=1e-6):
    """Polynomials ``f_i`` with ``z'Qz = sum f_i^2`` from an eigendecomposition."""
    if dec.empty:
        return []
    lam, V = np.linalg.eigh(0.5 * (dec.Q + dec.Q.T))
    threshold = tol * (1.0 + max(float(lam[-1]), 0.0))
    if lam[0] < -threshold:
        raise NotPSD(float(lam[0]), threshold)
    out = []
    for k in reversed(range(lam.size)):
        if lam[k] <= 0:
            continue
        v = np.sqrt(lam[k]) * V[:, k]
        # fix the sign so the leading nonzero coefficient is positive
        nz = np.flatnonzero(np.abs(v) > 1e-15)
        if nz.size and v[nz[0]] < 0:
            v = -v
        f = Polynomial({m: float(c) for m, c in zip(dec.z, v) if c != 0.0})
        if not f.is_zero():
            out.append(f)
    return out
