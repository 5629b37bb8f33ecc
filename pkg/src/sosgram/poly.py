"""Sparse multivariate polynomials with named variables.

A :class:`Polynomial` maps :class:`Monomial` keys to float coefficients.
Variables are identified purely by name; there is no registry, so two
polynomials that both mention ``x1`` share that variable automatically.

Terms are displayed in graded lexicographic order (descending), where the
variable order is the lexicographic order of the names.
"""

from __future__ import annotations

import functools
import itertools
import math
import numbers
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Monomial",
    "Polynomial",
    "AffineDecomposition",
    "NotAffine",
    "variables",
    "monomials",
    "var_matrix",
    "poly_decision_var",
    "sos_decision_var",
    "affine_split",
    "gradient",
    "substitute",
    "add",
    "mul",
    "neg",
    "pow",
]

MAX_EXPONENT = 2**31 - 1
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class NotAffine(ValueError):
    """A polynomial is not affine in its decision variables."""

    def __init__(self, term, message=None):
        self.term = term
        super().__init__(message or f"term {term} is not affine in the decision variables")


def _check_name(name):
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ValueError(f"invalid variable name {name!r}")
    return name


def _grlex_cmp(a, b):
    """Three-way graded-lex comparison of two monomials."""
    da, db = a.degree, b.degree
    if da != db:
        return -1 if da < db else 1
    i = j = 0
    while i < len(a) and j < len(b):
        (na, ea), (nb, eb) = a[i], b[j]
        if na == nb:
            if ea != eb:
                return -1 if ea < eb else 1
            i += 1
            j += 1
        elif na < nb:
            # a carries the earlier variable, b has exponent 0 there
            return 1
        else:
            return -1
    if i < len(a):
        return 1
    if j < len(b):
        return -1
    return 0


class Monomial(tuple):
    """Product of variable powers, stored as sorted ``(name, exponent)`` pairs.

    Monomials compare in graded lexicographic order: higher total degree is
    greater, ties broken by the exponent of the earliest variable name.
    """

    __slots__ = ()

    def __new__(cls, exponents=()):
        if isinstance(exponents, Monomial):
            return exponents
        if isinstance(exponents, dict):
            items = exponents.items()
        else:
            items = exponents
        merged = {}
        for name, e in items:
            _check_name(name)
            if not isinstance(e, numbers.Integral) or e < 0:
                raise ValueError(f"exponent of {name} must be a nonnegative integer, got {e!r}")
            merged[name] = merged.get(name, 0) + int(e)
        for name, e in merged.items():
            if e > MAX_EXPONENT:
                raise OverflowError(f"exponent of {name} exceeds {MAX_EXPONENT}")
        return super().__new__(cls, tuple(sorted((n, e) for n, e in merged.items() if e)))

    @property
    def degree(self):
        return sum(e for _, e in self)

    @property
    def variables(self):
        return tuple(n for n, _ in self)

    def exponent(self, name):
        for n, e in self:
            if n == name:
                return e
        return 0

    def as_dict(self):
        return dict(self)

    def __mul__(self, other):
        if not isinstance(other, Monomial):
            return NotImplemented
        return Monomial(tuple(self) + tuple(other))

    def __pow__(self, k):
        if not isinstance(k, numbers.Integral) or k < 0:
            raise ValueError("monomial power must be a nonnegative integer")
        return Monomial(tuple((n, e * k) for n, e in self))

    def restrict(self, names):
        """Split into the part over ``names`` and the remainder."""
        names = set(names)
        inside = tuple((n, e) for n, e in self if n in names)
        outside = tuple((n, e) for n, e in self if n not in names)
        return Monomial(inside), Monomial(outside)

    def __lt__(self, other):
        return _grlex_cmp(self, other) < 0

    def __le__(self, other):
        return _grlex_cmp(self, other) <= 0

    def __gt__(self, other):
        return _grlex_cmp(self, other) > 0

    def __ge__(self, other):
        return _grlex_cmp(self, other) >= 0

    # tuple defines these; keep them so Monomial stays hashable like a tuple
    __hash__ = tuple.__hash__
    __eq__ = tuple.__eq__
    __ne__ = tuple.__ne__

    def __str__(self):
        if not self:
            return "1"
        return "*".join(n if e == 1 else f"{n}^{e}" for n, e in self)

    def __repr__(self):
        return f"Monomial({dict(self)!r})"

    def as_poly(self):
        return Polynomial({self: 1.0})


ONE = Monomial()
grlex_key = functools.cmp_to_key(_grlex_cmp)


def _format_number(c):
    if c == int(c) and abs(c) < 1e15:
        return str(int(c))
    return repr(float(c))


class Polynomial:
    """Immutable sparse polynomial with real coefficients.

    >>> p = Polynomial.var("x1") ** 2 + 6
    >>> str(p)
    'x1^2 + 6'
    """

    __slots__ = ("_terms",)

    def __init__(self, terms=None):
        clean = {}
        if terms:
            items = terms.items() if isinstance(terms, dict) else terms
            for mono, coef in items:
                mono = Monomial(mono)
                coef = float(coef)
                if not math.isfinite(coef):
                    raise ValueError("polynomial coefficients must be finite")
                total = clean.get(mono, 0.0) + coef
                if total == 0.0:
                    clean.pop(mono, None)
                else:
                    clean[mono] = total
        object.__setattr__(self, "_terms", clean)

    @classmethod
    def _raw(cls, terms):
        obj = object.__new__(cls)
        object.__setattr__(obj, "_terms", terms)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    @classmethod
    def const(cls, c):
        return cls({ONE: c})

    @classmethod
    def var(cls, name):
        return cls._raw({Monomial(((name, 1),)): 1.0})

    @classmethod
    def coerce(cls, value):
        if isinstance(value, Polynomial):
            return value
        if isinstance(value, Monomial):
            return value.as_poly()
        if isinstance(value, numbers.Real):
            return cls.const(value)
        if isinstance(value, str):
            from .parse import parse

            return parse(value)
        raise TypeError(f"cannot convert {type(value).__name__} to Polynomial")

    # -- inspection ---------------------------------------------------------

    @property
    def terms(self):
        """Copy of the monomial -> coefficient map."""
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def sorted_terms(self):
        """Terms in graded-lex descending order."""
        return sorted(self._terms.items(), key=lambda kv: grlex_key(kv[0]), reverse=True)

    def coefficient(self, mono):
        return self._terms.get(Monomial(mono), 0.0)

    @property
    def variables(self):
        names = set()
        for mono in self._terms:
            names.update(mono.variables)
        return tuple(sorted(names))

    @property
    def degree(self):
        return max((m.degree for m in self._terms), default=0)

    def degree_in(self, names):
        names = set(names)
        return max((sum(e for n, e in m if n in names) for m in self._terms), default=0)

    def is_zero(self):
        return not self._terms

    def is_constant(self):
        return all(not m for m in self._terms)

    def constant_value(self):
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self._terms.get(ONE, 0.0)

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if isinstance(other, (numbers.Real, Monomial)):
            other = Polynomial.coerce(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def coefficient_vector(self):
        return np.array([c for _, c in self.sorted_terms()], dtype=float)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        try:
            other = Polynomial.coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for mono, coef in other._terms.items():
            total = out.get(mono, 0.0) + coef
            if total == 0.0:
                out.pop(mono, None)
            else:
                out[mono] = total
        return Polynomial._raw(out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw({m: -c for m, c in self._terms.items()})

    def __pos__(self):
        return self

    def __sub__(self, other):
        try:
            other = Polynomial.coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return Polynomial.coerce(other) - self

    def __mul__(self, other):
        try:
            other = Polynomial.coerce(other)
        except TypeError:
            return NotImplemented
        out = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                mono = m1 * m2
                total = out.get(mono, 0.0) + c1 * c2
                if total == 0.0:
                    out.pop(mono, None)
                else:
                    out[mono] = total
        return Polynomial._raw(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, numbers.Real):
            return NotImplemented
        return self * (1.0 / float(other))

    def __pow__(self, k):
        if not isinstance(k, numbers.Integral) or k < 0:
            raise ValueError("polynomial power must be a nonnegative integer")
        result = Polynomial.const(1.0)
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # -- calculus and evaluation -------------------------------------------

    def diff(self, name):
        out = {}
        for mono, coef in self._terms.items():
            e = mono.exponent(name)
            if e:
                reduced = Monomial(tuple((n, x - 1 if n == name else x) for n, x in mono))
                out[reduced] = out.get(reduced, 0.0) + coef * e
        return Polynomial(out)

    def subs(self, assignment):
        return substitute(self, assignment)

    def evaluate(self, point):
        """Numeric value at ``point`` (name -> number or numpy array).

        Every variable of the polynomial must be assigned.
        """
        total = 0.0
        for mono, coef in self._terms.items():
            term = coef
            for name, e in mono:
                try:
                    value = point[name]
                except KeyError:
                    raise KeyError(f"no value for variable {name!r}") from None
                term = term * np.asarray(value, dtype=float) ** e
            total = total + term
        return total

    def __call__(self, **point):
        return self.evaluate(point)

    # -- display ------------------------------------------------------------

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for k, (mono, coef) in enumerate(self.sorted_terms()):
            mag = abs(coef)
            if not mono:
                body = _format_number(mag)
            elif mag == 1.0:
                body = str(mono)
            else:
                body = f"{_format_number(mag)}*{mono}"
            if k == 0:
                parts.append(("-" if coef < 0 else "") + body)
            else:
                parts.append((" - " if coef < 0 else " + ") + body)
        return "".join(parts)

    def __repr__(self):
        return f"Polynomial({str(self)!r})"


@dataclass(frozen=True)
class AffineDecomposition:
    """``base + sum(p_i * d_i)`` with every ``p_i`` free of decision variables."""

    base: Polynomial
    coeffs: tuple  # ((name, Polynomial), ...)

    def reassemble(self):
        total = self.base
        for name, p in self.coeffs:
            total = total + p * Polynomial.var(name)
        return total

    @property
    def decision_variables(self):
        return tuple(name for name, _ in self.coeffs)


def _names(vars_):
    if isinstance(vars_, str):
        return vars_.replace(",", " ").split()
    out = []
    for v in vars_:
        if isinstance(v, Polynomial):
            if len(v) != 1:
                raise ValueError(f"{v} is not a single variable")
            (mono, coef), = v.items()
            if coef != 1.0 or len(mono) != 1 or mono[0][1] != 1:
                raise ValueError(f"{v} is not a single variable")
            out.append(mono[0][0])
        else:
            out.append(_check_name(v))
    return out


def variables(names):
    """``x1, x2 = variables("x1 x2")``"""
    return [Polynomial.var(_check_name(n)) for n in _names(names)]


# -- functional forms of the arithmetic ---------------------------------------

def add(p, q):
    return Polynomial.coerce(p) + q


def mul(p, q):
    return Polynomial.coerce(p) * q


def neg(p):
    return -Polynomial.coerce(p)


def pow(p, k):
    return Polynomial.coerce(p) ** k


def substitute(p, assignment):
    """Replace variables by numbers or polynomials; unmentioned ones stay."""
    p = Polynomial.coerce(p)
    if not assignment:
        return p
    values = {}
    for key, val in assignment.items():
        name = _names([key])[0] if isinstance(key, Polynomial) else _check_name(key)
        values[name] = val if isinstance(val, Polynomial) else Polynomial.coerce(val)
    powers = {}

    def power(name, e):
        key = (name, e)
        if key not in powers:
            powers[key] = values[name] ** e
        return powers[key]

    out = {}
    for mono, coef in p.items():
        kept = []
        factor = None
        for name, e in mono:
            if name in values:
                f = power(name, e)
                factor = f if factor is None else factor * f
            else:
                kept.append((name, e))
        head = Polynomial._raw({Monomial(kept): coef})
        term = head if factor is None else head * factor
        for m, c in term.items():
            total = out.get(m, 0.0) + c
            if total == 0.0:
                out.pop(m, None)
            else:
                out[m] = total
    return Polynomial._raw(out)


def monomials(vars_, degrees):
    """All monomials in ``vars_`` whose total degree is in ``degrees``.

    Ordered by ascending degree, and within a degree by descending lex
    (``x1^2`` before ``x1*x2`` before ``x2^2``).
    """
    names = sorted(set(_names(vars_)))
    if not names:
        raise ValueError("monomials needs at least one variable")
    if isinstance(degrees, numbers.Integral):
        degrees = [degrees]
    out = []
    for d in sorted(set(int(d) for d in degrees)):
        if d < 0:
            raise ValueError("degrees must be nonnegative")
        level = [Monomial(tuple(zip(names, c)))
                 for c in _compositions(d, len(names))]
        out.extend(sorted(level, key=grlex_key, reverse=True))
    return out


def _compositions(total, parts):
    # stars and bars: exponent vectors of length `parts` summing to `total`
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        vec = []
        for b in bars:
            vec.append(b - prev - 1)
            prev = b
        vec.append(total + parts - 1 - prev - 1)
        yield tuple(vec)


def var_matrix(prefix, rows, cols, symmetric=False):
    """Matrix of fresh variables named ``prefix_i_j`` (1-based).

    With ``symmetric=True`` entry ``(j, i)`` reuses the name of ``(i, j)``
    for ``i <= j``.
    """
    _check_name(prefix)
    if rows < 1 or cols < 1:
        raise ValueError("matrix dimensions must be positive")
    if symmetric and rows != cols:
        raise ValueError("a symmetric variable matrix must be square")
    out = np.empty((rows, cols), dtype=object)
    for i in range(rows):
        for j in range(cols):
            a, b = (min(i, j), max(i, j)) if symmetric else (i, j)
            out[i, j] = Polynomial.var(f"{prefix}_{a + 1}_{b + 1}")
    return out


def _check_basis(basis):
    basis = [Monomial(m) if not isinstance(m, Polynomial) else _as_monomial(m) for m in basis]
    if len(set(basis)) != len(basis):
        raise ValueError("basis contains duplicate monomials")
    return basis


def _as_monomial(p):
    if len(p) != 1:
        raise ValueError(f"{p} is not a monomial")
    (mono, coef), = p.items()
    if coef != 1.0:
        raise ValueError(f"{p} is not a monic monomial")
    return mono


def poly_decision_var(prefix, basis):
    """Vector form ``d' * w`` with fresh coefficient names ``prefix_1..prefix_m``."""
    _check_name(prefix)
    basis = _check_basis(basis)
    names = [f"{prefix}_{k + 1}" for k in range(len(basis))]
    terms = {}
    for name, mono in zip(names, basis):
        terms[mono * Monomial(((name, 1),))] = 1.0
    return Polynomial(terms), names


def sos_decision_var(prefix, z):
    """Matrix form ``z' * D * z`` with ``D`` symmetric of fresh names.

    This only builds the polynomial. It does not constrain it to be SOS.
    """
    z = _check_basis(z)
    m = len(z)
    D = var_matrix(prefix, m, m, symmetric=True)
    terms = {}
    for i in range(m):
        for j in range(i, m):
            name = f"{prefix}_{i + 1}_{j + 1}"
            mono = z[i] * z[j] * Monomial(((name, 1),))
            terms[mono] = terms.get(mono, 0.0) + (1.0 if i == j else 2.0)
    return Polynomial(terms), D


def affine_split(p, x_vars):
    """Write ``p`` as ``base(x) + sum p_i(x) d_i``.

    Every variable of ``p`` outside ``x_vars`` is a decision variable.
    Raises :class:`NotAffine` if some term has decision degree >= 2.
    """
    p = Polynomial.coerce(p)
    xs = set(_names(x_vars))
    base = {}
    coeffs = {}
    for mono, coef in p.items():
        xpart, dpart = mono.restrict(xs)
        ddeg = dpart.degree
        if ddeg == 0:
            base[xpart] = coef
        elif ddeg == 1:
            coeffs.setdefault(dpart[0][0], {})[xpart] = coef
        else:
            raise NotAffine(Polynomial({mono: coef}))
    return AffineDecomposition(
        Polynomial(base),
        tuple((name, Polynomial(coeffs[name])) for name in sorted(coeffs)),
    )


def gradient(p, x_vars):
    p = Polynomial.coerce(p)
    return [p.diff(n) for n in _names(x_vars)]
