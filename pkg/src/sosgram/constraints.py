"""SOS and polynomial equality constraints."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .poly import Polynomial

__all__ = [
    "RelOp",
    "Constraint",
    "ConstraintList",
    "sos_ge",
    "sos_le",
    "eq",
    "left_side",
    "right_side",
    "one_side",
    "rel_op",
    "concat",
]


class RelOp(enum.Enum):
    SOS_GE = ">="
    SOS_LE = "<="
    EQ = "=="

    @property
    def is_sos(self):
        return self is not RelOp.EQ

    @classmethod
    def from_text(cls, text):
        for op in cls:
            if op.value == text:
                return op
        raise ValueError(f"unknown relation {text!r}; expected one of '>=', '<=', '=='")


@dataclass(frozen=True)
class Constraint:
    """``left op right``; only the two sides and the relation are stored."""

    left: Polynomial
    right: Polynomial
    op: RelOp
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "left", Polynomial.coerce(self.left))
        object.__setattr__(self, "right", Polynomial.coerce(self.right))
        if not isinstance(self.op, RelOp):
            object.__setattr__(self, "op", RelOp.from_text(self.op))

    @property
    def one_side(self):
        if self.op is RelOp.SOS_LE:
            return self.right - self.left
        return self.left - self.right

    @property
    def is_sos(self):
        return self.op.is_sos

    @property
    def relop(self):
        return "==" if self.op is RelOp.EQ else ">="

    def __str__(self):
        return f"{self.one_side}\n{self.relop} 0"


def sos_ge(p, q=0, label=None):
    """``p - q`` is SOS."""
    return Constraint(p, q, RelOp.SOS_GE, label)


def sos_le(p, q=0, label=None):
    """``q - p`` is SOS."""
    return Constraint(p, q, RelOp.SOS_LE, label)


def eq(p, q=0, label=None):
    """``p - q`` is the zero polynomial."""
    return Constraint(p, q, RelOp.EQ, label)


def left_side(c):
    return c.left


def right_side(c):
    return c.right


def one_side(c):
    return c.one_side


def rel_op(c):
    """Displayed relation: ``'>='`` for SOS constraints, ``'=='`` otherwise.

    Applied to a :class:`ConstraintList` it returns one string per entry.
    """
    if isinstance(c, ConstraintList):
        return [x.relop for x in c]
    return c.relop


class ConstraintList:
    """Ordered constraints with 1-based ``get``/``set`` alongside normal indexing."""

    def __init__(self, constraints=()):
        self._items = []
        for c in constraints:
            self._items.append(_checked(c))

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __eq__(self, other):
        if isinstance(other, ConstraintList):
            return self._items == other._items
        return NotImplemented

    def get(self, i):
        if not 1 <= i <= len(self._items):
            raise IndexError(f"constraint index {i} out of range 1..{len(self._items)}")
        return self._items[i - 1]

    def set(self, i, c):
        if not 1 <= i <= len(self._items):
            raise IndexError(f"constraint index {i} out of range 1..{len(self._items)}")
        self._items[i - 1] = _checked(c)

    def append(self, c):
        self._items.append(_checked(c))

    @property
    def relops(self):
        return rel_op(self)

    def __repr__(self):
        return f"ConstraintList with {len(self)} constraints"


def _checked(c):
    if not isinstance(c, Constraint):
        raise TypeError(f"expected Constraint, got {type(c).__name__}")
    return c


def concat(*lists):
    out = ConstraintList()
    for lst in lists:
        if isinstance(lst, Constraint):
            out.append(lst)
        else:
            for c in lst:
                out.append(c)
    return out
