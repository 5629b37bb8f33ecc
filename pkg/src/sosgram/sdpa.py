"""SDPA sparse text export.

SDPA states its problem as ``max F0.Y  s.t.  Fk.Y = c_k, Y >= 0`` (dual
side). A :class:`~sosgram.sdp.ConicProblem` ``min c'x s.t. Ax = b, x in K``
maps onto it with ``Fk = row k of A``, ``c_k = b_k`` and ``F0 = -C``, so the
exported optimum is the negated conic objective.
"""

from __future__ import annotations

import numpy as np

__all__ = ["export_sdpa", "format_number"]


def format_number(v):
    """17 significant digits, enough to round-trip a double."""
    text = "%.17g" % v
    return "0" if text == "-0" else text


def _block_entries(vec, cone):
    """Upper-triangle entries ``(i, j, v)`` (1-based) of one block."""
    out = []
    if cone.kind == "nonneg":
        for i in np.flatnonzero(vec):
            out.append((i + 1, i + 1, float(vec[i])))
        return out
    k = cone.dim
    M = vec.reshape(k, k)
    for i in range(k):
        for j in range(i, k):
            if M[i, j] != 0.0:
                out.append((i + 1, j + 1, float(M[i, j])))
    return out


def export_sdpa(problem):
    """Render ``problem`` in SDPA sparse format (deterministic text)."""
    A = problem.A.tocsr()
    m = A.shape[0]
    slices = problem.block_slices()
    lines = [
        str(m),
        str(len(problem.cones)),
        " ".join(str(-k.dim if k.kind == "nonneg" else k.dim) for k in problem.cones),
        " ".join(format_number(v) for v in problem.b) if m else "",
    ]
    dense_rows = [np.asarray(A.getrow(k).todense()).ravel() for k in range(m)]
    for k in range(m + 1):
        vec = -problem.c if k == 0 else dense_rows[k - 1]
        for blk, (cone, sl) in enumerate(zip(problem.cones, slices), start=1):
            for i, j, v in _block_entries(vec[sl], cone):
                lines.append(f"{k} {blk} {i} {j} {format_number(v)}")
    return "\n".join(lines) + "\n"
