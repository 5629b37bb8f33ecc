"""Test-only SDPA sparse reader, the inverse of ``sosgram.sdpa.export_sdpa``."""

import numpy as np
import scipy.sparse as sps

from sosgram.sdp import NONNEG, PSD, ConicProblem


def read_sdpa(text):
    raw = [ln for ln in text.splitlines() if not ln.startswith(("*", '"'))]
    # the b line is blank when there are no constraints
    lines = raw[:4] + [ln for ln in raw[4:] if ln.strip()]
    m = int(lines[0])
    nblocks = int(lines[1])
    sizes = [int(v) for v in lines[2].split()]
    assert len(sizes) == nblocks
    cones = [NONNEG(-k) if k < 0 else PSD(k) for k in sizes]
    b = np.array([float(v) for v in lines[3].split()]) if m else np.zeros(0)
    offsets = np.cumsum([0] + [c.size for c in cones])
    n = int(offsets[-1])
    F = np.zeros((m + 1, n))
    for ln in lines[4:]:
        k, blk, i, j, v = ln.split()
        k, blk, i, j, v = int(k), int(blk) - 1, int(i) - 1, int(j) - 1, float(v)
        cone, off = cones[blk], offsets[blk]
        if cone.kind == "nonneg":
            assert i == j
            F[k, off + i] = v
        else:
            F[k, off + i * cone.dim + j] = v
            F[k, off + j * cone.dim + i] = v
    c = -F[0]
    return ConicProblem(cones, sps.csr_matrix(F[1:]), b, c)
