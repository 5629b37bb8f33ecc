"""Random conic problems with a known optimum, built from a complementary pair."""

import numpy as np
import scipy.sparse as sps

from sosgram.sdp import NONNEG, PSD, ConicProblem


def random_feasible_sdp(rng):
    """``(problem, optimum)``; X*, S* >= 0 with X*S* = 0, b = A X*, c = A'y* + S*."""
    sizes = [int(rng.integers(1, 6)) for _ in range(int(rng.integers(1, 4)))]
    nlp = int(rng.integers(0, 4))
    cones = ([NONNEG(nlp)] if nlp else []) + [PSD(k) for k in sizes]
    xs, ss = [], []
    for cone in cones:
        if cone.kind == "nonneg":
            mask = rng.random(cone.dim) < 0.5
            xs.append(np.where(mask, rng.random(cone.dim) + 0.1, 0.0))
            ss.append(np.where(mask, 0.0, rng.random(cone.dim) + 0.1))
        else:
            k = cone.dim
            U, _ = np.linalg.qr(rng.standard_normal((k, k)))
            r = int(rng.integers(0, k + 1))
            lx = np.r_[rng.random(r) + 0.1, np.zeros(k - r)]
            ls = np.r_[np.zeros(r), rng.random(k - r) + 0.1]
            xs.append((U * lx) @ U.T)
            ss.append((U * ls) @ U.T)
    n = sum(c.size for c in cones)
    m = int(rng.integers(1, max(2, n // 2)))
    A = np.zeros((m, n))
    off = 0
    for cone in cones:
        if cone.kind == "nonneg":
            A[:, off:off + cone.dim] = rng.standard_normal((m, cone.dim))
        else:
            k = cone.dim
            G = rng.standard_normal((m, k, k))
            A[:, off:off + k * k] = ((G + G.transpose(0, 2, 1)) / 2).reshape(m, -1)
        off += cone.size
    x = np.concatenate([v.ravel() for v in xs])
    s = np.concatenate([v.ravel() for v in ss])
    y = rng.standard_normal(m)
    c = A.T @ y + s
    off = 0
    for cone in cones:
        if cone.kind == "psd":
            # summation order differs between (i, j) and (j, i); restore exact symmetry
            k = cone.dim
            C = c[off:off + k * k].reshape(k, k)
            c[off:off + k * k] = ((C + C.T) / 2).ravel()
        off += cone.size
    problem = ConicProblem(cones, sps.csr_matrix(A), A @ x, c)
    return problem, float(problem.c @ x)
