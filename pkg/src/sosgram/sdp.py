"""Standard-form conic problems and a small primal-dual interior point solver.

The problem is::

    minimize    c'x
    subject to  A x = b,  x in K

with ``K`` a product of nonnegative orthants and PSD cones. A PSD(m) block
occupies ``m*m`` consecutive entries of ``x`` holding ``vec(X)``; every row of
``A`` restricted to that block, and the block of ``c``, must be symmetric.
The dual is ``maximize b'y s.t. A'y + s = c, s in K``.

The solver is meant for desk-scale problems (total PSD dimension up to a
few hundred) and uses dense linear algebra throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

__all__ = [
    "Cone",
    "NONNEG",
    "PSD",
    "ConicProblem",
    "ConicSolution",
    "Residuals",
    "SolverOptions",
    "Status",
    "solve_conic",
    "residuals",
]


class Status(enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    STALLED = "stalled"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ("nonneg", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("cone dimension must be positive")

    @property
    def size(self):
        """Number of entries of ``x`` the cone occupies."""
        return self.dim if self.kind == "nonneg" else self.dim * self.dim

    @property
    def degree(self):
        return self.dim

    def __str__(self):
        return f"{self.kind.upper()}({self.dim})"


def NONNEG(n):
    return Cone("nonneg", n)


def PSD(m):
    return Cone("psd", m)


@dataclass
class ConicProblem:
    cones: tuple
    A: sps.csr_matrix
    b: np.ndarray
    c: np.ndarray
    # index pairs (i, j) of nonneg columns with A[:, i] == -A[:, j] and
    # c[i] == -c[j], i.e. a free variable split as x_i - x_j
    free_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))

    def __post_init__(self):
        self.cones = tuple(self.cones)
        self.A = sps.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.free_pairs = np.asarray(self.free_pairs, dtype=int).reshape(-1, 2)
        n = sum(k.size for k in self.cones)
        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns but the cones need {n}")
        if self.A.shape[0] != self.b.size:
            raise ValueError(f"A has {self.A.shape[0]} rows but b has {self.b.size} entries")
        if self.c.size != n:
            raise ValueError(f"c has {self.c.size} entries but the cones need {n}")

    @property
    def num_rows(self):
        return self.A.shape[0]

    @property
    def num_cols(self):
        return self.A.shape[1]

    def block_slices(self):
        out = []
        start = 0
        for cone in self.cones:
            out.append(slice(start, start + cone.size))
            start += cone.size
        return out


@dataclass(frozen=True)
class Residuals:
    """``gap`` is the complementarity ``<x, s>`` relative to the objectives;
    ``objective_gap`` is ``|c'x - b'y|`` on the same scale (the two agree on
    feasible points)."""

    primal: float
    dual: float
    gap: float
    primal_objective: float
    dual_objective: float
    objective_gap: float = 0.0


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: Status
    residuals: Residuals
    iterations: int
    history: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


@dataclass
class SolverOptions:
    tol: float = 1e-8
    infeasibility_tol: float = 1e-8
    step_tol: float = 1e-10
    max_iter: int = 100
    # stop as STALLED after this many iterations without a new best iterate
    stall_window: int = 10


def residuals(problem, x, y, s):
    """Relative primal/dual residuals and duality gap of ``(x, y, s)``."""
    A, b, c = problem.A, problem.b, problem.c
    pobj = float(c @ x)
    dobj = float(b @ y)
    scale = 1.0 + abs(pobj) + abs(dobj)
    return Residuals(
        primal=float(np.linalg.norm(A @ x - b) / (1.0 + np.linalg.norm(b))),
        dual=float(np.linalg.norm(A.T @ y + s - c) / (1.0 + np.linalg.norm(c))),
        gap=abs(float(x @ s)) / scale,
        primal_objective=pobj,
        dual_objective=dobj,
        objective_gap=abs(pobj - dobj) / scale,
    )


# -- block helpers ----------------------------------------------------------

class _Blocks:
    """Dense per-block views of the (presolved) constraint matrix."""

    def __init__(self, cones, A, c):
        self.cones = cones
        self.m = A.shape[0]
        self.lp = []     # (slice, A_block (m x n))
        self.psd = []    # (slice, k, rows touching block, A_block (r x k x k))
        self.kinds = []
        start = 0
        for cone in cones:
            sl = slice(start, start + cone.size)
            start += cone.size
            Ab = A[:, sl]
            if cone.kind == "nonneg":
                self.kinds.append(("lp", len(self.lp)))
                self.lp.append((sl, Ab))
            else:
                k = cone.dim
                full = Ab.reshape(self.m, k, k)
                full = 0.5 * (full + full.transpose(0, 2, 1))
                rows = np.flatnonzero(np.abs(full).reshape(self.m, k * k).max(axis=1, initial=0.0) > 0)
                self.kinds.append(("psd", len(self.psd)))
                self.psd.append((sl, k, rows, full[rows]))
        self.nu = sum(cone.degree for cone in cones)

    def split(self, v):
        out = []
        for cone, (kind, idx) in zip(self.cones, self.kinds):
            if kind == "lp":
                out.append(v[self.lp[idx][0]].copy())
            else:
                sl, k = self.psd[idx][0], self.psd[idx][1]
                M = v[sl].reshape(k, k)
                out.append(0.5 * (M + M.T))
        return out

    @staticmethod
    def join(blocks):
        return np.concatenate([b.ravel() for b in blocks]) if blocks else np.zeros(0)

    def A_apply(self, blocks):
        out = np.zeros(self.m)
        for (kind, idx), xb in zip(self.kinds, blocks):
            if kind == "lp":
                out += self.lp[idx][1] @ xb
            else:
                _, k, rows, Ab = self.psd[idx]
                out[rows] += Ab.reshape(len(rows), k * k) @ xb.ravel()
        return out

    def AT_apply(self, y):
        out = []
        for kind, idx in self.kinds:
            if kind == "lp":
                out.append(self.lp[idx][1].T @ y)
            else:
                _, k, rows, Ab = self.psd[idx]
                out.append((y[rows] @ Ab.reshape(len(rows), k * k)).reshape(k, k))
        return out


def _inner(xs, ss):
    return float(sum(np.vdot(a, b) for a, b in zip(xs, ss)))


def _add(xs, ys, alpha=1.0):
    return [a + alpha * b for a, b in zip(xs, ys)]


def _max_step_scaled(lam, d):
    """Largest alpha with diag(lam) + alpha * d in the cone (inf if unbounded)."""
    if d.ndim == 1:
        neg = d < 0
        if not neg.any():
            return math.inf
        return float(np.min(-lam[neg] / d[neg]))
    r = 1.0 / np.sqrt(lam)
    e = np.linalg.eigvalsh(r[:, None] * d * r[None, :])[0]
    return math.inf if e >= 0 else -1.0 / e


class _Scaling:
    """Nesterov-Todd scaling of one block at the current iterate."""

    def __init__(self, x, s):
        if x.ndim == 1:
            self.lp = True
            self.w = np.sqrt(x / s)
            self.lam = np.sqrt(x * s)
            return
        self.lp = False
        L1 = np.linalg.cholesky(x)
        L2 = np.linalg.cholesky(s)
        U, lam, Vt = np.linalg.svd(L2.T @ L1)
        self.lam = lam
        self.R = (L1 @ Vt.T) / np.sqrt(lam)[None, :]
        # R^{-1} = diag(sqrt(lam)) V' L1^{-1}
        self.Rinv = sla.solve_triangular(L1, (Vt.T * np.sqrt(lam)[None, :]), lower=True, trans="T").T
        W = self.R @ self.R.T
        self.W = 0.5 * (W + W.T)

    def apply_W(self, v):
        """The map ds -> W ds W (so that W s W = x)."""
        if self.lp:
            return self.w * self.w * v
        out = self.W @ v @ self.W
        return 0.5 * (out + out.T)

    def scaled_x(self, dx):
        if self.lp:
            return dx / self.w
        out = self.Rinv @ dx @ self.Rinv.T
        return 0.5 * (out + out.T)

    def scaled_s(self, ds):
        if self.lp:
            return self.w * ds
        out = self.R.T @ ds @ self.R
        return 0.5 * (out + out.T)

    def jordan_solve(self, v):
        """U with lam o U = v, o the symmetrized product."""
        if self.lp:
            return v / self.lam
        return 2.0 * v / (self.lam[:, None] + self.lam[None, :])

    def unscale(self, u):
        if self.lp:
            return self.w * u
        out = self.R @ u @ self.R.T
        return 0.5 * (out + out.T)

    def lam_sq(self):
        return self.lam**2 if self.lp else np.diag(self.lam**2)

    def identity(self):
        return np.ones_like(self.lam) if self.lp else np.eye(self.lam.size)


def _jordan(a, b):
    if a.ndim == 1:
        return a * b
    p = a @ b
    return 0.5 * (p + p.T)


def _presolve(A, b, tol=1e-10):
    """Row-equilibrate and drop dependent rows.

    Returns (A_scaled, b_scaled, row_scale, keep) or raises _Inconsistent with
    a Farkas vector when b is outside the range of A.
    """
    m = A.shape[0]
    norms = np.linalg.norm(A, axis=1)
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
    As = A * scale[:, None]
    bs = b * scale
    if m == 0:
        return As, bs, scale, np.arange(0)
    if A.shape[1] == 0:
        rank = 0
        piv = np.arange(m)
    else:
        _, R, piv = sla.qr(As.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > tol * max(diag[0], 1.0))) if diag.size else 0
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    if drop.size:
        Ak, Ad = As[keep], As[drop]
        if keep.size:
            coef, *_ = np.linalg.lstsq(Ak.T, Ad.T, rcond=None)
            mismatch = bs[drop] - coef.T @ bs[keep]
        else:
            coef = np.zeros((0, drop.size))
            mismatch = bs[drop].copy()
        worst = int(np.argmax(np.abs(mismatch)))
        if abs(mismatch[worst]) > 1e-9 * (1.0 + np.linalg.norm(bs)):
            ys = np.zeros(m)
            ys[drop[worst]] = 1.0
            ys[keep] = -coef[:, worst]
            ys *= np.sign(mismatch[worst])
            raise _Inconsistent(ys * scale)
    return As[keep], bs[keep], scale, keep


class _Inconsistent(Exception):
    def __init__(self, y):
        self.y = y


def _solve_spd(M, rhs, factor):
    if rhs.size == 0:
        return np.zeros(0)
    sol = sla.cho_solve(factor, rhs) if factor[0] is not None else np.linalg.lstsq(M, rhs, rcond=None)[0]
    # one step of iterative refinement
    r = rhs - M @ sol
    if factor[0] is not None:
        sol = sol + sla.cho_solve(factor, r)
    return sol


def _factor(M):
    if M.size == 0:
        return (None, None), 0.0
    scale = max(float(np.max(np.abs(np.diag(M)))) if M.size else 1.0, 1e-300)
    reg = 0.0
    for _ in range(6):
        try:
            return sla.cho_factor(M + reg * np.eye(M.shape[0]), lower=True, check_finite=True), reg
        except (np.linalg.LinAlgError, ValueError):
            reg = 1e-14 * scale if reg == 0.0 else reg * 100.0
    return (None, None), reg


_EQUAL_STEPS = False
_NORMALIZE = True
_REFINE_STEPS = 3


def solve_conic(problem, opts=None, **kwargs):
    """Solve ``problem`` with a primal-dual path-following method.

    Infeasible-start iterates, Nesterov-Todd scaling and a Mehrotra
    predictor-corrector step. Infeasibility is reported when the iterates
    contain an approximate Farkas ray (relative residual below
    ``opts.infeasibility_tol``); the returned ``y, s`` (primal infeasible)
    or ``x`` (dual infeasible) are then that normalized ray.
    """
    if opts is None:
        opts = SolverOptions(**kwargs)
    elif kwargs:
        opts = SolverOptions(**{**opts.__dict__, **kwargs})
    A0 = problem.A.toarray()
    b0, c0 = problem.b, problem.c
    m, n = A0.shape

    def finish(x, y, s, status, it, history):
        return ConicSolution(x, y, s, status, residuals(problem, x, y, s), it, history)

    if n == 0:
        x = np.zeros(0)
        if not np.any(b0):
            return finish(x, np.zeros(m), np.zeros(0), Status.OPTIMAL, 0, [])
        y = b0 / float(b0 @ b0)
        return finish(x, y, np.zeros(0), Status.PRIMAL_INFEASIBLE, 0, [])

    try:
        A, b, row_scale, keep = _presolve(A0, b0)
    except _Inconsistent as exc:
        y = exc.y / float(b0 @ exc.y)
        s = -(problem.A.T @ y)
        return finish(np.zeros(n), y, s, Status.PRIMAL_INFEASIBLE, 0, [])

    # normalize the data; iterates are mapped back before every termination test
    bscale = max(1.0, float(np.linalg.norm(b))) if _NORMALIZE else 1.0
    cscale = max(1.0, float(np.linalg.norm(c0))) if _NORMALIZE else 1.0
    b = b / bscale
    blk = _Blocks(problem.cones, A, c0)
    c_blocks = [cb / cscale for cb in blk.split(c0)]
    nu = blk.nu

    def to_original_y(ys):
        y = np.zeros(m)
        y[keep] = ys * row_scale[keep] * cscale
        return y

    # cold start X = zeta I, S = eta I
    a_norms = np.linalg.norm(A, axis=1) if A.size else np.zeros(0)
    zeta = max(10.0, math.sqrt(nu), float(np.max((1.0 + np.abs(b)) / (1.0 + a_norms), initial=0.0)))
    eta = max(10.0, math.sqrt(nu), float(np.max(a_norms, initial=0.0)),
              float(np.linalg.norm(c0)) / cscale)
    xs = []
    ss = []
    for cone in problem.cones:
        if cone.kind == "nonneg":
            xs.append(np.full(cone.dim, zeta))
            ss.append(np.full(cone.dim, eta))
        else:
            xs.append(zeta * np.eye(cone.dim))
            ss.append(eta * np.eye(cone.dim))
    y = np.zeros(A.shape[0])

    pairs = problem.free_pairs
    history = []
    status = Status.ITERATION_LIMIT
    it = 0
    best = None  # (merit, iteration, x, y, s) of the most accurate iterate
    for it in range(opts.max_iter + 1):
        x_full = blk.join(xs) * bscale
        s_full = blk.join(ss) * cscale
        y_orig = to_original_y(y)
        res = residuals(problem, x_full, y_orig, s_full)
        rp_orig = b0 - problem.A @ x_full
        rd_orig = c0 - problem.A.T @ y_orig - s_full
        history.append({
            "iter": it,
            "pobj": res.primal_objective,
            "dobj": res.dual_objective,
            "pres": res.primal,
            "dres": res.dual,
            "gap": res.gap,
            "mu": _inner(xs, ss) / nu,
            "xs": _inner(xs, ss),
            # c'x - b'y = <x, s> + x'rd - y'rp on the original data
            "x_rd": float(x_full @ rd_orig),
            "y_rp": float(y_orig @ rp_orig),
            "x_s": float(x_full @ s_full),
        })
        if res.primal <= opts.tol and res.dual <= opts.tol and res.gap <= opts.tol:
            return finish(x_full, y_orig, s_full, Status.OPTIMAL, it, history)
        by = res.dual_objective
        if by > 0:
            ray = problem.A.T @ y_orig + s_full
            if np.linalg.norm(ray) <= opts.infeasibility_tol * by:
                return finish(x_full, y_orig / by, s_full / by, Status.PRIMAL_INFEASIBLE, it, history)
        cx = res.primal_objective
        if cx < 0:
            if np.linalg.norm(problem.A @ x_full) <= opts.infeasibility_tol * (-cx):
                return finish(x_full / (-cx), y_orig, s_full, Status.DUAL_INFEASIBLE, it, history)
        merit = max(res.primal, res.dual, res.gap)
        if best is None or merit < best[0]:
            best = (merit, it, x_full, y_orig, s_full)
        elif it - best[1] >= opts.stall_window:
            status = Status.STALLED
            break
        if it == opts.max_iter:
            break

        rp = b - blk.A_apply(xs)
        ATy = blk.AT_apply(y)
        rd = [cb - a - sb for cb, a, sb in zip(c_blocks, ATy, ss)]
        mu = _inner(xs, ss) / nu
        try:
            scal = [_Scaling(xb, sb) for xb, sb in zip(xs, ss)]
        except np.linalg.LinAlgError:
            status = Status.STALLED
            break

        M = np.zeros((A.shape[0], A.shape[0]))
        for (kind, idx), sc in zip(blk.kinds, scal):
            if kind == "lp":
                Ab = blk.lp[idx][1]
                M += (Ab * (sc.w * sc.w)[None, :]) @ Ab.T
            else:
                _, k, rows, Ab = blk.psd[idx]
                T = np.matmul(np.matmul(sc.W, Ab), sc.W)
                M[np.ix_(rows, rows)] += Ab.reshape(len(rows), k * k) @ T.reshape(len(rows), k * k).T
        M = 0.5 * (M + M.T)
        factor, _ = _factor(M)
        W_rd = [sc.apply_W(r) for sc, r in zip(scal, rd)]
        A_W_rd = blk.A_apply(W_rd)

        def direction(vrhs):
            rc = [sc.unscale(sc.jordan_solve(v)) for sc, v in zip(scal, vrhs)]
            rhs = rp - blk.A_apply(rc) + A_W_rd
            dy = _solve_spd(M, rhs, factor)
            best = None
            for _ in range(_REFINE_STEPS + 1):
                ATdy = blk.AT_apply(dy)
                ds = [r - a for r, a in zip(rd, ATdy)]
                dx = [r - sc.apply_W(d) for r, sc, d in zip(rc, scal, ds)]
                # the Schur matrix is formed in floating point; correct dy
                # against the exact operator so that A dx = rp holds tightly
                err = rp - blk.A_apply(dx)
                nerr = float(np.linalg.norm(err))
                if best is not None and nerr >= best[0]:
                    break
                best = (nerr, dx, dy, ds)
                if nerr <= 1e-15 * (1.0 + float(np.linalg.norm(rp))):
                    break
                dy = dy + _solve_spd(M, err, factor)
            _, dx, dy, ds = best
            return dx, dy, ds

        def steps(dx, ds):
            ap = ad = math.inf
            for sc, a, d in zip(scal, dx, ds):
                ap = min(ap, _max_step_scaled(sc.lam, sc.scaled_x(a)))
                ad = min(ad, _max_step_scaled(sc.lam, sc.scaled_s(d)))
            return ap, ad

        # predictor
        dx_a, dy_a, ds_a = direction([-sc.lam_sq() for sc in scal])
        ap_a, ad_a = steps(dx_a, ds_a)
        ap_a, ad_a = min(1.0, ap_a), min(1.0, ad_a)
        mu_aff = _inner(_add(xs, dx_a, ap_a), _add(ss, ds_a, ad_a)) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0

        # corrector
        vrhs = []
        for sc, a, d in zip(scal, dx_a, ds_a):
            vrhs.append(sigma * mu * sc.identity() - sc.lam_sq() - _jordan(sc.scaled_x(a), sc.scaled_s(d)))
        dx, dy, ds = direction(vrhs)
        ap, ad = steps(dx, ds)
        gamma = 0.9 + 0.09 * min(ap_a, ad_a)
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        if _EQUAL_STEPS:
            ap = ad = min(ap, ad)
        if not (np.isfinite(ap) and np.isfinite(ad)):
            status = Status.STALLED
            break
        # rounding can leave a computed step just outside the cone; back off
        new_xs, ap = _backtrack(xs, dx, ap)
        new_ss, ad = _backtrack(ss, ds, ad)
        history[-1]["alpha_p"] = ap
        history[-1]["alpha_d"] = ad
        if max(ap, ad) < opts.step_tol:
            status = Status.STALLED
            break
        xs, ss = new_xs, new_ss
        y = y + ad * dy
        if pairs.size:
            _recenter_free(xs, blk, pairs)
        if not all(np.all(np.isfinite(v)) for v in xs + ss) or not np.all(np.isfinite(y)):
            status = Status.STALLED
            break
    # report the most accurate iterate seen rather than wherever the loop ended
    _, _, x_full, y_orig, s_full = best
    return finish(x_full, y_orig, s_full, status, it, history)


def _interior(blocks):
    for v in blocks:
        if v.ndim == 1:
            if np.any(v <= 0):
                return False
        else:
            try:
                np.linalg.cholesky(v)
            except np.linalg.LinAlgError:
                return False
    return True


def _backtrack(xs, dx, alpha):
    for _ in range(30):
        new = _add(xs, dx, alpha)
        if _interior(new):
            return new, alpha
        alpha *= 0.8
    return xs, 0.0


def _recenter_free(xs, blk, pairs):
    # Shrink both halves of each split free variable; A x is unchanged.
    offsets = []
    start = 0
    for cone in blk.cones:
        offsets.append(start)
        start += cone.size
    for (kind, idx), xb, off in zip(blk.kinds, xs, offsets):
        if kind != "lp":
            continue
        n = xb.size
        for i, j in pairs:
            if off <= i < off + n and off <= j < off + n:
                li, lj = i - off, j - off
                shift = 0.8 * min(xb[li], xb[lj])
                xb[li] -= shift
                xb[lj] -= shift
