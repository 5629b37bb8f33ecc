"""Compile SOS constraints into conic problems and read certificates back.

Two equivalent formulations are produced from one :class:`SosProgram`:

* image form: the entries of every Gram matrix ``Q`` are primal variables
  constrained by one coefficient-matching row per monomial; the free
  decision variables are solved for in terms of ``Q`` and eliminated;
* kernel form: ``Q = Q0(d) + sum(lam_i N_i)`` is a linear matrix inequality
  in the dual variables ``(w, lam)``, where ``d = d_p + Z w`` parametrizes
  the linear equalities on ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .constraints import Constraint, ConstraintList
from .gram import (
    AffineCoeff,
    GramDecomposition,
    StructuralInfeasible,
    _basis_from_support,
    affine_coefficients,
    pair_table,
    simplify_basis,
)
from .poly import Monomial, Polynomial, _names, grlex_key
from .sdp import NONNEG, PSD, ConicProblem

__all__ = [
    "ObjectiveDependsOnX",
    "CompiledConstraint",
    "SosProgram",
    "compile_program",
    "image_form",
    "kernel_form",
    "extract_solution",
    "decision_variables",
]


class ObjectiveDependsOnX(ValueError):
    pass


@dataclass
class CompiledConstraint:
    """One constraint after basis selection and coefficient matching.

    ``coeffs`` holds the coefficient of each monomial as ``AffineCoeff``;
    for bisection programs ``coeffs_t`` holds the part multiplying ``t``.
    """

    constraint: Constraint
    is_sos: bool
    z: list
    candidate_size: int
    table: dict            # monomial -> [(i, j), ...]
    coeffs: dict           # monomial -> AffineCoeff
    coeffs_t: dict = field(default_factory=dict)
    scale: float = 1.0

    def coefficients(self, t=None):
        if t is None or not self.coeffs_t:
            return self.coeffs
        out = {}
        for b in self.table:
            out[b] = self.coeffs.get(b, AffineCoeff()) + self.coeffs_t.get(b, AffineCoeff()).scaled(t)
        return out

    @property
    def monomials(self):
        return list(self.table)


@dataclass
class SosProgram:
    constraints: ConstraintList
    x_vars: tuple
    d_vars: tuple
    objective: AffineCoeff | None
    compiled: list
    t_var: str | None = None

    @property
    def sos_blocks(self):
        return [cc for cc in self.compiled if cc.is_sos and cc.z]

    def sizes(self):
        return {
            "decision_variables": len(self.d_vars),
            "gram_blocks": [len(cc.z) for cc in self.compiled if cc.is_sos],
            "candidate_sizes": [cc.candidate_size for cc in self.compiled if cc.is_sos],
            "rows": sum(len(cc.table) for cc in self.compiled),
        }


def decision_variables(constraints, x_vars, objective=None, t_var=None):
    """Sorted names of every variable in the constraints/objective outside ``x_vars``."""
    xs = set(_names(x_vars))
    names = set()
    for c in constraints:
        names.update(c.one_side.variables)
    if objective is not None:
        names.update(Polynomial.coerce(objective).variables)
    names -= xs
    if t_var is not None:
        names.discard(t_var)
    return tuple(sorted(names))


def _split_t(p, t):
    """``p = p0 + t*p1``; raises ValueError if ``t`` appears with degree > 1."""
    p0, p1 = {}, {}
    for m, c in p.items():
        e = m.exponent(t)
        if e == 0:
            p0[m] = c
        elif e == 1:
            p1[Monomial(tuple((n, k) for n, k in m if n != t))] = c
        else:
            raise ValueError(f"{t} appears with degree {e}; constraints must be linear in {t}")
    return Polynomial(p0), Polynomial(p1)


def compile_program(constraints, x_vars, objective=None, d_vars=None, *,
                    simplify=True, scaling=False, t_var=None):
    """Choose bases and match coefficients for every constraint.

    ``d_vars`` may list the decision variables explicitly; it must cover every
    non-``x`` variable. ``t_var`` marks the bisection variable, which may
    multiply decision variables; each probe fixes it to a number.
    """
    if isinstance(constraints, Constraint):
        constraints = [constraints]
    constraints = ConstraintList(constraints)
    xs = tuple(_names(x_vars))
    if t_var is not None and t_var in xs:
        raise ValueError(f"bisection variable {t_var} is also a polynomial variable")
    found = decision_variables(constraints, xs, objective, t_var)
    if d_vars is None:
        d_vars = found
    else:
        d_vars = tuple(_names(d_vars))
        missing = set(found) - set(d_vars)
        if missing:
            raise ValueError(f"variables {sorted(missing)} are neither polynomial nor decision variables")
        if len(set(d_vars)) != len(d_vars):
            raise ValueError("duplicate decision variable names")

    obj = None
    if objective is not None:
        op = Polynomial.coerce(objective)
        if t_var is not None and t_var in op.variables:
            raise ValueError("the objective may not mention the bisection variable")
        bad = set(op.variables) & set(xs)
        if bad:
            raise ObjectiveDependsOnX(f"objective depends on polynomial variables {sorted(bad)}")
        coeffs = affine_coefficients(op, xs)
        obj = coeffs.get(Monomial(), AffineCoeff())

    compiled = []
    for c in constraints:
        side = c.one_side
        scale = 1.0
        if scaling:
            norm = float(np.linalg.norm(side.coefficient_vector()))
            if norm > 0:
                scale = norm
                side = side / norm
        if t_var is not None:
            p0, p1 = _split_t(side, t_var)
        else:
            p0, p1 = side, Polynomial()
        c0 = affine_coefficients(p0, xs)
        c1 = affine_coefficients(p1, xs) if not p1.is_zero() else {}
        if c.is_sos:
            support = {}
            for part in (c0, c1):
                for b, a in part.items():
                    support[b] = support.get(b, False) or a.depends_on_d or part is c1
            z = _basis_from_support(support, xs)
            cand = len(z)
            if simplify:
                z = simplify_basis(z, support)
            table = pair_table(z)
        else:
            z, cand, table = [], 0, {}
        for b in list(c0) + list(c1):
            if b not in table:
                table[b] = []
        order = sorted(table, key=grlex_key)
        table = {b: table[b] for b in order}
        cc = CompiledConstraint(
            constraint=c, is_sos=c.is_sos, z=z, candidate_size=cand, table=table,
            coeffs={b: c0.get(b, AffineCoeff()) for b in order},
            coeffs_t={b: c1[b] for b in c1}, scale=scale,
        )
        if t_var is None:
            for b, pairs in table.items():
                a = cc.coeffs[b]
                if not pairs and not a.depends_on_d and a.const != 0.0:
                    raise StructuralInfeasible(b, a.const)
        compiled.append(cc)
    return SosProgram(constraints, xs, tuple(d_vars), obj, compiled, t_var)


def _objective_vector(program):
    c = np.zeros(len(program.d_vars))
    if program.objective is not None:
        idx = {n: k for k, n in enumerate(program.d_vars)}
        for n, v in program.objective.terms:
            c[idx[n]] = v
    return c


def _d_row(coeff, idx, r):
    row = np.zeros(r)
    for n, v in coeff.terms:
        row[idx[n]] += v
    return row


@dataclass
class ImageLayout:
    r: int
    block_offsets: list   # column offset of each SOS block's vec(Q), aligned with program.sos_blocks
    d0: np.ndarray = None  # d = d0 - G @ x[:nq]
    G: np.ndarray = None
    nq: int = 0
    objective_offset: float = 0.0


def _eliminate_free(Aq, Ad, b, cobj, tol=1e-10):
    """Solve ``Aq q + Ad d = b`` for ``d`` where possible.

    Rows that involve ``d`` are reduced with a pivoted QR of ``Ad``: ``k`` of
    them determine ``d`` from ``q``, the rest become ``d``-free rows.
    Returns ``(A_red, b_red, d0, G, g)`` with ``d = d0 - G q`` and ``g`` the
    objective gradient along the directions of ``d`` left undetermined.
    """
    m, r = Ad.shape
    nq = Aq.shape[1]
    drows = np.flatnonzero(np.any(Ad != 0.0, axis=1))
    free = np.setdiff1d(np.arange(m), drows)
    if drows.size:
        Qf, R, perm = sla.qr(Ad[drows], pivoting=True)
    else:
        Qf, R, perm = np.zeros((0, 0)), np.zeros((0, r)), np.arange(r)
    diag = np.abs(np.diag(R))
    k = int(np.sum(diag > tol * max(1.0, diag.max(initial=0.0))))
    U1, U2 = Qf[:, :k], Qf[:, k:]
    R11, R12 = R[:k, :k], R[:k, k:]
    Aqd = Aq[drows].toarray()
    bd = b[drows]
    # d[perm] = [R11^-1 (U1'(bd - Aqd q) - R12 u); u] with u = 0
    d0 = np.zeros(r)
    G = np.zeros((r, nq))
    if k:
        d0[perm[:k]] = sla.solve_triangular(R11, U1.T @ bd)
        G[perm[:k]] = sla.solve_triangular(R11, U1.T @ Aqd)
    c1, c2 = cobj[perm[:k]], cobj[perm[k:]]
    g = c2 - (R12.T @ sla.solve_triangular(R11, c1, trans="T") if k else 0.0)
    A_red = sps.vstack([Aq[free], sps.csr_matrix(U2.T @ Aqd)]).tocsr()
    b_red = np.concatenate([b[free], U2.T @ bd])
    # rows reduced to 0 = 0 up to rounding carry no information
    zero = np.asarray(abs(A_red).sum(axis=1)).ravel() == 0.0
    tiny = np.abs(b_red) <= tol * (1.0 + np.linalg.norm(bd))
    keep = ~(zero & tiny)
    return A_red[keep], b_red[keep], d0, G, g


def image_form(program, t=None):
    """Primal conic problem over ``(vec(Q_1), ..., vec(Q_K))``.

    Coefficient matching reads ``A_q q + A_d d = b`` with ``d`` free. The
    decision variables are eliminated (``d = d0 - G q``) so only the Gram
    entries remain as cone variables; if the objective can decrease along
    a direction of ``d`` that no row constrains, a NONNEG(2) pair with zero
    columns carries it and the problem is reported unbounded.
    """
    r = len(program.d_vars)
    idx = {n: k for k, n in enumerate(program.d_vars)}
    cones = []
    offset = 0
    offsets = []
    for cc in program.sos_blocks:
        cones.append(PSD(len(cc.z)))
        offsets.append(offset)
        offset += len(cc.z) ** 2
    nq = offset
    rows, cols, vals, b = [], [], [], []
    drows, dcols, dvals = [], [], []
    block_of = {id(cc): off for cc, off in zip(program.sos_blocks, offsets)}
    row = 0
    for cc in program.compiled:
        coeffs = cc.coefficients(t)
        m = len(cc.z)
        off = block_of.get(id(cc))
        for beta, pairs in cc.table.items():
            a = coeffs.get(beta, AffineCoeff())
            if not pairs and not a:
                continue
            for i, j in pairs:
                rows.append(row); cols.append(off + i * m + j); vals.append(1.0)
                if i != j:
                    rows.append(row); cols.append(off + j * m + i); vals.append(1.0)
            # Q-part = coefficient  <=>  Q-part - sum(c_l d_l) = c0
            for name, v in a.terms:
                drows.append(row); dcols.append(idx[name]); dvals.append(-v)
            b.append(a.const)
            row += 1
    Aq = sps.csr_matrix((vals, (rows, cols)), shape=(row, nq))
    Ad = sps.csr_matrix((dvals, (drows, dcols)), shape=(row, r)).toarray()
    b = np.array(b, dtype=float)
    cobj = _objective_vector(program)
    if r:
        A, b_red, d0, G, g = _eliminate_free(Aq, Ad, b, cobj)
    else:
        A, b_red, d0, G, g = Aq, b, np.zeros(0), np.zeros((0, nq)), np.zeros(0)
    # objective c'd = c'd0 - (G'c)'q
    c = -(G.T @ cobj) if r else np.zeros(nq)
    gnorm = float(np.linalg.norm(g)) if np.size(g) else 0.0
    if gnorm > 1e-12 * max(1.0, float(np.linalg.norm(cobj))):
        cones.append(NONNEG(2))
        A = sps.hstack([A, sps.csr_matrix((A.shape[0], 2))]).tocsr()
        c = np.concatenate([c, [-gnorm, gnorm]])
    prob = ConicProblem(cones, A, b_red, c)
    prob.layout = ImageLayout(r, offsets, d0, G, nq, float(cobj @ d0) if r else 0.0)
    prob.form = "image"
    return prob


@dataclass
class KernelLayout:
    d_particular: np.ndarray
    Z: np.ndarray
    num_w: int
    num_lambda: list        # per SOS block
    Q0: list                # per SOS block, at d = d_particular
    D: list                 # per SOS block, list of matrices (one per w)
    N: list                 # per SOS block, list of matrices
    consistent: bool = True


def kernel_blocks(cc, idx, r, t=None):
    """``Q0`` (d-free part), per-decision-variable ``D_l`` and homogeneous ``N``s
    for one SOS constraint, with mass on canonical pairs."""
    m = len(cc.z)
    coeffs = cc.coefficients(t)
    Q0 = np.zeros((m, m))
    D = np.zeros((r, m, m))
    N = []
    for beta, pairs in cc.table.items():
        if not pairs:
            continue
        a = coeffs.get(beta, AffineCoeff())
        i, j = pairs[0]
        if i == j:
            Q0[i, i] += a.const
            for name, v in a.terms:
                D[idx[name], i, i] += v
        else:
            Q0[i, j] += 0.5 * a.const
            Q0[j, i] += 0.5 * a.const
            for name, v in a.terms:
                D[idx[name], i, j] += 0.5 * v
                D[idx[name], j, i] += 0.5 * v
        for k, l in pairs[1:]:
            Nk = np.zeros((m, m))
            Nk[k, l] += 0.5
            Nk[l, k] += 0.5
            Nk[i, j] -= 0.5
            Nk[j, i] -= 0.5
            N.append(Nk)
    return Q0, D, N


def _linear_d_system(program, idx, r, t=None):
    """Equalities ``E d = f`` on the decision variables: polynomial equality
    constraints plus SOS monomials no basis pair produces."""
    E, f = [], []
    for cc in program.compiled:
        coeffs = cc.coefficients(t)
        for beta, pairs in cc.table.items():
            if pairs:
                continue
            a = coeffs.get(beta, AffineCoeff())
            if not a:
                continue
            E.append(_d_row(a, idx, r))
            f.append(-a.const)
    E = np.array(E, dtype=float).reshape(len(E), r)
    return E, np.array(f, dtype=float)


def kernel_form(program, t=None):
    """Dual (LMI) conic problem over ``y = (w, lam)``.

    The slack of block ``k`` is ``Q_k = Q0_k(d_p) + sum(w D Z) + sum(lam N)``;
    maximizing ``b'y`` with ``b = -(Z' c_obj, 0)`` minimizes the objective.
    If the linear equalities on ``d`` are inconsistent the returned problem is
    the trivially infeasible LMI ``-1 >= 0``.
    """
    r = len(program.d_vars)
    idx = {n: k for k, n in enumerate(program.d_vars)}
    E, f = _linear_d_system(program, idx, r, t)
    consistent = True
    if E.shape[0]:
        dp, *_ = np.linalg.lstsq(E, f, rcond=None)
        if np.linalg.norm(E @ dp - f) > 1e-9 * (1.0 + np.linalg.norm(f)):
            consistent = False
        Z = sla.null_space(E) if r else np.zeros((0, 0))
    else:
        dp = np.zeros(r)
        Z = np.eye(r)
    if not consistent:
        prob = ConicProblem([NONNEG(1)], sps.csr_matrix((0, 1)), np.zeros(0), np.array([-1.0]))
        prob.layout = KernelLayout(dp, Z, 0, [], [], [], [], consistent=False)
        prob.form = "kernel"
        return prob
    nw = Z.shape[1]
    cones, cblocks, Q0s, Ds, Ns, nlam = [], [], [], [], [], []
    for cc in program.sos_blocks:
        Q0, D, N = kernel_blocks(cc, idx, r, t)
        Q0p = Q0 + np.tensordot(dp, D, axes=1) if r else Q0
        DZ = [np.tensordot(Z[:, k], D, axes=1) for k in range(nw)]
        cones.append(PSD(len(cc.z)))
        cblocks.append(Q0p.ravel())
        Q0s.append(Q0p); Ds.append(DZ); Ns.append(N); nlam.append(len(N))
    total_lam = sum(nlam)
    ny = nw + total_lam
    n = sum(k.size for k in cones)
    A = np.zeros((ny, n))
    off = 0
    lam_off = nw
    for bk, cone in enumerate(cones):
        size = cone.size
        for k in range(nw):
            A[k, off:off + size] = -Ds[bk][k].ravel()
        for q, Nq in enumerate(Ns[bk]):
            A[lam_off + q, off:off + size] = -Nq.ravel()
        lam_off += nlam[bk]
        off += size
    cobj = _objective_vector(program)
    b = np.zeros(ny)
    if nw:
        b[:nw] = -(Z.T @ cobj)
    c = np.concatenate(cblocks) if cblocks else np.zeros(0)
    prob = ConicProblem(cones, sps.csr_matrix(A), b, c)
    prob.layout = KernelLayout(dp, Z, nw, nlam, Q0s, Ds, Ns)
    prob.form = "kernel"
    return prob


@dataclass
class ExtractedSolution:
    d: dict                      # name -> value, in program.d_vars order
    certificates: list           # per constraint: GramDecomposition (empty for equalities)


def extract_solution(program, problem, solution):
    """Decision values and Gram certificates from a solved conic problem."""
    names = program.d_vars
    if problem.form == "image":
        lay = problem.layout
        dvec = lay.d0 - lay.G @ solution.x[:lay.nq] if lay.r else np.zeros(0)
        mats = []
        for cc, off in zip(program.sos_blocks, lay.block_offsets):
            m = len(cc.z)
            Q = solution.x[off:off + m * m].reshape(m, m)
            mats.append(Q)
    else:
        lay = problem.layout
        w = solution.y[:lay.num_w]
        dvec = lay.d_particular + (lay.Z @ w if lay.num_w else 0.0)
        mats = []
        lam_off = lay.num_w
        for bk, cc in enumerate(program.sos_blocks):
            Q = lay.Q0[bk].copy()
            for k in range(lay.num_w):
                Q = Q + w[k] * lay.D[bk][k]
            for q, Nq in enumerate(lay.N[bk]):
                Q = Q + solution.y[lam_off + q] * Nq
            lam_off += lay.num_lambda[bk]
            mats.append(Q)
    dvals = {n: float(v) for n, v in zip(names, np.atleast_1d(dvec))}
    certs = []
    it = iter(mats)
    for cc in program.compiled:
        if not cc.is_sos:
            certs.append(GramDecomposition([], np.zeros((0, 0))))
        elif not cc.z:
            certs.append(GramDecomposition([], np.zeros((0, 0))))
        else:
            Q = next(it)
            Q = 0.5 * (Q + Q.T) * cc.scale
            certs.append(GramDecomposition(cc.z, Q))
    return ExtractedSolution(dvals, certs)
