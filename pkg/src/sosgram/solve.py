"""User-facing entry points: issos, sosopt, gsosopt and pcontain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .constraints import Constraint, ConstraintList, sos_ge
from .forms import (
    ObjectiveDependsOnX,
    compile_program,
    extract_solution,
    image_form,
    kernel_form,
)
from .gram import GramDecomposition, NotPSD, OddDegree, StructuralInfeasible, sos_factors
from .poly import NotAffine, Polynomial, _names, sos_decision_var, substitute
from .sdp import SolverOptions, Status, solve_conic

__all__ = [
    "Options",
    "GOptions",
    "SolveResult",
    "CertificateRecord",
    "CheckReport",
    "issos",
    "issos_result",
    "sosopt",
    "gsosopt",
    "pcontain",
    "check_feasibility",
    "check_certificate",
]

_FORMS = ("image", "kernel")
_CHECKS = ("off", "fast", "full", "both")


@dataclass(frozen=True)
class Options:
    form: str = "image"
    simplify: bool = True
    scaling: bool = False
    checkfeas: str = "fast"
    feastol: float = 1e-6
    solver_tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        if self.form not in _FORMS:
            raise ValueError(f"form must be one of {_FORMS}, got {self.form!r}")
        if self.checkfeas not in _CHECKS:
            raise ValueError(f"checkfeas must be one of {_CHECKS}, got {self.checkfeas!r}")
        if not self.feastol > 0:
            raise ValueError("feastol must be positive")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def solver_options(self):
        return SolverOptions(tol=self.solver_tol, infeasibility_tol=self.solver_tol,
                             max_iter=self.max_iter)

    def updated(self, **kw):
        names = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in kw.items() if k in names and v is not None})


@dataclass(frozen=True)
class GOptions(Options):
    minobj: float = -1e3
    maxobj: float = 1e3
    absbistol: float = 1e-3
    relbistol: float = 1e-3
    display: bool = False

    def __post_init__(self):
        super().__post_init__()
        if not self.maxobj >= self.minobj:
            raise ValueError("maxobj must be >= minobj")
        if not (self.absbistol > 0 and self.relbistol > 0):
            raise ValueError("absbistol and relbistol must be positive")


@dataclass(frozen=True)
class CertificateRecord:
    """Constraint evaluated at ``dopt`` and its Gram certificate (``z``/``Q``
    are None for equality constraints)."""

    p: Polynomial
    z: list | None
    Q: np.ndarray | None

    @property
    def decomposition(self):
        return None if self.z is None else GramDecomposition(self.z, self.Q)


@dataclass
class CheckReport:
    mode: str
    passed: bool = True
    entries: list = field(default_factory=list)   # dicts, one per constraint checked
    failures: list = field(default_factory=list)  # human-readable strings


@dataclass
class SolveResult:
    feas: bool
    obj: float = math.inf
    dopt: dict | None = None
    sossol: list | None = None
    tbnds: tuple | None = None
    status: str = ""
    diagnostics: dict = field(default_factory=dict)
    check: CheckReport | None = None

    def __bool__(self):
        return self.feas


def _as_constraints(pconstr):
    if isinstance(pconstr, Constraint):
        return ConstraintList([pconstr])
    return ConstraintList(pconstr)


def _infeasible(status, diagnostics, mode="off"):
    return SolveResult(False, math.inf, None, None, None, status, diagnostics, CheckReport(mode, False))


def _near_optimal(sol, feastol):
    """A stalled or capped run whose best iterate is accurate to ``feastol``."""
    r = sol.residuals
    return (sol.status in (Status.STALLED, Status.ITERATION_LIMIT)
            and max(r.primal, r.dual, r.gap) <= feastol)


def _verdict_from_status(form, status, near_optimal=False):
    """(feasible, bounded) for the SOS program given the conic status."""
    if status is Status.OPTIMAL or near_optimal:
        return True, True
    if form == "image":
        if status is Status.PRIMAL_INFEASIBLE:
            return False, True
        if status is Status.DUAL_INFEASIBLE:
            return True, False
    else:
        if status is Status.DUAL_INFEASIBLE:
            return False, True
        if status is Status.PRIMAL_INFEASIBLE:
            return True, False
    return False, True


def _solve_program(program, opts, t=None):
    """Solve a compiled program; returns (SolveResult, conic problem, conic solution)."""
    problem = image_form(program, t) if opts.form == "image" else kernel_form(program, t)
    sol = solve_conic(problem, opts.solver_options())
    diagnostics = {
        "form": opts.form,
        "sizes": program.sizes(),
        "cones": [str(k) for k in problem.cones],
        "rows": problem.num_rows,
        "solver_status": sol.status.value,
        "iterations": sol.iterations,
        "residuals": {"primal": sol.residuals.primal, "dual": sol.residuals.dual,
                      "gap": sol.residuals.gap},
    }
    near = _near_optimal(sol, opts.feastol)
    diagnostics["near_optimal"] = near
    feasible, bounded = _verdict_from_status(opts.form, sol.status, near)
    if not feasible:
        if sol.status in (Status.PRIMAL_INFEASIBLE, Status.DUAL_INFEASIBLE):
            diagnostics["infeasibility_certificate"] = (sol.y if opts.form == "image" else sol.x)
        return _infeasible(sol.status.value, diagnostics), problem, sol
    if not bounded:
        diagnostics["unbounded"] = True
        res = SolveResult(False, -math.inf, None, None, None, sol.status.value, diagnostics,
                          CheckReport(opts.checkfeas, False, failures=["objective is unbounded below"]))
        return res, problem, sol
    ext = extract_solution(program, problem, sol)
    dopt = {n: ext.d[n] for n in program.d_vars}
    if t is not None and program.t_var is not None:
        dopt_full = dict(dopt)
        dopt_full[program.t_var] = float(t)
    else:
        dopt_full = dopt
    sossol = []
    for cc, cert in zip(program.compiled, ext.certificates):
        p = substitute(cc.constraint.one_side, dopt_full) if dopt_full else cc.constraint.one_side
        if cc.is_sos:
            sossol.append(CertificateRecord(p, list(cert.z), cert.Q))
        else:
            sossol.append(CertificateRecord(p, None, None))
    obj = 0.0
    if program.objective is not None:
        obj = float(program.objective.value(dopt))
    res = SolveResult(True, obj, dopt, sossol, None, sol.status.value, diagnostics)
    res.check = check_feasibility(program, res, opts.checkfeas, opts.feastol, solution=sol)
    res.feas = res.check.passed
    if not res.feas:
        res.obj, res.dopt, res.sossol = math.inf, None, None
    return res, problem, sol


def check_feasibility(program, result, mode="fast", feastol=1e-6, solution=None):
    """Verify a solve result.

    ``fast`` trusts the solver: it passes on an optimal status, or on a
    stalled/capped run whose primal, dual and gap residuals are all within
    ``feastol``. ``full`` rechecks every certificate:
    min eigenvalue of ``Q`` at least ``-feastol*(1 + ||Q||_2)``, coefficient
    mismatch of ``p - z'Qz`` at most ``feastol*max(1, ||p||_inf)``, and
    equality residuals at most ``feastol``.
    """
    if mode not in _CHECKS:
        raise ValueError(f"checkfeas must be one of {_CHECKS}, got {mode!r}")
    report = CheckReport(mode)
    if mode == "off":
        report.passed = result.feas if result is not None else False
        return report
    if mode in ("fast", "both"):
        if solution is not None:
            st = solution.status
            ok = st is Status.OPTIMAL or _near_optimal(solution, feastol)
        else:
            st = Status(result.status) if result.status else None
            ok = st is Status.OPTIMAL or bool(result.diagnostics.get("near_optimal"))
        report.entries.append({"check": "solver", "status": st.value if st else None, "passed": ok})
        if not ok:
            report.passed = False
            report.failures.append(f"solver status {st.value if st else 'unknown'}")
    if mode in ("full", "both"):
        if not result.sossol:
            report.passed = False
            report.failures.append("no certificates to check")
            return report
        for k, rec in enumerate(result.sossol, start=1):
            entry = check_certificate(rec, feastol)
            entry["constraint"] = k
            report.entries.append(entry)
            if not entry["passed"]:
                report.passed = False
                report.failures.append(f"constraint {k}: {entry['reason']}")
    return report


def check_certificate(rec, feastol=1e-6):
    """Eigenvalue and coefficient-mismatch check of one :class:`CertificateRecord`."""
    pcoef = np.abs(rec.p.coefficient_vector())
    pmax = float(pcoef.max()) if pcoef.size else 0.0
    if rec.z is None:
        resid = pmax
        ok = resid <= feastol
        return {"check": "equality", "residual": resid, "passed": ok,
                "reason": "" if ok else f"equality residual {resid:.3g} exceeds {feastol:g}"}
    dec = GramDecomposition(rec.z, rec.Q)
    diff = rec.p - dec.polynomial()
    dcoef = np.abs(diff.coefficient_vector())
    mismatch = float(dcoef.max()) if dcoef.size else 0.0
    if dec.empty:
        min_eig, qnorm = 0.0, 0.0
    else:
        eig = np.linalg.eigvalsh(dec.Q)
        min_eig = float(eig[0])
        qnorm = float(np.max(np.abs(eig)))
    eig_ok = min_eig >= -feastol * (1.0 + qnorm)
    coef_ok = mismatch <= feastol * max(1.0, pmax)
    reasons = []
    if not eig_ok:
        reasons.append(f"min eigenvalue {min_eig:.3g} below {-feastol * (1.0 + qnorm):.3g}")
    if not coef_ok:
        reasons.append(f"coefficient mismatch {mismatch:.3g} exceeds {feastol * max(1.0, pmax):.3g}")
    return {"check": "gram", "basis_size": len(rec.z), "min_eig": min_eig,
            "residual": mismatch, "passed": eig_ok and coef_ok, "reason": "; ".join(reasons)}


def _compile_or_fail(pconstr, x, obj, opts, d_vars=None, t_var=None):
    try:
        return compile_program(pconstr, x, obj, d_vars, simplify=opts.simplify,
                               scaling=opts.scaling, t_var=t_var), None
    except (OddDegree, StructuralInfeasible) as exc:
        return None, _infeasible("structurally_infeasible", {"reason": str(exc)}, opts.checkfeas)


def sosopt(pconstr, x, obj=None, opts=None, d_vars=None):
    """Feasibility (no ``obj``) or minimization of an affine objective over SOS constraints.

    Raises :class:`NotAffine` if a constraint is not affine in the decision
    variables and :class:`ObjectiveDependsOnX` if the objective mentions ``x``.
    """
    opts = opts or Options()
    program, failed = _compile_or_fail(_as_constraints(pconstr), x, obj, opts, d_vars)
    if failed is not None:
        return failed
    res, _, _ = _solve_program(program, opts)
    return res


def issos_result(p, opts=None):
    """:func:`issos` returning the full :class:`SolveResult` (with diagnostics)."""
    opts = opts or Options()
    p = Polynomial.coerce(p)
    return sosopt([sos_ge(p)], list(p.variables), None, opts, d_vars=())


def issos(p, opts=None):
    """Return ``(feas, z, Q, f)``; ``p`` must not contain decision variables."""
    opts = opts or Options()
    res = issos_result(p, opts)
    if not res.feas:
        return False, None, None, None
    rec = res.sossol[0]
    f = sos_factors(GramDecomposition(rec.z, rec.Q), tol=opts.feastol)
    return True, rec.z, rec.Q, f


def gsosopt(pconstr, x, t, opts=None, d_vars=None):
    """Minimize ``t`` subject to constraints affine in ``d`` for fixed ``t``.

    Bisection on ``t``: probe ``maxobj`` (infeasible gives ``feas=False``),
    then ``minobj`` (feasible returns it), then halve the bracket until
    ``t_ub - t_lb <= max(absbistol, relbistol*|t_lb|)``. The returned ``dopt``
    and certificates come from the last feasible probe, with ``t = t_ub``.
    """
    opts = opts or GOptions()
    if not isinstance(opts, GOptions):
        opts = GOptions(**{f.name: getattr(opts, f.name) for f in fields(Options)})
    tname = _names([t])[0] if not isinstance(t, str) else t
    program, failed = _compile_or_fail(_as_constraints(pconstr), x, None, opts, d_vars, t_var=tname)
    if failed is not None:
        return failed
    log = []

    def probe(tv):
        res, _, _ = _solve_program(program, opts, t=tv)
        log.append((tv, res.feas))
        if opts.display:
            print(f"t = {tv:.6g}: {'feasible' if res.feas else 'infeasible'}")
        return res

    best = probe(opts.maxobj)
    if not best.feas:
        best.tbnds = None
        best.diagnostics["bisection"] = log
        return best
    t_ub = opts.maxobj
    if opts.maxobj == opts.minobj:
        return _gsos_result(best, opts.minobj, opts.minobj, log, tname)
    low = probe(opts.minobj)
    if low.feas:
        return _gsos_result(low, opts.minobj, opts.minobj, log, tname)
    t_lb = opts.minobj
    while t_ub - t_lb > max(opts.absbistol, opts.relbistol * abs(t_lb)):
        mid = 0.5 * (t_lb + t_ub)
        res = probe(mid)
        if res.feas:
            t_ub, best = mid, res
        else:
            t_lb = mid
        if opts.display:
            print(f"    bounds [{t_lb:.6g}, {t_ub:.6g}]")
    return _gsos_result(best, t_lb, t_ub, log, tname)


def _gsos_result(res, t_lb, t_ub, log, tname):
    res.tbnds = (float(t_lb), float(t_ub))
    res.obj = float(t_ub)
    res.diagnostics["bisection"] = log
    res.diagnostics["t"] = tname
    return res


def pcontain(p, g, z_s, opts=None, x=None, prefix="s"):
    """Largest ``beta`` with ``{g <= beta}`` inside ``{p <= 0}``.

    Uses a multiplier ``s = z_s' D z_s``, ``s`` SOS, and the certificate
    ``-(p + (beta - g) s)`` SOS, bisecting on ``t = -beta``. Returns
    ``(beta_bounds, s_opt, result)``; ``beta_bounds`` is ``(lower, upper)``
    or None when infeasible.
    """
    p = Polynomial.coerce(p)
    g = Polynomial.coerce(g)
    if x is None:
        x = sorted(set(p.variables) | set(g.variables))
    s, _ = sos_decision_var(prefix, z_s)
    tname = "t_" + prefix
    while tname in set(p.variables) | set(g.variables):
        tname += "_"
    t = Polynomial.var(tname)
    constraints = [sos_ge(s, 0), sos_ge(t * s + g * s - p, 0)]
    res = gsosopt(constraints, x, tname, opts)
    if not res.feas:
        return None, None, res
    t_lb, t_ub = res.tbnds
    s_opt = substitute(s, res.dopt)
    return (-t_ub, -t_lb), s_opt, res
