"""Command-line front end.

``sosgram solve FILE``       solve a problem file
``sosgram demo NAME``        run a bundled demo and its oracle checks
``sosgram export-sdpa FILE`` write the conic program in SDPA sparse format

Exit codes: 0 feasible (or all demo checks passed), 1 infeasible (or a
demo check failed), 2 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .forms import ObjectiveDependsOnX, compile_program, image_form, kernel_form
from .gram import GramDecomposition, OddDegree, StructuralInfeasible, sos_factors
from .parse import PolySyntaxError
from .poly import NotAffine, Polynomial
from .problemfile import ProblemFileError, build_problem, load_problem, loads_problem
from .sdpa import export_sdpa
from .solve import GOptions, check_certificate, gsosopt, pcontain, sosopt

__all__ = [
    "main",
    "ReportDocument",
    "resolve_options",
    "run_problem",
    "cmd_solve",
    "cmd_demo",
    "cmd_export_sdpa",
    "DEMOS",
    "demo_path",
    "load_demo",
]

EXIT_FEASIBLE, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2

INPUT_ERRORS = (ProblemFileError, PolySyntaxError, NotAffine, ObjectiveDependsOnX, ValueError)


class InputError(ValueError):
    pass


# -- report -----------------------------------------------------------------

def _num(v):
    """JSON-safe float: infinities become strings."""
    if v is None:
        return None
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return repr(float(v))


@dataclass
class ReportDocument:
    name: str
    kind: str                          # issos, sosopt, gsos or pcontain
    feasible: bool
    status: str
    objective: float | None = None
    tbnds: tuple | None = None
    beta: tuple | None = None          # pcontain bounds
    dopt: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)
    checks: list = field(default_factory=list)   # demo oracle checks: {"name", "passed", "detail"}
    seconds: float = 0.0
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "feasible": self.feasible,
            "status": self.status,
            "objective": _num(self.objective),
            "tbnds": None if self.tbnds is None else [_num(v) for v in self.tbnds],
            "beta": None if self.beta is None else [_num(v) for v in self.beta],
            "dopt": {k: _num(v) for k, v in self.dopt.items()},
            "certificates": [
                {k: (_num(v) if isinstance(v, float) else v) for k, v in c.items()}
                for c in self.certificates
            ],
            "checks": [dict(c) for c in self.checks],
            "seconds": _num(self.seconds),
            "options": dict(self.options),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self):
        d = self.to_dict()
        lines = [
            f"problem    {d['name']} ({d['kind']})",
            f"feasible   {'yes' if d['feasible'] else 'no'}",
            f"status     {d['status']}",
        ]
        if d["objective"] is not None:
            lines.append(f"objective  {_fmt(d['objective'])}")
        if d["tbnds"] is not None:
            lines.append(f"tbnds      [{_fmt(d['tbnds'][0])}, {_fmt(d['tbnds'][1])}]")
        if d["beta"] is not None:
            lines.append(f"beta       [{_fmt(d['beta'][0])}, {_fmt(d['beta'][1])}]")
        if d["dopt"]:
            lines.append("dopt")
            width = max(len(k) for k in d["dopt"])
            for k, v in d["dopt"].items():
                lines.append(f"  {k:<{width}}  {_fmt(v)}")
        if d["certificates"]:
            lines.append("certificates")
            for c in d["certificates"]:
                label = f" ({c['label']})" if c.get("label") else ""
                if c["kind"] == "equality":
                    lines.append(f"  [{c['constraint']}]{label} equality residual {_fmt(c['residual'])}")
                else:
                    lines.append(f"  [{c['constraint']}]{label} basis {c['basis_size']}"
                                 f" min_eig {_fmt(c['min_eig'])} residual {_fmt(c['residual'])}")
        for c in d["checks"]:
            lines.append(f"check {'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['detail']}")
        lines.append(f"seconds    {_fmt(d['seconds'])}")
        return "\n".join(lines) + "\n"


# -- running problems -------------------------------------------------------

def resolve_options(file_options=None, overrides=None):
    """Defaults, then the file's ``options``, then command-line overrides."""
    merged = {}
    merged.update(file_options or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    names = {f.name for f in fields(GOptions)}
    unknown = set(merged) - names
    if unknown:
        raise InputError(f"unknown options: {sorted(unknown)}")
    return GOptions(**merged)


def _certificate_rows(problem, result, feastol):
    rows = []
    if not result.sossol:
        return rows
    for k, (rec, con) in enumerate(zip(result.sossol, problem.constraints), start=1):
        entry = check_certificate(rec, feastol)
        row = {"constraint": k, "label": con.label, "kind": entry["check"],
               "residual": entry["residual"], "passed": entry["passed"]}
        if entry["check"] == "gram":
            row["basis_size"] = entry["basis_size"]
            row["min_eig"] = entry["min_eig"]
        rows.append(row)
    return rows


def run_problem(problem, opts, issos=False):
    """Solve an expanded problem; returns ``(SolveResult, extras)`` where
    ``extras`` holds ``beta`` and ``s`` for containment problems."""
    kind = "issos" if issos else problem.kind
    extras = {"kind": kind}
    if kind == "issos":
        if problem.t is not None or problem.pcontain is not None or problem.objective is not None:
            raise InputError("an SOS test takes constraints only (no objective, gsos or pcontain)")
        xs = set(problem.x)
        for c in problem.constraints:
            extra = set(c.one_side.variables) - xs
            if extra:
                raise InputError(f"an SOS test cannot contain decision variables: {sorted(extra)}")
        return sosopt(problem.constraints, problem.x, None, opts, d_vars=()), extras
    if kind == "pcontain":
        pc = problem.pcontain
        beta, s, res = pcontain(pc["p"], pc["g"], pc["z"], opts, x=problem.x)
        extras.update(beta=beta, s=s)
        return res, extras
    if kind == "gsos":
        return gsosopt(problem.constraints, problem.x, problem.t, opts, problem.d_vars), extras
    return sosopt(problem.constraints, problem.x, problem.objective, opts, problem.d_vars), extras


def solve_to_report(problem, opts, issos=False, name=None):
    start = time.perf_counter()
    res, extras = run_problem(problem, opts, issos)
    elapsed = time.perf_counter() - start
    kind = extras["kind"]
    report = ReportDocument(
        name=name or problem.file.name or Path(problem.file.source).stem,
        kind=kind,
        feasible=bool(res.feas),
        status=res.status,
        objective=res.obj if kind == "gsos" or (kind == "sosopt" and problem.objective is not None) else None,
        tbnds=res.tbnds,
        beta=extras.get("beta"),
        dopt=dict(res.dopt or {}),
        seconds=elapsed,
        options={f.name: getattr(opts, f.name) for f in fields(opts)},
    )
    if kind != "pcontain":
        report.certificates = _certificate_rows(problem, res, opts.feastol)
    return report, res, extras


def _flag_overrides(args):
    out = {
        "form": args.form,
        "checkfeas": args.checkfeas,
        "feastol": args.feastol,
        "minobj": args.minobj,
        "maxobj": args.maxobj,
        "absbistol": args.absbistol,
        "relbistol": args.relbistol,
    }
    if args.no_simplify:
        out["simplify"] = False
    if args.scaling:
        out["scaling"] = True
    if args.display:
        out["display"] = True
    return out


def _emit(report, out=None, stream=None):
    stream = stream or sys.stdout
    stream.write(report.to_text())
    if out:
        Path(out).write_text(report.to_json() + "\n")


def _input_error(exc, stream=None):
    (stream or sys.stderr).write(f"error: {exc}\n")
    return EXIT_INPUT


def cmd_solve(path, overrides=None, issos=False, out=None, stream=None, err=None):
    """Solve a problem file; returns ``(exit_code, report or None)``."""
    try:
        pf = load_problem(path)
        problem = build_problem(pf)
        opts = resolve_options(pf.options, overrides)
        report, _, _ = solve_to_report(problem, opts, issos)
    except INPUT_ERRORS as exc:
        return _input_error(exc, err), None
    _emit(report, out, stream)
    return (EXIT_FEASIBLE if report.feasible else EXIT_INFEASIBLE), report


def cmd_export_sdpa(path, out=None, overrides=None, stream=None, err=None):
    """Write the SDPA text of a non-bisection problem file."""
    try:
        pf = load_problem(path)
        problem = build_problem(pf)
        if problem.t is not None or problem.pcontain is not None:
            raise InputError("bisection problems (gsos, pcontain) do not have a single SDP to export")
        opts = resolve_options(pf.options, overrides)
        d_vars = () if pf.issos else problem.d_vars
        objective = None if pf.issos else problem.objective
        program = compile_program(problem.constraints, problem.x, objective, d_vars,
                                  simplify=opts.simplify, scaling=opts.scaling)
        conic = image_form(program) if opts.form == "image" else kernel_form(program)
    except (StructuralInfeasible, OddDegree) as exc:
        return _input_error(f"no SDP to export: {exc}", err)
    except INPUT_ERRORS as exc:
        return _input_error(exc, err)
    text = export_sdpa(conic)
    if out:
        Path(out).write_text(text)
    else:
        (stream or sys.stdout).write(text)
    return EXIT_FEASIBLE


# -- demos ------------------------------------------------------------------

def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def _check_sostest(problem, res, extras):
    if not res.feas:
        return [_check("SOS decomposition found", False, "issos reported infeasible")]
    rec = res.sossol[0]
    f = sos_factors(GramDecomposition(rec.z, rec.Q))
    total = sum((fi * fi for fi in f), Polynomial())
    err = float(np.max(np.abs((total - rec.p).coefficient_vector()), initial=0.0))
    return [_check("sum of f_i^2 reproduces p", err <= 1e-6, f"max coefficient error {err:.3g}")]


def _check_lyapunov(problem, res, extras):
    out = [_check("Lyapunov certificate found", res.feas, f"status {res.status}")]
    if res.feas:
        # V - |x|^2 SOS forces c_i >= 1 and c = (1, 1, 1) is feasible, so the minimum is 3
        out.append(_check("objective c1+c2+c3 equals 3", abs(res.obj - 3.0) <= 1e-4, f"objective {res.obj!r}"))
        ok = all(res.dopt[c] >= 1.0 - 1e-6 for c in ("c1", "c2", "c3"))
        out.append(_check("V - |x|^2 nonnegative (c_i >= 1)", ok, str(res.dopt)))
    return out


def _check_copositivity(problem, res, extras):
    M = np.array([[2.0, -1.0, 3.0], [-1.0, 2.0, -1.0], [3.0, -1.0, 2.0]])
    rng = np.random.default_rng(0)
    Y = rng.dirichlet(np.ones(3), size=20000)
    vals = np.einsum("ki,ij,kj->k", Y, M, Y)
    return [
        _check("y'My with y = x^2 is SOS", res.feas, f"status {res.status}"),
        _check("sampled simplex minimum of y'My is nonnegative", vals.min() >= 0.0,
               f"min over 20000 simplex points {vals.min():.6g}"),
    ]


def _goldstein_price(x1, x2):
    a = 1 + (x1 + x2 + 1) ** 2 * (19 - 14 * x1 + 3 * x1 ** 2 - 14 * x2 + 6 * x1 * x2 + 3 * x2 ** 2)
    b = 30 + (2 * x1 - 3 * x2) ** 2 * (18 - 32 * x1 + 12 * x1 ** 2 + 48 * x2 - 36 * x1 * x2 + 27 * x2 ** 2)
    return a * b


def _check_goldstein_price(problem, res, extras):
    if not res.feas:
        return [_check("lower bound found", False, f"status {res.status}")]
    bound = -res.obj
    g = np.linspace(-2.0, 2.0, 401)
    X1, X2 = np.meshgrid(g, g)
    F = _goldstein_price(X1, X2)
    k = np.unravel_index(np.argmin(F), F.shape)
    return [
        _check("bound within 3 +- 1e-3", abs(bound - 3.0) <= 1e-3, f"bound {bound!r}"),
        _check("bound below the grid minimum", bound <= F[k] + 1e-6,
               f"grid minimum {F[k]:.6g} at ({X1[k]:.3g}, {X2[k]:.3g})"),
    ]


def _check_objective(value):
    def check(problem, res, extras):
        ok = res.feas and abs(res.obj - value) <= 1e-6
        return [_check(f"objective equals {value:g}", ok, f"objective {res.obj!r}")]
    return check


def _check_vdp(problem, res, extras):
    if not res.feas:
        return [_check("level set certified", False, f"status {res.status}")]
    gam = -res.tbnds[1]
    rng = np.random.default_rng(1)
    # V = 1.5 x1^2 - x1 x2 + x2^2 = x'Px; sample the ellipse {V <= gam} uniformly
    P = np.array([[1.5, -0.5], [-0.5, 1.0]])
    L = np.linalg.cholesky(np.linalg.inv(P))
    ang = rng.uniform(0, 2 * np.pi, 10000)
    rad = np.sqrt(rng.uniform(0, 1, 10000)) * math.sqrt(gam)
    U = np.stack([rad * np.cos(ang), rad * np.sin(ang)])
    X = L @ U
    x1, x2 = X
    vdot = -x1 ** 2 - x2 ** 2 - x1 ** 3 * x2 + 2 * x1 ** 2 * x2 ** 2
    V = 1.5 * x1 ** 2 - x1 * x2 + x2 ** 2
    return [
        _check("certified level is positive", gam > 0, f"gamma {gam!r}"),
        _check("dV/dt < 0 on 10000 samples of {V <= gamma}", bool(np.all(vdot < 0) and np.all(V <= gam * (1 + 1e-12))),
               f"max dV/dt {vdot.max():.3g}"),
    ]


def _check_pcontain(problem, res, extras):
    beta = extras.get("beta")
    if beta is None:
        return [_check("containment certified", False, f"status {res.status}")]
    lo, hi = beta
    p = problem.pcontain["p"]
    th = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    r = math.sqrt(lo)
    pts = {"x1": r * np.cos(th), "x2": r * np.sin(th)}
    vals = p.evaluate(pts)
    return [
        _check("beta interval width within 1e-3", hi - lo <= max(1e-3, 1e-3 * abs(hi)), f"[{lo!r}, {hi!r}]"),
        _check("p <= 0 on the certified circle", bool(np.all(vals <= 0)), f"max p {vals.max():.3g}"),
    ]


DEMOS = {
    "sostest": _check_sostest,
    "lyapunov": _check_lyapunov,
    "copositivity": _check_copositivity,
    "goldstein-price": _check_goldstein_price,
    "lp": _check_objective(2.0),
    "eq": _check_objective(-2.0),
    "vdp-roa": _check_vdp,
    "pcontain-circle": _check_pcontain,
}


def demo_path(name):
    if name not in DEMOS:
        raise InputError(f"unknown demo {name!r}; available: {', '.join(DEMOS)}")
    return resources.files("sosgram") / "demos" / f"{name}.yaml"


def load_demo(name):
    """The expanded :class:`~sosgram.problemfile.Problem` of a bundled demo."""
    path = demo_path(name)
    return build_problem(loads_problem(path.read_text(), f"{name}.yaml"))


def run_demo(name, overrides=None):
    """Solve a demo; returns ``(report, result, extras)`` with oracle checks attached."""
    problem = load_demo(name)
    opts = resolve_options(problem.file.options, overrides)
    report, res, extras = solve_to_report(problem, opts, name=name)
    report.checks = DEMOS[name](problem, res, extras)
    return report, res, extras


def cmd_demo(name, overrides=None, out=None, stream=None, err=None):
    try:
        report, _, _ = run_demo(name, overrides)
    except INPUT_ERRORS as exc:
        return _input_error(exc, err), None
    _emit(report, out, stream)
    ok = all(c["passed"] for c in report.checks)
    return (EXIT_FEASIBLE if ok else EXIT_INFEASIBLE), report


# -- argument parsing -------------------------------------------------------

def _add_option_flags(p):
    p.add_argument("--form", choices=["image", "kernel"])
    p.add_argument("--no-simplify", action="store_true", help="keep the full candidate basis")
    p.add_argument("--scaling", action="store_true", help="normalize each constraint")
    p.add_argument("--checkfeas", choices=["off", "fast", "full", "both"])
    p.add_argument("--feastol", type=float)
    p.add_argument("--minobj", type=float)
    p.add_argument("--maxobj", type=float)
    p.add_argument("--absbistol", type=float)
    p.add_argument("--relbistol", type=float)
    p.add_argument("--display", action="store_true", help="print bisection progress")


def build_parser():
    parser = argparse.ArgumentParser(prog="sosgram", description="Sum-of-squares programs via Gram matrices.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("path")
    _add_option_flags(p)
    p.add_argument("--issos", action="store_true", help="test the constraints for SOS only")
    p.add_argument("--out", help="also write the report as JSON to this file")
    p = sub.add_parser("demo", help="run a bundled demo")
    p.add_argument("name", choices=list(DEMOS))
    _add_option_flags(p)
    p.add_argument("--out", help="also write the report as JSON to this file")
    p = sub.add_parser("export-sdpa", help="write the conic program in SDPA sparse format")
    p.add_argument("path")
    _add_option_flags(p)
    p.add_argument("--out", help="output file (default: standard output)")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_FEASIBLE
    overrides = _flag_overrides(args)
    if args.command == "solve":
        code, _ = cmd_solve(args.path, overrides, issos=args.issos, out=args.out)
    elif args.command == "demo":
        code, _ = cmd_demo(args.name, overrides, out=args.out)
    else:
        code = cmd_export_sdpa(args.path, args.out, overrides)
    return code
