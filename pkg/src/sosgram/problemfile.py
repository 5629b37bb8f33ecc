"""YAML problem files.

A problem file lists the polynomial variables, optional definitions and SOS
multipliers, the constraints as ``lhs rel rhs`` text, and optionally an
objective, a bisection variable (``gsos``) or a set-containment problem
(``pcontain``)::

    vars: [x1, x2]
    defs:
      V: "1.5*x1^2 - x1*x2 + x2^2"
    multipliers:
      s: {degrees: [1]}
    constraints:
      - {lhs: s, rel: ">=", rhs: "0"}
      - {lhs: "t*s + V*s - 1", rel: ">=", rhs: "0", label: level set}
    gsos: {t: t}
    options: {form: kernel}

Definitions and multipliers are expanded in order; a multiplier ``s`` with
basis ``z`` stands for ``z' D z`` with decision variables ``s_i_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .constraints import Constraint, ConstraintList, RelOp
from .parse import PolySyntaxError, parse
from .poly import Polynomial, monomials, sos_decision_var, substitute

__all__ = [
    "ProblemFileError",
    "ProblemFile",
    "Problem",
    "load_problem",
    "loads_problem",
    "render_problem",
    "OPTION_FIELDS",
]

# option name -> (type, allowed values or None)
OPTION_FIELDS = {
    "form": (str, ("image", "kernel")),
    "simplify": (bool, None),
    "scaling": (bool, None),
    "checkfeas": (str, ("off", "fast", "full", "both")),
    "feastol": (float, None),
    "solver_tol": (float, None),
    "max_iter": (int, None),
    "minobj": (float, None),
    "maxobj": (float, None),
    "absbistol": (float, None),
    "relbistol": (float, None),
    "display": (bool, None),
}

_TOP_KEYS = ("name", "description", "vars", "decvars", "defs", "multipliers", "constraints",
             "objective", "gsos", "pcontain", "issos", "options")


class ProblemFileError(ValueError):
    def __init__(self, message, source="<string>", line=None, column=None):
        self.source = source
        self.line = line
        self.column = column
        where = source
        if line is not None:
            where += f":{line}:{column}"
        super().__init__(f"{where}: {message}")


# -- YAML with source positions ---------------------------------------------

class _Str(str):
    mark = None
    quoted = False


class _Map(dict):
    mark = None
    key_marks = None


class _Seq(list):
    mark = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_str(loader, node):
    out = _Str(loader.construct_scalar(node))
    out.mark = node.start_mark
    out.quoted = node.style in ("'", '"')
    return out


def _construct_map(loader, node):
    loader.flatten_mapping(node)
    out = _Map()
    out.mark = node.start_mark
    out.key_marks = {}
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        try:
            hash(key)
        except TypeError:
            raise ProblemFileError("unhashable key", line=knode.start_mark.line + 1,
                                   column=knode.start_mark.column + 1)
        if key in out:
            raise ProblemFileError(f"duplicate key {key!r}", line=knode.start_mark.line + 1,
                                   column=knode.start_mark.column + 1)
        out[key] = loader.construct_object(vnode, deep=True)
        out.key_marks[key] = knode.start_mark
    return out


def _construct_seq(loader, node):
    out = _Seq(loader.construct_object(v, deep=True) for v in node.value)
    out.mark = node.start_mark
    return out


_Loader.add_constructor("tag:yaml.org,2002:str", _construct_str)
_Loader.add_constructor("tag:yaml.org,2002:map", _construct_map)
_Loader.add_constructor("tag:yaml.org,2002:seq", _construct_seq)


@dataclass
class ProblemFile:
    """The document as written (expressions still text)."""

    vars: list
    constraints: list                    # dicts with lhs, rel, rhs, label
    decvars: list | None = None
    defs: dict = field(default_factory=dict)
    multipliers: dict = field(default_factory=dict)
    objective: str | None = None
    gsos: dict | None = None
    pcontain: dict | None = None
    issos: bool = False
    options: dict = field(default_factory=dict)
    name: str | None = None
    description: str | None = None
    source: str = "<string>"


@dataclass
class Problem:
    """A problem file with every expression parsed and expanded."""

    file: ProblemFile
    x: list
    constraints: ConstraintList
    d_vars: tuple | None
    objective: Polynomial | None
    t: str | None
    pcontain: dict | None               # {"p", "g", "z"} as polynomials/monomials
    multiplier_matrices: dict

    @property
    def kind(self):
        if self.pcontain is not None:
            return "pcontain"
        if self.t is not None:
            return "gsos"
        if self.file.issos:
            return "issos"
        return "sosopt"


def _where(obj, source):
    mark = getattr(obj, "mark", None)
    if mark is None:
        return {"source": source}
    return {"source": source, "line": mark.line + 1, "column": mark.column + 1}


def _fail(message, obj, source):
    raise ProblemFileError(message, **_where(obj, source))


def _expect_str(value, what, source, parent=None):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return _Str(repr(value))
    if not isinstance(value, str):
        _fail(f"{what} must be a string", value if hasattr(value, "mark") else parent, source)
    return value


def _expect_names(value, what, source):
    if not isinstance(value, list):
        _fail(f"{what} must be a list of names", value, source)
    out = []
    for v in value:
        if not isinstance(v, str):
            _fail(f"{what} entries must be names", value, source)
        out.append(str(v))
    return out


def loads_problem(text, source="<string>"):
    """Parse problem-file text into a :class:`ProblemFile`."""
    try:
        doc = yaml.load(text, Loader=_Loader)
    except ProblemFileError as exc:
        raise ProblemFileError(str(exc).split(": ", 1)[-1], source, exc.line, exc.column) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ProblemFileError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source, line, col) from None
    if not isinstance(doc, dict):
        raise ProblemFileError("a problem file must be a mapping", source, 1, 1)
    for key in doc:
        if key not in _TOP_KEYS:
            m = doc.key_marks.get(key)
            raise ProblemFileError(f"unknown field {key!r}", source,
                                   m.line + 1 if m else None, m.column + 1 if m else None)
    if "vars" not in doc:
        raise ProblemFileError("missing field 'vars'", source, 1, 1)
    if "constraints" not in doc and "pcontain" not in doc:
        raise ProblemFileError("missing field 'constraints'", source, 1, 1)
    pf = ProblemFile(vars=_expect_names(doc["vars"], "vars", source), constraints=[], source=source)
    if doc.get("decvars") is not None:
        pf.decvars = _expect_names(doc["decvars"], "decvars", source)
    for key in ("name", "description"):
        if doc.get(key) is not None:
            setattr(pf, key, str(doc[key]))
    defs = doc.get("defs") or {}
    if not isinstance(defs, dict):
        _fail("defs must be a mapping of name to expression", defs, source)
    pf.defs = {str(k): _expect_str(v, f"definition {k}", source, defs) for k, v in defs.items()}
    mults = doc.get("multipliers") or {}
    if not isinstance(mults, dict):
        _fail("multipliers must be a mapping", mults, source)
    for k, spec in mults.items():
        if not isinstance(spec, dict) or "degrees" not in spec:
            _fail(f"multiplier {k} needs a 'degrees' list", spec if hasattr(spec, "mark") else mults, source)
        degs = spec["degrees"]
        if not isinstance(degs, list) or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in degs):
            _fail(f"multiplier {k}: degrees must be nonnegative integers", degs if hasattr(degs, "mark") else spec, source)
        pf.multipliers[str(k)] = {"degrees": [int(d) for d in degs]}
    cons = doc.get("constraints") or []
    if not isinstance(cons, list):
        _fail("constraints must be a list", cons, source)
    for entry in cons:
        if not isinstance(entry, dict):
            _fail("each constraint must be a mapping with lhs, rel, rhs", entry if hasattr(entry, "mark") else cons, source)
        for key in entry:
            if key not in ("lhs", "rel", "rhs", "label"):
                m = entry.key_marks.get(key)
                raise ProblemFileError(f"unknown constraint field {key!r}", source, m.line + 1, m.column + 1)
        for key in ("lhs", "rel", "rhs"):
            if key not in entry:
                _fail(f"constraint is missing {key!r}", entry, source)
        rel = entry["rel"]
        if not isinstance(rel, str) or rel not in (">=", "<=", "=="):
            _fail(f"invalid relation {rel!r}; expected '>=', '<=' or '=='",
                  rel if hasattr(rel, "mark") else entry, source)
        pf.constraints.append({
            "lhs": _expect_str(entry["lhs"], "lhs", source, entry),
            "rel": rel,
            "rhs": _expect_str(entry["rhs"], "rhs", source, entry),
            "label": str(entry["label"]) if entry.get("label") is not None else None,
        })
    if doc.get("objective") is not None:
        pf.objective = _expect_str(doc["objective"], "objective", source, doc)
    if doc.get("gsos") is not None:
        g = doc["gsos"]
        if not isinstance(g, dict) or not isinstance(g.get("t"), str):
            _fail("gsos must be a mapping with a variable name 't'", g if hasattr(g, "mark") else doc, source)
        pf.gsos = {"t": str(g["t"])}
    if doc.get("pcontain") is not None:
        pc = doc["pcontain"]
        if not isinstance(pc, dict) or not all(k in pc for k in ("p", "g", "multiplier_degrees")):
            _fail("pcontain needs p, g and multiplier_degrees", pc if hasattr(pc, "mark") else doc, source)
        degs = pc["multiplier_degrees"]
        if not isinstance(degs, list) or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in degs):
            _fail("multiplier_degrees must be nonnegative integers", degs if hasattr(degs, "mark") else pc, source)
        pf.pcontain = {"p": _expect_str(pc["p"], "p", source, pc),
                       "g": _expect_str(pc["g"], "g", source, pc),
                       "multiplier_degrees": [int(d) for d in degs]}
    if doc.get("issos") is not None:
        if not isinstance(doc["issos"], bool):
            _fail("issos must be true or false", doc, source)
        pf.issos = doc["issos"]
    opts = doc.get("options") or {}
    if not isinstance(opts, dict):
        _fail("options must be a mapping", opts, source)
    pf.options = {}
    for key, value in opts.items():
        if key not in OPTION_FIELDS:
            m = opts.key_marks.get(key)
            raise ProblemFileError(f"unknown option {key!r}", source, m.line + 1, m.column + 1)
        pf.options[str(key)] = _coerce_option(key, value, source, opts)
    if pf.gsos and pf.pcontain:
        raise ProblemFileError("a problem cannot have both gsos and pcontain", source, 1, 1)
    return pf


def _coerce_option(key, value, source, parent=None):
    typ, allowed = OPTION_FIELDS[key]
    ok = True
    if typ is bool:
        ok = isinstance(value, bool)
    elif typ is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif typ is float:
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                ok = False
        ok = ok and isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif typ is str:
        ok = isinstance(value, str) and (allowed is None or value in allowed)
        value = str(value) if ok else value
    if not ok:
        expect = f"one of {allowed}" if allowed else typ.__name__
        _fail(f"option {key}: expected {expect}, got {value!r}",
              value if hasattr(value, "mark") else parent, source)
    return value


def load_problem(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read file: {exc.strerror}", str(path)) from None
    return loads_problem(text, str(path))


def _parse_expr(text, source, env):
    try:
        p = parse(str(text))
    except PolySyntaxError as exc:
        mark = getattr(text, "mark", None)
        if mark is not None:
            offset = 1 if getattr(text, "quoted", False) else 0
            raise ProblemFileError(f"{exc.args[0].split(':')[0]} in {str(text)!r}", source,
                                   mark.line + 1, mark.column + 1 + offset + exc.pos) from None
        raise ProblemFileError(str(exc), source) from None
    return substitute(p, env) if env else p


def build_problem(pf):
    """Parse and expand every expression of a :class:`ProblemFile`."""
    src = pf.source
    xs = list(pf.vars)
    if len(set(xs)) != len(xs):
        raise ProblemFileError("duplicate names in vars", src)
    env = {}
    mats = {}
    reserved = set(xs) | set(pf.decvars or [])
    for name, spec in pf.multipliers.items():
        if name in reserved or name in env:
            raise ProblemFileError(f"multiplier name {name!r} clashes with a variable", src)
        if not xs:
            raise ProblemFileError(f"multiplier {name!r} needs polynomial variables", src)
        z = monomials(xs, spec["degrees"])
        poly, D = sos_decision_var(name, z)
        env[name] = poly
        mats[name] = (z, D)
    for name, text in pf.defs.items():
        if name in reserved or name in env:
            raise ProblemFileError(f"definition name {name!r} clashes with a variable", src)
        env[name] = _parse_expr(text, src, env)
    cons = ConstraintList()
    for entry in pf.constraints:
        lhs = _parse_expr(entry["lhs"], src, env)
        rhs = _parse_expr(entry["rhs"], src, env)
        cons.append(Constraint(lhs, rhs, RelOp.from_text(str(entry["rel"])), entry["label"]))
    obj = _parse_expr(pf.objective, src, env) if pf.objective is not None else None
    pcon = None
    if pf.pcontain is not None:
        pcon = {
            "p": _parse_expr(pf.pcontain["p"], src, env),
            "g": _parse_expr(pf.pcontain["g"], src, env),
            "z": monomials(xs, pf.pcontain["multiplier_degrees"]),
        }
    t = pf.gsos["t"] if pf.gsos else None
    d_vars = tuple(pf.decvars) if pf.decvars is not None else None
    if d_vars is not None:
        # multiplier coefficients are decision variables even when not listed
        extra = sorted(n for _, D in mats.values() for n in {str(v) for v in D.ravel()})
        d_vars = tuple(dict.fromkeys(list(d_vars) + extra))
    return Problem(pf, xs, cons, d_vars, obj, t, pcon, mats)


def render_problem(problem):
    """A problem file (YAML text) for the expanded problem: definitions and
    multipliers are written out, decision variables listed explicitly."""
    from .forms import decision_variables

    doc = {"vars": list(problem.x)}
    if problem.file.name:
        doc["name"] = problem.file.name
    if problem.pcontain is None:
        dv = problem.d_vars
        if dv is None:
            dv = decision_variables(problem.constraints, problem.x, problem.objective, problem.t)
        doc["decvars"] = list(dv)
    doc["constraints"] = []
    for c in problem.constraints:
        entry = {"lhs": str(c.left), "rel": c.op.value, "rhs": str(c.right)}
        if c.label is not None:
            entry["label"] = c.label
        doc["constraints"].append(entry)
    if problem.objective is not None:
        doc["objective"] = str(problem.objective)
    if problem.t is not None:
        doc["gsos"] = {"t": problem.t}
    if problem.pcontain is not None:
        doc["pcontain"] = {"p": str(problem.pcontain["p"]), "g": str(problem.pcontain["g"]),
                           "multiplier_degrees": problem.file.pcontain["multiplier_degrees"]}
    if problem.file.issos:
        doc["issos"] = True
    if problem.file.options:
        doc["options"] = dict(problem.file.options)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False, width=1000)
