import io
import json
import subprocess
import sys
import textwrap

import pytest

from sdpa_reader import read_sdpa
from sosgram.cli import (
    DEMOS,
    EXIT_FEASIBLE,
    EXIT_INFEASIBLE,
    EXIT_INPUT,
    cmd_solve,
    demo_path,
    main,
    resolve_options,
)
from sosgram.sdp import PSD

MOTZKIN = textwrap.dedent("""
    vars: [x1, x2]
    constraints:
      - {lhs: "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", rel: ">=", rhs: "0"}
""")

SQUARE = textwrap.dedent("""
    name: square
    vars: [x1]
    constraints:
      - {lhs: "x1^2", rel: ">=", rhs: "0"}
    issos: true
""")

GSOS = textwrap.dedent("""
    vars: [x1]
    constraints:
      - {lhs: "t*x1^2 - 5*x1^2 + 1", rel: ">=", rhs: "0"}
    gsos: {t: t}
""")


@pytest.fixture
def write(tmp_path):
    def _write(text, name="prob.yaml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write


class TestSolve:
    def test_lp_demo_file(self, capsys):
        code = main(["solve", str(demo_path("lp"))])
        out = capsys.readouterr().out
        assert code == EXIT_FEASIBLE
        line = next(ln for ln in out.splitlines() if ln.startswith("objective"))
        assert abs(float(line.split()[1]) - 2.0) <= 1e-6

    def test_motzkin_issos_exit_code(self, write, capsys):
        assert main(["solve", write(MOTZKIN), "--issos"]) == EXIT_INFEASIBLE
        assert "feasible   no" in capsys.readouterr().out

    def test_bad_relation_exit_code(self, write, capsys):
        path = write(MOTZKIN.replace('">="', '"=>"'))
        assert main(["solve", path]) == EXIT_INPUT
        err = capsys.readouterr().err
        assert f"{path}:4:" in err and "=>" in err

    def test_issos_rejects_decision_variables(self, write, capsys):
        path = write(SQUARE.replace('"x1^2"', '"x1^2 + d1"'))
        assert main(["solve", path]) == EXIT_INPUT

    def test_unknown_flag(self, capsys):
        assert main(["solve", "x.yaml", "--bogus"]) == EXIT_INPUT

    def test_gsos_report(self, write):
        code, report = cmd_solve(write(GSOS), stream=io.StringIO())
        assert code == EXIT_FEASIBLE
        lo, hi = report.tbnds
        assert lo <= 5 <= hi and report.objective == hi

    def test_json_and_text_agree(self, write, tmp_path):
        out = tmp_path / "report.json"
        stream = io.StringIO()
        code, report = cmd_solve(str(demo_path("eq")), out=str(out), stream=stream)
        data = json.loads(out.read_text())
        text = stream.getvalue()
        assert data["objective"] == report.objective
        assert f"objective  {data['objective']!r}" in text
        for name, value in data["dopt"].items():
            assert any(ln.split() == [name, repr(value)] for ln in text.splitlines())

    def test_infinite_objective_serializes(self, write, tmp_path):
        text = textwrap.dedent("""
            vars: [x1]
            constraints:
              - {lhs: "x1^2 + d1", rel: ">=", rhs: "0"}
              - {lhs: d1, rel: "<=", rhs: "-1"}
            objective: d1
        """)
        out = tmp_path / "r.json"
        code, _ = cmd_solve(write(text), out=str(out), stream=io.StringIO())
        assert code == EXIT_INFEASIBLE
        assert json.loads(out.read_text())["objective"] == "inf"


class TestOptionPrecedence:
    def test_three_layers(self):
        assert resolve_options().form == "image"
        assert resolve_options({"form": "kernel"}).form == "kernel"
        opts = resolve_options({"form": "kernel", "feastol": 1e-7}, {"form": "image", "feastol": None})
        assert opts.form == "image" and opts.feastol == 1e-7

    def test_flag_beats_file(self, write):
        path = write(SQUARE + "options: {form: kernel}\n")
        _, from_file = cmd_solve(path, stream=io.StringIO())
        _, flagged = cmd_solve(path, {"form": "image"}, stream=io.StringIO())
        assert from_file.options["form"] == "kernel"
        assert flagged.options["form"] == "image"

    def test_unknown_option(self):
        with pytest.raises(ValueError):
            resolve_options(None, {"colour": "blue"})


class TestExport:
    def test_square_is_one_psd_block(self, write, capsys):
        assert main(["export-sdpa", write(SQUARE)]) == EXIT_FEASIBLE
        prob = read_sdpa(capsys.readouterr().out)
        assert prob.cones == (PSD(1),)
        assert prob.A.toarray().tolist() == [[1.0]] and prob.b.tolist() == [1.0]

    def test_deterministic(self, write, tmp_path):
        path = write(MOTZKIN)
        a, b = tmp_path / "a.dat-s", tmp_path / "b.dat-s"
        assert main(["export-sdpa", path, "--out", str(a)]) == EXIT_FEASIBLE
        assert main(["export-sdpa", path, "--out", str(b)]) == EXIT_FEASIBLE
        assert a.read_bytes() == b.read_bytes()

    def test_gsos_not_exportable(self, write, capsys):
        assert main(["export-sdpa", write(GSOS)]) == EXIT_INPUT
        assert "bisection" in capsys.readouterr().err

    def test_structurally_infeasible(self, write, capsys):
        path = write(MOTZKIN.replace("+ 1", "+ x1^3"))
        assert main(["export-sdpa", path]) == EXIT_INPUT


class TestDemos:
    @pytest.mark.parametrize("name", sorted(DEMOS))
    def test_demo_checks_pass(self, name, capsys):
        assert main(["demo", name]) == EXIT_FEASIBLE
        out = capsys.readouterr().out
        assert "check PASS" in out and "check FAIL" not in out

    def test_unknown_demo(self, capsys):
        assert main(["demo", "nope"]) == EXIT_INPUT

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "sosgram", "demo", "sostest"],
                              capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        assert "feasible   yes" in proc.stdout
