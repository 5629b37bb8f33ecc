import math

import numpy as np
import pytest

from sosgram.constraints import ConstraintList, eq, sos_ge
from sosgram.forms import (
    CompiledConstraint,
    ObjectiveDependsOnX,
    SosProgram,
    compile_program,
    extract_solution,
    image_form,
    kernel_blocks,
    kernel_form,
)
from sosgram.gram import GramDecomposition, match_coefficients
from sosgram.parse import parse as P
from sosgram.poly import monomials
from sosgram.sdp import NONNEG, PSD, solve_conic
from sosgram.solve import Options, issos, sosopt


def M(text):
    (mono, _), = P(text).items()
    return mono


def explicit_program(one_side, xs, z):
    """Single SOS constraint compiled against a caller-chosen basis."""
    c = sos_ge(one_side)
    table, coeffs = match_coefficients(one_side, xs, z)
    cc = CompiledConstraint(c, True, list(z), len(z), table, coeffs)
    return SosProgram(ConstraintList([c]), tuple(xs), (), None, [cc])


class TestImageForm:
    def test_single_square(self):
        prob = image_form(compile_program([sos_ge(P("x1^2"))], ["x1"]))
        assert prob.cones == (PSD(1),)
        np.testing.assert_array_equal(prob.A.toarray(), [[1.0]])
        np.testing.assert_array_equal(prob.b, [1.0])

    def test_equality_only_program(self):
        prog = compile_program([eq(P("d2"), 8)], [])
        prob = image_form(prog)
        assert prob.cones == () and prob.num_rows == 0
        np.testing.assert_array_equal(prob.layout.d0, [8.0])

    def test_shared_product_row(self):
        prog = explicit_program(P("x1^2*x2^2"), ["x1", "x2"], [M("x1^2"), M("x2^2"), M("x1*x2")])
        prob = image_form(prog)
        A = prob.A.toarray()
        assert A.shape == (5, 9)
        # Q12 + Q21 + Q33 = 1, every other monomial matched to zero
        row = A[np.flatnonzero(prob.b)[0]]
        expect = np.zeros(9)
        expect[[1, 3, 8]] = 1.0
        np.testing.assert_array_equal(row, expect)
        assert np.count_nonzero(prob.b) == 1

    def test_rows_are_symmetric(self):
        prog = compile_program([sos_ge(P("x1^4 + d1*x1^2*x2^2 + x2^4 + 1"))], ["x1", "x2"])
        prob = image_form(prog)
        k = prob.cones[0].dim
        for row in prob.A.toarray():
            blockrow = row[:k * k].reshape(k, k)
            np.testing.assert_array_equal(blockrow, blockrow.T)

    def test_unbounded_direction_gets_a_ray(self):
        prog = compile_program([sos_ge(P("x1^2 + d2"))], ["x1"], objective=P("d1"))
        prob = image_form(prog)
        assert prob.cones[-1] == NONNEG(2)
        res = sosopt([sos_ge(P("x1^2 + d2"))], ["x1"], P("d1"))
        assert not res.feas and res.obj == -math.inf
        assert res.diagnostics.get("unbounded")

    def test_objective_on_x_rejected(self):
        with pytest.raises(ObjectiveDependsOnX):
            compile_program([sos_ge(P("x1^2 + d1"))], ["x1"], objective=P("x1 + d1"))


class TestKernelForm:
    def test_shared_product_blocks(self):
        prog = explicit_program(P("x1^2*x2^2"), ["x1", "x2"], [M("x1^2"), M("x2^2"), M("x1*x2")])
        Q0, D, N = kernel_blocks(prog.compiled[0], {}, 0)
        np.testing.assert_array_equal(Q0, [[0, 0.5, 0], [0.5, 0, 0], [0, 0, 0]])
        assert len(N) == 1
        np.testing.assert_array_equal(N[0], [[0, -0.5, 0], [-0.5, 0, 0], [0, 0, 1]])
        assert D.shape == (0, 3, 3)

    @pytest.mark.parametrize("seed", range(5))
    def test_null_directions_vanish(self, seed):
        rng = np.random.default_rng(seed)
        xs = ["x1", "x2", "x3"][: int(rng.integers(1, 4))]
        z = monomials(xs, range(int(rng.integers(1, 3)) + 1))
        coefs = rng.integers(-3, 4, len(z))
        f = sum((P(f"{c}") * P(str(m)) for c, m in zip(coefs, z)), P("0"))
        p = f * f + P("1")
        prog = explicit_program(p, xs, z)
        cc = prog.compiled[0]
        Q0, _, N = kernel_blocks(cc, {}, 0)
        assert len(N) == sum(len(pairs) - 1 for pairs in cc.table.values() if pairs)
        for Nk in N:
            assert GramDecomposition(z, Nk).polynomial().is_zero()
        # Q0 alone reproduces p
        diff = (GramDecomposition(z, Q0).polynomial() - p).coefficient_vector()
        assert np.max(np.abs(diff), initial=0.0) <= 1e-12

    def test_inconsistent_equalities(self):
        prog = compile_program([eq(P("d1"), 1), eq(P("d1"), 2)], [])
        prob = kernel_form(prog)
        assert prob.layout.consistent is False
        sol = solve_conic(prob)
        assert not sol.optimal


class TestFormsAgree:
    @pytest.mark.parametrize("text", ["x1^2 + 2*x1 + 1", "(x1 - 2*x2)^2", "(x1*x2 + 3)^2"])
    def test_unique_gram_matrix(self, text):
        # every product of the basis occurs once, so the Gram matrix is determined
        _, z1, Q1, _ = issos(P(text), Options(form="image"))
        _, z2, Q2, _ = issos(P(text), Options(form="kernel"))
        assert z1 == z2
        np.testing.assert_allclose(Q1, Q2, atol=1e-6)

    def test_objective_and_decisions(self):
        cons = [sos_ge(P("x1^4 + d1*x1^2 + d2")), eq(P("d2"), 1)]
        a = sosopt(cons, ["x1"], P("d1"), Options(form="image"))
        b = sosopt(cons, ["x1"], P("d1"), Options(form="kernel"))
        assert a.feas and b.feas
        assert abs(a.obj - b.obj) <= 1e-6
        for name in a.dopt:
            assert abs(a.dopt[name] - b.dopt[name]) <= 1e-5

    def test_extracted_certificates_match_polynomial(self):
        prog = compile_program([sos_ge(P("x1^4 + d1*x1^2 + 2")), eq(P("d1"), -1)], ["x1"])
        for build in (image_form, kernel_form):
            prob = build(prog)
            sol = solve_conic(prob)
            assert sol.optimal
            ext = extract_solution(prog, prob, sol)
            assert abs(ext.d["d1"] + 1) <= 1e-7
            cert = ext.certificates[0]
            diff = (cert.polynomial() - P("x1^4 - x1^2 + 2")).coefficient_vector()
            assert np.max(np.abs(diff)) <= 1e-6


class TestScaling:
    def test_verdict_and_certificate_invariant(self):
        p = P("1000*x1^4 + 3000*x1^2*x2^2 + 1000*x2^4 + 1000")
        off = issos(p, Options(scaling=False))
        on = issos(p, Options(scaling=True))
        assert off[0] and on[0]
        for _, z, Q, _ in (off, on):
            diff = (GramDecomposition(z, Q).polynomial() - p).coefficient_vector()
            assert np.max(np.abs(diff)) <= 1e-6 * 1000

    def test_infeasible_stays_infeasible(self):
        motzkin = P("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1")
        assert not issos(motzkin, Options(scaling=True))[0]
