import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosgram.parse import parse
from sosgram.poly import (
    MAX_EXPONENT,
    Monomial,
    NotAffine,
    Polynomial,
    add,
    affine_split,
    gradient,
    monomials,
    mul,
    neg,
    poly_decision_var,
    pow,
    sos_decision_var,
    substitute,
    var_matrix,
)

P = parse
NAMES = ["x1", "x2", "x3", "y", "z"]


@st.composite
def polynomials(draw, max_terms=5, max_deg=3):
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        exps = {n: draw(st.integers(0, max_deg)) for n in draw(st.lists(st.sampled_from(NAMES), max_size=3))}
        coef = draw(st.integers(-9, 9))
        terms[Monomial(exps)] = terms.get(Monomial(exps), 0) + coef
    return Polynomial(terms)


class TestMonomial:
    def test_no_zero_exponents(self):
        m = Monomial({"x1": 2, "x2": 0})
        assert m == Monomial({"x1": 2})
        assert m.variables == ("x1",)
        assert m.degree == 2

    def test_constant(self):
        assert Monomial().degree == 0
        assert str(Monomial()) == "1"

    def test_product_adds_exponents(self):
        assert Monomial({"x1": 1}) * Monomial({"x1": 2, "x2": 1}) == Monomial({"x1": 3, "x2": 1})

    def test_negative_exponent_rejected(self):
        with pytest.raises(ValueError):
            Monomial({"x1": -1})

    def test_overflow_is_an_error(self):
        with pytest.raises(OverflowError):
            Monomial({"x1": MAX_EXPONENT + 1})

    def test_bad_name(self):
        with pytest.raises(ValueError):
            Monomial({"1x": 1})


class TestPolynomial:
    def test_zero_coefficients_pruned(self):
        p = Polynomial({Monomial({"x1": 1}): 0.0, Monomial(): 2.0})
        assert len(p) == 1

    def test_zero_polynomial_is_empty(self):
        assert Polynomial().is_zero()
        assert len(P("0")) == 0

    def test_display_is_grlex_descending(self):
        assert str(P("6 + d1*x1^2")) == "d1*x1^2 + 6"
        assert str(P("1 + x2 + x1 + x1*x2")) == "x1*x2 + x1 + x2 + 1"

    def test_immutable(self):
        p = P("x1")
        with pytest.raises(AttributeError):
            p._terms = {}

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Polynomial({Monomial(): math.inf})

    def test_evaluate(self):
        p = P("x1^2*x2 - 3*x2 + 1")
        assert p.evaluate({"x1": 2.0, "x2": -1.0}) == -4 + 3 + 1
        vals = p.evaluate({"x1": np.array([0.0, 1.0]), "x2": np.array([1.0, 2.0])})
        np.testing.assert_allclose(vals, [-2.0, -3.0])


class TestArithmetic:
    def test_cancellation(self):
        assert add(P("x1^2"), P("-x1^2")).is_zero()

    def test_difference_of_squares(self):
        assert mul(P("x1+x2"), P("x1-x2")) == P("x1^2 - x2^2")

    def test_power_zero(self):
        assert pow(P("x1+1"), 0) == Polynomial.const(1)

    def test_neg(self):
        assert neg(P("x1 - 2")) == P("2 - x1")

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            pow(P("x1"), -1)

    @settings(max_examples=60, deadline=None)
    @given(polynomials(), polynomials(), polynomials())
    def test_ring_axioms(self, p, q, r):
        assert p + q == q + p
        assert p * q == q * p
        assert (p + q) + r == p + (q + r)
        assert (p * q) * r == p * (q * r)
        assert p * (q + r) == p * q + p * r


class TestSubstitute:
    def test_decision_values(self):
        assert substitute(P("d1*x1^2 + d2"), {"d1": -6, "d2": 4}) == P("-6*x1^2 + 4")

    def test_empty_assignment(self):
        p = P("x1*x2 + 3")
        assert substitute(p, {}) == p

    def test_polynomial_value(self):
        assert substitute(P("x1*x2"), {"x1": P("x2")}) == P("x2^2")

    def test_simultaneous(self):
        assert substitute(P("x1 + 2*x2"), {"x1": P("x2"), "x2": P("x1")}) == P("x2 + 2*x1")

    @settings(max_examples=40, deadline=None)
    @given(polynomials(), st.floats(-2, 2), st.floats(-2, 2))
    def test_matches_numeric_evaluation(self, p, a, b):
        point = {n: 0.7 for n in NAMES}
        point.update({"x1": a, "y": b})
        direct = p.evaluate(point)
        via = substitute(p, {"x1": a, "y": b}).evaluate(point)
        assert abs(via - direct) <= 1e-12 * max(1.0, abs(direct)) + 1e-12


class TestMonomials:
    def test_paper_basis(self):
        got = [str(m) for m in monomials(["x1", "x2"], range(3))]
        assert got == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]

    def test_single_degree(self):
        assert monomials(["x1"], [3]) == [Monomial({"x1": 3})]

    def test_count(self):
        assert len(monomials(["x1", "x2", "x3"], [2])) == 6
        assert len(monomials(["a", "b", "c", "d"], range(4))) == sum(math.comb(3 + d, d) for d in range(4))

    def test_empty_degrees(self):
        assert monomials(["x1"], []) == []


class TestDecisionVariables:
    def test_var_matrix(self):
        Pm = var_matrix("p", 4, 2)
        assert Pm.shape == (4, 2)
        assert str(Pm[0, 0]) == "p_1_1" and str(Pm[3, 1]) == "p_4_2"

    def test_symmetric_var_matrix(self):
        D = var_matrix("d", 3, 3, symmetric=True)
        names = {str(v) for v in D.ravel()}
        assert len(names) == 6
        assert D[0, 1] == D[1, 0] == P("d_1_2")

    def test_symmetric_must_be_square(self):
        with pytest.raises(ValueError):
            var_matrix("d", 2, 3, symmetric=True)

    def test_poly_decision_var(self):
        w = monomials(["x1", "x2"], range(3))
        p, names = poly_decision_var("d", w)
        assert p == P("d_4*x1^2 + d_5*x1*x2 + d_6*x2^2 + d_2*x1 + d_3*x2 + d_1")
        assert names == [f"d_{k}" for k in range(1, 7)]
        assert poly_decision_var("c", [Monomial()])[0] == P("c_1")

    def test_sos_decision_var(self):
        z = monomials(["x1", "x2"], range(2))
        s, D = sos_decision_var("d", z)
        assert s == P("d_2_2*x1^2 + 2*d_2_3*x1*x2 + d_3_3*x2^2 + 2*d_1_2*x1 + 2*d_1_3*x2 + d_1_1")
        assert sos_decision_var("q", [Monomial({"x1": 1})])[0] == P("q_1_1*x1^2")
        _, D = sos_decision_var("r", [Monomial(), Monomial({"x1": 1})])
        assert len({str(v) for v in D.ravel()}) == 3

    def test_duplicate_basis_rejected(self):
        with pytest.raises(ValueError):
            sos_decision_var("d", [Monomial({"x1": 1}), Monomial({"x1": 1})])


class TestAffineSplit:
    def test_paper_example(self):
        dec = affine_split(P("6 + d1*x1^2 - 5*x2^2"), ["x1", "x2"])
        assert dec.base == P("6 - 5*x2^2")
        assert list(dec.coeffs) == [("d1", P("x1^2"))]

    def test_no_decision_variables(self):
        dec = affine_split(P("x1^2"), ["x1"])
        assert dec.base == P("x1^2") and not dec.coeffs

    def test_bilinear_rejected(self):
        with pytest.raises(NotAffine):
            affine_split(P("t*d1*x1"), ["x1"])
        with pytest.raises(NotAffine):
            affine_split(P("d1^2"), [])

    @settings(max_examples=40, deadline=None)
    @given(polynomials(), polynomials())
    def test_reassembly_exact(self, base, lin):
        p = base.subs({"z": 0}) + P("z") * lin.subs({"z": 0})
        dec = affine_split(p, ["x1", "x2", "x3", "y"])
        assert dec.reassemble() == p


class TestGradient:
    def test_examples(self):
        assert gradient(P("x1^2 + x1*x2"), ["x1", "x2"]) == [P("2*x1 + x2"), P("x1")]
        assert gradient(Polynomial.const(7), ["x1"]) == [Polynomial()]
        assert gradient(P("x1^3"), ["x1"]) == [P("3*x1^2")]

    @settings(max_examples=30, deadline=None)
    @given(polynomials(max_deg=3), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
    def test_central_differences(self, p, a, b):
        point = {n: 0.3 for n in NAMES}
        point.update({"x1": a, "x2": b})
        h = 1e-5
        for name, g in zip(["x1", "x2"], gradient(p, ["x1", "x2"])):
            up, dn = dict(point), dict(point)
            up[name] += h
            dn[name] -= h
            numeric = (p.evaluate(up) - p.evaluate(dn)) / (2 * h)
            analytic = g.evaluate(point)
            assert abs(analytic - numeric) <= 1e-6 * (1 + abs(analytic)) + 1e-6 * max(1.0, abs(p.evaluate(point)))
