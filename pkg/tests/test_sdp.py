import numpy as np
import pytest
import scipy.sparse as sps

from sdp_cases import random_feasible_sdp
from sosgram.parse import parse as P
from sosgram.sdp import NONNEG, PSD, ConicProblem, Cone, SolverOptions, Status, residuals, solve_conic
from sosgram.solve import Options, issos


class TestConeAndProblem:
    def test_sizes(self):
        assert NONNEG(3).size == 3 and PSD(3).size == 9
        assert str(PSD(2)) == "PSD(2)"

    def test_bad_cone(self):
        with pytest.raises(ValueError):
            Cone("soc", 3)
        with pytest.raises(ValueError):
            PSD(0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ConicProblem([PSD(2)], sps.csr_matrix(np.ones((1, 3))), [1.0], np.zeros(3))
        with pytest.raises(ValueError):
            ConicProblem([NONNEG(2)], sps.csr_matrix(np.ones((1, 2))), [1.0, 2.0], np.zeros(2))


class TestSmallProblems:
    def test_nonneg_equality(self):
        prob = ConicProblem([NONNEG(1)], sps.csr_matrix([[1.0]]), [1.0], [1.0])
        sol = solve_conic(prob)
        assert sol.status is Status.OPTIMAL
        assert abs(sol.x[0] - 1.0) <= 1e-7

    def test_negative_psd_scalar_infeasible(self):
        prob = ConicProblem([PSD(1)], sps.csr_matrix([[1.0]]), [-1.0], [0.0])
        sol = solve_conic(prob)
        assert sol.status is Status.PRIMAL_INFEASIBLE
        # Farkas ray: b'y > 0 with A'y <= 0 on the cone
        assert prob.b @ sol.y > 0
        assert (prob.A.T @ sol.y)[0] <= 0

    def test_unbounded(self):
        prob = ConicProblem([NONNEG(2)], sps.csr_matrix([[1.0, -1.0]]), [0.0], [1.0, -2.0])
        sol = solve_conic(prob)
        assert sol.status is Status.DUAL_INFEASIBLE
        assert prob.c @ sol.x < 0
        assert np.all(sol.x >= 0)
        assert np.linalg.norm(prob.A @ sol.x) <= 1e-8

    def test_trace_minimization(self):
        # min tr(X) s.t. X11 = 1, X22 = 2: optimum 3 at diag(1, 2)
        A = np.zeros((2, 4))
        A[0, 0] = 1.0
        A[1, 3] = 1.0
        prob = ConicProblem([PSD(2)], sps.csr_matrix(A), [1.0, 2.0], np.eye(2).ravel())
        sol = solve_conic(prob)
        assert sol.optimal
        np.testing.assert_allclose(sol.x.reshape(2, 2), np.diag([1.0, 2.0]), atol=1e-6)

    def test_quartic_gram_center(self):
        # x1^4 + 1 over z = [1, x1^2] has the unique Gram matrix I
        feas, z, Q, _ = issos(P("x1^4 + 1"))
        assert feas and [str(m) for m in z] == ["1", "x1^2"]
        assert abs(Q[0, 1]) <= 1e-6
        np.testing.assert_allclose(np.diag(Q), [1.0, 1.0], atol=1e-6)

    def test_quartic_full_basis_psd(self):
        feas, z, Q, _ = issos(P("x1^4 + 1"), Options(simplify=False))
        assert feas and len(z) == 3
        assert np.linalg.eigvalsh(Q)[0] >= -1e-7
        # the x1^2 coefficient 2*Q13 + Q22 must vanish
        assert abs(2 * Q[0, 2] + Q[1, 1]) <= 1e-6


class TestResiduals:
    def test_recomputed_residuals_agree(self):
        rng = np.random.default_rng(7)
        prob, _ = random_feasible_sdp(rng)
        sol = solve_conic(prob)
        again = residuals(prob, sol.x, sol.y, sol.s)
        for name in ("primal", "dual", "gap"):
            assert abs(getattr(again, name) - getattr(sol.residuals, name)) <= 1e-10

    def test_perturbation_shows_in_primal_residual(self):
        prob = ConicProblem([NONNEG(1)], sps.csr_matrix([[2.0]]), [4.0], [1.0])
        r = residuals(prob, np.array([2.5]), np.array([0.5]), np.array([0.0]))
        assert r.primal == pytest.approx(1.0 / 5.0)
        assert r.dual == pytest.approx(0.0)

    def test_zero_vectors(self):
        prob = ConicProblem([NONNEG(2)], sps.csr_matrix([[1.0, 1.0]]), [3.0], [1.0, 2.0])
        r = residuals(prob, np.zeros(2), np.zeros(1), np.zeros(2))
        assert r.primal == pytest.approx(3.0 / 4.0)
        assert r.dual == pytest.approx(np.sqrt(5.0) / (1.0 + np.sqrt(5.0)))
        assert r.gap == 0.0


class TestRandomProblems:
    @pytest.mark.parametrize("seed", range(10))
    def test_optimum_and_certificates(self, seed):
        rng = np.random.default_rng(1000 + seed)
        prob, opt = random_feasible_sdp(rng)
        sol = solve_conic(prob)
        assert sol.status is Status.OPTIMAL
        assert abs(sol.residuals.primal_objective - opt) <= 1e-6 * (1 + abs(opt))
        # complementarity per unit of cone degree, and both iterates in the cone
        nu = sum(cone.degree for cone in prob.cones)
        assert abs(sol.x @ sol.s) / nu <= 1e-7
        for cone, sl in zip(prob.cones, prob.block_slices()):
            if cone.kind == "psd":
                k = cone.dim
                assert np.linalg.eigvalsh(sol.x[sl].reshape(k, k))[0] >= -1e-8
                assert np.linalg.eigvalsh(sol.s[sl].reshape(k, k))[0] >= -1e-8
            else:
                assert np.all(sol.x[sl] >= -1e-10) and np.all(sol.s[sl] >= -1e-10)

    def test_weak_duality_along_iterates(self):
        # pobj - dobj = <x, s> + x'rd - y'rp, and <x, s> >= 0 inside the cone
        rng = np.random.default_rng(42)
        prob, _ = random_feasible_sdp(rng)
        sol = solve_conic(prob)
        for h in sol.history:
            corrected = h["pobj"] - h["dobj"] - h["x_rd"] + h["y_rp"]
            scale = 1 + abs(h["pobj"]) + abs(h["dobj"]) + abs(h["x_rd"]) + abs(h["y_rp"])
            assert corrected >= -1e-12 * scale
            assert abs(corrected - h["x_s"]) <= 1e-10 * scale

    def test_deterministic(self):
        a = solve_conic(random_feasible_sdp(np.random.default_rng(5))[0])
        b = solve_conic(random_feasible_sdp(np.random.default_rng(5))[0])
        assert a.iterations == b.iterations
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)

    def test_iteration_cap(self):
        prob, _ = random_feasible_sdp(np.random.default_rng(11))
        sol = solve_conic(prob, SolverOptions(max_iter=1))
        assert sol.status in (Status.ITERATION_LIMIT, Status.STALLED)
        assert sol.iterations <= 1
