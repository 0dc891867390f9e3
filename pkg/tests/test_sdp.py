import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_psd
from layersynth.sdp import SdpError, SdpProblem, lmi_margin, solve


class TestSolve:
    def test_minimize_scalar_over_nonnegativity(self):
        prob = SdpProblem()
        x = prob.add_scalar("x")
        prob.add_psd_block(cp.reshape(x, (1, 1), order="C"))
        prob.set_objective(x)
        sol = solve(prob)
        assert sol.status == "optimal"
        assert sol.values["x"] == pytest.approx(0.0, abs=1e-6)

    def test_constant_negative_block_infeasible(self):
        prob = SdpProblem()
        prob.add_psd_block(np.array([[-1.0]]))
        sol = solve(prob)
        assert sol.status == "infeasible"

    def test_trace_over_identity_floor(self):
        prob = SdpProblem()
        x = prob.add_symmetric("X", 2)
        prob.add_psd_block(x - np.eye(2))
        prob.set_objective(cp.trace(x))
        sol = solve(prob)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(2.0, abs=1e-5)
        np.testing.assert_allclose(sol.values["X"], np.eye(2), atol=1e-5)

    def test_optimal_implies_margin(self):
        prob = SdpProblem()
        x = prob.add_symmetric("X", 3)
        target = np.diag([1.0, 2.0, 3.0])
        prob.add_psd_block(x - target)
        prob.set_objective(cp.trace(x))
        sol = solve(prob, tol=1e-7)
        assert sol.status == "optimal"
        # independent re-verification of feasibility at the returned point
        assert lmi_margin([sol.values["X"] - target]) >= -1e-7

    def test_duplicate_variable_rejected(self):
        prob = SdpProblem()
        prob.add_scalar("x")
        with pytest.raises(SdpError):
            prob.add_scalar("x")

    def test_nonsquare_block_rejected(self):
        prob = SdpProblem()
        with pytest.raises(SdpError):
            prob.add_psd_block(np.zeros((2, 3)))

    @settings(deadline=None, max_examples=15)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 4))
    def test_feasibility_scaling_invariance(self, seed, n):
        base = random_psd(np.random.default_rng(seed), n) + 0.1 * np.eye(n)
        for scale in (1.0, 2.0):
            prob = SdpProblem()
            prob.add_psd_block(scale * base)
            prob.set_objective(0.0)
            assert solve(prob).status == "optimal"


class TestLmiMargin:
    def test_identity(self):
        assert lmi_margin([np.eye(3)]) == pytest.approx(1.0)

    def test_indefinite_diagonal(self):
        assert lmi_margin([np.diag([2.0, -0.5])]) == pytest.approx(-0.5)

    def test_dense(self):
        assert lmi_margin([np.array([[2.0, 1.0], [1.0, 2.0]])]) == pytest.approx(1.0)

    def test_minimum_over_blocks(self):
        assert lmi_margin([np.eye(2), np.diag([5.0, -2.0])]) == pytest.approx(-2.0)

    def test_asymmetric_rejected(self):
        with pytest.raises(SdpError):
            lmi_margin([np.array([[0.0, 1.0], [0.0, 0.0]])])
