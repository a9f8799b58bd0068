import numpy as np
import pytest

from neurwin.arms import DeadlineArm, DeadlineParams, RecoveringArm, RecoveringParams, WirelessArm
from neurwin.oracle import (ArmModel, IndexabilityError, UnsupportedModelError, deadline_model, dp_policy,
                            ds_curves, lambda_grid, mc_q_values, model_from_arm, q_values, recovering_model,
                            strong_indexability_check, truncation_bound, whittle_index, whittle_indices)


@pytest.fixture(scope="module")
def deadline():
    return deadline_model()


@pytest.fixture(scope="module")
def deadline_table(deadline):
    return whittle_indices(deadline)


def commitment_model(K=5.0):
    """Passing in A commits the arm to two paid activations later, so D_A rises with lambda.

    States A, C1, C2, B (absorbing). A: act -> B, pass -> C1. C1/C2 must be
    activated (pass costs K and ends in B); C1 act -> C2, C2 act -> B.
    """
    states = [("A",), ("C1",), ("C2",), ("B",)]
    R = np.zeros((2, 4))
    R[0, 1] = R[0, 2] = -K
    P = np.zeros((2, 4, 4))
    P[1, 0, 3] = P[0, 0, 1] = 1
    P[1, 1, 2] = P[0, 1, 3] = 1
    P[1, 2, 3] = P[0, 2, 3] = 1
    P[:, 3, 3] = 1
    return ArmModel(states, R, P)


class TestModels:
    def test_deadline_rows(self, deadline):
        assert len(deadline.states) == 120
        assert np.max(np.abs(deadline.P.sum(axis=2) - 1)) <= 1e-12

    def test_bad_rows(self):
        with pytest.raises(ValueError):
            ArmModel([(0,), (1,)], np.zeros((2, 2)), np.full((2, 2, 2), 0.4))

    def test_wireless_unsupported(self):
        with pytest.raises(UnsupportedModelError):
            model_from_arm(WirelessArm())
        with pytest.raises(UnsupportedModelError):
            q_values(object(), 0.0)


class TestQValues:
    def test_huge_cost(self, deadline):
        qa, qp = q_values(deadline, 1e6)
        assert np.all(qp > qa)

    def test_recovering_free_activation(self):
        m = recovering_model(RecoveringParams.for_class("A"))
        qa, _ = q_values(m, 0.0)
        f20 = RecoveringParams.for_class("A").f(20)
        assert qa[19] >= f20 > 0

    def test_one_step_to_deadline(self, deadline):
        qa, qp = q_values(deadline, 0.0)
        i = deadline.index_of((1, 1))
        assert qa[i] - qp[i] == pytest.approx(0.7, abs=1e-12)

    def test_horizon_one(self, deadline):
        qa, qp = q_values(deadline, 0.25, T=1)
        assert np.allclose(qa, deadline.R[1] - 0.25) and np.allclose(qp, deadline.R[0])

    def test_truncation_bound(self, deadline):
        b = truncation_bound(deadline, 0.0, 0.99, 300)
        assert b == pytest.approx(0.99 ** 300 * 16.2 / 0.01)


class TestWhittleIndex:
    def test_empty_spots_zero(self, deadline_table):
        for (d, b), w in deadline_table.as_dict().items():
            if b == 0:
                assert abs(w) <= 1e-6

    def test_one_step(self, deadline_table):
        assert deadline_table[(1, 1)] == pytest.approx(0.7, abs=1e-6)

    def test_closed_form_last_round(self, deadline_table):
        p = DeadlineParams()
        for b in range(1, 10):
            assert deadline_table[(1, b)] == pytest.approx(1 - p.c + p.F(b) - p.F(b - 1), abs=1e-6)

    def test_single_state_agrees(self, deadline, deadline_table):
        for s in [(1, 1), (5, 3), (12, 9), (0, 0)]:
            assert whittle_index(deadline, s) == pytest.approx(deadline_table[s], abs=2e-6)

    def test_residuals(self, deadline, deadline_table):
        d = ds_curves(deadline, np.array([0.0]))  # shape check
        assert d.shape == (120, 1)
        assert deadline_table.residual <= 1e-4

    @pytest.mark.parametrize("label", "ABCD")
    def test_recovering_monotone_in_z(self, label):
        t = whittle_indices(recovering_model(RecoveringParams.for_class(label)))
        assert np.all(np.diff(t.index) >= -1e-6)

    def test_sign_property(self, deadline, deadline_table):
        grid = lambda_grid(-1, 2, 0.05)
        curves = ds_curves(deadline, grid)
        tol = 1e-6
        for s, row in zip(deadline.states, curves):
            w = deadline_table[s]
            assert np.all(row[grid <= w - tol] >= -tol)
            assert np.all(row[grid >= w + tol] <= tol)

    def test_horizon_stability(self):
        m = recovering_model(RecoveringParams.for_class("B"))
        a = whittle_indices(m, T=300).index
        b = whittle_indices(m, T=600).index
        bound = truncation_bound(m, 0.0, 0.99, 300) + 1e-6
        assert np.max(np.abs(a - b)) < bound

    def test_counterexample_raises(self):
        with pytest.raises(IndexabilityError) as err:
            whittle_indices(commitment_model())
        assert err.value.state == ("A",)


class TestIndexability:
    def test_deadline_pass(self, deadline):
        rep = strong_indexability_check(deadline, lambda_grid(-1, 2, 0.05))
        assert rep.passed and not rep.violations
        assert "PASS" in rep.summary()

    def test_counterexample_detected(self):
        rep = strong_indexability_check(commitment_model(), lambda_grid(0, 2, 0.1))
        assert not rep.passed
        assert {v[0] for v in rep.violations} == {("A",)}

    def test_grid_validation(self, deadline):
        with pytest.raises(ValueError):
            strong_indexability_check(deadline, [0.0, 0.0, 1.0])

    def test_grid(self):
        g = lambda_grid(-1, 2, 0.05)
        assert len(g) == 61 and g[0] == -1 and g[-1] == 2


class TestMonteCarlo:
    def test_recovering_exact(self):
        p = RecoveringParams.for_class("C")
        m = recovering_model(p)
        lam = 2.0
        qa, qp = q_values(m, lam)
        pol = dp_policy(m, lam)
        for z in (1, 7, 20):
            a, b, se_a, se_b = mc_q_values(RecoveringArm(p), (z,), lam, rollouts=3, policy=pol)
            assert a == pytest.approx(qa[z - 1], abs=1e-9)
            assert b == pytest.approx(qp[z - 1], abs=1e-9)
            assert se_a == 0.0 and se_b == 0.0

    def test_deadline_within_three_se(self, deadline):
        lam = 0.3
        qa, qp = q_values(deadline, lam)
        pol = dp_policy(deadline, lam)
        for s in [(0, 0), (1, 5), (6, 4)]:
            a, b, se_a, se_b = mc_q_values(DeadlineArm(), s, lam, rollouts=50, seed=1, policy=pol)
            i = deadline.index_of(s)
            assert abs(a - qa[i]) <= 3 * se_a
            assert abs(b - qp[i]) <= 3 * se_b

    def test_wireless_finished(self):
        assert mc_q_values(WirelessArm(), (0.0, 1), 0.0, rollouts=2)[:2] == (0.0, 0.0)

    def test_rollouts_validated(self):
        with pytest.raises(ValueError):
            mc_q_values(RecoveringArm(), (1,), 0.0, rollouts=1)
