"""Jenkins element: update law, hysteresis marching, dissipation oracles."""

import numpy as np
import pytest

from nlmodal.friction import (
    JenkinsState,
    cycle_jenkins_to_steady,
    dissipated_energy,
    evaluate_g,
    jenkins_force_series,
    jenkins_update,
)

KT = 8e6
MUN = 30.0
X_SLIP = MUN / KT


class TestUpdateLaw:
    def test_pure_stick_below_slip_limit(self):
        state = JenkinsState()
        for x in 0.9 * X_SLIP * np.sin(np.linspace(0, 20, 400)):
            state, f = jenkins_update(state, x, KT, MUN)
            assert f == pytest.approx(KT * x)
            assert state.slider == 0.0

    def test_force_saturates_at_slip_limit(self):
        state = JenkinsState()
        state, f = jenkins_update(state, 10 * X_SLIP, KT, MUN)
        assert f == pytest.approx(MUN)
        assert state.slider == pytest.approx(9 * X_SLIP)

    def test_table_values_stick_limit_displacement(self):
        assert X_SLIP == pytest.approx(3.75e-6)

    def test_force_bound_random_walk(self, rng):
        state = JenkinsState()
        x = np.cumsum(rng.standard_normal(2000)) * X_SLIP
        for xi in x:
            state, f = jenkins_update(state, xi, KT, MUN)
            assert abs(f) <= MUN * (1 + 1e-12)
            assert abs(KT * (xi - state.slider)) <= MUN * (1 + 1e-12)


class TestSteadyLoop:
    def test_closed_form_dissipation(self):
        # X >> slip limit: per-cycle energy -> 4 muN (X - Xs)
        for ratio in (5.0, 20.0, 100.0):
            X = ratio * X_SLIP
            theta = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
            x = X * np.cos(theta)
            f, _ = cycle_jenkins_to_steady(x, KT, MUN)
            e = dissipated_energy(x, f)
            assert e == pytest.approx(4 * MUN * (X - X_SLIP), rel=2e-3)

    def test_dissipation_non_negative_random_cycles(self, rng):
        # criterion-10 style property at reduced size; the acceptance suite
        # runs the full 1e5-cycle batch
        n = 2000
        amps = X_SLIP * 10 ** rng.uniform(-1, 3, size=n)
        phases = rng.uniform(0, 2 * np.pi, size=(3, n))
        theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)[:, None]
        x = (
            amps * np.cos(theta + phases[0])
            + 0.3 * amps * np.cos(2 * theta + phases[1])
            + 0.2 * amps * np.cos(3 * theta + phases[2])
        )
        f, _ = cycle_jenkins_to_steady(x, KT, MUN)
        assert np.max(np.abs(f)) <= MUN * (1 + 1e-12)
        energies = np.array(
            [dissipated_energy(x[:, j], f[:, j]) for j in range(0, n, 7)]
        )
        assert np.all(energies >= -1e-12 * MUN * amps[::7].max())

    def test_loop_closure_is_deterministic(self):
        theta = np.linspace(0, 2 * np.pi, 512, endpoint=False)
        x = 30 * X_SLIP * (np.cos(theta) + 0.2 * np.cos(3 * theta))
        f1, w1 = cycle_jenkins_to_steady(x, KT, MUN)
        f2, w2 = cycle_jenkins_to_steady(x, KT, MUN)
        np.testing.assert_array_equal(f1, f2)
        assert w1 == w2

    def test_zero_slip_limit_is_free(self):
        theta = np.linspace(0, 2 * np.pi, 128, endpoint=False)
        f, _ = cycle_jenkins_to_steady(np.cos(theta), KT, 0.0)
        assert np.all(f == 0)

    def test_batched_matches_single(self, rng):
        theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        X = np.array([0.5, 3.0, 50.0]) * X_SLIP
        x = X * np.cos(theta)[:, None]
        fb, _ = cycle_jenkins_to_steady(x, KT, MUN)
        for j, Xj in enumerate(X):
            fs, _ = cycle_jenkins_to_steady(Xj * np.cos(theta), KT, MUN)
            np.testing.assert_allclose(fb[:, j], fs)


class TestEvaluateG:
    def test_equilibrium_zero(self, model):
        g, _ = evaluate_g(
            model, np.zeros(model.n_dof), np.zeros(model.n_dof), JenkinsState()
        )
        np.testing.assert_array_equal(g, 0.0)

    def test_infinite_slip_limit_equals_stick_model(self, model, stick_slip, rng):
        stick, _ = stick_slip
        big = type(model)(
            mass=model.mass,
            stiffness=model.stiffness,
            damping=model.damping,
            params=model.params,
            friction_dof=model.friction_dof,
            tangential_stiffness=model.tangential_stiffness,
            slip_limit=1e12,
        )
        x = rng.standard_normal(model.n_dof) * 1e-4
        v = rng.standard_normal(model.n_dof) * 1e-2
        g, _ = evaluate_g(big, x, v, JenkinsState())
        g_ref = stick.stiffness @ x + stick.damping @ v
        np.testing.assert_allclose(g, g_ref, rtol=1e-12)

    def test_zero_slip_limit_equals_slip_model(self, model, stick_slip, rng):
        _, slip = stick_slip
        free = type(model)(
            mass=model.mass,
            stiffness=model.stiffness,
            damping=model.damping,
            params=model.params,
            friction_dof=model.friction_dof,
            tangential_stiffness=model.tangential_stiffness,
            slip_limit=0.0,
        )
        x = rng.standard_normal(model.n_dof) * 1e-4
        v = rng.standard_normal(model.n_dof) * 1e-2
        g, _ = evaluate_g(free, x, v, JenkinsState())
        np.testing.assert_allclose(g, slip.stiffness @ x + slip.damping @ v, rtol=1e-12)

    def test_dimension_mismatch_raises(self, model):
        with pytest.raises(ValueError):
            evaluate_g(model, np.zeros(3), np.zeros(3), JenkinsState())

    def test_series_marching_matches_stepwise(self, rng):
        x = np.cumsum(rng.standard_normal(500)) * X_SLIP * 0.5
        f_series, w_end = jenkins_force_series(x, KT, MUN)
        state = JenkinsState()
        for i, xi in enumerate(x):
            state, f = jenkins_update(state, xi, KT, MUN)
            assert f == pytest.approx(f_series[i])
        assert w_end == pytest.approx(state.slider)
