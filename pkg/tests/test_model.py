import math

import numpy as np
import pytest
from scipy.linalg import expm

from lambda_control.model import (
    HALF_PI,
    ControlSignal,
    FullState,
    IntegrationError,
    SystemParams,
    integrate_full,
    optical_pumping_control,
    reconstruct_density,
    rhs_full,
    system_matrix,
    system_matrix_dtheta,
)


def _random_state(rng):
    pops = rng.dirichlet(np.ones(3))
    coh = rng.uniform(-0.3, 0.3, 6)
    return np.concatenate([pops, coh])


def _symmetric_reference_rhs(state, theta, gamma):
    """Symmetric-decay equations with literal Gamma/2 coefficients."""
    x1, x2, x3, x4, x5, x6, y1, y2, y3 = state
    op = math.sin(theta)
    os_ = math.cos(theta)
    return np.array([
        -op * x4 + 0.5 * gamma * x2,
        op * x4 - os_ * x5 - gamma * x2,
        os_ * x5 + 0.5 * gamma * x2,
        0.5 * op * (x1 - x2) + 0.5 * os_ * x6 - 0.5 * gamma * x4,
        0.5 * os_ * (x2 - x3) - 0.5 * op * x6 - 0.5 * gamma * x5,
        0.5 * (op * x5 - os_ * x4),
        -0.5 * os_ * y3 - 0.5 * gamma * y1,
        0.5 * op * y3 - 0.5 * gamma * y2,
        0.5 * (os_ * y1 - op * y2),
    ])


class TestSystemParams:
    def test_branch_rates(self):
        p = SystemParams(gamma_total=10.0, gamma_diff=8.0)
        assert p.gamma1 == 9.0
        assert p.gamma3 == 1.0
        assert not p.is_symmetric
        assert SystemParams(gamma_total=4.0).is_symmetric

    @pytest.mark.parametrize("kwargs", [
        {"gamma_total": 0.0},
        {"gamma_total": -1.0},
        {"gamma_total": 2.0, "gamma_diff": 3.0},
        {"gamma_total": 2.0, "gamma_diff": -2.5},
        {"gamma_total": 1.0, "omega0": 0.0},
        {"gamma_total": float("nan")},
    ])
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SystemParams(**kwargs)


class TestRhsFull:
    def test_dark_state_is_equilibrium(self):
        # Ground state with the Stokes field only: nothing moves.
        p = SystemParams(gamma_total=10.0)
        deriv = rhs_full(FullState.ground(), 0.0, p)
        assert np.array_equal(deriv, np.zeros(9))

    def test_pump_drives_coherence(self):
        p = SystemParams(gamma_total=10.0)
        deriv = rhs_full(FullState.ground(), HALF_PI, p)
        expected = np.zeros(9)
        expected[3] = 0.5  # omega_p / 2 with omega0 = 1
        assert np.allclose(deriv, expected, atol=1e-15)

    def test_pure_decay_from_intermediate(self):
        p = SystemParams(gamma_total=6.0)
        deriv = rhs_full([0, 1, 0, 0, 0, 0, 0, 0, 0], 0.7, p)
        assert deriv[0] == pytest.approx(3.0)
        assert deriv[1] == pytest.approx(-6.0)
        assert deriv[2] == pytest.approx(3.0)

    def test_population_derivatives_sum_to_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            gamma = rng.uniform(0.1, 20.0)
            p = SystemParams(gamma_total=gamma,
                             gamma_diff=rng.uniform(-gamma, gamma))
            deriv = rhs_full(_random_state(rng), rng.uniform(0, HALF_PI), p)
            assert abs(deriv[:3].sum()) <= 1e-13 * max(1.0, gamma)

    def test_symmetric_case_matches_reference_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            gamma = rng.uniform(0.1, 20.0)
            p = SystemParams(gamma_total=gamma)
            state = _random_state(rng)
            theta = rng.uniform(0, HALF_PI)
            ours = rhs_full(state, theta, p)
            ref = _symmetric_reference_rhs(state, theta, gamma)
            assert np.array_equal(ours, ref)

    def test_generator_matches_rhs(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            gamma = rng.uniform(0.1, 15.0)
            p = SystemParams(gamma_total=gamma,
                             gamma_diff=rng.uniform(-gamma, gamma))
            state = _random_state(rng)
            theta = rng.uniform(0, HALF_PI)
            assert np.allclose(system_matrix(theta, p) @ state,
                               rhs_full(state, theta, p), atol=1e-14)

    def test_generator_derivative_is_consistent(self):
        p = SystemParams(gamma_total=3.0, gamma_diff=1.0)
        theta = 0.8
        eps = 1e-6
        fd = (system_matrix(theta + eps, p) - system_matrix(theta - eps, p)) / (2 * eps)
        assert np.allclose(system_matrix_dtheta(theta, p), fd, atol=1e-9)


class TestControlSignal:
    def test_amplitude_constraint(self):
        rng = np.random.default_rng(3)
        control = ControlSignal(np.linspace(0, 5, 11),
                                rng.uniform(0, HALF_PI, 10))
        op, os_ = control.omega_pair(omega0=1.0)
        assert np.all(np.abs(op**2 + os_**2 - 1.0) <= 4e-16)
        op2, os2 = control.omega_pair(omega0=2.0)
        assert np.all(np.abs(op2**2 + os2**2 - 4.0) <= 2e-15)

    def test_theta_lookup(self):
        control = ControlSignal([0.0, 1.0, 3.0], [0.2, 0.4])
        assert control.theta_at(0.0) == 0.2
        assert control.theta_at(0.999) == 0.2
        assert control.theta_at(1.0) == 0.4
        assert control.theta_at(3.0) == 0.4  # final time: last interval
        assert np.array_equal(control.theta_at([0.5, 2.0]), [0.2, 0.4])

    @pytest.mark.parametrize("grid,theta", [
        ([0.0, 1.0, 1.0], [0.1, 0.2]),     # not strictly increasing
        ([0.0, 1.0], [0.1, 0.2]),          # wrong length
        ([0.0, 1.0], [2.0]),               # angle out of range
        ([0.0, 1.0], [-0.1]),
        ([0.0, float("inf")], [0.1]),
        ([0.0], []),
    ])
    def test_validation(self, grid, theta):
        with pytest.raises(ValueError):
            ControlSignal(grid, theta)

    def test_optical_pumping_control(self):
        c = optical_pumping_control(1.0)
        assert np.array_equal(c.grid, [0.0, 1.0])
        assert np.array_equal(c.theta, [HALF_PI])
        c100 = optical_pumping_control(100.0)
        assert c100.duration == 100.0
        assert np.array_equal(c100.theta, [HALF_PI])
        with pytest.raises(ValueError):
            optical_pumping_control(0.0)
        with pytest.raises(ValueError):
            optical_pumping_control(-3.0)


class TestReconstructDensity:
    def test_pure_states(self):
        assert np.allclose(reconstruct_density([1, 0, 0, 0, 0, 0, 0, 0, 0]),
                           np.diag([1.0, 0.0, 0.0]))
        assert np.allclose(reconstruct_density([0, 0, 1, 0, 0, 0, 0, 0, 0]),
                           np.diag([0.0, 0.0, 1.0]))

    def test_superposition(self):
        rho = reconstruct_density([0.5, 0, 0.5, 0, 0, 0.5, 0, 0, 0])
        assert rho[0, 2] == 0.5 and rho[2, 0] == 0.5
        eigvals = np.sort(np.linalg.eigvalsh(rho))
        assert np.allclose(eigvals, [0.0, 0.0, 1.0], atol=1e-12)

    def test_hermitian_for_random_states(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            rho = reconstruct_density(_random_state(rng))
            assert np.allclose(rho, rho.conj().T)
            assert np.trace(rho).real == pytest.approx(1.0)


class TestIntegrateFull:
    def test_dark_control_gives_constant_trajectory(self):
        p = SystemParams(gamma_total=5.0)
        traj = integrate_full(ControlSignal.constant(0.0, 20.0), p)
        assert np.allclose(traj.states, FullState.ground().as_array(),
                           atol=1e-15)
        assert traj.times[-1] == 20.0

    def test_pumping_approaches_closed_form_efficiency(self):
        # 1 - exp(-omega0^2 T / (2 Gamma)) at Gamma=10, T=100: 1 - e^-5.
        p = SystemParams(gamma_total=10.0)
        traj = integrate_full(optical_pumping_control(100.0), p)
        assert traj.final_rho33 == pytest.approx(0.9932620530009145, abs=0.02)
        # Monotone rise and a small intermediate-level transient.
        assert np.all(np.diff(traj.rho33) >= -1e-12)
        assert traj.rho22.max() < 0.02

    def test_matches_expm_oracle_for_constant_control(self):
        # Independent oracle: exact matrix exponential of the generator.
        for gamma, theta, T in [(0.1, HALF_PI, 5.0), (2.0, 0.9, 10.0)]:
            p = SystemParams(gamma_total=gamma)
            traj = integrate_full(ControlSignal.constant(theta, T), p)
            exact = expm(system_matrix(theta, p) * T) @ FullState.ground().as_array()
            assert np.allclose(traj.final_state, exact, atol=1e-8)

    def test_adaptive_oracle_agrees_with_fixed_step(self):
        p = SystemParams(gamma_total=0.1)
        control = optical_pumping_control(5.0)
        fast = integrate_full(control, p).final_rho33
        oracle = integrate_full(control, p, method="adaptive").final_rho33
        assert fast == pytest.approx(oracle, abs=1e-8)

    def test_structural_invariants_on_random_controls(self):
        rng = np.random.default_rng(5)
        for _ in range(8):
            gamma = rng.uniform(0.2, 12.0)
            p = SystemParams(gamma_total=gamma,
                             gamma_diff=rng.uniform(-gamma, gamma))
            control = ControlSignal(np.linspace(0, 15.0, 13),
                                    rng.uniform(0, HALF_PI, 12))
            traj = integrate_full(control, p)
            assert traj.trace_drift() <= 1e-9
            assert traj.max_y() <= 1e-10
            for state in traj.states[:: max(1, len(traj.states) // 50)]:
                eigvals = np.linalg.eigvalsh(reconstruct_density(state))
                assert eigvals.min() >= -1e-7
                assert eigvals.max() <= 1.0 + 1e-7

    def test_y_block_stays_zero_on_callable_path(self):
        p = SystemParams(gamma_total=2.0)
        traj = integrate_full(lambda t: HALF_PI * t / 4.0, p, 4.0)
        assert traj.max_y() == 0.0
        assert traj.trace_drift() <= 1e-12

    def test_final_sample_exactly_at_horizon(self):
        p = SystemParams(gamma_total=3.0)
        control = ControlSignal(np.linspace(0, 7.3, 8),
                                np.linspace(0, HALF_PI, 7))
        traj = integrate_full(control, p, 7.3)
        assert traj.times[-1] == 7.3
        shorter = integrate_full(control, p, 2.5)
        assert shorter.times[-1] == 2.5

    def test_control_must_cover_horizon(self):
        p = SystemParams(gamma_total=3.0)
        with pytest.raises(ValueError, match="cover"):
            integrate_full(ControlSignal.constant(0.3, 5.0), p, 6.0)
        with pytest.raises(ValueError):
            integrate_full(lambda t: 0.3, p)  # callable needs T

    def test_initial_state_override(self):
        p = SystemParams(gamma_total=4.0)
        # Start from the intermediate level: it decays into both lower levels.
        start = [0, 1, 0, 0, 0, 0, 0, 0, 0]
        traj = integrate_full(ControlSignal.constant(HALF_PI, 5.0), p,
                              initial_state=start)
        assert traj.states[0, 1] == 1.0
        assert 0.0 < traj.final_rho33 < 1.0
        assert traj.trace_drift() <= 1e-9

    def test_target_state_is_dark_to_pure_pump(self):
        # With the Stokes field off, |3> is fully decoupled and keeps its
        # population exactly.
        p = SystemParams(gamma_total=4.0)
        start = [0, 0, 1, 0, 0, 0, 0, 0, 0]
        traj = integrate_full(ControlSignal.constant(HALF_PI, 5.0), p,
                              initial_state=start)
        assert traj.final_rho33 == pytest.approx(1.0, abs=1e-12)

    def test_unstable_step_reports_failure(self):
        # Gamma * h = 50 is far outside the RK4 stability region.
        p = SystemParams(gamma_total=10.0)
        state = [0, 1, 0, 0, 0, 0, 0, 0, 0]
        with pytest.raises(IntegrationError) as excinfo:
            integrate_full(ControlSignal.constant(0.3, 2000.0), p,
                           initial_state=state, max_step=5.0)
        assert 0.0 <= excinfo.value.last_time < 2000.0

    def test_order_check_smooth_control(self):
        # Halving the step cuts the error by ~2^4 on a smooth schedule.
        p = SystemParams(gamma_total=2.0)
        T = 2.0

        def theta_fn(t):
            return HALF_PI * math.sin(math.pi * t / (2 * T)) ** 2

        ref = integrate_full(theta_fn, p, T, method="adaptive",
                             rtol=1e-12, atol=1e-14).final_state
        err_coarse = np.linalg.norm(
            integrate_full(theta_fn, p, T, max_step=0.02).final_state - ref)
        err_fine = np.linalg.norm(
            integrate_full(theta_fn, p, T, max_step=0.01).final_state - ref)
        ratio = err_coarse / err_fine
        assert 10.0 < ratio < 26.0


class TestTrajectoryExport:
    def test_csv_format(self, tmp_path):
        p = SystemParams(gamma_total=10.0)
        traj = integrate_full(optical_pumping_control(10.0), p, max_samples=64)
        path = tmp_path / "traj.csv"
        traj.write_csv(path, omega0=p.omega0, comment="config: {}")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "t,rho11,rho22,rho33,x4,x5,x6,theta,omega_p,omega_s"
        assert len(lines) == 2 + len(traj.times)
        last = [float(v) for v in lines[-1].split(",")]
        assert last[0] == 10.0
        assert last[3] == traj.final_rho33  # %.17g round-trips exactly
        assert last[7] == pytest.approx(HALF_PI)
        assert last[8] == pytest.approx(1.0)
        assert last[9] == pytest.approx(0.0, abs=1e-12)


class TestFullState:
    def test_roundtrip(self):
        rng = np.random.default_rng(6)
        arr = _random_state(rng)
        state = FullState.from_array(arr)
        assert np.array_equal(state.as_array(), arr)
        assert state.populations == tuple(arr[:3])

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError):
            FullState.from_array([1.0, 2.0])
