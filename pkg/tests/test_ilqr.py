import json

import numpy as np
import pytest

from spinfd import ilqr
from spinfd.envs import LinearQuadratic, make_environment, wrapped_error
from spinfd.estimators import Blackbox, EstimatorConfig, NoiseModel


def lqr_problem(T=50, seed=0, limits=None):
    rng = np.random.default_rng(seed)
    n, m = 4, 2
    A = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    Q, R, Qf = np.eye(n), 0.1 * np.eye(m), 10 * np.eye(n)
    x0 = rng.standard_normal(n)
    env = LinearQuadratic(horizon=T, dt=1.0, start_state=tuple(x0), A=A, B=B, Q=Q, R=R, Qf=Qf,
                          control_limits=limits or ())
    return env


def riccati(env):
    """Independent finite-horizon discrete Riccati recursion."""
    A, B, Q, R = env.A, env.B, env.Q, env.R
    P = env.Qf
    gains = []
    for _ in range(env.horizon):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
        gains.append(K)
    x0 = np.array(env.start_state)
    return gains[::-1], float(x0 @ P @ x0)


def exact_linearization(env, T):
    return ilqr.Linearization(np.broadcast_to(env.A, (T,) + env.A.shape).copy(),
                              np.broadcast_to(env.B, (T,) + env.B.shape).copy(), 0, 0)


def expansions(env, traj):
    return env.stage_cost(traj.states[:-1], traj.controls), env.terminal_cost(traj.states[-1])


def test_backward_pass_matches_riccati():
    env = lqr_problem()
    traj = ilqr.rollout(env, np.zeros((env.horizon, env.m)))
    gains = ilqr.backward_pass(exact_linearization(env, env.horizon), *expansions(env, traj), 0.0)
    K_ref, _ = riccati(env)
    for t in range(env.horizon):
        np.testing.assert_allclose(gains.K[t], -K_ref[t], atol=1e-8)


def test_forward_pass_alpha_one_is_optimal():
    env = lqr_problem()
    traj = ilqr.rollout(env, np.zeros((env.horizon, env.m)))
    gains = ilqr.backward_pass(exact_linearization(env, env.horizon), *expansions(env, traj), 0.0)
    _, opt = riccati(env)
    new = ilqr.forward_pass(env, traj, gains, 1.0)
    assert abs(new.total_cost - opt) <= 1e-8 * max(1.0, opt)


def test_forward_pass_alpha_zero_returns_incumbent():
    env = make_environment("cartpole")
    traj = ilqr.rollout(env, 0.1 * np.ones((env.horizon, 1)))
    lin = ilqr.linearize(env, traj, EstimatorConfig("hadamard"), 1e-4)
    gains = ilqr.backward_pass(lin, *expansions(env, traj), 1e3, env.limits, traj.controls)
    same = ilqr.forward_pass(env, traj, gains, 0.0)
    np.testing.assert_array_equal(same.states, traj.states)
    np.testing.assert_array_equal(same.controls, traj.controls)
    assert same.total_cost == traj.total_cost


def test_zero_dynamics_pure_control_cost():
    T, n, m = 5, 2, 2
    env = LinearQuadratic(horizon=T, dt=1.0, start_state=(0.0, 0.0), A=np.zeros((n, n)),
                          B=np.zeros((n, m)), Q=np.zeros((n, n)), R=np.eye(m), Qf=np.zeros((n, n)))
    u = np.random.default_rng(0).standard_normal((T, m))
    traj = ilqr.rollout(env, u)
    gains = ilqr.backward_pass(exact_linearization(env, T), *expansions(env, traj), 0.0)
    new = ilqr.forward_pass(env, traj, gains, 1.0)
    np.testing.assert_allclose(new.controls, 0.0, atol=1e-15)


def test_indefinite_quu_raises():
    T = 3
    env = LinearQuadratic(horizon=T, dt=1.0, start_state=(1.0,), A=np.eye(1), B=np.eye(1),
                          Q=np.eye(1), R=-np.eye(1), Qf=np.zeros((1, 1)))
    traj = ilqr.rollout(env, np.zeros((T, 1)))
    with pytest.raises(ilqr.NotPositiveDefinite) as info:
        ilqr.backward_pass(exact_linearization(env, T), *expansions(env, traj), 0.0)
    assert info.value.t == T - 1


def test_clamped_gains_respect_limits():
    env = lqr_problem(limits=(0.05, 0.05))
    traj = ilqr.rollout(env, np.zeros((env.horizon, env.m)))
    gains = ilqr.backward_pass(exact_linearization(env, env.horizon), *expansions(env, traj), 0.0,
                               env.limits, traj.controls)
    for alpha in (1.0, 0.5):
        new = ilqr.forward_pass(env, traj, gains, alpha)
        assert np.all(np.abs(new.controls) <= 0.05)
    assert np.any(np.abs(new.controls) == 0.05)


def test_linearize_lti_and_accounting():
    env = lqr_problem(T=10)
    traj = ilqr.rollout(env, np.random.default_rng(1).standard_normal((10, env.m)))
    cfg = EstimatorConfig("hadamard_random")
    lin = ilqr.linearize(env, traj, cfg, 1e-3)
    for t in range(10):
        np.testing.assert_allclose(lin.A[t], env.A, atol=1e-10)
        np.testing.assert_allclose(lin.B[t], env.B, atol=1e-10)
    n_spin = cfg.directions(env.n + env.m).rows.shape[0]
    assert lin.evaluations == 10 * (n_spin + 1)


def test_linearize_car_at_rest():
    env = make_environment("car")
    traj = ilqr.rollout(env, np.zeros((env.horizon, 2)))
    lin = ilqr.linearize(env, traj, EstimatorConfig("hadamard"), 1e-6)
    x0 = np.array(env.start_state)
    cols = []
    for i in range(6):
        e = np.zeros(6)
        e[i] = 1e-6
        z = np.concatenate([x0, np.zeros(2)])
        cols.append((env.step((z + e)[:4], (z + e)[4:]) - env.step((z - e)[:4], (z - e)[4:])) / 2e-6)
    J = np.stack(cols, axis=1)
    np.testing.assert_allclose(lin.A[0], J[:, :4], atol=1e-4)
    np.testing.assert_allclose(lin.B[0], J[:, 4:], atol=1e-4)
    assert np.max(np.abs(lin.A[0] - np.eye(4))) <= 0.1  # I + O(dt)


def test_solve_lqr_reaches_oracle_in_two_iterations():
    env = lqr_problem()
    _, opt = riccati(env)
    rep, traj = ilqr.solve(env, None, EstimatorConfig("hadamard"),
                           ilqr.SolveOptions(max_iterations=2, delta=1e-3, tolerance=0))
    assert min(rep.cost_per_iteration) - opt <= 1e-8 * max(1.0, opt)
    assert traj.check_consistency(env)


@pytest.mark.parametrize("name,iters", [("car", 15), ("cartpole", 30), ("acrobot", 30)])
def test_noiseless_costs_nonincreasing(name, iters):
    env = make_environment(name)
    rep, traj = ilqr.solve(env, None, EstimatorConfig("hadamard_random"),
                           ilqr.SolveOptions(max_iterations=iters, delta=1e-4, tolerance=0,
                                             initial_regularization=1.0))
    c = np.array([rep.initial_cost] + rep.cost_per_iteration)
    assert np.all(np.diff(c) <= 0)
    assert c[-1] < c[0]
    assert traj.check_consistency(env)
    assert abs(traj.total_cost - (traj.stage_costs.sum() + traj.terminal)) <= 1e-9 * traj.total_cost


@pytest.mark.slow
def test_car_parks_under_structured_estimation():
    env = make_environment("car")
    rep, traj = ilqr.solve(env, None, EstimatorConfig("hadamard_random"),
                           ilqr.SolveOptions(max_iterations=100, delta=1e-4, tolerance=1e-6,
                                             initial_regularization=1.0))
    assert np.all(np.abs(wrapped_error(env, traj.states[-1])) <= 0.05)
    assert np.all(np.abs(traj.controls) <= env.limits)


def test_solve_deterministic_and_serializable():
    env = make_environment("cartpole", horizon=40)
    opts = ilqr.SolveOptions(max_iterations=5, delta=1e-2, tolerance=0, seed=3,
                             noise=NoiseModel.gaussian(1e-4, rng_seed=3))
    a, ta = ilqr.solve(env, None, EstimatorConfig("hadamard_random"), opts)
    opts.noise = NoiseModel.gaussian(1e-4, rng_seed=3)
    b, tb = ilqr.solve(env, None, EstimatorConfig("hadamard_random"), opts)
    assert a.cost_per_iteration == b.cost_per_iteration
    np.testing.assert_array_equal(ta.controls, tb.controls)
    d = json.loads(a.to_json())
    assert d["estimator_descriptor"]["kind"] == "hadamard_random"
    assert d["linearization_noise"] and not d["rollout_noise"]
    assert a.wall_nanos_linearization <= a.wall_nanos_total
    assert a.evaluations_per_iteration[-1] == a.evaluations


def test_linearization_dominates_for_blackbox_simulators():
    env = make_environment("car", horizon=100)
    rep, _ = ilqr.solve(env, None, EstimatorConfig("hadamard_random"),
                        ilqr.SolveOptions(max_iterations=3, delta=1e-4, tolerance=0,
                                          vectorized_dynamics=False))
    assert rep.wall_nanos_linearization > 0.5 * rep.wall_nanos_total


def test_rollout_noise_switch():
    env = make_environment("cartpole", horizon=30)
    rep, traj = ilqr.solve(env, None, EstimatorConfig("hadamard"),
                           ilqr.SolveOptions(max_iterations=3, delta=1e-3, tolerance=0,
                                             rollout_noise=NoiseModel.gaussian(1e-4, 1)))
    assert rep.rollout_noise and not rep.linearization_noise


def test_options_validation():
    with pytest.raises(ValueError):
        ilqr.SolveOptions(max_iterations=0)
    with pytest.raises(ValueError):
        ilqr.SolveOptions(delta=0.0)


def test_diverged_rollout_rejected():
    env = LinearQuadratic(horizon=5, dt=1.0, start_state=(1.0,), A=np.array([[1e300]]),
                          B=np.eye(1), Q=np.eye(1), R=np.eye(1), Qf=np.eye(1))
    traj = ilqr.Trajectory(np.ones((6, 1)), np.zeros((5, 1)), np.zeros(5), 0.0, 0.0)
    gains = ilqr.Gains(np.zeros((5, 1)), np.zeros((5, 1, 1)), 0.0, 0.0)
    with pytest.raises(ilqr.DivergedRollout):
        ilqr.forward_pass(env, traj, gains, 1.0)


def test_estimators_agree_noiseless_cartpole():
    # car and acrobot have nearby local minima that different estimators can settle in
    env = make_environment("cartpole")
    cfgs = [EstimatorConfig("standard"), EstimatorConfig("hadamard"),
            EstimatorConfig("hadamard_random"), EstimatorConfig("quadratic_residue"),
            EstimatorConfig("multispinner", k=2)]
    finals = []
    for cfg in cfgs:
        rep, _ = ilqr.solve(env, None, cfg, ilqr.SolveOptions(max_iterations=150, delta=1e-5,
                                                              tolerance=1e-9,
                                                              initial_regularization=1.0))
        finals.append(rep.cost_per_iteration[-1])
    assert (max(finals) - min(finals)) / min(finals) <= 0.01
