"""Iterative LQR with pluggable finite-difference linearization.

Dynamics are only accessed as a (possibly noisy) blackbox through
:func:`spinfd.estimators.estimate_jacobians`; costs come with analytic
quadratic expansions. Control limits are handled by clamping in the forward
pass and by freezing clamped coordinates in the backward pass.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envs import Environment, noisy_dynamics
from .estimators import Blackbox, EstimatorConfig, NoiseModel, estimate_jacobians

__all__ = [
    "Gains",
    "Linearization",
    "NotPositiveDefinite",
    "SolveOptions",
    "SolveReport",
    "Trajectory",
    "backward_pass",
    "forward_pass",
    "linearize",
    "rollout",
    "solve",
]

LINE_SEARCH = 2.0 ** -np.arange(11)  # 1, 1/2, ..., 2**-10
ARMIJO = 1e-4
REG_FLOOR = 1e-6
REG_CEIL = 1e10


class NotPositiveDefinite(np.linalg.LinAlgError):
    def __init__(self, t):
        super().__init__(f"Q_uu + reg*I is not positive definite at t={t}")
        self.t = t


class DivergedRollout(FloatingPointError):
    pass


@dataclass
class Trajectory:
    states: np.ndarray  # (T+1, n)
    controls: np.ndarray  # (T, m)
    stage_costs: np.ndarray  # (T,)
    terminal: float
    total_cost: float

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    def check_consistency(self, env: Environment, atol: float = 1e-12) -> bool:
        nxt = env.step(self.states[:-1], self.controls)
        return bool(np.allclose(nxt, self.states[1:], rtol=1e-12, atol=atol))


@dataclass
class Linearization:
    A: np.ndarray  # (T, n, n)
    B: np.ndarray  # (T, n, m)
    evaluations: int
    wall_nanos: int


@dataclass
class Gains:
    k: np.ndarray  # (T, m) feedforward
    K: np.ndarray  # (T, m, n) feedback
    dv_linear: float  # expected reduction = -(alpha*dv_linear + alpha**2*dv_quadratic)
    dv_quadratic: float

    def expected_reduction(self, alpha: float) -> float:
        return -(alpha * self.dv_linear + alpha * alpha * self.dv_quadratic)


def _costs(env: Environment, states, controls):
    stage = env.stage_cost(states[..., :-1, :], controls).value
    term = env.terminal_cost(states[..., -1, :]).value
    return stage, term


def _make_trajectory(env, states, controls) -> Trajectory:
    stage, term = _costs(env, states, controls)
    return Trajectory(states, controls, stage, float(term), float(stage.sum() + term))


def rollout(env: Environment, controls, x0=None, step=None) -> Trajectory:
    """Roll ``controls`` (clamped) through the dynamics from ``x0``."""
    step = env.step if step is None else step
    controls = env.clamp(np.asarray(controls, dtype=float))
    T = controls.shape[0]
    x = np.asarray(env.start_state if x0 is None else x0, dtype=float)
    states = np.empty((T + 1, x.shape[0]))
    states[0] = x
    for t in range(T):
        states[t + 1] = step(states[t], controls[t])
    return _make_trajectory(env, states, controls)


def linearize(env: Environment, traj: Trajectory, estimator: EstimatorConfig, delta: float,
              noise: NoiseModel | None = None, dynamics: Blackbox | None = None,
              draw: int = 0) -> Linearization:
    """Finite-difference Jacobians at every ``(x_t, u_t)`` of ``traj``.

    ``dynamics`` defaults to :func:`noisy_dynamics` built from ``noise``; one
    direction set (indexed by ``draw``) is shared across timesteps.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    dyn = noisy_dynamics(env, noise) if dynamics is None else dynamics
    t0 = time.perf_counter_ns()
    before = dyn.eval_count
    A, B = estimate_jacobians(dyn, traj.states[:-1], traj.controls, delta, estimator, draw=draw)
    return Linearization(A, B, dyn.eval_count - before, time.perf_counter_ns() - t0)


def backward_pass(lin: Linearization, stage, terminal, regularization: float,
                  control_limits=None, controls=None) -> Gains:
    """Riccati recursion producing affine gains.

    ``stage`` is a batched :class:`CostExpansion` over ``t = 0..T-1`` and
    ``terminal`` the expansion at ``x_T``. When ``control_limits`` and the
    nominal ``controls`` are given, coordinates whose feedforward step would
    leave the box are clamped to the bound and get zero feedback.
    """
    A, B = lin.A, lin.B
    T, n, m = B.shape[0], B.shape[1], B.shape[2]
    Vx = np.array(terminal.gradient_x, dtype=float)
    Vxx = np.array(terminal.hessian_xx, dtype=float)
    k = np.zeros((T, m))
    K = np.zeros((T, m, n))
    dv1 = dv2 = 0.0
    eye = np.eye(m)
    lim = None if control_limits is None else np.asarray(control_limits, dtype=float)
    gx, gu = stage.gradient_x, stage.gradient_u
    hxx, huu, hux = stage.hessian_xx, stage.hessian_uu, stage.hessian_ux
    for t in range(T - 1, -1, -1):
        At, Bt = A[t], B[t]
        Qx = gx[t] + At.T @ Vx
        Qu = gu[t] + Bt.T @ Vx
        VA = Vxx @ At
        Qxx = hxx[t] + At.T @ VA
        Quu = huu[t] + Bt.T @ (Vxx @ Bt)
        Qux = hux[t] + Bt.T @ VA
        H = Quu + regularization * eye
        try:
            np.linalg.cholesky(H)  # positive-definiteness check only
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(t) from None
        sol = -np.linalg.solve(H, np.column_stack((Qu, Qux)))
        kt, Kt = sol[:, 0], sol[:, 1:]
        if lim is not None and controls is not None:
            u_new = controls[t] + kt
            clamped = np.abs(u_new) > lim
            if clamped.any():
                kt, Kt = _clamped_step(H, Qu, Qux, controls[t], kt, lim, clamped)
        k[t], K[t] = kt, Kt
        dv1 += kt @ Qu
        dv2 += 0.5 * kt @ Quu @ kt
        Vx = Qx + Kt.T @ (Quu @ kt + Qu) + Qux.T @ kt
        Vxx = Qxx + Kt.T @ (Quu @ Kt + Qux) + Qux.T @ Kt
        Vxx = 0.5 * (Vxx + Vxx.T)
    return Gains(k, K, float(dv1), float(dv2))


def _clamped_step(H, Qu, Qux, u, k, lim, clamped):
    free = ~clamped
    target = np.minimum(np.maximum(u + k, -lim), lim)
    k = k.copy()
    k[clamped] = target[clamped] - u[clamped]
    K = np.zeros_like(Qux)
    if free.any():
        Hf = H[free]
        rhs = Qu[free] + Hf[:, clamped] @ k[clamped]
        sol = -np.linalg.solve(Hf[:, free], np.column_stack((rhs, Qux[free])))
        k[free], K[free] = sol[:, 0], sol[:, 1:]
    return k, K


def _forward_batch(env: Environment, traj: Trajectory, gains: Gains, alphas, step=None):
    """Roll out all line-search scales at once; returns states, controls, total costs."""
    step = env.step if step is None else step
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    nA = alphas.shape[0]
    T = traj.horizon
    n = traj.states.shape[1]
    states = np.empty((nA, T + 1, n))
    controls = np.empty((nA, T, traj.controls.shape[1]))
    x = np.broadcast_to(traj.states[0], (nA, n)).copy()
    states[:, 0] = x
    with np.errstate(all="ignore"):
        for t in range(T):
            u = traj.controls[t] + alphas[:, None] * gains.k[t] + (x - traj.states[t]) @ gains.K[t].T
            u = env.clamp(u)
            controls[:, t] = u
            x = step(x, u)
            states[:, t + 1] = x
        stage, term = _costs(env, states, controls)
        totals = stage.sum(axis=-1) + term
    totals = np.where(np.isfinite(totals) & np.all(np.isfinite(states), axis=(1, 2)), totals, np.inf)
    return states, controls, stage, term, totals


def forward_pass(env: Environment, traj: Trajectory, gains: Gains, alpha: float,
                 step=None) -> Trajectory:
    """Closed-loop rollout ``u = clamp(u_hat + alpha k + K (x - x_hat))``."""
    states, controls, stage, term, totals = _forward_batch(env, traj, gains, [alpha], step)
    if not np.isfinite(totals[0]):
        raise DivergedRollout("rollout produced non-finite states or cost")
    return Trajectory(states[0], controls[0], stage[0], float(term[0]), float(totals[0]))


@dataclass
class SolveOptions:
    max_iterations: int = 50
    delta: float = 1e-4
    noise: Optional[NoiseModel] = None  # applied to linearization evaluations
    rollout_noise: Optional[NoiseModel] = None  # applied to cost-accounting rollouts
    tolerance: float = 1e-6
    seed: int = 0
    initial_regularization: float = REG_FLOOR  # pure Newton step; exact on LQR problems
    vectorized_dynamics: bool = True

    def __post_init__(self):
        if self.max_iterations < 1 or self.delta <= 0:
            raise ValueError("max_iterations must be >= 1 and delta > 0")


@dataclass
class SolveReport:
    cost_per_iteration: list
    iterations: int
    converged: bool
    wall_nanos_total: int
    wall_nanos_linearization: int
    evaluations: int
    estimator_descriptor: dict
    initial_cost: float
    accepted: list = field(default_factory=list)
    regularization: list = field(default_factory=list)
    evaluations_per_iteration: list = field(default_factory=list)  # cumulative
    linearization_noise: bool = False
    rollout_noise: bool = False

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def _rollout_step(env: Environment, noise: NoiseModel | None):
    if noise is None:
        return env.step

    def step(x, u):
        return noise.perturb_values(env.step(x, u))

    return step


def solve(env: Environment, initial_controls=None, estimator: EstimatorConfig | None = None,
          options: SolveOptions | None = None):
    """Run iLQR; returns ``(SolveReport, Trajectory)``.

    Each iteration linearizes with a fresh direction draw, runs the backward
    pass (raising regularization x10 until ``Q_uu`` is positive definite),
    evaluates every line-search scale ``1, 1/2, ..., 2**-10`` and keeps the
    largest that passes an Armijo test against the expected reduction.
    Regularization is divided by 2 on success (floor 1e-6) and multiplied
    by 10 on failure. Stops after ``max_iterations`` or once the relative
    improvement stays below ``tolerance`` for 3 consecutive iterations.
    """
    options = SolveOptions() if options is None else options
    estimator = EstimatorConfig() if estimator is None else estimator
    if estimator.seed != options.seed:
        estimator = EstimatorConfig(**{**estimator.__dict__, "seed": options.seed})
    t_start = time.perf_counter_ns()
    step = _rollout_step(env, options.rollout_noise)
    controls = np.zeros((env.horizon, env.m)) if initial_controls is None else initial_controls
    traj = rollout(env, controls, step=step)
    initial_cost = traj.total_cost
    dyn = noisy_dynamics(env, options.noise, vectorized=options.vectorized_dynamics)
    mu = options.initial_regularization
    costs, accepted, regs, evals = [], [], [], []
    lin_nanos = 0
    evaluations = 0
    small = 0
    converged = False
    for it in range(options.max_iterations):
        lin = linearize(env, traj, estimator, options.delta, dynamics=dyn, draw=it)
        lin_nanos += lin.wall_nanos
        evaluations += lin.evaluations
        stage = env.stage_cost(traj.states[:-1], traj.controls)
        term = env.terminal_cost(traj.states[-1])
        gains = None
        while mu <= REG_CEIL:
            try:
                gains = backward_pass(lin, stage, term, mu, env.limits, traj.controls)
                break
            except NotPositiveDefinite:
                mu *= 10.0
        ok = False
        if gains is not None:
            states, ctrls, stg, trm, totals = _forward_batch(env, traj, gains, LINE_SEARCH, step)
            for i, alpha in enumerate(LINE_SEARCH):
                actual = traj.total_cost - totals[i]
                expected = gains.expected_reduction(alpha)
                if np.isfinite(totals[i]) and actual > 0 and actual >= ARMIJO * expected:
                    new = Trajectory(states[i], ctrls[i], stg[i], float(trm[i]), float(totals[i]))
                    assert new.check_consistency(env) or options.rollout_noise is not None
                    ok = True
                    break
        prev = traj.total_cost
        if ok:
            traj = new
            mu = max(mu / 2.0, REG_FLOOR)
        else:
            mu = min(mu * 10.0, REG_CEIL)
        costs.append(traj.total_cost)
        accepted.append(ok)
        regs.append(mu)
        evals.append(evaluations)
        rel = (prev - traj.total_cost) / max(abs(prev), 1e-300)
        small = small + 1 if rel < options.tolerance else 0
        if small >= 3:
            converged = True
            break
    report = SolveReport(
        cost_per_iteration=[float(c) for c in costs],
        iterations=len(costs),
        converged=converged,
        wall_nanos_total=time.perf_counter_ns() - t_start,
        wall_nanos_linearization=lin_nanos,
        evaluations=evaluations,
        estimator_descriptor=estimator.to_dict(),
        initial_cost=float(initial_cost),
        accepted=accepted,
        regularization=regs,
        evaluations_per_iteration=evals,
        linearization_noise=options.noise is not None and options.noise.scale > 0,
        rollout_noise=options.rollout_noise is not None,
    )
    return report, traj
