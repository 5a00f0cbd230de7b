"""Discrete-time control tasks with analytic cost expansions.

Step functions are batched: states have shape ``(..., n)`` and controls
``(..., m)``. Controls are clamped to the environment limits before
integration, so every step function is total on finite input.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import ClassVar

import numpy as np

from .estimators import Blackbox, NoiseModel

__all__ = [
    "Acrobot",
    "CarParking",
    "Cartpole",
    "CostExpansion",
    "Environment",
    "LinearQuadratic",
    "acrobot_step",
    "car_step",
    "cartpole_step",
    "load_environment",
    "make_environment",
    "noisy_dynamics",
    "stage_cost",
    "terminal_cost",
    "wrapped_error",
]


@dataclass
class CostExpansion:
    """Value and derivatives of a cost term; arrays carry a leading batch axis when batched."""

    value: np.ndarray
    gradient_x: np.ndarray
    gradient_u: np.ndarray
    hessian_xx: np.ndarray
    hessian_uu: np.ndarray
    hessian_ux: np.ndarray


def _sabs(x, p):
    """Pseudo-Huber ``sqrt(x^2 + p^2) - p`` with first and second derivatives."""
    r = np.sqrt(x * x + p * p)
    return r - p, x / r, p * p / r**3


def _diag_batch(diag: np.ndarray) -> np.ndarray:
    k = diag.shape[-1]
    out = np.zeros(diag.shape + (k,))
    idx = np.arange(k)
    out[..., idx, idx] = diag
    return out


# -- car ---------------------------------------------------------------------

def car_step(x, u, dt=0.03, wheelbase=2.0, omega_limit=0.5, accel_limit=2.0):
    """Kinematic car with exact rolling geometry.

    State ``(p_x, p_y, theta, v)``: midpoint of the back axle, heading and
    front-wheel speed. Control ``(omega, a)``: front-wheel angle and
    acceleration. The front wheel rolls ``f = v dt`` at angle ``omega``; the
    back wheel follows by ``b`` along the current heading.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.minimum(np.maximum(u[..., 0], -omega_limit), omega_limit)
    a = np.minimum(np.maximum(u[..., 1], -accel_limit), accel_limit)
    theta = x[..., 2]
    f = dt * x[..., 3]
    fs = f * np.sin(w)
    b = wheelbase + f * np.cos(w) - np.sqrt(np.maximum(wheelbase**2 - fs * fs, 0.0))
    out = x.copy()
    out[..., 0] += b * np.cos(theta)
    out[..., 1] += b * np.sin(theta)
    out[..., 2] += np.arcsin(np.minimum(np.maximum(fs / wheelbase, -1.0), 1.0))
    out[..., 3] += dt * a
    return out


# -- cartpole ----------------------------------------------------------------

def _cartpole_accel(x, force, cart_mass, pole_mass, half_length, gravity):
    theta, xdot, thdot = x[..., 1], x[..., 2], x[..., 3]
    total = cart_mass + pole_mass
    s, c = np.sin(theta), np.cos(theta)
    temp = (force + pole_mass * half_length * thdot**2 * s) / total
    thacc = (gravity * s - c * temp) / (half_length * (4.0 / 3.0 - pole_mass * c**2 / total))
    xacc = temp - pole_mass * half_length * thacc * c / total
    return xacc, thacc


def cartpole_step(x, u, dt=0.02, cart_mass=1.0, pole_mass=0.1, half_length=0.5,
                  gravity=9.81, force_limit=10.0):
    """Cart-pole, ``theta = 0`` upright; state ``(x, theta, xdot, thetadot)``.

    Semi-implicit Euler: velocities first, positions with the new velocities.
    """
    x = np.asarray(x, dtype=float)
    force = np.clip(np.asarray(u, dtype=float)[..., 0], -force_limit, force_limit)
    xacc, thacc = _cartpole_accel(x, force, cart_mass, pole_mass, half_length, gravity)
    xdot = x[..., 2] + dt * xacc
    thdot = x[..., 3] + dt * thacc
    return np.stack([x[..., 0] + dt * xdot, x[..., 1] + dt * thdot, xdot, thdot], axis=-1)


def cartpole_energy(x, cart_mass=1.0, pole_mass=0.1, half_length=0.5, gravity=9.81):
    """Total mechanical energy of the cart-pole (uniform rod pole)."""
    x = np.asarray(x, dtype=float)
    theta, xdot, thdot = x[..., 1], x[..., 2], x[..., 3]
    ml = pole_mass * half_length
    kin = (0.5 * (cart_mass + pole_mass) * xdot**2 + ml * xdot * thdot * np.cos(theta)
           + 0.5 * (4.0 / 3.0) * pole_mass * half_length**2 * thdot**2)
    return kin + ml * gravity * np.cos(theta)


# -- acrobot -----------------------------------------------------------------

_ACRO = dict(m1=1.0, m2=1.0, l1=1.0, lc1=0.5, lc2=0.5, i1=1.0, i2=1.0, g=9.81)


def _acrobot_terms(q1, q2, p=_ACRO):
    d1 = (p["m1"] * p["lc1"] ** 2
          + p["m2"] * (p["l1"] ** 2 + p["lc2"] ** 2 + 2 * p["l1"] * p["lc2"] * np.cos(q2))
          + p["i1"] + p["i2"])
    d2 = p["m2"] * (p["lc2"] ** 2 + p["l1"] * p["lc2"] * np.cos(q2)) + p["i2"]
    d22 = p["m2"] * p["lc2"] ** 2 + p["i2"]
    return d1, d2, d22


def acrobot_accel(x, torque, p=_ACRO):
    """Joint accelerations of the two-link acrobot (torque on the elbow)."""
    q1, q2, dq1, dq2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    m2, l1, lc1, lc2, g = p["m2"], p["l1"], p["lc1"], p["lc2"], p["g"]
    d1, d2, d22 = _acrobot_terms(q1, q2, p)
    phi2 = m2 * lc2 * g * np.sin(q1 + q2)
    phi1 = (-m2 * l1 * lc2 * dq2**2 * np.sin(q2)
            - 2 * m2 * l1 * lc2 * dq2 * dq1 * np.sin(q2)
            + (p["m1"] * lc1 + m2 * l1) * g * np.sin(q1) + phi2)
    ddq2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dq1**2 * np.sin(q2) - phi2) / (
        d22 - d2**2 / d1)
    ddq1 = -(d2 * ddq2 + phi1) / d1
    return ddq1, ddq2


def acrobot_step(x, u, dt=0.02, torque_limit=5.0):
    """Acrobot, ``q1 = 0`` hanging down, ``q2`` relative; semi-implicit Euler."""
    x = np.asarray(x, dtype=float)
    torque = np.clip(np.asarray(u, dtype=float)[..., 0], -torque_limit, torque_limit)
    ddq1, ddq2 = acrobot_accel(x, torque)
    dq1 = x[..., 2] + dt * ddq1
    dq2 = x[..., 3] + dt * ddq2
    return np.stack([x[..., 0] + dt * dq1, x[..., 1] + dt * dq2, dq1, dq2], axis=-1)


def acrobot_energy(x, p=_ACRO):
    x = np.asarray(x, dtype=float)
    q1, q2, dq1, dq2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    d1, d2, d22 = _acrobot_terms(q1, q2, p)
    kin = 0.5 * (d1 * dq1**2 + 2 * d2 * dq1 * dq2 + d22 * dq2**2)
    pot = -p["g"] * (p["m1"] * p["lc1"] * np.cos(q1)
                     + p["m2"] * (p["l1"] * np.cos(q1) + p["lc2"] * np.cos(q1 + q2)))
    return kin + pot


# -- environments ------------------------------------------------------------

@dataclass
class Environment:
    """A control task: horizon, step size, start/goal, limits and cost weights."""

    name: ClassVar[str] = "environment"
    state_dim: ClassVar[int] = 0
    control_dim: ClassVar[int] = 0

    horizon: int = 1
    dt: float = 0.01
    start_state: tuple = ()
    goal_state: tuple = ()
    control_limits: tuple = ()
    cost_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt > 0")
        if len(self.start_state) != self.state_dim or len(self.goal_state) != self.state_dim:
            raise ValueError("start/goal do not match the state dimension")
        if len(self.control_limits) != self.control_dim:
            raise ValueError("one control limit per control coordinate")

    @property
    def n(self) -> int:
        return self.state_dim

    @property
    def m(self) -> int:
        return self.control_dim

    @property
    def limits(self) -> np.ndarray:
        return np.asarray(self.control_limits, dtype=float)

    def clamp(self, u) -> np.ndarray:
        lim = self.limits
        return np.clip(u, -lim, lim)

    def step(self, x, u) -> np.ndarray:
        raise NotImplementedError

    def stage_cost(self, x, u, t=None) -> CostExpansion:
        raise NotImplementedError

    def terminal_cost(self, x) -> CostExpansion:
        raise NotImplementedError

    def to_config(self) -> dict:
        d = asdict(self)
        d["name"] = self.name
        return d


@dataclass
class CarParking(Environment):
    name: ClassVar[str] = "car"
    state_dim: ClassVar[int] = 4
    control_dim: ClassVar[int] = 2

    horizon: int = 500
    dt: float = 0.03
    start_state: tuple = (1.0, 1.0, 3 * np.pi / 2, 0.0)
    goal_state: tuple = (0.0, 0.0, 0.0, 0.0)
    control_limits: tuple = (0.5, 2.0)
    wheelbase: float = 2.0
    periodic_coords: ClassVar[tuple] = (2,)
    cost_params: dict = field(default_factory=lambda: {
        "control": [1e-2, 1e-2],
        "position": 1e-3,
        "position_scale": 0.1,
        "final": 50.0,
    })

    def step(self, x, u):
        lim = self.control_limits
        return car_step(x, u, self.dt, self.wheelbase, lim[0], lim[1])

    def stage_cost(self, x, u, t=None):
        """``dt * sum(c_i u_i^2)`` plus a small pseudo-Huber pull toward the goal position."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        cp = self.cost_params
        cu = self.dt * np.asarray(cp["control"], dtype=float)
        e = x[..., :2] - np.asarray(self.goal_state)[:2]
        y, dy, ddy = _sabs(e, cp["position_scale"])
        w = cp["position"]
        gx = np.zeros(x.shape)
        gx[..., :2] = w * dy
        hx = np.zeros(x.shape)
        hx[..., :2] = w * ddy
        return CostExpansion(
            value=np.sum(cu * u * u, axis=-1) + w * np.sum(y, axis=-1),
            gradient_x=gx,
            gradient_u=2 * cu * u,
            hessian_xx=_diag_batch(hx),
            hessian_uu=_diag_batch(np.broadcast_to(2 * cu, u.shape)),
            hessian_ux=np.zeros(u.shape + (x.shape[-1],)),
        )

    def terminal_cost(self, x):
        """``w (e_x^2 + e_y^2 + sin^2 e_th + 2 (1 - cos e_th) + e_v^2)``; heading is periodic."""
        x = np.asarray(x, dtype=float)
        w = float(self.cost_params["final"])
        e = x - np.asarray(self.goal_state)
        th = e[..., 2]
        s, c = np.sin(th), np.cos(th)
        val = e[..., 0] ** 2 + e[..., 1] ** 2 + s * s + 2 * (1 - c) + e[..., 3] ** 2
        grad = np.stack([2 * e[..., 0], 2 * e[..., 1], 2 * s * c + 2 * s, 2 * e[..., 3]], axis=-1)
        two = np.full(th.shape, 2.0)
        hess = np.stack([two, two, 2 * np.cos(2 * th) + 2 * c, two], axis=-1)
        return CostExpansion(
            value=w * val,
            gradient_x=w * grad,
            gradient_u=np.zeros(x.shape[:-1] + (self.m,)),
            hessian_xx=_diag_batch(w * hess),
            hessian_uu=np.zeros(x.shape[:-1] + (self.m, self.m)),
            hessian_ux=np.zeros(x.shape[:-1] + (self.m, self.n)),
        )


def wrapped_error(env: Environment, x) -> np.ndarray:
    """``x - goal`` with periodic coordinates wrapped into ``[-pi, pi)``."""
    e = np.asarray(x, dtype=float) - np.asarray(env.goal_state)
    for i in getattr(env, "periodic_coords", ()):
        e[..., i] = (e[..., i] + np.pi) % (2 * np.pi) - np.pi
    return e


class _AngleQuadratic:
    """Quadratic cost with selected coordinates entering as ``2 (1 - cos e)``."""

    angle_coords: tuple = ()

    def _state_terms(self, x, weights):
        e = np.asarray(x, dtype=float) - np.asarray(self.goal_state)
        w = np.asarray(weights, dtype=float)
        val = w * e * e
        grad = 2 * w * e
        hess = np.broadcast_to(2 * w, e.shape).copy()
        for i in self.angle_coords:
            ei = e[..., i]
            val[..., i] = 2 * w[i] * (1 - np.cos(ei))
            grad[..., i] = 2 * w[i] * np.sin(ei)
            hess[..., i] = 2 * w[i] * np.cos(ei)
        return np.sum(val, axis=-1), grad, _diag_batch(hess)

    def stage_cost(self, x, u, t=None):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        r = np.asarray(self.cost_params["control"], dtype=float)
        v, gx, hx = self._state_terms(x, self.cost_params["state"])
        return CostExpansion(
            value=v + np.sum(r * u * u, axis=-1),
            gradient_x=gx,
            gradient_u=2 * r * u,
            hessian_xx=hx,
            hessian_uu=_diag_batch(np.broadcast_to(2 * r, u.shape)),
            hessian_ux=np.zeros(u.shape + (x.shape[-1],)),
        )

    def terminal_cost(self, x):
        x = np.asarray(x, dtype=float)
        v, gx, hx = self._state_terms(x, self.cost_params["final"])
        return CostExpansion(
            value=v,
            gradient_x=gx,
            gradient_u=np.zeros(x.shape[:-1] + (self.m,)),
            hessian_xx=hx,
            hessian_uu=np.zeros(x.shape[:-1] + (self.m, self.m)),
            hessian_ux=np.zeros(x.shape[:-1] + (self.m, self.n)),
        )


@dataclass
class Cartpole(_AngleQuadratic, Environment):
    name: ClassVar[str] = "cartpole"
    state_dim: ClassVar[int] = 4
    control_dim: ClassVar[int] = 1
    angle_coords: ClassVar[tuple] = (1,)
    periodic_coords: ClassVar[tuple] = (1,)

    horizon: int = 100
    dt: float = 0.02
    start_state: tuple = (0.0, 0.6, 0.0, 0.0)
    goal_state: tuple = (0.0, 0.0, 0.0, 0.0)
    control_limits: tuple = (10.0,)
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.81
    cost_params: dict = field(default_factory=lambda: {
        "state": [0.1, 1.0, 0.01, 0.01],
        "control": [1e-3],
        "final": [10.0, 100.0, 10.0, 10.0],
    })

    def step(self, x, u):
        return cartpole_step(x, u, self.dt, self.cart_mass, self.pole_mass,
                             self.half_length, self.gravity, self.control_limits[0])


@dataclass
class Acrobot(_AngleQuadratic, Environment):
    name: ClassVar[str] = "acrobot"
    state_dim: ClassVar[int] = 4
    control_dim: ClassVar[int] = 1
    angle_coords: ClassVar[tuple] = ()

    horizon: int = 150
    dt: float = 0.02
    start_state: tuple = (np.pi - 0.05, 0.05, 0.0, 0.0)
    goal_state: tuple = (np.pi, 0.0, 0.0, 0.0)
    control_limits: tuple = (5.0,)
    cost_params: dict = field(default_factory=lambda: {
        "state": [1.0, 1.0, 0.1, 0.1],
        "control": [1e-2],
        "final": [100.0, 100.0, 10.0, 10.0],
    })

    def step(self, x, u):
        return acrobot_step(x, u, self.dt, self.control_limits[0])


@dataclass
class LinearQuadratic(Environment):
    """``x' = A x + B u`` with cost ``x'Qx + u'Ru`` and terminal ``x'Q_f x``."""

    name: ClassVar[str] = "lqr"
    state_dim: ClassVar[int] = 0
    control_dim: ClassVar[int] = 0

    A: np.ndarray = None
    B: np.ndarray = None
    Q: np.ndarray = None
    R: np.ndarray = None
    Qf: np.ndarray = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.Qf = np.asarray(self.Qf, dtype=float)
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt > 0")
        if not self.control_limits:
            self.control_limits = (np.inf,) * self.B.shape[1]
        if not self.goal_state:
            self.goal_state = (0.0,) * self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def step(self, x, u):
        u = self.clamp(u)
        return np.asarray(x, dtype=float) @ self.A.T + np.asarray(u, dtype=float) @ self.B.T

    def stage_cost(self, x, u, t=None):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        batch = x.shape[:-1]
        return CostExpansion(
            value=np.einsum("...i,ij,...j->...", x, self.Q, x)
            + np.einsum("...i,ij,...j->...", u, self.R, u),
            gradient_x=2 * x @ self.Q,
            gradient_u=2 * u @ self.R,
            hessian_xx=np.broadcast_to(2 * self.Q, batch + self.Q.shape).copy(),
            hessian_uu=np.broadcast_to(2 * self.R, batch + self.R.shape).copy(),
            hessian_ux=np.zeros(batch + (self.m, self.n)),
        )

    def terminal_cost(self, x):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        return CostExpansion(
            value=np.einsum("...i,ij,...j->...", x, self.Qf, x),
            gradient_x=2 * x @ self.Qf,
            gradient_u=np.zeros(batch + (self.m,)),
            hessian_xx=np.broadcast_to(2 * self.Qf, batch + self.Qf.shape).copy(),
            hessian_uu=np.zeros(batch + (self.m, self.m)),
            hessian_ux=np.zeros(batch + (self.m, self.n)),
        )

    def to_config(self) -> dict:
        d = super().to_config()
        for k in ("A", "B", "Q", "R", "Qf"):
            d[k] = getattr(self, k).tolist()
        return d


def stage_cost(env: Environment, x, u, t=None) -> CostExpansion:
    return env.stage_cost(x, u, t)


def terminal_cost(env: Environment, x) -> CostExpansion:
    return env.terminal_cost(x)


_REGISTRY = {cls.name: cls for cls in (CarParking, Cartpole, Acrobot, LinearQuadratic)}


def make_environment(name: str, **overrides) -> Environment:
    """Build a named environment, overriding any documented field."""
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(_REGISTRY)}")
    for key in ("start_state", "goal_state", "control_limits"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    if "cost_params" in overrides:
        merged = cls().cost_params if cls is not LinearQuadratic else {}
        merged.update(overrides["cost_params"])
        overrides["cost_params"] = merged
    return cls(**overrides)


def load_environment(source) -> Environment:
    """Load an environment from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        cfg = dict(source)
    else:
        with open(source) as fh:
            cfg = json.load(fh)
    name = cfg.pop("name")
    return make_environment(name, **cfg)


def noisy_dynamics(env: Environment, noise: NoiseModel | None = None,
                   vectorized: bool = True) -> Blackbox:
    """Blackbox over concatenated ``(x, u)`` adding noise to every output coordinate.

    With ``noise=None`` the outputs are bit-identical to ``env.step``.
    ``vectorized=False`` evaluates one point per call, the way an external
    simulator would be driven.
    """
    noise = noise if noise is not None else NoiseModel()
    n = env.n

    def fn(xu):
        xu = np.asarray(xu, dtype=float)
        return noise.perturb_values(env.step(xu[..., :n], xu[..., n:]))

    bb = Blackbox(fn, n + env.m, vectorized=vectorized)
    bb.noise = noise
    return bb
