"""Bound-constrained L-BFGS driven by finite-difference gradients.

The optimizer wraps projected L-BFGS in an implicit-filtering outer loop
that shrinks the difference step ``delta`` level by level. Gradients come
from any :class:`~spinfd.estimators.EstimatorConfig` (deterministic
Hadamard by default) or from an analytic callable.

The module also holds the sinusoidal gait generator used for legged
locomotion policies and the reward combinations scored on its episodes.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .estimators import Blackbox, EstimatorConfig, NoiseModel, estimate_with

__all__ = [
    "BoxBounds",
    "EpisodeMetrics",
    "GaitParams",
    "MultiStartReport",
    "OptimizeOptions",
    "OptimizeReport",
    "default_delta_schedule",
    "gait_components",
    "gait_signals",
    "minimize",
    "motor_angles",
    "multi_start",
    "reward_running",
    "reward_turning",
]

TWO_PI = 2.0 * np.pi


# -- boxes -------------------------------------------------------------------

@dataclass(frozen=True)
class BoxBounds:
    """Per-coordinate ``lower <= x <= upper``; entries may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __eq__(self, other):
        return (isinstance(other, BoxBounds) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("bounds need lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, d: int) -> "BoxBounds":
        return cls(np.full(d, -np.inf), np.full(d, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def width_scale(self) -> float:
        """Mean width over finite coordinates (1.0 when none are finite)."""
        w = self.upper - self.lower
        w = w[np.isfinite(w) & (w > 0)]
        return float(w.mean()) if w.size else 1.0

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        if not self.is_finite:
            raise ValueError("uniform sampling needs finite bounds")
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BoxBounds":
        return cls(np.asarray(d["lower"], dtype=float), np.asarray(d["upper"], dtype=float))


# -- gait --------------------------------------------------------------------

# Neutral motor angle: with S = V = 0 both motors sit at a right angle, i.e. the
# leg points straight down at half extension.
MOTOR_OFFSET = np.pi / 2


@dataclass(frozen=True)
class GaitParams:
    """Open-loop sinusoidal gait: amplitudes, frequency and phase offsets.

    ``v`` is in radians per timestep. ``phi_leg2..4`` are offsets of legs
    2 to 4 relative to leg 1.
    """

    A_v: float = 0.3
    A_s: float = 0.3
    v: float = 0.06
    phi_v: float = 0.0
    phi_leg2: float = np.pi
    phi_leg3: float = np.pi
    phi_leg4: float = 0.0

    FIELDS = ("A_v", "A_s", "v", "phi_v", "phi_leg2", "phi_leg3", "phi_leg4")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in self.FIELDS], dtype=float)

    @classmethod
    def from_array(cls, x) -> "GaitParams":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != len(cls.FIELDS):
            raise ValueError(f"expected {len(cls.FIELDS)} gait parameters, got {x.shape[0]}")
        return cls(*map(float, x))

    @classmethod
    def bounds(cls) -> BoxBounds:
        return BoxBounds(np.array([0.0, 0.0, 0.04, 0.0, 0.0, 0.0, 0.0]),
                         np.array([0.9, 0.9, 0.08, TWO_PI, TWO_PI, TWO_PI, TWO_PI]))

    def is_valid(self) -> bool:
        return self.bounds().contains(self.as_array())

    @property
    def leg_phases(self) -> np.ndarray:
        return np.array([0.0, self.phi_leg2, self.phi_leg3, self.phi_leg4])

    @property
    def period(self) -> float:
        return TWO_PI / self.v

    def to_dict(self) -> dict:
        return {f: float(getattr(self, f)) for f in self.FIELDS}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GaitParams":
        return cls(**{f: float(d[f]) for f in cls.FIELDS if f in d})


def gait_components(params: GaitParams, t):
    """Swing ``S`` and extension ``V`` of the four legs at timestep ``t``.

    Returns two arrays of shape ``t.shape + (4,)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("timestep must be non-negative")
    phase = t[..., None] * params.v + params.leg_phases
    return params.A_s * np.sin(phase), params.A_v * np.sin(phase + params.phi_v)


def motor_angles(swing, extension, offset: float = MOTOR_OFFSET):
    """Symmetric-leg map from (swing, extension) to the two motor angles."""
    swing = np.asarray(swing, dtype=float)
    extension = np.asarray(extension, dtype=float)
    return swing + extension + offset, -swing + extension + offset


def gait_signals(params: GaitParams, t, offset: float = MOTOR_OFFSET) -> np.ndarray:
    """Eight motor angles ``[leg1_m1, leg1_m2, ..., leg4_m2]`` at timestep ``t``."""
    S, V = gait_components(params, t)
    m1, m2 = motor_angles(S, V, offset)
    return np.stack([m1, m2], axis=-1).reshape(S.shape[:-1] + (8,))


# -- rewards -----------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeMetrics:
    """Summary of one locomotion episode.

    ``drift`` and ``shake`` are sideways and vertical displacements; the
    rewards penalize their absolute values.
    """

    d_forward: float = 0.0
    E: float = 0.0
    drift: float = 0.0
    shake: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        vals = np.array([self.d_forward, self.E, self.drift, self.shake, self.r], dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("episode metrics must be finite")
        if self.E < 0:
            raise ValueError("energy must be non-negative")


def _coeffs(coeffs: Mapping | None, names: Sequence[str], kwargs: dict) -> list:
    merged = dict(coeffs or {})
    merged.update(kwargs)
    unknown = set(merged) - set(names)
    if unknown:
        raise ValueError(f"unknown reward coefficients {sorted(unknown)}")
    out = [float(merged.get(k, 1.0)) for k in names]
    if any(c < 0 for c in out):
        raise ValueError("reward coefficients must be non-negative")
    return out


def reward_running(metrics: EpisodeMetrics, coeffs: Mapping | None = None, **kwargs) -> float:
    """``alpha d_forward - beta E - gamma |drift| - xi |shake|``.

    Missing coefficients default to 1.

    >>> reward_running(EpisodeMetrics(drift=0.5), gamma=1.0)
    -0.5
    """
    alpha, beta, gamma, xi = _coeffs(coeffs, ("alpha", "beta", "gamma", "xi"), kwargs)
    m = metrics
    return float(alpha * m.d_forward - beta * m.E - gamma * abs(m.drift) - xi * abs(m.shake))


def reward_turning(metrics: EpisodeMetrics, coeffs: Mapping | None = None, **kwargs) -> float:
    """``rho r - beta E - xi |shake|``; missing coefficients default to 1."""
    rho, beta, xi = _coeffs(coeffs, ("rho", "beta", "xi"), kwargs)
    m = metrics
    return float(rho * m.r - beta * m.E - xi * abs(m.shake))


# -- optimizer ---------------------------------------------------------------

def default_delta_schedule(bounds: BoxBounds, levels: int = 8) -> list:
    """``delta_k = 0.1 * width * 2**-k`` for ``k = 0..levels-1``."""
    d0 = 0.1 * bounds.width_scale()
    return [d0 * 2.0**-k for k in range(levels)]


@dataclass
class OptimizeOptions:
    memory: int = 10
    max_iterations: int = 50  # per delta level
    delta_schedule: Optional[Sequence[float]] = None
    levels: int = 8
    # Advance to the next level once ||projected gradient||_inf <= advance * delta.
    advance: float = 1.0
    tolerance: float = 1e-12
    max_evaluations: Optional[int] = None
    seed: int = 0
    noise: Optional[NoiseModel] = None
    gradient: Optional[Callable] = None  # analytic gradient; bypasses the estimator
    gtol: float = 1e-10  # projected-gradient stop for analytic gradients
    armijo: float = 1e-4
    max_backtracks: int = 20

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iterations < 1 or self.levels < 1:
            raise ValueError("max_iterations and levels must be >= 1")
        if self.delta_schedule is not None:
            ds = np.asarray(self.delta_schedule, dtype=float)
            if ds.ndim != 1 or ds.size == 0 or np.any(ds <= 0) or np.any(np.diff(ds) >= 0):
                raise ValueError("delta_schedule must be a strictly decreasing positive sequence")

    def schedule(self, bounds: BoxBounds) -> list:
        if self.gradient is not None:
            return [self.gtol]  # a single level; delta only sets the stop threshold
        if self.delta_schedule is not None:
            return [float(v) for v in self.delta_schedule]
        return default_delta_schedule(bounds, self.levels)


@dataclass
class OptimizeReport:
    best_point: list
    best_value: float
    trace: list  # objective at each accepted iterate
    level_best: list  # running best value at the end of each delta level
    level_points: list  # best point at the end of each level
    level_evaluations: list  # cumulative evaluations at the end of each level
    deltas: list
    evaluations: int
    iterations: int
    stalled: bool
    start_point: list
    estimator_descriptor: dict
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OptimizeReport":
        return cls(**json.loads(text))


class _Memory:
    """L-BFGS curvature pairs with the two-loop recursion."""

    def __init__(self, size: int):
        self.size = size
        self.s: list = []
        self.y: list = []

    def clear(self):
        self.s.clear()
        self.y.clear()

    def __len__(self):
        return len(self.s)

    def push(self, s, y) -> bool:
        sy = float(s @ y)
        if not sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        self.s.append(s)
        self.y.append(y)
        if len(self.s) > self.size:
            self.s.pop(0)
            self.y.pop(0)
        return True

    def apply(self, g) -> np.ndarray:
        """Approximate inverse-Hessian product ``H g``."""
        q = np.array(g, dtype=float)
        alphas = []
        for s, y in zip(reversed(self.s), reversed(self.y)):
            a = (s @ q) / (s @ y)
            alphas.append(a)
            q -= a * y
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= (s @ y) / (y @ y)
        for (s, y), a in zip(zip(self.s, self.y), reversed(alphas)):
            b = (y @ q) / (s @ y)
            q += (a - b) * s
        return q


def _active(x, g, bounds: BoxBounds) -> np.ndarray:
    return ((x <= bounds.lower) & (g > 0)) | ((x >= bounds.upper) & (g < 0))


def minimize(bb: Blackbox, x0, bounds: BoxBounds,
             estimator: EstimatorConfig | None = None,
             options: OptimizeOptions | None = None) -> OptimizeReport:
    """Projected L-BFGS inside an implicit-filtering ``delta`` schedule.

    With an analytic ``options.gradient`` there is a single level that stops
    once the projected gradient is below ``options.gtol``. Otherwise, for
    every level ``delta`` the inner loop estimates the gradient with
    step ``delta``, takes an L-BFGS step restricted to the free variables,
    and backtracks along the projected path until an Armijo test passes.
    The level ends when the projected gradient drops below
    ``advance * delta``, when backtracking fails, or after
    ``max_iterations``. Every evaluated point is feasible; the best value
    seen is returned.
    """
    options = OptimizeOptions() if options is None else options
    estimator = EstimatorConfig("hadamard") if estimator is None else estimator
    if estimator.seed != options.seed:
        estimator = replace(estimator, seed=options.seed)
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != bounds.dim or bb.dim != bounds.dim:
        raise ValueError("x0, bounds and blackbox dimensions differ")
    if not bounds.contains(x):
        raise ValueError("x0 must lie within bounds")
    noise = options.noise if options.noise is not None else NoiseModel()
    schedule = options.schedule(bounds)
    budget = options.max_evaluations
    start_evals = bb.eval_count

    def used() -> int:
        return bb.eval_count - start_evals

    def f(point) -> float:
        return float(noise.perturb_values(np.atleast_1d(bb.evaluate(point[None, :])))[0])

    draw = 0

    def grad(point, delta):
        nonlocal draw
        draw += 1
        if options.gradient is not None:
            return np.asarray(options.gradient(point), dtype=float), f(point)
        est = estimate_with(estimator, bb, point, delta, noise=noise, draw=draw)
        return est.gradient, float(np.asarray(est.base_value).reshape(-1)[0])

    best_x, best_f = x.copy(), np.inf
    trace, level_best, level_points, level_evals = [], [], [], []
    iterations = 0
    stalled = False
    mem = _Memory(options.memory)
    out_of_budget = False

    def seen(point, value):
        nonlocal best_x, best_f
        if value < best_f:
            best_x, best_f = point.copy(), value

    for delta in schedule:
        if out_of_budget:
            level_best.append(float(best_f))
            level_points.append(best_x.tolist())
            level_evals.append(used())
            continue
        g, fx = grad(x, delta)
        seen(x, fx)
        mem.clear()  # curvature pairs from a coarser delta are stale
        for _ in range(options.max_iterations):
            if budget is not None and used() >= budget:
                out_of_budget = True
                break
            pg = x - bounds.project(x - g)
            threshold = delta if options.gradient is not None else options.advance * delta
            if np.max(np.abs(pg), initial=0.0) <= threshold:
                break
            free = ~_active(x, g, bounds)
            gf = np.where(free, g, 0.0)
            p = -mem.apply(gf) if len(mem) else -gf
            p = np.where(free, p, 0.0)
            if not gf @ p < 0:
                mem.clear()
                p = -gf
            if not len(mem):
                # first step of a level: cap the move at one delta-scaled box width
                cap = max(bounds.width_scale(), delta)
                p *= min(1.0, cap / max(np.max(np.abs(p)), 1e-300))
            t = 1.0
            accepted = False
            for _ in range(options.max_backtracks):
                cand = bounds.project(x + t * p)
                step = cand - x
                if not np.any(step):
                    break
                fc = f(cand)
                seen(cand, fc)
                if fc <= fx + options.armijo * (g @ step):
                    accepted = True
                    break
                t *= 0.5
            iterations += 1
            if not accepted:
                stalled = True
                break
            g_new, fx_new = grad(cand, delta)
            seen(cand, fx_new)
            mem.push(cand - x, g_new - g)
            improvement = fx - fx_new
            x, g, fx = cand, g_new, fx_new
            trace.append(float(fx))
            if abs(improvement) <= options.tolerance * max(1.0, abs(fx)):
                break
        level_best.append(float(best_f))
        level_points.append(best_x.tolist())
        level_evals.append(used())

    return OptimizeReport(
        best_point=best_x.tolist(),
        best_value=float(best_f),
        trace=trace,
        level_best=level_best,
        level_points=level_points,
        level_evaluations=level_evals,
        deltas=[float(v) for v in schedule],
        evaluations=used(),
        iterations=iterations,
        stalled=stalled,
        start_point=np.asarray(x0, dtype=float).reshape(-1).tolist(),
        estimator_descriptor={"analytic": True} if options.gradient is not None
        else estimator.to_dict(),
        seed=options.seed,
    )


@dataclass
class MultiStartReport:
    best: OptimizeReport
    ranked: list = field(default_factory=list)  # OptimizeReports sorted by best_value

    def to_json(self) -> str:
        return json.dumps({"best": asdict(self.best), "ranked": [asdict(r) for r in self.ranked]},
                          sort_keys=True)


def _start_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def multi_start(bb: Blackbox, bounds: BoxBounds, num_starts: int,
                estimator: EstimatorConfig | None = None,
                options: OptimizeOptions | None = None, seed: int = 0,
                jobs: int = 1) -> MultiStartReport:
    """Run :func:`minimize` from ``num_starts`` uniform points in the box.

    Start ``i`` gets its own derived seed. Starts run on ``jobs`` threads
    only if the blackbox declares itself safe for concurrent evaluation;
    results do not depend on ``jobs``.
    """
    if num_starts < 1:
        raise ValueError("num_starts must be >= 1")
    options = OptimizeOptions() if options is None else options
    starts = bounds.sample(np.random.default_rng(seed), num_starts)

    def one(i):
        s = _start_seed(seed, i)
        opts = replace(options, seed=s,
                       noise=None if options.noise is None
                       else replace(options.noise, rng_seed=s))
        # a private counter per start keeps evaluation accounting independent of threading
        own = Blackbox(bb.fn, bb.dim, bb.vectorized, bb.concurrent_safe)
        return minimize(own, starts[i], bounds, estimator, opts)

    if jobs > 1 and bb.concurrent_safe and num_starts > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, range(num_starts)))
    else:
        reports = [one(i) for i in range(num_starts)]
    bb.eval_count += sum(r.evaluations for r in reports)
    ranked = sorted(reports, key=lambda r: (r.best_value, r.seed))
    return MultiStartReport(best=ranked[0], ranked=ranked)
