"""Finite-difference gradient and Jacobian estimators over noisy blackboxes.

Every estimator takes ``n`` forward-difference measurements

    m_i = (f~(x0 + delta * d_i) - f~(x0)) / delta

along the rows ``d_i`` of a direction matrix and solves ``M z = m``. The
base value ``f~(x0)`` is sampled once and shared by all measurements.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import spinner as sp
from .transform import apply_inverse

__all__ = [
    "Blackbox",
    "DirectionSet",
    "EstimatorConfig",
    "EvaluationError",
    "GradientEstimate",
    "NoiseKind",
    "NoiseModel",
    "SingularMatrixError",
    "estimate_gaussian_mc",
    "estimate_jacobian",
    "estimate_jacobians",
    "estimate_linsolve",
    "estimate_standard",
    "estimate_structured",
    "concentration_bound",
    "concentration_cap",
    "estimate_with",
    "measure",
]


class EvaluationError(RuntimeError):
    """A blackbox evaluation failed; ``index`` is the direction index (-1 = base point)."""

    def __init__(self, index, cause):
        super().__init__(f"blackbox evaluation failed at direction {index}: {cause!r}")
        self.index = index


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class Blackbox:
    """Counted wrapper around an objective or dynamics function.

    ``fn`` maps a length-``dim`` vector to a scalar (or a vector for dynamics).
    With ``vectorized=True`` it must also accept an ``(k, dim)`` batch and
    return ``(k,)`` / ``(k, out)``. ``eval_count`` counts points, not calls.
    """

    def __init__(self, fn: Callable, dim: int, vectorized: bool = False,
                 concurrent_safe: bool = False):
        self.fn = fn
        self.dim = int(dim)
        self.vectorized = vectorized
        self.concurrent_safe = concurrent_safe
        self.eval_count = 0

    def __call__(self, x):
        self.eval_count += 1
        return self.fn(np.asarray(x, dtype=float))

    def evaluate(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.vectorized:
            self.eval_count += points.shape[0]
            return np.asarray(self.fn(points), dtype=float)
        out = []
        for i, p in enumerate(points):
            try:
                out.append(self(p))
            except Exception as exc:  # noqa: BLE001 - re-raised with the index
                raise EvaluationError(i, exc) from exc
        return np.asarray(out, dtype=float)


class NoiseKind(str, enum.Enum):
    NONE = "none"
    GAUSSIAN = "gaussian"
    UNIFORM_BALL = "uniform_ball"
    ADVERSARIAL = "adversarial"


@dataclass
class NoiseModel:
    """Corruption added to blackbox outputs.

    Gaussian and uniform noise perturb every function value independently,
    drawing from a PCG64 stream seeded by ``rng_seed`` that advances across
    calls. Adversarial noise is a fixed vector ``eta`` added directly to the
    measurement vector, consumed positionally.
    """

    kind: NoiseKind = NoiseKind.NONE
    sigma: float = 0.0
    delta_inf: float = 0.0
    norm: str = "linf"
    eta: Optional[np.ndarray] = None
    rng_seed: int = 0
    _rng: Optional[np.random.Generator] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.kind = NoiseKind(self.kind)
        if self.sigma < 0 or self.delta_inf < 0:
            raise ValueError("noise scales must be non-negative")
        if self.kind is NoiseKind.ADVERSARIAL:
            if self.eta is None:
                raise ValueError("adversarial noise needs eta")
            self.eta = np.asarray(self.eta, dtype=float)

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def gaussian(cls, sigma, rng_seed=0):
        return cls(NoiseKind.GAUSSIAN, sigma=sigma, rng_seed=rng_seed)

    @classmethod
    def uniform_ball(cls, delta_inf, norm="linf", rng_seed=0):
        return cls(NoiseKind.UNIFORM_BALL, delta_inf=delta_inf, norm=norm, rng_seed=rng_seed)

    @classmethod
    def adversarial(cls, eta):
        return cls(NoiseKind.ADVERSARIAL, eta=eta)

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng(self.rng_seed)
        return self._rng

    def reset(self) -> None:
        self._rng = None

    def perturb_values(self, values: np.ndarray) -> np.ndarray:
        """Add per-evaluation noise to function values (first axis = evaluation)."""
        if self.kind is NoiseKind.GAUSSIAN and self.sigma > 0:
            return values + self.sigma * self.rng.standard_normal(values.shape)
        if self.kind is NoiseKind.UNIFORM_BALL and self.delta_inf > 0:
            return values + self._ball(values.shape)
        return values

    def _ball(self, shape) -> np.ndarray:
        r = self.delta_inf
        if self.norm == "linf" or len(shape) == 1:
            return self.rng.uniform(-r, r, size=shape)
        k = shape[-1]
        g = self.rng.standard_normal(shape)
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        radius = r * self.rng.uniform(size=shape[:-1] + (1,)) ** (1.0 / k)
        return g * radius

    def perturb_measurements(self, m: np.ndarray) -> np.ndarray:
        if self.kind is NoiseKind.ADVERSARIAL:
            return m + self.eta.reshape(m.shape[:1] + self.eta.shape[1:])
        return m

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "rng_seed": self.rng_seed}
        if self.kind is NoiseKind.GAUSSIAN:
            d["sigma"] = self.sigma
        elif self.kind is NoiseKind.UNIFORM_BALL:
            d.update(delta_inf=self.delta_inf, norm=self.norm)
        elif self.kind is NoiseKind.ADVERSARIAL:
            d["eta"] = self.eta.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        d = dict(d)
        return cls(**d)

    @property
    def scale(self) -> float:
        """Representative magnitude (sigma, ball radius, or ||eta||_2)."""
        if self.kind is NoiseKind.GAUSSIAN:
            return self.sigma
        if self.kind is NoiseKind.UNIFORM_BALL:
            return self.delta_inf
        if self.kind is NoiseKind.ADVERSARIAL:
            return float(np.linalg.norm(self.eta))
        return 0.0


@dataclass
class GradientEstimate:
    gradient: np.ndarray
    estimator_kind: str
    delta: float
    evaluations_used: int
    wall_nanos: int
    # Reconstructed components of zero-padded dummy coordinates (noise + curvature leak).
    padding_residual: float = 0.0
    # (Noisy) value at the base point, reused by optimizers to avoid a re-evaluation.
    base_value: Optional[np.ndarray] = None


def _as_noise(noise) -> NoiseModel:
    return noise if noise is not None else NoiseModel()


def measure(bb: Blackbox, x0, delta: float, directions, noise: NoiseModel | None = None,
            fresh_base: bool = False) -> np.ndarray:
    """Forward-difference measurements of ``bb`` at ``x0`` along ``directions``.

    ``directions`` is a ``(q, d)`` array (rows are directions, already cut to
    the blackbox dimension). Returns ``(q,)`` for scalar blackboxes and
    ``(q, out)`` for vector-valued ones.
    """
    return _measure(bb, x0, delta, directions, noise, fresh_base)[0]


def _measure(bb, x0, delta, directions, noise, fresh_base):
    if delta <= 0:
        raise ValueError("delta must be positive")
    noise = _as_noise(noise)
    x0 = np.asarray(x0, dtype=float)
    directions = np.asarray(directions, dtype=float)
    if directions.ndim != 2 or directions.shape[1] != x0.shape[0]:
        raise ValueError(f"directions {directions.shape} do not match x0 {x0.shape}")
    q = directions.shape[0]
    points = x0[None, :] + delta * directions
    try:
        base = noise.perturb_values(np.asarray(bb.evaluate(x0[None, :]), dtype=float))
    except EvaluationError as exc:
        raise EvaluationError(-1, exc.__cause__) from exc.__cause__
    values = noise.perturb_values(bb.evaluate(points))
    if fresh_base:
        base = noise.perturb_values(bb.evaluate(np.repeat(x0[None, :], q, axis=0)))
    m = (values - base) / delta
    return noise.perturb_measurements(m), base[0]


@dataclass(frozen=True)
class DirectionSet:
    """Rows used as perturbation directions plus the matching solver.

    ``rows`` is ``(q, n_pad)``. When ``n_pad > d`` the problem is zero-padded
    with *leading* dummy coordinates, so only the last ``d`` columns reach
    the blackbox. ``solve`` maps measurements ``(q, ...)`` to ``(n_pad, ...)``.

    Leading padding matters for spinners: ``M.T @ ones`` is ``n e_0`` for
    every ``H D`` product, so an error shared by all measurements (the noise
    of the common base evaluation) reconstructs entirely onto coordinate 0.
    With padding in front, that coordinate is a discarded dummy.
    """

    rows: np.ndarray
    kind: str
    spinner: Optional[sp.Spinner] = None
    matrix: Optional[np.ndarray] = None
    mc_average: bool = False

    @property
    def n_pad(self) -> int:
        return self.rows.shape[1]

    def columns(self, d: int) -> np.ndarray:
        """Direction rows restricted to the ``d`` real coordinates."""
        return self.rows[:, self.n_pad - d:]

    def split(self, z: np.ndarray, d: int):
        """``(real, dummy)`` parts of a reconstruction ``z`` of length ``n_pad``."""
        k = self.n_pad - d
        return z[k:], z[:k]

    def solve(self, m: np.ndarray) -> np.ndarray:
        if self.spinner is not None:
            return apply_inverse(self.spinner, m)
        if self.mc_average:
            return np.tensordot(self.rows.T, m, axes=(1, 0)) / self.rows.shape[0]
        return np.linalg.solve(self.matrix, m.reshape(m.shape[0], -1)).reshape(
            (self.matrix.shape[1],) + m.shape[1:])


def _structured_set(spinner: sp.Spinner, d: int) -> DirectionSet:
    if spinner.n < d:
        raise ValueError(f"spinner dimension {spinner.n} is smaller than d={d}")
    if not spinner.is_orthogonal:
        return _linsolve_set(spinner.explicit_rows, d)
    return DirectionSet(rows=spinner.dense(), kind=spinner.kind.value, spinner=spinner)


def _linsolve_set(matrix, d: int, kind: str = "linsolve") -> DirectionSet:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < d:
        raise ValueError(f"need a square matrix of size >= {d}, got {matrix.shape}")
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < 1e-12:
        raise SingularMatrixError("direction matrix is numerically singular")
    return DirectionSet(rows=matrix, kind=kind, matrix=matrix)


def _run(bb: Blackbox, x0, delta, dirset: DirectionSet, noise, kind: str,
         fresh_base: bool = False) -> GradientEstimate:
    t0 = time.perf_counter_ns()
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[0]
    before = bb.eval_count
    m, base = _measure(bb, x0, delta, dirset.columns(d), noise, fresh_base)
    z, dummy = dirset.split(dirset.solve(m), d)
    residual = float(np.linalg.norm(dummy)) if dummy.size else 0.0
    return GradientEstimate(
        gradient=np.array(z),
        estimator_kind=kind,
        delta=float(delta),
        evaluations_used=bb.eval_count - before,
        wall_nanos=time.perf_counter_ns() - t0,
        padding_residual=residual,
        base_value=base,
    )


def estimate_standard(bb: Blackbox, x0, delta: float, noise: NoiseModel | None = None,
                      fresh_base: bool = False) -> GradientEstimate:
    """Coordinate-direction forward differences."""
    d = np.asarray(x0).shape[0]
    dirset = DirectionSet(rows=np.eye(d), kind="standard", matrix=np.eye(d))
    return _run(bb, x0, delta, dirset, noise, "standard", fresh_base)


def estimate_structured(bb: Blackbox, x0, delta: float, spinner: sp.Spinner,
                        noise: NoiseModel | None = None,
                        fresh_base: bool = False) -> GradientEstimate:
    """Forward differences along spinner rows, reconstructed as ``M.T m / n``.

    Spinners larger than the blackbox dimension zero-pad ``x0``; the padded
    coordinates are stripped from the result.
    """
    dirset = _structured_set(spinner, np.asarray(x0).shape[0])
    return _run(bb, x0, delta, dirset, noise, spinner.kind.value, fresh_base)


def estimate_gaussian_mc(bb: Blackbox, x0, delta: float, num_samples: int | None = None,
                         rng_seed: int = 0, noise: NoiseModel | None = None) -> GradientEstimate:
    """Gaussian-smoothing Monte Carlo estimate ``mean_i m_i g_i``."""
    d = np.asarray(x0).shape[0]
    num_samples = d if num_samples is None else int(num_samples)
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    g = np.random.default_rng(rng_seed).standard_normal((num_samples, d))
    dirset = DirectionSet(rows=g, kind="gaussian_mc", mc_average=True)
    return _run(bb, x0, delta, dirset, noise, "gaussian_mc")


def estimate_linsolve(bb: Blackbox, x0, delta: float, explicit_matrix,
                      noise: NoiseModel | None = None) -> GradientEstimate:
    """Directions are the rows of ``explicit_matrix``; solve ``M z = m`` by LU."""
    dirset = _linsolve_set(explicit_matrix, np.asarray(x0).shape[0])
    return _run(bb, x0, delta, dirset, noise, "linsolve")


@dataclass(frozen=True)
class EstimatorConfig:
    """Serializable selector for a direction family.

    kinds: ``standard``, ``hadamard``, ``hadamard_random``,
    ``quadratic_residue``, ``quadratic_residue_random``, ``multispinner``
    (``base`` and ``k``), ``gaussian_fresh`` / ``gaussian_fixed`` (square
    Gaussian matrix solved densely, redrawn per ``draw`` or fixed), and
    ``gaussian_mc``.
    """

    kind: str = "standard"
    k: int = 1
    base: str = "hadamard"
    seed: int = 0
    num_samples: Optional[int] = None

    KINDS = (
        "standard", "hadamard", "hadamard_random", "quadratic_residue",
        "quadratic_residue_random", "multispinner", "gaussian_fresh",
        "gaussian_fixed", "gaussian_mc",
    )

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def label(self) -> str:
        if self.kind == "multispinner":
            return f"multispinner_{self.base}_k{self.k}"
        return self.kind

    @property
    def structured(self) -> bool:
        return self.kind not in ("standard", "gaussian_fresh", "gaussian_fixed", "gaussian_mc")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "seed": self.seed}
        if self.kind == "multispinner":
            d.update(k=self.k, base=self.base)
        if self.num_samples is not None:
            d["num_samples"] = self.num_samples
        return d

    @classmethod
    def from_dict(cls, d) -> "EstimatorConfig":
        if isinstance(d, str):
            return cls(kind=d)
        return cls(**d)

    def _draw_seed(self, draw: int) -> int:
        return int(np.random.SeedSequence([self.seed, draw]).generate_state(1)[0])

    def spinner(self, d: int, draw: int = 0) -> sp.Spinner:
        fam = "quadratic_residue" if "quadratic" in self.kind or (
            self.kind == "multispinner" and self.base == "quadratic_residue") else "hadamard"
        n = sp.smallest_spinner_dimension(fam, d)
        base = sp.build_hadamard(n.bit_length() - 1) if fam == "hadamard" else \
            sp.build_quadratic_residue(n - 1)
        if self.kind in ("hadamard", "quadratic_residue"):
            return base
        seed = self._draw_seed(draw)
        if self.kind == "multispinner":
            return sp.build_multispinner(fam, self.k, seed, n if fam == "hadamard" else n - 1)
        return sp.randomize(base, seed)

    def directions(self, d: int, draw: int = 0) -> DirectionSet:
        """Direction set for a ``d``-dimensional problem; ``draw`` indexes re-randomization."""
        if self.kind == "standard":
            return DirectionSet(rows=np.eye(d), kind="standard", matrix=np.eye(d))
        if self.kind in ("gaussian_fresh", "gaussian_fixed"):
            seed = self._draw_seed(draw) if self.kind == "gaussian_fresh" else self.seed
            g = np.random.default_rng(seed).standard_normal((d, d))
            return _linsolve_set(g, d, kind=self.kind)
        if self.kind == "gaussian_mc":
            q = d if self.num_samples is None else self.num_samples
            g = np.random.default_rng(self._draw_seed(draw)).standard_normal((q, d))
            return DirectionSet(rows=g, kind="gaussian_mc", mc_average=True)
        return _structured_set(self.spinner(d, draw), d)


def estimate_with(config: EstimatorConfig, bb: Blackbox, x0, delta: float,
                  noise: NoiseModel | None = None, draw: int = 0) -> GradientEstimate:
    """Dispatch a gradient estimate through an :class:`EstimatorConfig`."""
    dirset = config.directions(np.asarray(x0).shape[0], draw)
    return _run(bb, x0, delta, dirset, noise, config.label)


def estimate_jacobians(dyn: Blackbox, X, U, delta: float, method: EstimatorConfig,
                       noise: NoiseModel | None = None, draw: int = 0,
                       dirset: DirectionSet | None = None):
    """Batched Jacobians of ``dyn`` at ``T`` points ``(X[t], U[t])``.

    One direction set is shared by all points. Each point costs
    ``q + 1`` dynamics evaluations regardless of the output dimension.
    Returns ``A`` with shape ``(T, n_out, n)`` and ``B`` with ``(T, n_out, m)``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    noise = _as_noise(noise)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if X.shape[0] != U.shape[0]:
        raise ValueError("X and U must have the same number of points")
    n, m = X.shape[1], U.shape[1]
    d = n + m
    if dyn.dim != d:
        raise ValueError(f"dynamics expects dimension {dyn.dim}, got {d}")
    if dirset is None:
        dirset = method.directions(d, draw)
    R = dirset.columns(d)
    q = R.shape[0]
    T = X.shape[0]
    base = np.concatenate([X, U], axis=1)
    pts = np.concatenate([base[:, None, :], base[:, None, :] + delta * R[None]], axis=1)
    out = dyn.evaluate(pts.reshape(T * (q + 1), d))
    out = noise.perturb_values(out).reshape(T, q + 1, -1)
    meas = (out[:, 1:] - out[:, :1]) / delta  # (T, q, n_out)
    if noise.kind is NoiseKind.ADVERSARIAL:
        meas = meas + noise.eta.reshape((1, q) + noise.eta.shape[1:])
    z = dirset.solve(np.moveaxis(meas, 1, 0))  # (n_pad, T, n_out)
    J = np.moveaxis(dirset.split(z, d)[0], 0, -1)  # (T, n_out, d)
    return J[..., :n], J[..., n:]


def estimate_jacobian(dyn: Blackbox, x0, u0, delta: float, method: EstimatorConfig,
                      noise: NoiseModel | None = None, draw: int = 0):
    """State and control Jacobians ``(A, B)`` of ``dyn`` at a single point."""
    A, B = estimate_jacobians(dyn, np.asarray(x0)[None], np.asarray(u0)[None], delta,
                              method, noise, draw)
    return A[0], B[0]


def concentration_cap(n: int, g: float) -> float:
    """Largest ``||eta||_inf`` covered by the HD concentration bound, ``sqrt(n / ln n) / g``."""
    return float(np.sqrt(n / np.log(n)) / g)


def concentration_bound(n: int, g: float) -> float:
    """Probability bound ``2 n exp(-g ln(n) / 2)`` on ``||z - grad||_inf > 1/sqrt(g)``."""
    return float(2 * n * np.exp(-g * np.log(n) / 2))
