"""Synthetic test objectives with analytic gradients and known minimizers.

Every ``f`` is vectorized over leading axes: ``f(X)`` with ``X`` of shape
``(..., d)`` returns shape ``(...)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .estimators import Blackbox

__all__ = ["Objective", "make_objective", "OBJECTIVES"]


@dataclass(frozen=True)
class Objective:
    name: str
    dim: int
    f: Callable
    gradient: Callable
    minimizer: Optional[np.ndarray] = None
    minimum: Optional[float] = None
    lower: float = -np.inf
    upper: float = np.inf

    def blackbox(self) -> Blackbox:
        return Blackbox(self.f, self.dim, vectorized=True, concurrent_safe=True)


def _linear(d, rng):
    a = rng.standard_normal(d)
    c = float(rng.standard_normal())
    return Objective("linear", d, lambda x: np.asarray(x) @ a + c,
                     lambda x: np.broadcast_to(a, np.shape(x)).copy())


def _quadratic(d, rng, lower=-1.0, upper=1.0):
    """Random SPD quadratic with condition number <= ~10 and interior minimizer."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = q @ np.diag(np.linspace(1.0, 10.0, d)) @ q.T
    xs = rng.uniform(0.5 * lower, 0.5 * upper, d)

    def f(x):
        e = np.asarray(x) - xs
        return 0.5 * np.einsum("...i,ij,...j->...", e, A, e)

    return Objective("quadratic", d, f, lambda x: (np.asarray(x) - xs) @ A, xs, 0.0,
                     lower, upper)


def _rosenbrock(d, rng):
    def f(x):
        x = np.asarray(x)
        return np.sum(100.0 * (x[..., 1:] - x[..., :-1] ** 2) ** 2 + (1 - x[..., :-1]) ** 2,
                      axis=-1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        r = x[..., 1:] - x[..., :-1] ** 2
        g[..., :-1] += -400.0 * x[..., :-1] * r - 2 * (1 - x[..., :-1])
        g[..., 1:] += 200.0 * r
        return g

    return Objective("rosenbrock", d, f, grad, np.ones(d), 0.0, -2.0, 2.0)


def _two_well(d, rng):
    """Shallow narrow well at 0.25 and the global, wider well at 0.75 in ``[0, 1]^d``."""
    c1, c2 = np.full(d, 0.25), np.full(d, 0.75)
    w1, w2, s1, s2 = 1.0, 1.5, 0.15, 0.2

    def parts(x):
        x = np.asarray(x, dtype=float)
        e1 = w1 * np.exp(-np.sum((x - c1) ** 2, -1) / (2 * s1**2))
        e2 = w2 * np.exp(-np.sum((x - c2) ** 2, -1) / (2 * s2**2))
        return x, e1, e2

    def f(x):
        _, e1, e2 = parts(x)
        return -e1 - e2

    def grad(x):
        x, e1, e2 = parts(x)
        return e1[..., None] * (x - c1) / s1**2 + e2[..., None] * (x - c2) / s2**2

    return Objective("two_well", d, f, grad, c2, float(f(c2)), 0.0, 1.0)


def _sine(d, rng):
    w = rng.uniform(0.5, 2.0, d)
    return Objective("sine", d, lambda x: np.sum(np.sin(w * np.asarray(x)), -1),
                     lambda x: w * np.cos(w * np.asarray(x)))


OBJECTIVES = {
    "linear": _linear,
    "quadratic": _quadratic,
    "rosenbrock": _rosenbrock,
    "two_well": _two_well,
    "sine": _sine,
}


def make_objective(name: str, dim: int, seed: int = 0) -> Objective:
    """Instantiate a named objective; random coefficients come from ``seed``."""
    try:
        builder = OBJECTIVES[name]
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; choose from {sorted(OBJECTIVES)}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return builder(int(dim), np.random.default_rng(seed))
