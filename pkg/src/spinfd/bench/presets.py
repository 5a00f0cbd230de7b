"""Named experiment configurations.

One preset per comparison protocol:

======================  ====================================================
``car_noisy``           noisy car parking, cost per iteration, 6 estimators
``car_timing``          wall time to convergence on the car
``car_delta_sweep``     final car cost over the step-size grid
``acrobot_noisy``       noisy acrobot, cost per iteration
``cartpole_noisy``      noisy cartpole, cost per iteration
======================  ====================================================

plus ``grad_accuracy``, ``theorem_bound`` and ``qn_noisy_quadratic`` for
the gradient-estimation and quasi-Newton experiments.
"""
from __future__ import annotations

import copy

from .config import ConfigError, ExperimentConfig

__all__ = ["PRESETS", "get_preset", "preset_names"]

SIGMA = 1e-4
# Finite-difference steps for the noisy trajectory experiments. With sigma = 1e-4
# the Jacobian noise scales like sigma / delta, so delta has to be large enough
# that this stays below the O(dt) dynamics terms (acrobot needs the most).
CAR_DELTA = 1e-2
ACROBOT_DELTA = 0.5
CARTPOLE_DELTA = 3e-2

_TRAJ_ESTIMATORS = [
    {"kind": "standard"},
    {"kind": "hadamard"},
    {"kind": "hadamard_random"},
    {"kind": "quadratic_residue_random"},
    {"kind": "gaussian_fresh"},
    {"kind": "gaussian_fixed"},
]

PRESETS = {
    "car_noisy": {
        "name": "car_noisy",
        "experiment": "TrajOpt",
        "target": {"name": "car"},
        "estimators": _TRAJ_ESTIMATORS,
        "seeds": {"start": 0, "count": 10},
        "noise": {"kind": "gaussian", "sigma": SIGMA},
        "delta": CAR_DELTA,
        "budget": 50,
        "params": {"initial_regularization": 1.0},
    },
    "car_timing": {
        "name": "car_timing",
        "experiment": "Timing",
        "target": {"name": "car"},
        "estimators": [{"kind": "standard"}, {"kind": "hadamard_random"}],
        "seeds": {"start": 0, "count": 3},
        "noise": {"kind": "none"},
        "delta": 1e-4,
        "budget": 100,
        "params": {"tolerance": 1e-4, "vectorized": False, "initial_regularization": 1.0},
        "timing": "sidecar",
    },
    "car_delta_sweep": {
        "name": "car_delta_sweep",
        "experiment": "StepSizeSweep",
        "target": {"name": "car"},
        "estimators": [{"kind": "standard"}, {"kind": "hadamard_random"}],
        "seeds": {"start": 0, "count": 10},
        "noise": {"kind": "gaussian", "sigma": SIGMA},
        "deltas": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        "budget": 50,
        "params": {"initial_regularization": 1.0},
    },
    "acrobot_noisy": {
        "name": "acrobot_noisy",
        "experiment": "TrajOpt",
        "target": {"name": "acrobot"},
        "estimators": [{"kind": "standard"}, {"kind": "hadamard"},
                       {"kind": "hadamard_random"}, {"kind": "quadratic_residue_random"}],
        "seeds": {"start": 0, "count": 10},
        "noise": {"kind": "gaussian", "sigma": SIGMA},
        "delta": ACROBOT_DELTA,
        "budget": 50,
        "params": {"initial_regularization": 1.0},
    },
    "cartpole_noisy": {
        "name": "cartpole_noisy",
        "experiment": "TrajOpt",
        "target": {"name": "cartpole"},
        "estimators": [{"kind": "standard"}, {"kind": "hadamard"},
                       {"kind": "hadamard_random"}, {"kind": "quadratic_residue_random"}],
        "seeds": {"start": 0, "count": 10},
        "noise": {"kind": "gaussian", "sigma": SIGMA},
        "delta": CARTPOLE_DELTA,
        "budget": 50,
        "params": {"initial_regularization": 1.0},
    },
    "grad_accuracy": {
        "name": "grad_accuracy",
        "experiment": "GradAccuracy",
        "target": {"name": "linear", "dim": 64},
        "estimators": [{"kind": "standard"}, {"kind": "hadamard"},
                       {"kind": "hadamard_random"}, {"kind": "quadratic_residue"},
                       {"kind": "multispinner", "k": 2}],
        "seeds": {"start": 0, "count": 10},
        "noise": {"kind": "none"},
        "delta": 1e-3,
        "budget": 1,
        "params": {"trials": 5},
    },
    "theorem_bound": {
        "name": "theorem_bound",
        "experiment": "TheoremBound",
        "estimators": [{"kind": "hadamard_random"}],
        "seeds": {"start": 0, "count": 10000},
        "delta": 1e-3,
        "budget": 1,
        "params": {"n": 256, "g": 4, "eta": "random_sign"},
    },
    "qn_noisy_quadratic": {
        "name": "qn_noisy_quadratic",
        "experiment": "QuasiNewton",
        "target": {"name": "quadratic", "dim": 8},
        "estimators": [{"kind": "hadamard"}],
        "seeds": {"start": 0, "count": 10},
        "noise": {"kind": "gaussian", "sigma": 1e-3},
        "delta": 0.2,
        "budget": 1,
    },
}


def preset_names() -> list:
    return sorted(PRESETS)


def get_preset(name: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_dict(copy.deepcopy(PRESETS[name]))
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
