"""Structured finite-difference gradient and Jacobian estimation.

Directions come from (alpha, beta)-balanced spinners: Sylvester Hadamard
and quadratic-residue matrices, their random-sign variants and products.
Orthogonality turns the linear solve into a fast transform and divides
adversarial measurement noise by ``sqrt(n)``.

Submodules
----------
spinner       spinner construction and verification
transform     fast Walsh-Hadamard transform and structured products
estimators    blackboxes, noise models and gradient/Jacobian estimators
envs          car parking, cartpole, acrobot and linear-quadratic tasks
ilqr          iterative LQR with finite-difference linearization
quasinewton   bound-constrained L-BFGS with implicit filtering; gait and rewards
objectives    synthetic objectives with known minimizers
bench         experiment configs, runner and command line
"""
from .estimators import (Blackbox, EstimatorConfig, GradientEstimate, NoiseModel,
                         estimate_gaussian_mc, estimate_jacobian, estimate_jacobians,
                         estimate_linsolve, estimate_standard, estimate_structured,
                         estimate_with)
from .spinner import (CapacityError, Spinner, SpinnerKind, build_hadamard,
                      build_multispinner, build_quadratic_residue, randomize,
                      verify_balanced)
from .transform import apply, apply_inverse, apply_transpose, fwht, naive_matvec

__version__ = "0.1.0"

__all__ = [
    "Blackbox",
    "CapacityError",
    "EstimatorConfig",
    "GradientEstimate",
    "NoiseModel",
    "Spinner",
    "SpinnerKind",
    "apply",
    "apply_inverse",
    "apply_transpose",
    "build_hadamard",
    "build_multispinner",
    "build_quadratic_residue",
    "estimate_gaussian_mc",
    "estimate_jacobian",
    "estimate_jacobians",
    "estimate_linsolve",
    "estimate_standard",
    "estimate_structured",
    "estimate_with",
    "fwht",
    "naive_matvec",
    "randomize",
    "verify_balanced",
]
