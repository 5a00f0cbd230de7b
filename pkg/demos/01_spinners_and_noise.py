"""
Orthogonal spinners and adversarial noise
=========================================

Finite differences along the rows of an orthogonal spinner ``M`` recover the
gradient through ``M^{-1} = M^T / n``. A fixed noise vector ``eta`` on the
function values then reaches the gradient as ``M^{-1} eta``, whose norm is
``||eta|| / sqrt(n)``. Coordinate differences pass ``eta`` through unchanged.
"""
import numpy as np

from spinfd import spinner as sp
from spinfd.estimators import (Blackbox, EstimatorConfig, NoiseModel, estimate_standard,
                               estimate_with)
from spinfd.transform import apply, fwht

# %%
# Two spinner families: Sylvester-Hadamard and the bordered quadratic-residue
# construction for primes p = 3 mod 4. Both satisfy M M^T = n I.
H = sp.build_hadamard(3)
Q = sp.build_quadratic_residue(7)
for s in (H, Q):
    M = s.dense()
    print(s.kind.value, s.n, "max |MM^T - nI| =", np.abs(M @ M.T - s.n * np.eye(s.n)).max())
print("balance of H_8:", sp.verify_balanced(H.dense()))

# %%
# Randomized HD spinners flip signs before the transform; products are applied
# with the fast Walsh-Hadamard butterfly in O(n log n).
HD = sp.randomize(sp.build_hadamard(10), rng_seed=0)
v = np.random.default_rng(0).standard_normal(1024)
print("fast vs dense:", np.abs(apply(HD, v) - HD.dense() @ v).max())
print("fwht([1, 2, 3, 4]) =", fwht([1.0, 2.0, 3.0, 4.0]))

# %%
# The sqrt(n) separation on a linear objective with adversarial noise.
for n in (8, 64, 256):
    rng = np.random.default_rng(n)
    c = rng.standard_normal(n)
    eta = rng.standard_normal(n)
    bb = Blackbox(lambda x: np.asarray(x) @ c, n, vectorized=True)
    noise = NoiseModel.adversarial(eta)
    std = estimate_standard(bb, np.zeros(n), 1e-2, noise).gradient
    hd = estimate_with(EstimatorConfig("hadamard_random"), bb, np.zeros(n), 1e-2, noise).gradient
    print(f"n={n:4d}  ||eta||={np.linalg.norm(eta):7.3f}  "
          f"standard err={np.linalg.norm(std - c):7.3f}  "
          f"structured err={np.linalg.norm(hd - c):6.3f}  "
          f"||eta||/sqrt(n)={np.linalg.norm(eta) / np.sqrt(n):6.3f}")
