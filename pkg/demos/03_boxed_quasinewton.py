"""
Box-constrained quasi-Newton with structured gradients
======================================================

``minimize`` runs projected L-BFGS steps on a coarse-to-fine schedule of
finite-difference step sizes. Large early steps smooth over noise; later
steps refine. Iterates never leave the box.
"""
import numpy as np

from spinfd.estimators import EstimatorConfig, NoiseModel
from spinfd.objectives import make_objective
from spinfd.quasinewton import (BoxBounds, EpisodeMetrics, GaitParams, OptimizeOptions,
                                gait_signals, minimize, multi_start, reward_running)

obj = make_objective("quadratic", 8)
bounds = BoxBounds(np.full(8, obj.lower), np.full(8, obj.upper))

# %%
# Noisy quadratic: sigma = 1e-3 on every evaluation.
for seed in range(3):
    rep = minimize(obj.blackbox(), np.zeros(8), bounds, EstimatorConfig("hadamard"),
                   OptimizeOptions(seed=seed, noise=NoiseModel.gaussian(1e-3, seed)))
    print(f"seed {seed}: excess {obj.f(np.array(rep.best_point)) - obj.minimum:.2e} "
          f"after {rep.evaluations} evaluations, levels {len(rep.deltas)}")

# %%
# Two wells of different depth: restarts from random points find the deeper one.
tw = make_objective("two_well", 7)
ms = multi_start(tw.blackbox(), BoxBounds(np.zeros(7), np.ones(7)), 30,
                 EstimatorConfig("hadamard"), OptimizeOptions(levels=4, max_iterations=30))
print("best of 30 starts:", np.round(ms.best.best_point, 3), "value", round(ms.best.best_value, 4))

# %%
# The gait parametrization and rewards used for locomotion tuning.
p = GaitParams()
print("period", p.period, "motor targets at t=0:", np.round(gait_signals(p, 0.0), 3))
print("running reward:", reward_running(EpisodeMetrics(d_forward=2.0, E=1.0, drift=0.1, shake=0.05)))
