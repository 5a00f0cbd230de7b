"""Execute experiment configs and aggregate their records.

Each experiment is a cross product of cells (estimator x seed, times the
delta grid for step-size sweeps). Cells are independent; ``jobs > 1``
dispatches them to a process pool, and results are always emitted in the
deterministic order (estimator, seed, delta, iteration).

Per-experiment ``params``:

- GradAccuracy: ``trials`` (points per seed, default 1), ``objective_seed``.
- TheoremBound: ``n`` (256), ``g`` (4), ``eta`` ("random_sign" or "constant").
- TrajOpt / StepSizeSweep / Timing: ``tolerance`` (0 = run the full budget),
  ``rollout_noise`` (bool), ``initial_regularization``, ``vectorized``.
- QuasiNewton: ``memory``, ``levels``, ``max_iterations``,
  ``delta_schedule``, ``start`` ("center" or "random"), ``objective_seed``.
"""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Optional

import numpy as np

from .. import envs
from ..estimators import (Blackbox, EstimatorConfig, NoiseModel, concentration_cap,
                          estimate_with)
from ..ilqr import SolveOptions, solve
from ..objectives import make_objective
from ..quasinewton import BoxBounds, OptimizeOptions, minimize
from .config import ExperimentConfig
from .records import ExperimentRecord

__all__ = ["SummaryRow", "run", "summarize", "summary_to_csv"]


def _target_name(cfg: ExperimentConfig) -> str:
    if cfg.experiment == "TheoremBound":
        return f"linear_{cfg.params.get('n', 256)}"
    return str(cfg.target.get("name", ""))


def _record(cfg, est: EstimatorConfig, seed, delta, iteration, value, evals,
            wall=None, status="ok") -> ExperimentRecord:
    return ExperimentRecord(
        experiment=cfg.experiment, estimator=est.label, environment=_target_name(cfg),
        seed=int(seed), delta=float(delta), noise_sigma=cfg.noise_sigma,
        iteration=int(iteration), cost_or_error=float(value), evaluations=int(evals),
        wall_nanos=None if wall is None else int(wall), status=status,
        config_hash=cfg.config_hash)


def _env(cfg: ExperimentConfig):
    target = dict(cfg.target)
    return envs.make_environment(target.pop("name"), **target)


def _grad_accuracy(cfg, est, seed, delta):
    p = cfg.params
    obj = make_objective(cfg.target["name"], int(cfg.target.get("dim", 8)),
                         int(p.get("objective_seed", 0)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    noise = cfg.noise_model(seed)
    out = []
    for trial in range(int(p.get("trials", 1))):
        lo = obj.lower if np.isfinite(obj.lower) else -1.0
        hi = obj.upper if np.isfinite(obj.upper) else 1.0
        x0 = rng.uniform(lo, hi, obj.dim)
        bb = obj.blackbox()
        t0 = time.perf_counter_ns()
        ge = estimate_with(est, bb, x0, delta, noise=noise, draw=trial)
        err = float(np.linalg.norm(ge.gradient - obj.gradient(x0)))
        out.append(_record(cfg, est, seed, delta, trial, err, ge.evaluations_used,
                           time.perf_counter_ns() - t0))
    return out


def _theorem_bound(cfg, est, seed, delta):
    p = cfg.params
    n, g = int(p.get("n", 256)), float(p.get("g", 4))
    a = np.random.default_rng(np.random.SeedSequence([seed, 2])).standard_normal(n)
    cap = concentration_cap(n, g)
    if p.get("eta", "random_sign") == "constant":
        eta = np.full(n, cap)
    else:
        eta = cap * np.random.default_rng(np.random.SeedSequence([seed, 3])).choice(
            [-1.0, 1.0], size=n)
    bb = Blackbox(lambda x: np.asarray(x) @ a, n, vectorized=True)
    t0 = time.perf_counter_ns()
    ge = estimate_with(est, bb, np.zeros(n), delta, noise=NoiseModel.adversarial(eta),
                       draw=seed)
    err = float(np.max(np.abs(ge.gradient - a)))
    return [_record(cfg, est, seed, delta, 0, err, ge.evaluations_used,
                    time.perf_counter_ns() - t0)]


def _solve_options(cfg, seed, delta, max_iterations):
    p = cfg.params
    return SolveOptions(
        max_iterations=max_iterations, delta=delta, noise=cfg.noise_model(seed),
        rollout_noise=cfg.noise_model(seed + 10**6) if p.get("rollout_noise") else None,
        tolerance=float(p.get("tolerance", 0.0)), seed=seed,
        initial_regularization=float(p.get("initial_regularization", 1.0)),
        vectorized_dynamics=bool(p.get("vectorized", True)))


def _trajopt(cfg, est, seed, delta):
    rep, _ = solve(_env(cfg), None, est, _solve_options(cfg, seed, delta, cfg.budget))
    return [_record(cfg, est, seed, delta, i + 1, c, e)
            for i, (c, e) in enumerate(zip(rep.cost_per_iteration,
                                            rep.evaluations_per_iteration))]


def _final_only(cfg, est, seed, delta):
    """One row per cell: last accepted cost, total evaluations and wall time."""
    rep, _ = solve(_env(cfg), None, est, _solve_options(cfg, seed, delta, cfg.budget))
    return [_record(cfg, est, seed, delta, rep.iterations, rep.cost_per_iteration[-1],
                    rep.evaluations, rep.wall_nanos_total)]


def _quasinewton(cfg, est, seed, delta):
    p = cfg.params
    obj = make_objective(cfg.target["name"], int(cfg.target.get("dim", 8)),
                         int(p.get("objective_seed", 0)))
    bounds = BoxBounds(np.full(obj.dim, obj.lower), np.full(obj.dim, obj.upper))
    if p.get("start", "center") == "random":
        x0 = bounds.sample(np.random.default_rng(np.random.SeedSequence([seed, 4])))
    else:
        x0 = bounds.project(0.5 * (np.nan_to_num(bounds.lower) + np.nan_to_num(bounds.upper)))
    opts = OptimizeOptions(
        memory=int(p.get("memory", 10)), levels=int(p.get("levels", 8)),
        max_iterations=int(p.get("max_iterations", 50)),
        delta_schedule=p.get("delta_schedule"), seed=seed, noise=cfg.noise_model(seed),
        max_evaluations=cfg.budget if p.get("budget_is_evaluations") else None)
    rep = minimize(obj.blackbox(), x0, bounds, est, opts)
    fstar = obj.minimum if obj.minimum is not None else 0.0
    return [_record(cfg, est, seed, delta, i + 1, float(obj.f(np.asarray(pt))) - fstar, e)
            for i, (pt, e) in enumerate(zip(rep.level_points, rep.level_evaluations))]


_RUNNERS = {
    "GradAccuracy": _grad_accuracy,
    "TheoremBound": _theorem_bound,
    "TrajOpt": _trajopt,
    "StepSizeSweep": _final_only,
    "Timing": _final_only,
    "QuasiNewton": _quasinewton,
}


def _cells(cfg: ExperimentConfig):
    grid = cfg.deltas if cfg.experiment == "StepSizeSweep" else (cfg.delta,)
    for ei in range(len(cfg.estimators)):
        for seed in cfg.seeds:
            for delta in grid:
                yield ei, seed, delta


def _run_cell(cfg: ExperimentConfig, ei: int, seed: int, delta: float) -> list:
    est = EstimatorConfig.from_dict(cfg.estimators[ei])
    try:
        return _RUNNERS[cfg.experiment](cfg, est, seed, delta)
    except Exception as exc:  # a failed cell becomes a status row, never aborts the sweep
        return [_record(cfg, est, seed, delta, 0, float("nan"), 0,
                        status=f"error:{type(exc).__name__}")]


_WORKER_CFG: Optional[ExperimentConfig] = None


def _init_worker(cfg: ExperimentConfig) -> None:
    global _WORKER_CFG
    _WORKER_CFG = cfg


def _worker_cell(ei: int, seed: int, delta: float) -> list:
    return _run_cell(_WORKER_CFG, ei, seed, delta)


def run(config: ExperimentConfig, jobs: int = 1) -> list:
    """All records of ``config`` in (estimator, seed, delta, iteration) order."""
    cells = list(_cells(config))
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(config,)) as pool:
            futures = [pool.submit(_worker_cell, *c) for c in cells]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_cell(config, *c) for c in cells]
    return [r for chunk in chunks for r in chunk]


@dataclass(frozen=True)
class SummaryRow:
    experiment: str
    estimator: str
    environment: str
    delta: float
    noise_sigma: float
    seeds: int
    failed: int
    median: float
    q25: float
    q75: float
    iqr: float
    mean_wall_nanos: Optional[float]
    mean_evaluations: float


def _quantile(v, q):
    return float(np.percentile(v, q, method="lower"))


_PER_ROW = ("GradAccuracy", "TheoremBound")


def summarize(records: Iterable[ExperimentRecord]) -> list:
    """Per (estimator, environment, delta, noise) group: lower-median and IQR of final values.

    For optimization experiments the value of a seed is its row with the
    largest iteration; for gradient experiments every row is a sample.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot summarize an empty record set")
    kinds = {r.experiment for r in records}
    if len(kinds) != 1:
        raise ValueError(f"records mix experiment types {sorted(kinds)}")
    exp = records[0].experiment
    groups: dict = {}
    for r in records:
        key = (r.estimator, r.environment, r.delta, r.noise_sigma)
        groups.setdefault(key, []).append(r)
    out = []
    for key, rows in groups.items():
        failed = sorted({r.seed for r in rows if not r.ok})
        ok = [r for r in rows if r.ok]
        if exp in _PER_ROW:
            samples = ok
        else:
            last: dict = {}
            for r in ok:
                if r.seed not in last or r.iteration >= last[r.seed].iteration:
                    last[r.seed] = r
            samples = [last[s] for s in sorted(last)]
        vals = np.array([r.cost_or_error for r in samples], dtype=float)
        walls = [r.wall_nanos for r in samples if r.wall_nanos is not None]
        nan = float("nan")
        q25 = _quantile(vals, 25) if vals.size else nan
        q75 = _quantile(vals, 75) if vals.size else nan
        out.append(SummaryRow(
            experiment=exp, estimator=key[0], environment=key[1], delta=key[2],
            noise_sigma=key[3], seeds=len({r.seed for r in rows}), failed=len(failed),
            median=_quantile(vals, 50) if vals.size else nan, q25=q25, q75=q75,
            iqr=q75 - q25,
            mean_wall_nanos=float(np.mean(walls)) if walls else None,
            mean_evaluations=float(np.mean([r.evaluations for r in samples])) if samples
            else nan))
    return out


def summary_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.name for f in fields(SummaryRow)])
    for r in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v
                    for v in astuple(r)])
    return buf.getvalue()
