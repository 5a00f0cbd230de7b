"""Acceptance suite: one check per criterion, each reported as a PASS/FAIL line.

Experiment-style criteria run the shipped presets through the benchmark
runner; their CSV output is cached so the determinism check can rerun and
compare byte for byte without repeating the first pass.
"""
import time

import numpy as np
import pytest

from acceptance_registry import record
from spinfd import envs, ilqr
from spinfd import spinner as sp
from spinfd.bench.presets import get_preset, preset_names
from spinfd.bench.records import records_to_csv
from spinfd.bench.runner import run
from spinfd.estimators import (Blackbox, EstimatorConfig, NoiseModel, concentration_bound,
                               estimate_standard, estimate_with)
from spinfd.objectives import make_objective
from spinfd.quasinewton import (BoxBounds, EpisodeMetrics, GaitParams, OptimizeOptions,
                                gait_components, gait_signals, minimize, reward_running,
                                reward_turning)
from spinfd.transform import apply, apply_inverse, apply_transpose, fwht, naive_matvec

_CACHE: dict = {}


def preset_records(name):
    if name not in _CACHE:
        cfg = get_preset(name)
        recs = run(cfg)
        _CACHE[name] = (recs, records_to_csv(recs, timing=cfg.timing == "inline"))
    return _CACHE[name][0]


def finals(records, estimator, iteration=None):
    """Per-seed cost at ``iteration`` (default: last row of each seed)."""
    out = {}
    for r in records:
        if r.estimator != estimator or (iteration is not None and r.iteration != iteration):
            continue
        if r.seed not in out or r.iteration >= out[r.seed][0]:
            out[r.seed] = (r.iteration, r.cost_or_error)
    return {s: v for s, (_, v) in sorted(out.items())}


def trace(records, estimator, seed):
    rows = sorted((r.iteration, r.cost_or_error) for r in records
                  if r.estimator == estimator and r.seed == seed)
    return [c for _, c in rows]


# 1 ---------------------------------------------------------------------------

def test_criterion_01_spinner_validity():
    t0 = time.perf_counter()
    cases = [("hadamard", 2**l) for l in range(1, 11)] + \
            [("quadratic_residue", p) for p in (3, 7, 11, 19, 23)]
    worst, balanced, checked = 0.0, True, 0
    for kind, size in cases:
        base = sp.build_hadamard(size.bit_length() - 1) if kind == "hadamard" else \
            sp.build_quadratic_residue(size)
        variants = [(1, base), (1, sp.randomize(base, 11))]
        variants += [(k, sp.build_multispinner(kind, k, 5 + k, size)) for k in (1, 2, 3)]
        for k, s in variants:
            M = s.dense()
            worst = max(worst, float(np.max(np.abs(M @ M.T - s.n * np.eye(s.n)))))
            if k == 1:
                rep = sp.verify_balanced(M)
                balanced &= rep.alpha_achieved == pytest.approx(1, abs=1e-12)
                balanced &= rep.beta_achieved == pytest.approx(1, abs=1e-12)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and balanced and elapsed < 5
    record(1, ok, f"{checked} matrices, max |MM^T - nI| = {worst:.1e}, "
                  f"alpha = beta = 1: {balanced}, {elapsed:.2f} s")
    assert ok


# 2 ---------------------------------------------------------------------------

def _q_python(p):
    """Q_p from Euler's criterion, pure Python integers."""
    def chi(a):
        return 1 if a % p == 0 else (1 if pow(a, (p - 1) // 2, p) == 1 else -1)
    return [[chi(i - j) for j in range(p)] for i in range(p)]


def test_criterion_02_residue_columns():
    bad = 0
    for p in (3, 7, 11, 19, 23):
        q = _q_python(p)
        assert sp.residue_tournament(p).tolist() == q
        for i in range(p):
            for j in range(i + 1, p):
                bad += sum(q[r][i] * q[r][j] for r in range(p)) != -1
    record(2, bad == 0, f"column pairs with c_i.c_j != -1: {bad} (exact integers)")
    assert bad == 0


# 3 ---------------------------------------------------------------------------

def _best_time(fn, reps):
    best = np.inf
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def test_criterion_03_fast_paths_and_scaling():
    rng = np.random.default_rng(0)
    worst = 0.0
    for l in range(1, 11):
        n = 2**l
        H = sp.build_hadamard(l).dense()
        variants = [sp.build_hadamard(l), sp.randomize(sp.build_hadamard(l), l),
                    sp.build_multispinner("hadamard", 2, l, n)]
        V = rng.standard_normal((n, 100))
        worst = max(worst, float(np.max(np.linalg.norm(fwht(V) - naive_matvec(H, V), axis=0)
                                        / np.linalg.norm(naive_matvec(H, V), axis=0))))
        for s in variants:
            M = s.dense()
            for fast, dense in ((apply(s, V), M @ V), (apply_transpose(s, V), M.T @ V),
                                (apply_inverse(s, V), np.linalg.solve(M, V))):
                rel = np.linalg.norm(fast - dense, axis=0) / np.linalg.norm(dense, axis=0)
                worst = max(worst, float(rel.max()))
    for p in (3, 7, 11, 19, 23):
        s = sp.build_quadratic_residue(p)
        V = rng.standard_normal((p + 1, 100))
        rel = np.linalg.norm(apply(s, V) - naive_matvec(s.dense(), V), axis=0)
        worst = max(worst, float((rel / np.linalg.norm(s.dense() @ V, axis=0)).max()))

    small, big = rng.standard_normal(2**10), rng.standard_normal(2**16)
    fw_ratio = _best_time(lambda: fwht(big), 20) / _best_time(lambda: fwht(small), 200)
    fw_limit = 1.5 * (2**16 * 16) / (2**10 * 10)
    # a dense 2^16 operator would need 32 GiB, so the quadratic side compares 2^12 with 2^9
    Hs, Hb = sp.build_hadamard(9).dense(), sp.build_hadamard(12).dense()
    vs, vb = rng.standard_normal(2**9), rng.standard_normal(2**12)
    nv_ratio = _best_time(lambda: naive_matvec(Hb, vb), 10) / \
        _best_time(lambda: naive_matvec(Hs, vs), 200)
    nv_limit = 0.5 * (2**12 / 2**9) ** 2
    ok = worst <= 1e-10 and fw_ratio <= fw_limit and nv_ratio >= nv_limit
    record(3, ok, f"max rel err {worst:.1e}; fwht 2^16/2^10 time x{fw_ratio:.0f} "
                  f"(<= {fw_limit:.0f}); naive 2^12/2^9 x{nv_ratio:.0f} (>= {nv_limit:.0f})")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_04_adversarial_exactness():
    t0 = time.perf_counter()
    worst_s, worst_h, trials = 0.0, 0.0, 0
    for n in (8, 64, 256):
        rng = np.random.default_rng(n)
        for t in range(1000):
            c = rng.standard_normal(n)
            eta = rng.standard_normal(n)
            eta *= rng.uniform(0.1, 10) / np.linalg.norm(eta)
            Delta = np.linalg.norm(eta)
            bb = Blackbox(lambda x, c=c: np.asarray(x) @ c, n, vectorized=True)
            noise = NoiseModel.adversarial(eta)
            std = estimate_standard(bb, np.zeros(n), 1e-2, noise).gradient
            kind = "hadamard" if t % 2 else "hadamard_random"
            hd = estimate_with(EstimatorConfig(kind, seed=t), bb, np.zeros(n), 1e-2, noise).gradient
            worst_s = max(worst_s, abs(np.linalg.norm(std - c) - Delta) / Delta)
            worst_h = max(worst_h, abs(np.linalg.norm(hd - c) - Delta / np.sqrt(n)) / Delta)
            trials += 1
    elapsed = time.perf_counter() - t0
    ok = worst_s <= 1e-10 and worst_h <= 1e-10 and elapsed < 10
    record(4, ok, f"{trials} trials: |err_std - D|/D <= {worst_s:.1e}, "
                  f"|err_struct - D/sqrt(n)|/D <= {worst_h:.1e}, {elapsed:.1f} s")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_criterion_05_concentration():
    t0 = time.perf_counter()
    recs = preset_records("theorem_bound")
    elapsed = time.perf_counter() - t0
    cfg = get_preset("theorem_bound")
    g = cfg.params["g"]
    errs = np.array([r.cost_or_error for r in recs])
    frac = float(np.mean(errs > 1 / np.sqrt(g)))
    bound = concentration_bound(cfg.params["n"], g)
    ok = len(recs) == 10_000 and frac <= min(bound, 0.0078) and elapsed < 60
    record(5, ok, f"failure fraction {frac:.4f} over {len(recs)} seeds "
                  f"(bound {bound:.7f}), max err {errs.max():.3f} vs {1 / np.sqrt(g):.3f}, "
                  f"{elapsed:.1f} s")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_06_ilqr_correctness():
    rng = np.random.default_rng(0)
    n, m, T = 4, 2, 50
    A = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    Q, R, Qf = np.eye(n), 0.1 * np.eye(m), 10 * np.eye(n)
    x0 = rng.standard_normal(n)
    env = envs.LinearQuadratic(horizon=T, dt=1.0, start_state=tuple(x0), A=A, B=B, Q=Q, R=R,
                               Qf=Qf)
    P = Qf
    for _ in range(T):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
    oracle = float(x0 @ P @ x0)
    rep, _ = ilqr.solve(env, None, EstimatorConfig("hadamard"),
                        ilqr.SolveOptions(max_iterations=2, delta=1e-3, tolerance=0))
    gap = min(rep.cost_per_iteration) - oracle
    lqr_ok = abs(gap) <= 1e-8 * max(1.0, oracle) and rep.iterations <= 2
    mono = {}
    for name in ("car", "cartpole", "acrobot"):
        r, _ = ilqr.solve(envs.make_environment(name), None, EstimatorConfig("hadamard_random"),
                          ilqr.SolveOptions(max_iterations=30, delta=1e-4, tolerance=0,
                                            initial_regularization=1.0))
        c = np.array([r.initial_cost] + r.cost_per_iteration)
        mono[name] = bool(np.all(np.diff(c) <= 0))
    ok = lqr_ok and all(mono.values())
    record(6, ok, f"LQR gap {gap:.1e} in {rep.iterations} iterations; monotone {mono}")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_criterion_07_car_relative():
    t0 = time.perf_counter()
    recs = preset_records("car_noisy")
    elapsed = time.perf_counter() - t0
    std, hd = finals(recs, "standard", 50), finals(recs, "hadamard_random", 50)
    med_ok = np.median(list(hd.values())) <= np.median(list(std.values()))
    fast = 0
    for seed, target in std.items():
        tr = trace(recs, "hadamard_random", seed)
        fast += any(c <= target for c in tr[:25])
    ok = med_ok and fast >= 8 and elapsed < 300
    record(7, ok, f"median@50 HD {np.median(list(hd.values())):.4g} vs standard "
                  f"{np.median(list(std.values())):.4g}; HD reaches standard@50 within 25 "
                  f"iterations in {fast}/10 seeds; {elapsed:.0f} s (6 estimators)")
    assert ok


# 8 ---------------------------------------------------------------------------

def _noiseless_reference(name, kind):
    cfg = get_preset(name)
    env = envs.make_environment(**cfg.target)
    rep, _ = ilqr.solve(env, None, EstimatorConfig(kind),
                        ilqr.SolveOptions(max_iterations=100, delta=cfg.delta, tolerance=0,
                                          initial_regularization=1.0))
    return rep.cost_per_iteration[-1]


def test_criterion_08_acrobot_cartpole_relative():
    ok, parts = True, []
    for name in ("acrobot_noisy", "cartpole_noisy"):
        recs = preset_records(name)
        kinds = [e["kind"] for e in get_preset(name).estimators]
        hits = {}
        for kind in kinds:
            ref = _noiseless_reference(name, kind)
            at30 = finals(recs, kind, 30)
            hits[kind] = sum(c <= 1.05 * ref for c in at30.values())
        std_miss = 10 - hits.pop("standard")
        good = all(h >= 8 for h in hits.values()) and std_miss >= 8
        ok &= good
        parts.append(f"{name}: structured hits {hits}, standard misses {std_miss}/10")
    record(8, ok, "; ".join(parts))
    assert ok


# 9 ---------------------------------------------------------------------------

def _iqr(v):
    return float(np.percentile(v, 75, method="lower") - np.percentile(v, 25, method="lower"))


def test_criterion_09_delta_sweep_variance():
    recs = preset_records("car_delta_sweep")
    rows, ok = [], True
    for delta in get_preset("car_delta_sweep").deltas:
        sub = [r for r in recs if r.delta == delta]
        s = _iqr(list(finals(sub, "standard", 50).values()))
        h = _iqr(list(finals(sub, "hadamard_random", 50).values()))
        ok &= h <= s
        rows.append(f"{delta:g}: {h:.3g} vs {s:.3g}")
    record(9, ok, "IQR@50 HD vs standard per delta: " + ", ".join(rows))
    assert ok


# 10 --------------------------------------------------------------------------

class _Recorder(Blackbox):
    def __init__(self, f, d):
        super().__init__(f, d, vectorized=True)
        self.points = []

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        if points.shape[0] == 1:
            self.points.append(points[0].copy())
        return super().evaluate(points)


def test_criterion_10_quasi_newton():
    sigma = 1e-3
    obj = make_objective("quadratic", 8)
    bounds = BoxBounds(np.full(8, obj.lower), np.full(8, obj.upper))
    hits, feasible = 0, True
    for seed in range(10):
        bb = _Recorder(obj.f, 8)
        rep = minimize(bb, np.zeros(8), bounds, EstimatorConfig("hadamard"),
                       OptimizeOptions(seed=seed, noise=NoiseModel.gaussian(sigma, seed)))
        hits += obj.f(np.array(rep.best_point)) - obj.minimum <= 10 * sigma
        feasible &= all(bounds.contains(p) for p in bb.points) and bool(bb.points)
    est = minimize(obj.blackbox(), np.zeros(8), bounds, EstimatorConfig("hadamard"))
    ana = minimize(obj.blackbox(), np.zeros(8), bounds, None,
                   OptimizeOptions(gradient=obj.gradient))
    gap = abs(est.best_value - ana.best_value)
    ok = hits >= 9 and feasible and gap <= 1e-3
    record(10, ok, f"within 10 sigma in {hits}/10 seeds, iterates feasible: {feasible}, "
                   f"noiseless vs analytic gap {gap:.1e}")
    assert ok


# 11 --------------------------------------------------------------------------

def test_criterion_11_gait_and_rewards():
    rng = np.random.default_rng(11)
    N = 10_000
    bnd = GaitParams.bounds()
    fails = {"periodic": 0, "amplitude": 0, "running": 0, "turning": 0}
    for _ in range(N):
        p = GaitParams.from_array(bnd.lower + rng.uniform(size=7) * (bnd.upper - bnd.lower))
        t = rng.uniform(0, 1e4)
        fails["periodic"] += bool(np.max(np.abs(gait_signals(p, t) - gait_signals(p, t + p.period))) > 1e-9)
        S, V = gait_components(p, t)
        fails["amplitude"] += bool(np.any(np.abs(S) > p.A_s) or np.any(np.abs(V) > p.A_v))

        d, drift, shake, r = rng.uniform(-100, 100, 4)
        E = rng.uniform(0, 100)
        a, b, g, x, rho = rng.uniform(0.01, 10, 5)
        h = rng.uniform(0.01, 10)
        run_c, turn_c = dict(alpha=a, beta=b, gamma=g, xi=x), dict(rho=rho, beta=b, xi=x)
        base = reward_running(EpisodeMetrics(d, E, drift, shake, r), run_c)
        up_d = reward_running(EpisodeMetrics(d + h, E, drift, shake, r), run_c)
        up_E = reward_running(EpisodeMetrics(d, E + h, drift, shake, r), run_c)
        up_drift = reward_running(EpisodeMetrics(d, E, drift + np.sign(drift) * h, shake, r), run_c)
        up_shake = reward_running(EpisodeMetrics(d, E, drift, shake + np.sign(shake) * h, r), run_c)
        expect = a * d - b * E - g * abs(drift) - x * abs(shake)
        fails["running"] += not (
            abs(base - expect) <= 1e-9 * max(1, abs(expect))
            and up_d > base and up_E < base and up_drift < base and up_shake < base
            and abs((up_d - base) - a * h) <= 1e-9 * max(1, abs(base))
            and abs((base - up_E) - b * h) <= 1e-9 * max(1, abs(base)))

        tb = reward_turning(EpisodeMetrics(0.0, E, 0.0, shake, r), turn_c)
        t_r = reward_turning(EpisodeMetrics(0.0, E, 0.0, shake, r + h), turn_c)
        t_E = reward_turning(EpisodeMetrics(0.0, E + h, 0.0, shake, r), turn_c)
        t_s = reward_turning(EpisodeMetrics(0.0, E, 0.0, shake + np.sign(shake) * h, r), turn_c)
        texp = rho * r - b * E - x * abs(shake)
        fails["turning"] += not (
            abs(tb - texp) <= 1e-9 * max(1, abs(texp)) and t_r > tb and t_E < tb and t_s < tb
            and abs((t_r - tb) - rho * h) <= 1e-9 * max(1, abs(tb)))
    ok = not any(fails.values())
    record(11, ok, f"{N} draws per suite, failures {fails}")
    assert ok


# 12 --------------------------------------------------------------------------

def test_criterion_12_determinism():
    diffs = []
    for name in preset_names():
        preset_records(name)
        first = _CACHE[name][1]
        cfg = get_preset(name)
        again = records_to_csv(run(cfg), timing=cfg.timing == "inline")
        if again != first:
            diffs.append(name)
    ok = not diffs
    record(12, ok, f"{len(preset_names())} presets rerun, differing CSVs: {diffs or 'none'}")
    assert ok
