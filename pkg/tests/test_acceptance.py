"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the report lines.
"""

import math
import time

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from mpfc_tune.acquisition import expected_improvement, probability_of_feasibility
from mpfc_tune.controller import DEFAULT_WEIGHTS
from mpfc_tune.gpr import Dataset, GprHyperparams, fit, matern52_ard
from mpfc_tune.optimizer import (ParetoArchive, WeightingScheme, best_feasible_curve,
                                 best_record, hv_curve, minimize_constrained, run_pareto,
                                 run_weighted_sum)
from mpfc_tune.pareto import (dominates, hypervolume, nondominated, normalize_front,
                              reference_point)
from mpfc_tune.simulation import A_LAT_MAX, AX_MAX, AX_MIN, ObjectiveTriple

SEED = 0
VERTICES = [WeightingScheme(1, 0, 0), WeightingScheme(0, 1, 0), WeightingScheme(0, 0, 1)]
MIXED = [WeightingScheme(0.5, 0.5, 0), WeightingScheme(0, 0.5, 0.5)]


def report(n, ok, detail, t0):
    print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'}: {detail} "
          f"({time.perf_counter() - t0:.1f} s)")
    assert ok, detail


# ---------------------------------------------------------------- 1


def _matern_mp(a, b, sf2, ell):
    mpmath.mp.dps = 40
    r = mpmath.sqrt(sum(((mpmath.mpf(x) - mpmath.mpf(y)) / mpmath.mpf(l)) ** 2
                        for x, y, l in zip(a, b, ell)))
    s5 = mpmath.sqrt(5)
    return mpmath.mpf(sf2) * (1 + s5 * r + 5 * r * r / 3) * mpmath.exp(-s5 * r)


def test_criterion_1_analytic_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    ei_err = 0.0
    for _ in range(100):
        mean, std, best = rng.normal(), rng.uniform(0.05, 2.0), rng.normal()
        draws = mean + std * rng.standard_normal(1_000_000)
        mc = np.maximum(best - draws, 0.0).mean()
        ei_err = max(ei_err, abs(expected_improvement(mean, std, best) - mc))
    pof_err = 0.0
    for _ in range(100):
        mean, std = rng.normal(scale=2.0), rng.uniform(0.05, 3.0)
        upper = max(mean, 0.0) + 40.0 * std
        brk = [mean] if 0.0 < mean < upper else None
        quad, _ = integrate.quad(lambda x: stats.norm.pdf(x, mean, std), 0.0, upper,
                                 points=brk, epsabs=1e-12, epsrel=1e-12, limit=200)
        pof_err = max(pof_err, abs(probability_of_feasibility(mean, std) - quad))
    mat_err = 0.0
    for _ in range(100):
        dim = int(rng.integers(1, 8))
        a, b = rng.random(dim), rng.random(dim)
        ell, sf2 = rng.uniform(0.1, 2.0, dim), rng.uniform(0.1, 3.0)
        hyp = GprHyperparams(0.0, sf2, tuple(ell), 1e-6)
        k = matern52_ard(a[None], b[None], hyp)[0, 0]
        mat_err = max(mat_err, abs(k - float(_matern_mp(a, b, sf2, ell))))
    ok = ei_err < 1e-2 and pof_err < 1e-4 and mat_err < 1e-5
    report(1, ok, f"max |EI-MC|={ei_err:.2e} (<1e-2), max |PoF-quad|={pof_err:.2e} (<1e-4), "
                  f"max |Matern-mp|={mat_err:.2e} (<1e-5)", t0)


# ---------------------------------------------------------------- 2


def test_criterion_2_gpr_correctness():
    t0 = time.perf_counter()
    x = np.linspace(0, 2 * np.pi, 20)
    model = fit(Dataset(x[:, None], np.sin(x)), mode="exact")
    train_err = np.max(np.abs(model.predict(x[:, None])[0] - np.sin(x)))
    mid = (x[1:] + x[:-1]) / 2
    mid_err = np.max(np.abs(model.predict(mid[:, None])[0] - np.sin(mid)))
    grid = np.linspace(-5, 12, 4000)[:, None]
    var_excess = np.max(model.predict(grid)[1] ** 2 - model.prior_var)

    rng = np.random.default_rng(SEED)
    X = rng.random((60, 4))
    data = Dataset(X, np.sin(3 * X[:, 0]) * X[:, 1] + X[:, 2] ** 2 - X[:, 3])
    exact = fit(data, mode="exact")
    sparse = fit(data, mode="fitc", n_inducing=len(data), hyp=exact.hyp)
    Xt = rng.random((500, 4))
    (me, se), (ms, ss) = exact.predict(Xt), sparse.predict(Xt)
    fitc_err = max(np.max(np.abs(me - ms)), np.max(np.abs(se - ss)))
    ok = train_err < 1e-6 and mid_err < 1e-2 and var_excess <= 1e-12 and fitc_err < 1e-6
    report(2, ok, f"train err={train_err:.1e} (<1e-6), midpoint err={mid_err:.1e} (<1e-2), "
                  f"max(var-prior)={var_excess:.1e} (<=0), |FITC-exact|={fitc_err:.1e} "
                  "(<1e-6)", t0)


# ---------------------------------------------------------------- 3


def _brute_front(points):
    keep = []
    for i, p in enumerate(points):
        if not any(dominates(q, p) for j, q in enumerate(points) if j != i):
            if not any(np.array_equal(p, points[k]) for k in keep):
                keep.append(i)
    return points[keep]


def _mc_hv(front, ref, rng, n=10_000_000, chunk=1_000_000):
    lo = front.min(axis=0)
    hits = 0
    for _ in range(n // chunk):
        cols = [lo[k] + (ref[k] - lo[k]) * rng.random(chunk) for k in range(3)]
        hit = np.zeros(chunk, dtype=bool)
        for p in front:
            hit |= (cols[0] >= p[0]) & (cols[1] >= p[1]) & (cols[2] >= p[2])
        hits += np.count_nonzero(hit)
    return hits / n * np.prod(ref - lo)


def _record(i, p, g):
    from mpfc_tune.optimizer import EvaluationRecord
    return EvaluationRecord(i, "bo", "stream", 0, None, (1.0,) * 7, (0.5,) * 7,
                            ObjectiveTriple(*map(float, p), int(g)), 0.0, 0.0)


def test_criterion_3_pareto_and_hypervolume():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    archive_ok = 0
    for _ in range(50):
        pts = rng.random((200, 3))
        g = np.where(rng.random(200) < 0.2, -1, 1)
        arch = ParetoArchive.from_records(_record(i, p, gi)
                                          for i, (p, gi) in enumerate(zip(pts, g)))
        got = sorted(map(tuple, arch.objectives()))
        archive_ok += got == sorted(map(tuple, _brute_front(pts[g == 1])))
    worst = 0.0
    for _ in range(20):
        # points near a concave surface give large nondominated sets
        raw = np.abs(rng.normal(size=(200, 3)))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        front = nondominated(raw * rng.uniform(1.0, 1.3, (200, 1)))[:20]
        ref = front.max(axis=0) * 1.1
        exact = hypervolume(front, ref)
        worst = max(worst, abs(exact - _mc_hv(front, ref, rng)) / exact)
    ok = archive_ok == 50 and worst < 0.01
    report(3, ok, f"archive==brute force on {archive_ok}/50 streams, "
                  f"max HV rel. error vs 1e7-sample MC={worst:.2e} (<1e-2)", t0)


# ---------------------------------------------------------------- 4


def test_criterion_4_controller_sanity(default_lap):
    t0 = time.perf_counter()
    lap = default_lap.log
    obj = default_lap.objectives
    checks = {
        "lap complete": lap.lap_complete,
        "g=+1": obj.g == 1,
        "|e_lat|<l_w/2": np.max(np.abs(lap.e_lat)) < lap.lane_width / 2,
        "v<=v_lim+0.1": np.max(lap.v - lap.v_lim) <= 0.1,
        "a_x in box": AX_MIN <= lap.a_x.min() and lap.a_x.max() <= AX_MAX,
        "|a_lat|<=0.3g": np.max(np.abs(lap.a_lat)) <= A_LAT_MAX,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"max|e_lat|={np.max(np.abs(lap.e_lat)):.3f} m, "
              f"max(v-v_lim)={np.max(lap.v - lap.v_lim):.3f}, "
              f"a_x in [{lap.a_x.min():.2f}, {lap.a_x.max():.2f}], "
              f"max|a_lat|={np.max(np.abs(lap.a_lat)):.2f}; failed: {failed or 'none'}")
    report(4, not failed, detail, t0)


# ---------------------------------------------------------------- 6


def _synthetic(x):
    centre = np.linspace(0.2, 0.8, 7)
    scale = np.linspace(1.0, 5.0, 7)
    value = float(np.sum(scale * (x - centre) ** 2))
    return value, float(np.linalg.norm(x - 0.5)) > 0.6  # infeasible ball holds the optimum


def test_criterion_6_bo_beats_random():
    t0 = time.perf_counter()
    bo, rs = [], []
    for seed in range(10):
        X, vals, feas = minimize_constrained(_synthetic, 7, 60, seed=seed)
        bo.append(best_feasible_curve(vals, feas)[-1])
        cand = np.random.default_rng(1000 + seed).random((60, 7))
        out = [_synthetic(x) for x in cand]
        rs.append(min((v for v, ok in out if ok), default=np.inf))
    ok = np.median(bo) < np.median(rs)
    report(6, ok, f"median best feasible: BO={np.median(bo):.4f}, "
                  f"random={np.median(rs):.4f} over 10 seeds", t0)


# ---------------------------------------------------------------- 5, 7, 8


@pytest.fixture(scope="module")
def comparison():
    t0 = time.perf_counter()
    a1 = run_weighted_sum(VERTICES + MIXED, 30, seed=SEED, include=DEFAULT_WEIGHTS)
    t1 = time.perf_counter()
    a2 = run_pareto(150, seed=SEED, include=DEFAULT_WEIGHTS)
    t2 = time.perf_counter()
    print(f"\n[comparison run] approach 1: {len(a1.records)} evals in {t1 - t0:.0f} s, "
          f"approach 2: {len(a2.records)} evals in {t2 - t1:.0f} s")
    return a1, a2


def _best_for(result, w):
    recs = [r for r in result.records if r.weighting == tuple(w.as_array())]
    return best_record(recs, w)


@pytest.mark.slow
def test_criterion_5_objective_conflict(comparison):
    t0 = time.perf_counter()
    a1, _ = comparison
    jerk, speed = _best_for(a1, VERTICES[0]), _best_for(a1, VERTICES[1])
    ok = (jerk is not None and speed is not None
          and speed.objectives.E_v < jerk.objectives.E_v
          and speed.objectives.E_jerk > jerk.objectives.E_jerk)
    detail = "no feasible best point"
    if jerk is not None and speed is not None:
        detail = (f"best w=(0,1,0): E_v={speed.objectives.E_v:.4g}, "
                  f"E_jerk={speed.objectives.E_jerk:.4g}; best w=(1,0,0): "
                  f"E_v={jerk.objectives.E_v:.4g}, E_jerk={jerk.objectives.E_jerk:.4g}")
    report(5, ok, detail, t0)


@pytest.mark.slow
def test_criterion_7_two_approach_comparison(comparison):
    t0 = time.perf_counter()
    a1, a2 = comparison
    expert = a2.records[0]
    assert np.allclose(expert.m_raw, DEFAULT_WEIGHTS.as_array()) and expert.feasible
    base = expert.objectives.values()
    initial = ParetoArchive.from_records(a2.records[:10])
    fronts = {name: normalize_front(arch.objectives(), base)
              for name, arch in (("approach 1", a1.archive), ("approach 2", a2.archive),
                                 ("initial", initial))}
    ref = reference_point(*fronts.values())
    hv = {name: hypervolume(f, ref) for name, f in fronts.items()}
    curves = {name: hv_curve(res.records, ref, base)
              for name, res in (("approach 1", a1), ("approach 2", a2))}
    monotone = all(np.all(np.diff(c) >= 0) for c in curves.values())
    ok = (len(a1.archive) >= 5 and len(a2.archive) >= 5
          and hv["approach 1"] > hv["initial"] and hv["approach 2"] > hv["initial"]
          and monotone)
    report(7, ok, f"points: A1={len(a1.archive)}, A2={len(a2.archive)} (>=5); "
                  f"HV: A1={hv['approach 1']:.4f}, A2={hv['approach 2']:.4f}, "
                  f"initial={hv['initial']:.4f}; HV curves non-decreasing={monotone}", t0)


@pytest.mark.slow
def test_criterion_8_scalability(comparison):
    t0 = time.perf_counter()
    a1, a2 = comparison
    cum = a1.cumulative_time()
    n = np.arange(1, cum.size + 1)
    r2 = stats.linregress(n, cum).rvalue ** 2
    over = {r.iteration: r.overhead_time for r in a2.records}
    early = np.mean([over[i] for i in range(10, 31)])
    late = np.mean([over[i] for i in range(80, 101)])
    ok = r2 >= 0.99 and late > early
    report(8, ok, f"approach 1 cumulative time vs evaluations R^2={r2:.4f} (>=0.99); "
                  f"approach 2 mean overhead it 80-100={late:.3f} s vs it 10-30={early:.3f} s",
           t0)
