import json
import math

import numpy as np
import pytest

from mpfc_tune.controller import DEFAULT_WEIGHTS
from mpfc_tune.optimizer import (EvaluationRecord, ParetoArchive, SearchSettings, WeightBox,
                                 WeightingScheme, _maybe_log, best_feasible_curve, hv_curve,
                                 generate_weight_grid, initial_sampling, read_ledger,
                                 run_pareto, run_weighted_sum, scalarize)
from mpfc_tune.pareto import nondominated
from mpfc_tune.simulation import ObjectiveTriple

FAST = SearchSettings(n0=10, acq_budget=400)
BOX = WeightBox()


class Synthetic:
    """Three conflicting quadratics in normalised coordinates plus an infeasible slab."""

    centres = np.array([[0.2] * 7, [0.8] * 7, [0.5] * 7])

    def __init__(self):
        self.calls = 0

    def __call__(self, raw):
        self.calls += 1
        u = BOX.to_unit(raw)
        e = 0.05 + ((u - self.centres) ** 2).sum(axis=1)
        return ObjectiveTriple(E_lat=e[2], E_jerk=e[0], E_v=e[1], g=-1 if u[0] > 0.9 else 1)


def test_scalarize_examples():
    ones = ObjectiveTriple(1.0, 1.0, 1.0, 1)
    for w in generate_weight_grid(0.25):
        assert scalarize(ones, w) == pytest.approx(1.0)
    obj = ObjectiveTriple(E_lat=6.0, E_jerk=2.0, E_v=4.0, g=1)
    assert scalarize(obj, WeightingScheme(0.5, 0.25, 0.25)) == pytest.approx(3.5)
    assert scalarize(obj, WeightingScheme(1.0, 0.0, 0.0)) == 2.0


def test_weighting_must_lie_on_simplex():
    with pytest.raises(ValueError):
        WeightingScheme(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        WeightingScheme(1.2, -0.2, 0.0)


@pytest.mark.parametrize("step,count", [(0.1, 66), (0.2, 21), (1.0, 3), (0.5, 6)])
def test_weight_grid_counts(step, count):
    grid = generate_weight_grid(step)
    assert len(grid) == count == math.comb(round(1 / step) + 2, 2)
    arr = np.array([w.as_array() for w in grid])
    assert np.allclose(arr.sum(axis=1), 1.0)
    assert len({tuple(np.round(a, 9)) for a in arr}) == count


@pytest.mark.parametrize("step", [0.3, 0.0, 1.5])
def test_weight_grid_invalid_step(step):
    with pytest.raises(ValueError):
        generate_weight_grid(step)


def test_weight_box_round_trip():
    rng = np.random.default_rng(0)
    raw = 10.0 ** rng.uniform(-3, 3, size=(50, 7))
    assert np.allclose(BOX.from_unit(BOX.to_unit(raw)), raw, rtol=1e-12)
    assert np.allclose(BOX.to_unit([1.0] * 7), 0.5)
    with pytest.raises(ValueError):
        BOX.to_unit([1e4] + [1.0] * 6)
    with pytest.raises(ValueError):
        WeightBox(lower=(1.0,) * 7, upper=(0.5,) * 7)


def test_lhs_strata_and_determinism():
    x = initial_sampling(10, seed=3)
    assert x.shape == (10, 7)
    for d in range(7):
        assert sorted(np.floor(x[:, d] * 10).astype(int)) == list(range(10))
    assert np.array_equal(x, initial_sampling(10, seed=3))
    assert not np.array_equal(x, initial_sampling(10, seed=4))


def test_include_point_first():
    x = initial_sampling(1, seed=0, include=DEFAULT_WEIGHTS.as_array())
    assert np.allclose(BOX.from_unit(x[0]), DEFAULT_WEIGHTS.as_array())
    x = initial_sampling(10, seed=0, include=DEFAULT_WEIGHTS.as_array())
    assert x.shape == (10, 7)
    assert np.allclose(x[0], BOX.to_unit(DEFAULT_WEIGHTS.as_array()))


def test_log_transform_rule():
    y, used = _maybe_log([1e-3, 1.0, 10.0])
    assert used and np.allclose(y, np.log([1e-3, 1.0, 10.0]))
    y, used = _maybe_log([1.0, 500.0])
    assert not used and np.allclose(y, [1.0, 500.0])
    _, used = _maybe_log([-1.0, 1e6])
    assert not used


def test_archive_update_rules():
    arch = ParetoArchive()
    rec = _record(0, (1.0, 1.0, 1.0))
    assert arch.update(rec) and len(arch) == 1
    assert not arch.update(_record(1, (2.0, 2.0, 2.0)))
    assert not arch.update(_record(2, (0.1, 0.1, 0.1), g=-1))
    assert arch.update(_record(3, (0.5, 0.5, 0.5)))
    assert [r.iteration for r in arch.records] == [3]


def test_archive_matches_brute_force_stream():
    rng = np.random.default_rng(7)
    pts = rng.random((200, 3))
    g = np.where(rng.random(200) < 0.2, -1, 1)
    arch = ParetoArchive.from_records(_record(i, p, gi) for i, (p, gi) in enumerate(zip(pts, g)))
    expected = nondominated(pts[g == 1])
    got = arch.objectives()
    assert sorted(map(tuple, got)) == sorted(map(tuple, expected))


def _record(i, p, g=1):
    obj = ObjectiveTriple(float(p[0]), float(p[1]), float(p[2]), int(g))
    return EvaluationRecord(i, "bo", "test", 0, None, (1.0,) * 7, (0.5,) * 7, obj, 0.0, 0.0)


def test_weighted_sum_accounting_and_incumbent():
    prob = Synthetic()
    w = WeightingScheme(1.0, 0.0, 0.0)
    res = run_weighted_sum([w], 12, seed=0, problem=prob, settings=FAST)
    assert len(res.records) == 12 == prob.calls
    assert [r.iteration for r in res.records] == list(range(12))
    assert all(r.phase == "initial" for r in res.records[:10])
    assert all(r.phase == "bo" for r in res.records[10:])
    vals = [scalarize(r.objectives, w) for r in res.records]
    best = best_feasible_curve(vals, [r.feasible for r in res.records])
    assert np.all(np.diff(best) <= 0)
    assert np.allclose(res.records[0].m_raw, DEFAULT_WEIGHTS.as_array())


def test_weighted_sum_instances_reset():
    res = run_weighted_sum(generate_weight_grid(1.0), 10, seed=5, problem=Synthetic(),
                           settings=FAST, include=None)
    assert len(res.records) == 30
    assert [r.instance for r in res.records] == [0] * 10 + [1] * 10 + [2] * 10
    first = np.array([r.m_unit for r in res.records[:10]])
    second = np.array([r.m_unit for r in res.records[10:20]])
    assert np.allclose(first, initial_sampling(10, 5))
    assert np.allclose(second, initial_sampling(10, 6))


def test_budget_equal_n0_gives_initial_front():
    res = run_pareto(10, seed=1, problem=Synthetic(), settings=FAST)
    obj = res.objectives()
    feas = obj[np.all(np.isfinite(obj), axis=1)]
    assert sorted(map(tuple, res.archive.objectives())) == sorted(map(tuple, nondominated(feas)))


def test_pareto_hv_non_decreasing_and_determinism(tmp_path):
    a = run_pareto(14, seed=2, problem=Synthetic(), settings=FAST,
                   ledger_path=tmp_path / "a.jsonl")
    b = run_pareto(14, seed=2, problem=Synthetic(), settings=FAST)
    assert all(x.same_evaluation(y) for x, y in zip(a.records, b.records))
    hv = hv_curve(a.records, ref=np.full(3, 10.0))
    assert np.all(np.diff(hv) >= 0) and hv[-1] > 0
    assert len(read_ledger(tmp_path / "a.jsonl")) == 14


def test_resume_reproduces_ledger(tmp_path):
    full = tmp_path / "full.jsonl"
    run_pareto(13, seed=4, problem=Synthetic(), settings=FAST, ledger_path=full)
    lines = full.read_text().splitlines()
    partial = tmp_path / "partial.jsonl"
    partial.write_text("\n".join(lines[:11]) + "\n")
    prob = Synthetic()
    resumed = tmp_path / "resumed.jsonl"
    run_pareto(13, seed=4, problem=prob, settings=FAST, ledger_path=resumed,
               resume=read_ledger(partial))
    assert prob.calls == 2
    a, b = read_ledger(full), read_ledger(resumed)
    assert len(a) == len(b) == 13
    assert all(x.same_evaluation(y) for x, y in zip(a, b))
    with pytest.raises(RuntimeError):
        run_pareto(13, seed=99, problem=Synthetic(), settings=FAST,
                   resume=read_ledger(partial))


def test_archive_json_csv_round_trip(tmp_path):
    res = run_pareto(10, seed=0, problem=Synthetic(), settings=FAST)
    res.archive.to_json(tmp_path / "a.json", evaluations=10, run_time=1.5)
    back = ParetoArchive.from_json(tmp_path / "a.json")
    assert back.meta == {"evaluations": 10, "run_time_s": 1.5}
    assert all(x.to_dict() == y.to_dict() for x, y in zip(res.archive.records, back.records))
    res.archive.to_csv(tmp_path / "a.csv")
    rows = np.genfromtxt(tmp_path / "a.csv", delimiter=",", skip_header=1, ndmin=2)
    assert np.array_equal(rows[:, :3], res.archive.objectives())
    assert json.loads((tmp_path / "a.json").read_text())["evaluations"] == 10


def test_budget_below_n0_rejected():
    with pytest.raises(ValueError):
        run_pareto(5, problem=Synthetic(), settings=FAST)
