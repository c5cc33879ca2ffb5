"""Bayesian-optimisation loops for tuning the controller weights.

Two strategies are provided:

* ``run_weighted_sum``: one independent constrained single-objective search
  per weighting of the three lap metrics (expected improvement times
  probability of feasibility), fully reset between weightings.
* ``run_pareto``: a single search with one surrogate per metric plus the
  feasibility surrogate, driven by the expected-improvement-matrix criterion.

Every lap evaluation becomes an ``EvaluationRecord`` that is appended to a
JSON-lines ledger. A run can be resumed from a partial ledger: recorded
evaluations are replayed instead of re-simulated, which reproduces the
uninterrupted run exactly because all randomness is derived from the seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import acquisition as acq
from . import gpr
from .controller import DEFAULT_WEIGHTS, WEIGHT_NAMES, ControllerConfig, WeightVector
from .pareto import hypervolume_curve, nondominated_mask
from .simulation import ObjectiveTriple, evaluate
from .track import TrackSpec, build_default_loop
from .vehicle import VehicleParams

log = logging.getLogger(__name__)

N_WEIGHTS = len(WEIGHT_NAMES)
LOG_DECADES = 3.0
RECORD_FIELDS = ("iteration", "phase", "approach", "instance", "weighting", "m_raw",
                 "m_unit", "objectives", "eval_time", "overhead_time")


@dataclass(frozen=True)
class WeightBox:
    """Box of admissible raw weights, searched in log10 coordinates mapped to [0, 1]."""

    lower: tuple = (1e-3,) * N_WEIGHTS
    upper: tuple = (1e3,) * N_WEIGHTS

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (N_WEIGHTS,) or hi.shape != (N_WEIGHTS,):
            raise ValueError(f"weight box needs {N_WEIGHTS} lower and upper bounds")
        if np.any(lo <= 0) or np.any(hi <= lo):
            raise ValueError("weight box needs 0 < lower < upper")
        object.__setattr__(self, "lower", tuple(map(float, lo)))
        object.__setattr__(self, "upper", tuple(map(float, hi)))

    def contains(self, raw) -> bool:
        raw = np.asarray(raw, dtype=float)
        return bool(np.all(raw >= np.asarray(self.lower) * (1 - 1e-12))
                    and np.all(raw <= np.asarray(self.upper) * (1 + 1e-12)))

    def to_unit(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if not self.contains(raw):
            raise ValueError("weights outside the search box")
        lo, hi = np.log10(self.lower), np.log10(self.upper)
        return np.clip((np.log10(raw) - lo) / (hi - lo), 0.0, 1.0)

    def from_unit(self, unit) -> np.ndarray:
        unit = np.asarray(unit, dtype=float)
        lo, hi = np.log10(self.lower), np.log10(self.upper)
        return 10.0 ** (lo + np.clip(unit, 0.0, 1.0) * (hi - lo))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data: dict | None) -> "WeightBox":
        data = dict(data or {})
        kw = {}
        for key in ("lower", "upper"):
            if key in data:
                val = data[key]
                kw[key] = tuple([float(val)] * N_WEIGHTS if np.isscalar(val) else val)
        unknown = set(data) - {"lower", "upper"}
        if unknown:
            raise ValueError(f"unknown weight-box setting(s): {sorted(unknown)}")
        return cls(**kw)


@dataclass(frozen=True)
class WeightingScheme:
    """Convex weights of (jerk, speed error, lateral error)."""

    w_jerk: float
    w_v: float
    w_lat: float

    def __post_init__(self):
        w = self.as_array()
        if np.any(w < 0) or np.any(w > 1) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
            raise ValueError(f"weighting must lie on the unit simplex, got {tuple(w)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_jerk, self.w_v, self.w_lat], dtype=float)

    def label(self) -> str:
        return "w" + "-".join(f"{v:g}" for v in self.as_array())


def scalarize(obj: ObjectiveTriple, w: WeightingScheme) -> float:
    return w.w_jerk * obj.E_jerk + w.w_v * obj.E_v + w.w_lat * obj.E_lat


def generate_weight_grid(step: float) -> list[WeightingScheme]:
    """All simplex lattice points whose coordinates are multiples of ``step``."""
    if not (0 < step <= 1):
        raise ValueError("step must lie in (0, 1]")
    k = round(1.0 / step)
    if not math.isclose(k * step, 1.0, rel_tol=1e-9):
        raise ValueError("1/step must be an integer")
    grid = []
    for i in range(k, -1, -1):
        for j in range(k - i, -1, -1):
            grid.append(WeightingScheme(i / k, j / k, (k - i - j) / k))
    return grid


@dataclass
class EvaluationRecord:
    iteration: int
    phase: str  # "initial" or "bo"
    approach: str  # "weighted" or "pareto" (or anything for custom problems)
    instance: int
    weighting: tuple | None
    m_raw: tuple
    m_unit: tuple
    objectives: ObjectiveTriple
    eval_time: float
    overhead_time: float

    @property
    def feasible(self) -> bool:
        return self.objectives.feasible

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in RECORD_FIELDS}
        d["objectives"] = self.objectives.to_dict()
        d["m_raw"] = list(self.m_raw)
        d["m_unit"] = list(self.m_unit)
        d["weighting"] = None if self.weighting is None else list(self.weighting)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        return cls(int(d["iteration"]), str(d["phase"]), str(d["approach"]),
                   int(d["instance"]),
                   None if d.get("weighting") is None else tuple(map(float, d["weighting"])),
                   tuple(map(float, d["m_raw"])), tuple(map(float, d["m_unit"])),
                   ObjectiveTriple.from_dict(d["objectives"]), float(d["eval_time"]),
                   float(d["overhead_time"]))

    def same_evaluation(self, other: "EvaluationRecord") -> bool:
        """Equal in everything except wall-clock timings."""
        a, b = self.to_dict(), other.to_dict()
        for k in ("eval_time", "overhead_time"):
            a.pop(k)
            b.pop(k)
        return a == b


def _objective_key(obj: ObjectiveTriple) -> np.ndarray:
    return obj.values()


@dataclass
class ParetoArchive:
    """Feasible records whose metric triples are mutually nondominated."""

    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def objectives(self) -> np.ndarray:
        return np.array([_objective_key(r.objectives) for r in self.records]).reshape(-1, 3)

    def update(self, record: EvaluationRecord) -> bool:
        """Insert ``record`` if feasible and not dominated; returns True if inserted."""
        if not record.feasible:
            return False
        p = _objective_key(record.objectives)
        if not np.all(np.isfinite(p)):
            return False
        front = self.objectives()
        if len(front) and np.any(np.all(front <= p, axis=1)):
            return False
        keep = ~(np.all(p <= front, axis=1) & np.any(p < front, axis=1)) if len(front) else []
        self.records = [r for r, k in zip(self.records, keep) if k] + [record]
        return True

    @classmethod
    def from_records(cls, records) -> "ParetoArchive":
        arch = cls()
        for r in records:
            arch.update(r)
        return arch

    def to_json(self, path, evaluations: int | None = None,
                run_time: float | None = None) -> None:
        data = {"evaluations": evaluations, "run_time_s": run_time,
                "records": [r.to_dict() for r in self.records]}
        Path(path).write_text(json.dumps(data, indent=1))

    @classmethod
    def from_json(cls, path) -> "ParetoArchive":
        """Read an archive; evaluation count and run time land in ``meta``."""
        data = json.loads(Path(path).read_text())
        meta = {}
        if isinstance(data, dict):
            meta = {k: data.get(k) for k in ("evaluations", "run_time_s")}
            data = data.get("records")
        if not isinstance(data, list):
            raise ValueError(f"{path}: archive must hold a list of records")
        arch = cls([EvaluationRecord.from_dict(d) for d in data])
        arch.meta = meta
        return arch

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["E_lat", "E_jerk", "E_v", *WEIGHT_NAMES,
                        *(f"u_{n}" for n in WEIGHT_NAMES), "iteration", "instance"])
            for r in self.records:
                w.writerow([*map(repr, r.objectives.values().tolist()),
                            *map(repr, r.m_raw), *map(repr, r.m_unit), r.iteration, r.instance])


def update_pareto_archive(archive: ParetoArchive, record: EvaluationRecord) -> ParetoArchive:
    archive.update(record)
    return archive


# ---------------------------------------------------------------- evaluation


class LapProblem:
    """Maps raw weight vectors to lap metrics by closed-loop simulation."""

    def __init__(self, track: TrackSpec | None = None,
                 controller: ControllerConfig | None = None,
                 vehicle: VehicleParams | None = None, **lap_kwargs):
        self.track = track or build_default_loop()
        self.controller = controller or ControllerConfig()
        self.vehicle = vehicle or VehicleParams()
        self.lap_kwargs = lap_kwargs

    def __call__(self, raw) -> ObjectiveTriple:
        cfg = self.controller.with_weights(WeightVector.from_array(raw))
        try:
            return evaluate(self.track, cfg, self.vehicle, **self.lap_kwargs).objectives
        except (ValueError, FloatingPointError, RuntimeError) as exc:
            log.warning("lap evaluation failed: %s", exc)
            return ObjectiveTriple(math.inf, math.inf, math.inf, -1)


class Ledger:
    """Append-only evaluation log with optional replay of an earlier run."""

    def __init__(self, path=None, replay=()):
        self.path = None if path is None else Path(path)
        self.records: list[EvaluationRecord] = []
        self._replay = list(replay)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")
            for r in self._replay:
                self._write(r)

    def _write(self, record):
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record.to_dict()) + "\n")

    def next_replay(self, unit) -> EvaluationRecord | None:
        n = len(self.records)
        if n >= len(self._replay):
            return None
        rec = self._replay[n]
        if not np.allclose(rec.m_unit, unit, rtol=0, atol=1e-9):
            raise RuntimeError(
                f"ledger replay diverged at evaluation {n}: recorded point differs from "
                "the proposed one (was the configuration or seed changed?)")
        return rec

    def append(self, record: EvaluationRecord) -> None:
        replayed = len(self.records) < len(self._replay)
        self.records.append(record)
        if not replayed:
            self._write(record)

    def __len__(self):
        return len(self.records)


def read_ledger(path) -> list[EvaluationRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                records.append(EvaluationRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad ledger line ({exc})") from None
    return records


# ---------------------------------------------------------------- sampling


def initial_sampling(n0: int, seed: int, box: WeightBox | None = None,
                     include=None, dim: int = N_WEIGHTS) -> np.ndarray:
    """Initial design in normalised coordinates.

    Latin-hypercube sample of size ``n0``; if ``include`` (raw weights) is
    given it takes the first of the ``n0`` slots and the hypercube covers the rest.
    """
    if n0 < 1:
        raise ValueError("n0 must be at least 1")
    pts = []
    if include is not None:
        box = box or WeightBox()
        pts.append(box.to_unit(include))
    n_lhs = n0 - len(pts)
    if n_lhs > 0:
        pts.extend(qmc.LatinHypercube(d=dim, seed=seed).random(n_lhs))
    return np.array(pts).reshape(n0, dim)


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# ---------------------------------------------------------------- surrogates


def _maybe_log(y):
    """Log-transform strictly positive targets spanning more than three decades."""
    y = np.asarray(y, dtype=float)
    if np.all(y > 0) and y.max() / y.min() > 10.0**LOG_DECADES:
        return np.log(y), True
    return y, False


def _fit(X, y, seed, mode="auto"):
    return gpr.fit(gpr.Dataset(X, y), mode=mode, seed=seed)


@dataclass
class SearchSettings:
    n0: int = 10
    acq_budget: int = acq.DEFAULT_BUDGET
    gp_mode: str = "auto"


def propose_eic(X, values, g, seed, settings: SearchSettings = SearchSettings(),
                dim: int = N_WEIGHTS) -> np.ndarray:
    """Next point for a constrained single-objective search.

    ``values`` of infeasible points are ignored. While fewer than two feasible
    points exist the search maximises the probability of feasibility only.
    """
    X = np.asarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    feas = g > 0
    gp_g = _fit(X, g, seed, settings.gp_mode)
    if feas.sum() >= 2:
        y, _ = _maybe_log(np.asarray(values, dtype=float)[feas])
        gp_b = _fit(X[feas], y, seed + 1, settings.gp_mode)
        best = float(y.min())
    else:
        gp_b, best = None, None

    def score(cand):
        mg, sg = gp_g.predict(cand)
        if gp_b is None:
            return acq.probability_of_feasibility(mg, sg)
        mb, sb = gp_b.predict(cand)
        return acq.eic(mb, sb, best, mg, sg)

    return acq.maximize_acquisition(score, budget=settings.acq_budget, seed=seed + 2, dim=dim)


def propose_ceim(X, objectives, g, seed, settings: SearchSettings = SearchSettings(),
                 dim: int = N_WEIGHTS) -> np.ndarray:
    """Next point for the multi-objective search (one surrogate per metric)."""
    X = np.asarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    feas = g > 0
    gp_g = _fit(X, g, seed, settings.gp_mode)
    if feas.sum() < 2:
        def score(cand):
            return acq.probability_of_feasibility(*gp_g.predict(cand))
        return acq.maximize_acquisition(score, budget=settings.acq_budget, seed=seed + 2,
                                        dim=dim)
    obj = np.asarray(objectives, dtype=float)[feas]
    cols = np.column_stack([_maybe_log(obj[:, i])[0] for i in range(obj.shape[1])])
    gps = [_fit(X[feas], cols[:, i], seed + 3 + i, settings.gp_mode)
           for i in range(cols.shape[1])]
    front = cols[nondominated_mask(cols)]
    scale = cols.max(axis=0) - cols.min(axis=0)
    scale = np.where(scale > 0, scale, 1.0)

    def score(cand):
        preds = [gp.predict(cand) for gp in gps]
        means = np.column_stack([p[0] for p in preds])
        stds = np.column_stack([p[1] for p in preds])
        return acq.ceim(means, stds, front, *gp_g.predict(cand), scale=scale)

    return acq.maximize_acquisition(score, budget=settings.acq_budget, seed=seed + 2, dim=dim)


# ---------------------------------------------------------------- loops


@dataclass
class RunResult:
    records: list
    archive: ParetoArchive

    def objectives(self) -> np.ndarray:
        """Metric triples in evaluation order; infeasible rows are nan."""
        out = np.full((len(self.records), 3), np.nan)
        for i, r in enumerate(self.records):
            if r.feasible:
                out[i] = r.objectives.values()
        return out

    def cumulative_time(self) -> np.ndarray:
        return np.cumsum([r.eval_time + r.overhead_time for r in self.records])


def _evaluate(problem, box, unit, ledger, meta, overhead):
    rec = ledger.next_replay(unit)
    if rec is None:
        raw = box.from_unit(unit)
        t0 = time.perf_counter()
        obj = problem(raw)
        rec = EvaluationRecord(objectives=obj, eval_time=time.perf_counter() - t0,
                               overhead_time=overhead, m_raw=tuple(map(float, raw)),
                               m_unit=tuple(map(float, unit)), **meta)
    ledger.append(rec)
    return rec


def _search(problem, box, budget, seed, ledger, archive, approach, instance, propose,
            settings, include, weighting=None, progress=None):
    if budget < settings.n0:
        raise ValueError("budget must be at least n0")
    records = []
    base = dict(approach=approach, instance=instance,
                weighting=None if weighting is None else tuple(weighting.as_array()))
    design = initial_sampling(settings.n0, seed, box, include)
    for it in range(budget):
        t0 = time.perf_counter()
        if it < settings.n0:
            unit, phase = design[it], "initial"
        else:
            unit, phase = propose(records, _seed(seed, it)), "bo"
        overhead = time.perf_counter() - t0
        rec = _evaluate(problem, box, unit, ledger,
                        dict(base, iteration=it, phase=phase), overhead)
        records.append(rec)
        archive.update(rec)
        if progress is not None:
            progress(rec)
    return records


def run_weighted_sum(weightings, budget_per_weight: int, seed: int = 0,
                     problem: Callable | None = None, box: WeightBox | None = None,
                     settings: SearchSettings | None = None, include=DEFAULT_WEIGHTS,
                     ledger_path=None, resume=(), progress=None) -> RunResult:
    """Independent constrained searches, one per weighting of the lap metrics."""
    problem = problem or LapProblem()
    box = box or WeightBox()
    settings = settings or SearchSettings()
    include = _include_raw(include)
    ledger = Ledger(ledger_path, resume)
    archive = ParetoArchive()
    for k, w in enumerate(weightings):
        def propose(records, s, w=w):
            X = np.array([r.m_unit for r in records])
            vals = np.array([scalarize(r.objectives, w) if r.feasible else np.nan
                             for r in records])
            g = np.array([r.objectives.g for r in records], dtype=float)
            return propose_eic(X, vals, g, s, settings)

        _search(problem, box, budget_per_weight, seed + k, ledger, archive, "weighted", k,
                propose, settings, include, weighting=w, progress=progress)
    return RunResult(ledger.records, archive)


def run_pareto(budget: int, seed: int = 0, problem: Callable | None = None,
               box: WeightBox | None = None, settings: SearchSettings | None = None,
               include=DEFAULT_WEIGHTS, ledger_path=None, resume=(),
               progress=None) -> RunResult:
    """One multi-objective search over all three lap metrics at once."""
    problem = problem or LapProblem()
    box = box or WeightBox()
    settings = settings or SearchSettings()
    include = _include_raw(include)
    ledger = Ledger(ledger_path, resume)
    archive = ParetoArchive()

    def propose(records, s):
        X = np.array([r.m_unit for r in records])
        obj = np.array([r.objectives.values() for r in records])
        g = np.array([r.objectives.g for r in records], dtype=float)
        return propose_ceim(X, obj, g, s, settings)

    _search(problem, box, budget, seed, ledger, archive, "pareto", 0, propose, settings,
            include, progress=progress)
    return RunResult(ledger.records, archive)


def _include_raw(include):
    if include is None:
        return None
    if isinstance(include, WeightVector):
        return include.as_array()
    return np.asarray(include, dtype=float)


def minimize_constrained(fun: Callable, dim: int, budget: int, seed: int = 0,
                         settings: SearchSettings | None = None):
    """Constrained single-objective search over ``[0, 1]^dim``.

    ``fun(x)`` returns ``(value, feasible)``. Returns the evaluated points,
    values and feasibility flags in evaluation order.
    """
    settings = settings or SearchSettings()
    if budget < settings.n0:
        raise ValueError("budget must be at least n0")
    X = list(initial_sampling(settings.n0, seed, dim=dim))
    vals, g = [], []
    for it in range(budget):
        if it >= settings.n0:
            X.append(propose_eic(np.array(X), np.array(vals), np.array(g), _seed(seed, it),
                                 settings, dim=dim))
        v, ok = fun(X[it])
        vals.append(float(v))
        g.append(1.0 if ok else -1.0)
    return np.array(X), np.array(vals), np.array(g) > 0


def best_feasible_curve(values, feasible) -> np.ndarray:
    """Running minimum of feasible values (inf until the first feasible one)."""
    vals = np.where(np.asarray(feasible, dtype=bool), values, np.inf)
    return np.minimum.accumulate(vals)


def best_record(records, w: WeightingScheme) -> EvaluationRecord | None:
    feas = [r for r in records if r.feasible]
    return min(feas, key=lambda r: scalarize(r.objectives, w)) if feas else None


def hv_curve(records, ref, baseline=None) -> np.ndarray:
    """Hypervolume of the archive after each evaluation."""
    obj = RunResult(list(records), ParetoArchive()).objectives()
    if baseline is not None:
        obj = obj / np.asarray(baseline, dtype=float)
    return hypervolume_curve(obj, ref)


def write_hv_curve_csv(path, records, hv) -> None:
    cum = np.cumsum([r.eval_time + r.overhead_time for r in records])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["evaluations", "cumulative_time_s", "hypervolume"])
        for i, (t, h) in enumerate(zip(cum, hv), 1):
            w.writerow([i, repr(float(t)), repr(float(h))])


__all__ = [
    "WeightBox", "WeightingScheme", "EvaluationRecord", "ParetoArchive", "LapProblem",
    "Ledger", "RunResult", "SearchSettings", "scalarize", "generate_weight_grid",
    "update_pareto_archive", "initial_sampling", "run_weighted_sum", "run_pareto",
    "minimize_constrained", "propose_eic", "propose_ceim", "read_ledger", "hv_curve",
    "write_hv_curve_csv", "best_feasible_curve", "best_record",
]
