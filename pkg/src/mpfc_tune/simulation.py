"""Closed-loop lap simulation, run logging and lap metrics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .controller import (GRAVITY, STATUS_INFEASIBLE_START, AugmentedState, Controller,
                         ControllerConfig)
from .track import TrackSpec, _project, _speed_limit, eval_path
from .vehicle import STATE_DIM, VehicleParams, VehicleState, _rk4_step

log = logging.getLogger(__name__)

AX_MIN = -3.5
AX_MAX = 2.5
A_LAT_MAX = 0.3 * GRAVITY

LOG_COLUMNS = ("t", "x", "y", "psi", "psi_dot", "beta", "v", "v_ref", "delta_s",
               "delta_s_ref", "a_ref", "omega_s_ref", "s", "vartheta", "e_lat", "a_x",
               "a_lat", "v_lim", "jerk")


@dataclass
class SimulationLog:
    """Per-step records sampled at the controller period."""

    sample_time: float
    t: np.ndarray
    states: np.ndarray  # (N_k, 9)
    inputs: np.ndarray  # (N_k, 2)
    s: np.ndarray
    vartheta: np.ndarray
    e_lat: np.ndarray
    a_x: np.ndarray
    a_lat: np.ndarray
    v_lim: np.ndarray
    lap_complete: bool
    solver_failures: int = 0
    lane_width: float = 3.5

    @property
    def n_steps(self) -> int:
        return int(self.t.size)

    @property
    def v(self) -> np.ndarray:
        return self.states[:, 5]

    @property
    def jerk(self) -> np.ndarray:
        return jerk_signal(self.a_x, self.sample_time)

    def table(self) -> np.ndarray:
        return np.column_stack([self.t, self.states, self.inputs, self.s, self.vartheta,
                                self.e_lat, self.a_x, self.a_lat, self.v_lim, self.jerk])


@dataclass(frozen=True)
class ObjectiveTriple:
    E_lat: float
    E_jerk: float
    E_v: float
    g: int

    @property
    def feasible(self) -> bool:
        return self.g == 1

    def values(self) -> np.ndarray:
        return np.array([self.E_lat, self.E_jerk, self.E_v])

    def to_dict(self) -> dict:
        return {"E_lat": self.E_lat, "E_jerk": self.E_jerk, "E_v": self.E_v, "g": self.g}

    @classmethod
    def from_dict(cls, d) -> "ObjectiveTriple":
        return cls(float(d["E_lat"]), float(d["E_jerk"]), float(d["E_v"]), int(d["g"]))


@dataclass
class LapResult:
    log: SimulationLog
    objectives: ObjectiveTriple
    extra: dict = field(default_factory=dict)


@njit(cache=True)
def _integrate_plant(x, u, p, dt, n_steps):
    out = np.empty_like(x)
    work = np.empty((5, x.shape[0]))
    for _ in range(n_steps):
        _rk4_step(x, u, p, dt, out, work)
        x[:] = out
    return x


def default_start(track: TrackSpec, params: VehicleParams, v0: float | None = None) -> AugmentedState:
    """Vehicle aligned with the path at ``s = 0``, front axle on the centreline.

    ``v0`` defaults to the speed limit at the start (rolling start).
    """
    p = eval_path(track, 0.0)
    v = track.segments[0].v_lim if v0 is None else float(v0)
    vehicle = VehicleState(x=p.x_ref - params.l_f * math.cos(p.psi_ref),
                           y=p.y_ref - params.l_f * math.sin(p.psi_ref),
                           psi=p.psi_ref, v=v, v_ref=v)
    return AugmentedState(vehicle, 0.0)


def run_lap(track: TrackSpec, controller_config: ControllerConfig,
            vehicle_params: VehicleParams = VehicleParams(),
            start: AugmentedState | None = None, plant_dt: float = 0.01,
            max_steps: int | None = None, budget_factor: float = 3.0,
            abort_offset: float | None = None) -> SimulationLog:
    """Drive one lap in closed loop.

    The lap ends when the path parameter reaches ``s_max`` or after
    ``max_steps`` controller periods (default: ``budget_factor`` times the
    nominal lap time). A vehicle further than ``abort_offset`` (default: two
    lane widths) from the centreline ends the run early as an incomplete lap.
    """
    cfg = controller_config
    ts = cfg.sample_time
    n_sub = int(round(ts / plant_dt))
    if n_sub < 1 or not math.isclose(n_sub * plant_dt, ts, rel_tol=1e-9):
        raise ValueError("sample_time must be an integer multiple of plant_dt")
    if max_steps is None:
        max_steps = int(math.ceil(budget_factor * track.nominal_lap_time / ts))
    if abort_offset is None:
        abort_offset = 2.0 * track.lane_width
    start = start if start is not None else default_start(track, vehicle_params)
    if not 0.0 <= start.s <= track.s_max:
        raise ValueError("start path parameter outside the track")

    ctrl = Controller(cfg, track, vehicle_params)
    p = vehicle_params.packed()
    geom, s_max, closed = track.geometry, track.s_max, track.closed
    x = start.vehicle.as_array()
    s = float(start.s)
    s_proj = s
    rows = []
    complete = False
    failures = 0
    for k in range(max_steps):
        if s >= s_max:
            complete = True
            break
        u, theta, sol = ctrl(AugmentedState(VehicleState.from_array(x), s))
        if sol.status == STATUS_INFEASIBLE_START:
            failures += 1
            break
        xf = x[0] + vehicle_params.l_f * math.cos(x[2])
        yf = x[1] + vehicle_params.l_f * math.sin(x[2])
        s_proj, e_lat = _project(geom, s_max, closed, xf, yf, s_proj if k else s)
        rows.append((k * ts, *x, u.a_ref, u.omega_s_ref, s, theta, e_lat,
                     (x[6] - x[5]) / vehicle_params.tau_v, x[5] * x[3],
                     _speed_limit(geom, s_proj)))
        x = _integrate_plant(x.copy(), np.array([u.a_ref, u.omega_s_ref]), p, plant_dt, n_sub)
        s += theta * ts
        if not np.all(np.isfinite(x)):
            failures += 1
            break
        if abs(e_lat) > abort_offset:
            break
    else:
        complete = s >= s_max

    arr = np.array(rows, dtype=float).reshape(-1, 18)
    return SimulationLog(
        sample_time=ts, t=arr[:, 0], states=arr[:, 1:10], inputs=arr[:, 10:12],
        s=arr[:, 12], vartheta=arr[:, 13], e_lat=arr[:, 14], a_x=arr[:, 15],
        a_lat=arr[:, 16], v_lim=arr[:, 17], lap_complete=bool(complete),
        solver_failures=failures, lane_width=track.lane_width)


def jerk_signal(a_x: np.ndarray, dt: float) -> np.ndarray:
    """Central differences inside, one-sided at the ends."""
    a_x = np.asarray(a_x, dtype=float)
    if a_x.size < 2:
        return np.zeros_like(a_x)
    return np.gradient(a_x, dt, edge_order=1)


def compute_objectives(log: SimulationLog, track: TrackSpec | None = None) -> ObjectiveTriple:
    if log.n_steps == 0:
        raise ValueError("cannot compute objectives of an empty log")
    e_v = log.v_lim - log.v
    return ObjectiveTriple(
        E_lat=float(np.mean(log.e_lat**2)),
        E_jerk=float(np.mean(log.jerk**2)),
        E_v=float(np.mean(e_v**2)),
        g=check_feasibility(log, track),
    )


def constraint_report(log: SimulationLog, track: TrackSpec | None = None) -> dict:
    lane_width = track.lane_width if track is not None else log.lane_width
    if log.n_steps == 0:
        return {"lap_complete": log.lap_complete, "a_x": False, "a_lat": False, "e_lat": False}
    return {
        "lap_complete": bool(log.lap_complete),
        "a_x": bool(np.all((log.a_x >= AX_MIN) & (log.a_x <= AX_MAX))),
        "a_lat": bool(np.all(np.abs(log.a_lat) <= A_LAT_MAX)),
        "e_lat": bool(np.all(np.abs(log.e_lat) <= lane_width / 2.0)),
    }


def check_feasibility(log: SimulationLog, track: TrackSpec | None = None) -> int:
    """+1 if the lap completed and every run constraint held at every sample."""
    return 1 if all(constraint_report(log, track).values()) else -1


def evaluate(track: TrackSpec, controller_config: ControllerConfig,
             vehicle_params: VehicleParams = VehicleParams(), **kwargs) -> LapResult:
    lap = run_lap(track, controller_config, vehicle_params, **kwargs)
    if lap.n_steps == 0:
        obj = ObjectiveTriple(math.inf, math.inf, math.inf, -1)
    else:
        obj = compute_objectives(lap, track)
    return LapResult(lap, obj)


def write_log_csv(log: SimulationLog, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in log.table():
            writer.writerow([repr(float(v)) for v in row])


def read_log_csv(path, sample_time: float, lap_complete: bool = True,
                 lane_width: float = 3.5) -> SimulationLog:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SimulationLog(
        sample_time=sample_time, t=data[:, 0], states=data[:, 1:10], inputs=data[:, 10:12],
        s=data[:, 12], vartheta=data[:, 13], e_lat=data[:, 14], a_x=data[:, 15],
        a_lat=data[:, 16], v_lim=data[:, 17], lap_complete=lap_complete,
        lane_width=lane_width)
