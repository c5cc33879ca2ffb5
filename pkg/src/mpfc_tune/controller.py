"""Model predictive path-following controller.

The optimal control problem is transcribed by direct single shooting: the
decision vector holds ``(a_ref, omega_s_ref, vartheta)`` for each of the N
piecewise-constant control intervals, interleaved as ``z[3*j : 3*j + 3]``.
The vehicle and the path parameter are rolled out with RK4, the stage cost is
accumulated with the left rectangle rule and a terminal term with ``P = Q`` is
added at the horizon end. State-type constraints (lane keeping, longitudinal
and lateral acceleration, speed limit, steering range) enter as quadratic
penalties; input and virtual-input boxes are enforced by projection.

The NLP is solved with a projected BFGS method (Armijo backtracking along the
projected path, box projection every step). Gradients come from a discrete
adjoint sweep through the stored RK4 stages, so they are exact for the
discretised problem.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from numba import njit

from .track import (G_KAPPA, G_VLIM, TrackSpec, _path_point, _segment_index, _wrap_angle,
                    _wrap_s, path_deviation)
from .vehicle import (P_LF, P_STEER_MAX, P_TAU_V, STATE_DIM, ControlInput, VehicleParams,
                      VehicleState, _derivative, _derivative_vjp, lateral_acceleration,
                      output)

GRAVITY = 9.81

STATUS_CONVERGED = 0
STATUS_ITERATION_CAP = 1
STATUS_INFEASIBLE_START = 2
STATUS_NAMES = {0: "converged", 1: "iteration-cap", 2: "infeasible-start"}

# packed controller settings used by the kernels
C_DT, C_NSUB, C_PEN, C_LANE, C_AXMIN, C_AXMAX, C_ALAT, C_VMARGIN = range(8)
N_CFG = 8

WEIGHT_NAMES = ("q_x", "q_y", "q_psi", "q_a", "r_a", "r_omega", "r_vartheta")


@dataclass(frozen=True)
class WeightVector:
    """Diagonals of Q (= P) and R in the controller cost."""

    q_x: float
    q_y: float
    q_psi: float
    q_a: float
    r_a: float
    r_omega: float
    r_vartheta: float

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"weight {f.name} must be positive and finite, got {val}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in WEIGHT_NAMES], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "WeightVector":
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.size != 7:
            raise ValueError("weight vector needs 7 entries")
        return cls(*map(float, arr))

    @classmethod
    def from_dict(cls, data: dict) -> "WeightVector":
        missing = set(WEIGHT_NAMES) - set(data)
        if missing:
            raise ValueError(f"missing weight(s): {sorted(missing)}")
        return cls(*(float(data[n]) for n in WEIGHT_NAMES))

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in WEIGHT_NAMES}

    def scaled(self, factor: float) -> "WeightVector":
        return WeightVector.from_array(self.as_array() * factor)


# Hand-tuned baseline used for normalisation and as the first initial sample.
DEFAULT_WEIGHTS = WeightVector(q_x=10.0, q_y=10.0, q_psi=10.0, q_a=1.0,
                               r_a=1.0, r_omega=1.0, r_vartheta=1.0)


@dataclass(frozen=True)
class ControllerConfig:
    horizon: float = 3.0
    sample_time: float = 0.1
    intervals: int = 20
    # RK4 sub-steps per control interval inside the prediction
    pred_substeps: int = 3
    weights: WeightVector = DEFAULT_WEIGHTS
    # virtual input box V = [0, theta_max]; None means the track's top speed limit
    theta_max: float | None = None
    penalty_weight: float = 1.0e4
    lane_margin: float = 0.3
    ax_min: float = -3.5
    ax_max: float = 2.5
    ax_margin: float = 0.1
    a_lat_max: float = 0.3 * GRAVITY
    a_lat_margin: float = 0.2
    speed_margin: float = 0.0
    max_iter: int = 50
    tol: float = 1e-6

    def __post_init__(self):
        if not (self.sample_time > 0 and self.horizon >= self.sample_time):
            raise ValueError("need horizon >= sample_time > 0")
        if self.intervals < 1 or self.pred_substeps < 1 or self.max_iter < 1:
            raise ValueError("intervals, pred_substeps and max_iter must be >= 1")
        if self.theta_max is not None and not self.theta_max > 0:
            raise ValueError("theta_max must be positive")
        if not self.ax_min < self.ax_max:
            raise ValueError("ax_min must be below ax_max")

    @property
    def interval_length(self) -> float:
        return self.horizon / self.intervals

    def packed(self, track: TrackSpec) -> np.ndarray:
        cfg = np.empty(N_CFG)
        cfg[C_DT] = self.interval_length
        cfg[C_NSUB] = self.pred_substeps
        cfg[C_PEN] = self.penalty_weight
        cfg[C_LANE] = track.lane_width / 2.0 - self.lane_margin
        cfg[C_AXMIN] = self.ax_min + self.ax_margin
        cfg[C_AXMAX] = self.ax_max - self.ax_margin
        cfg[C_ALAT] = self.a_lat_max - self.a_lat_margin
        cfg[C_VMARGIN] = self.speed_margin
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, data: dict | None) -> "ControllerConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown controller setting(s): {sorted(unknown)}")
        if "weights" in data:
            data["weights"] = WeightVector.from_dict(data["weights"])
        for key in ("intervals", "pred_substeps", "max_iter"):
            if key in data:
                data[key] = int(data[key])
        return cls(**data)

    def with_weights(self, weights: WeightVector) -> "ControllerConfig":
        return replace(self, weights=weights)


@dataclass(frozen=True)
class AugmentedState:
    vehicle: VehicleState
    s: float

    def as_array(self) -> np.ndarray:
        return np.append(self.vehicle.as_array(), self.s)


@dataclass
class OcpSolution:
    inputs: np.ndarray  # (N, 2) a_ref, omega_s_ref
    vartheta: np.ndarray  # (N,)
    cost: float
    status: int
    iterations: int = 0

    @property
    def status_name(self) -> str:
        return STATUS_NAMES[self.status]

    def decision_vector(self) -> np.ndarray:
        return np.column_stack([self.inputs, self.vartheta]).ravel()

    @classmethod
    def from_decision_vector(cls, z, cost, status, iterations=0) -> "OcpSolution":
        z = np.asarray(z, dtype=float).reshape(-1, 3)
        return cls(z[:, :2].copy(), z[:, 2].copy(), float(cost), int(status), int(iterations))

    def shifted(self, shift: float = 1.0, interval: float = 1.0) -> "OcpSolution":
        """Time-shift the piecewise-constant trajectories by ``shift``.

        Intervals falling off the end repeat the last value. With the defaults
        this drops exactly one interval.
        """
        n = self.vartheta.size
        starts = np.arange(n) * interval + shift
        idx = np.minimum(np.floor(starts / interval + 1e-9).astype(int), n - 1)
        return OcpSolution(self.inputs[idx].copy(), self.vartheta[idx].copy(), self.cost,
                           self.status, self.iterations)


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True)
def _state_cost(x, s, w, p, geom, s_max, closed, cfg, wq, wp, grad, xbar):
    """Tracking term (scaled by ``wq``) plus penalties (scaled by ``wp``).

    Returns ``(value, d value / d s, v_lim(s))``; with ``grad`` the state
    gradient is accumulated into ``xbar``.
    """
    lf = p[P_LF]
    sw = _wrap_s(s, s_max, closed)
    seg = _segment_index(geom, sw)
    kappa = geom[seg, G_KAPPA]
    vlim = geom[seg, G_VLIM]
    xr, yr, psir = _path_point(geom, sw)
    c2 = np.cos(x[2])
    s2 = np.sin(x[2])
    ex = x[0] + lf * c2 - xr
    ey = x[1] + lf * s2 - yr
    epsi = _wrap_angle(x[2] - psir)
    alat = x[5] * x[3]
    val = wq * (w[0] * ex * ex + w[1] * ey * ey + w[2] * epsi * epsi + w[3] * alat * alat)
    g_ex = 2.0 * wq * w[0] * ex
    g_ey = 2.0 * wq * w[1] * ey
    g_ep = 2.0 * wq * w[2] * epsi
    g_al = 2.0 * wq * w[3] * alat
    g_s = 0.0
    sp = np.sin(psir)
    cp = np.cos(psir)
    if wp > 0.0:
        pen = wp * cfg[C_PEN]
        e_lat = -ex * sp + ey * cp
        viol = abs(e_lat) - cfg[C_LANE]
        if viol > 0.0:
            val += pen * viol * viol
            d = 2.0 * pen * viol * np.sign(e_lat)
            g_ex -= d * sp
            g_ey += d * cp
            g_s -= d * kappa * (ex * cp + ey * sp)
        tv = p[P_TAU_V]
        ax = (x[6] - x[5]) / tv
        viol = 0.0
        if ax > cfg[C_AXMAX]:
            viol = ax - cfg[C_AXMAX]
        elif ax < cfg[C_AXMIN]:
            viol = ax - cfg[C_AXMIN]
        if viol != 0.0:
            val += pen * viol * viol
            if grad:
                xbar[6] += 2.0 * pen * viol / tv
                xbar[5] -= 2.0 * pen * viol / tv
        viol = abs(alat) - cfg[C_ALAT]
        if viol > 0.0:
            val += pen * viol * viol
            g_al += 2.0 * pen * viol * np.sign(alat)
        viol = x[5] - (vlim - cfg[C_VMARGIN])
        if viol > 0.0:
            val += pen * viol * viol
            if grad:
                xbar[5] += 2.0 * pen * viol
        viol = abs(x[7]) - p[P_STEER_MAX]
        if viol > 0.0:
            val += pen * viol * viol
            if grad:
                xbar[7] += 2.0 * pen * viol * np.sign(x[7])
    if grad:
        xbar[0] += g_ex
        xbar[1] += g_ey
        xbar[2] += -g_ex * lf * s2 + g_ey * lf * c2 + g_ep
        xbar[3] += g_al * x[5]
        xbar[5] += g_al * x[3]
        g_s += -g_ex * cp - g_ey * sp - g_ep * kappa
    return val, g_s, vlim


@njit(cache=True)
def _forward(x0, s0, z, w, p, geom, s_max, closed, cfg, xs, ss, stg):
    """Roll out the prediction; node states go to ``xs``/``ss`` and RK4 stage
    points to ``stg`` (shape ``(N, nsub, 4, dim)``)."""
    n_int = z.shape[0] // 3
    dim = x0.shape[0]
    dt = cfg[C_DT]
    nsub = int(cfg[C_NSUB])
    h = dt / nsub
    x = x0.copy()
    u = np.empty(2)
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    s = s0
    J = 0.0
    for j in range(n_int):
        xs[j, :] = x
        ss[j] = s
        val, _, vlim = _state_cost(x, s, w, p, geom, s_max, closed, cfg,
                                   dt, 1.0 if j > 0 else 0.0, False, k1)
        u[0] = z[3 * j]
        u[1] = z[3 * j + 1]
        th = z[3 * j + 2]
        dth = th - vlim
        J += val + dt * (w[4] * u[0] * u[0] + w[5] * u[1] * u[1] + w[6] * dth * dth)
        for sub in range(nsub):
            st = stg[j, sub]
            st[0, :] = x
            _derivative(x, u, p, k1)
            for i in range(dim):
                st[1, i] = x[i] + 0.5 * h * k1[i]
            _derivative(st[1], u, p, k2)
            for i in range(dim):
                st[2, i] = x[i] + 0.5 * h * k2[i]
            _derivative(st[2], u, p, k3)
            for i in range(dim):
                st[3, i] = x[i] + h * k3[i]
            _derivative(st[3], u, p, k4)
            for i in range(dim):
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        s += th * dt
        if not np.isfinite(x[0] + x[1] + x[3] + x[4] + x[5]):
            return np.inf
    xs[n_int, :] = x
    ss[n_int] = s
    val, _, _ = _state_cost(x, s, w, p, geom, s_max, closed, cfg, 1.0, 1.0, False, k1)
    J += val
    if not np.isfinite(J):
        return np.inf
    return J


@njit(cache=True)
def _buffers(z, dim, cfg):
    n_int = z.shape[0] // 3
    nsub = int(cfg[C_NSUB])
    return (np.empty((n_int + 1, dim)), np.empty(n_int + 1),
            np.empty((n_int, nsub, 4, dim)))


@njit(cache=True)
def _cost(x0, s0, z, w, p, geom, s_max, closed, cfg):
    xs, ss, stg = _buffers(z, x0.shape[0], cfg)
    return _forward(x0, s0, z, w, p, geom, s_max, closed, cfg, xs, ss, stg)


@njit(cache=True)
def _cost_grad(x0, s0, z, w, p, geom, s_max, closed, cfg, g):
    """Cost and its exact gradient by a discrete adjoint sweep."""
    n = z.shape[0]
    n_int = n // 3
    dim = x0.shape[0]
    xs, ss, stg = _buffers(z, dim, cfg)
    J = _forward(x0, s0, z, w, p, geom, s_max, closed, cfg, xs, ss, stg)
    if not np.isfinite(J):
        g[:] = 0.0
        return J
    dt = cfg[C_DT]
    nsub = int(cfg[C_NSUB])
    h = dt / nsub
    lam = np.zeros(dim)
    u = np.empty(2)
    ubar = np.empty(2)
    xbar = np.empty(dim)
    tmp = np.empty(dim)
    kb1 = np.empty(dim)
    kb2 = np.empty(dim)
    kb3 = np.empty(dim)
    kb4 = np.empty(dim)
    _, mu, _ = _state_cost(xs[n_int], ss[n_int], w, p, geom, s_max, closed, cfg,
                           1.0, 1.0, True, lam)
    for j in range(n_int - 1, -1, -1):
        u[0] = z[3 * j]
        u[1] = z[3 * j + 1]
        th = z[3 * j + 2]
        ubar[:] = 0.0
        for sub in range(nsub - 1, -1, -1):
            st = stg[j, sub]
            for i in range(dim):
                xbar[i] = lam[i]
                kb4[i] = h / 6.0 * lam[i]
                kb3[i] = h / 3.0 * lam[i]
                kb2[i] = h / 3.0 * lam[i]
                kb1[i] = h / 6.0 * lam[i]
            tmp[:] = 0.0
            _derivative_vjp(st[3], u, p, kb4, tmp, ubar)
            for i in range(dim):
                xbar[i] += tmp[i]
                kb3[i] += h * tmp[i]
            tmp[:] = 0.0
            _derivative_vjp(st[2], u, p, kb3, tmp, ubar)
            for i in range(dim):
                xbar[i] += tmp[i]
                kb2[i] += 0.5 * h * tmp[i]
            tmp[:] = 0.0
            _derivative_vjp(st[1], u, p, kb2, tmp, ubar)
            for i in range(dim):
                xbar[i] += tmp[i]
                kb1[i] += 0.5 * h * tmp[i]
            tmp[:] = 0.0
            _derivative_vjp(st[0], u, p, kb1, tmp, ubar)
            for i in range(dim):
                lam[i] = xbar[i] + tmp[i]
        _, g_s, vlim = _state_cost(xs[j], ss[j], w, p, geom, s_max, closed, cfg,
                                   dt, 1.0 if j > 0 else 0.0, True, lam)
        g[3 * j] = 2.0 * dt * w[4] * u[0] + ubar[0]
        g[3 * j + 1] = 2.0 * dt * w[5] * u[1] + ubar[1]
        g[3 * j + 2] = 2.0 * dt * w[6] * (th - vlim) + dt * mu
        mu += g_s
    return J


@njit(cache=True)
def _project_box(z, lb, ub):
    for i in range(z.shape[0]):
        if z[i] < lb[i]:
            z[i] = lb[i]
        elif z[i] > ub[i]:
            z[i] = ub[i]


@njit(cache=True)
def _solve(x0, s0, z, lb, ub, w, p, geom, s_max, closed, cfg, max_iter, tol):
    """Projected BFGS with Armijo backtracking. Returns (cost, status, iterations)."""
    n = z.shape[0]
    _project_box(z, lb, ub)
    g = np.empty(n)
    f = _cost_grad(x0, s0, z, w, p, geom, s_max, closed, cfg, g)
    if not np.isfinite(f):
        return f, 2, 0
    H = np.eye(n)
    fresh = True
    d = np.empty(n)
    znew = np.empty(n)
    gnew = np.empty(n)
    free = np.empty(n, dtype=np.bool_)
    status = 1
    it = 0
    while it < max_iter:
        it += 1
        pg = 0.0
        for i in range(n):
            t = z[i] - g[i]
            if t < lb[i]:
                t = lb[i]
            elif t > ub[i]:
                t = ub[i]
            pg = max(pg, abs(t - z[i]))
            free[i] = not ((z[i] <= lb[i] and g[i] > 0.0) or (z[i] >= ub[i] and g[i] < 0.0))
        if pg < tol:
            status = 0
            break
        gd = 0.0
        for i in range(n):
            d[i] = 0.0
            if free[i]:
                acc = 0.0
                for j in range(n):
                    if free[j]:
                        acc += H[i, j] * g[j]
                d[i] = -acc
                gd += g[i] * d[i]
        if fresh or gd >= 0.0:
            gmax = 0.0
            for i in range(n):
                if free[i]:
                    gmax = max(gmax, abs(g[i]))
            scale = 1.0 / max(gmax, 1.0)
            for i in range(n):
                d[i] = -g[i] * scale if free[i] else 0.0
            if not fresh:
                H[:, :] = np.eye(n)
                fresh = True
        step = 1.0
        accepted = False
        fnew = f
        for _ in range(30):
            slope = 0.0
            for i in range(n):
                znew[i] = z[i] + step * d[i]
            _project_box(znew, lb, ub)
            for i in range(n):
                slope += g[i] * (znew[i] - z[i])
            fnew = _cost(x0, s0, znew, w, p, geom, s_max, closed, cfg)
            if fnew <= f + 1e-4 * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if fresh:
                status = 0
                break
            H[:, :] = np.eye(n)
            fresh = True
            continue
        fnew = _cost_grad(x0, s0, znew, w, p, geom, s_max, closed, cfg, gnew)
        sy = 0.0
        yy = 0.0
        for i in range(n):
            si = znew[i] - z[i]
            yi = gnew[i] - g[i]
            sy += si * yi
            yy += yi * yi
        if sy > 1e-12:
            if fresh:
                H[:, :] = np.eye(n) * (sy / yy)
            # H+ = H - rho (s Hy' + Hy s') + (rho^2 y'Hy + rho) s s'
            rho = 1.0 / sy
            hy = np.zeros(n)
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += H[i, j] * (gnew[j] - g[j])
                hy[i] = acc
            yhy = 0.0
            for i in range(n):
                yhy += (gnew[i] - g[i]) * hy[i]
            coef = rho * rho * yhy + rho
            for i in range(n):
                si = znew[i] - z[i]
                for j in range(n):
                    sj = znew[j] - z[j]
                    H[i, j] += -rho * (si * hy[j] + hy[i] * sj) + coef * si * sj
            fresh = False
        decrease = f - fnew
        for i in range(n):
            z[i] = znew[i]
            g[i] = gnew[i]
        f = fnew
        if decrease <= tol * max(1.0, abs(f)):
            status = 0
            break
    return f, status, it


# ---------------------------------------------------------------------------
# public API

def _track_args(track: TrackSpec):
    return track.geometry, track.s_max, track.closed


def decision_bounds(config: ControllerConfig, params: VehicleParams,
                    track: TrackSpec) -> tuple[np.ndarray, np.ndarray]:
    theta_max = config.theta_max if config.theta_max is not None else track.v_lim_max
    lb = np.tile([params.a_ref_min, -params.omega_s_max, 0.0], config.intervals)
    ub = np.tile([params.a_ref_max, params.omega_s_max, theta_max], config.intervals)
    return lb, ub


def stage_cost(dev, a_lat: float, u: ControlInput, vartheta: float, vartheta_ref: float,
               w: WeightVector) -> float:
    """Quadratic stage cost ``|(e, a_lat)|_Q^2 + |(u, vartheta - vartheta_ref)|_R^2``."""
    e = dev.e if hasattr(dev, "e") else tuple(dev)
    q = np.array([w.q_x, w.q_y, w.q_psi, w.q_a])
    r = np.array([w.r_a, w.r_omega, w.r_vartheta])
    ev = np.array([e[0], e[1], e[2], a_lat], dtype=float)
    uv = np.array([u.a_ref, u.omega_s_ref, vartheta - vartheta_ref], dtype=float)
    return float(q @ ev**2 + r @ uv**2)


def _as_decision(inputs, vartheta, n_int):
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 2)
    vartheta = np.asarray(vartheta, dtype=float).ravel()
    if inputs.shape[0] != n_int or vartheta.size != n_int:
        raise ValueError(f"trajectories must have {n_int} intervals")
    return np.column_stack([inputs, vartheta]).ravel()


def trajectory_cost(x0: AugmentedState, inputs, vartheta, config: ControllerConfig,
                    track: TrackSpec, params: VehicleParams = VehicleParams()) -> float:
    """Cost of a given input trajectory; ``inf`` if the rollout diverges."""
    z = _as_decision(inputs, vartheta, config.intervals)
    return float(_cost(x0.vehicle.as_array(), float(x0.s), z, config.weights.as_array(),
                       params.packed(), *_track_args(track), config.packed(track)))


def cost_gradient(x0: AugmentedState, z, config: ControllerConfig, track: TrackSpec,
                  params: VehicleParams = VehicleParams()) -> tuple[float, np.ndarray]:
    """Cost and its exact (adjoint) gradient at decision vector ``z``."""
    z = np.array(z, dtype=float)
    g = np.empty_like(z)
    J = _cost_grad(x0.vehicle.as_array(), float(x0.s), z, config.weights.as_array(),
                   params.packed(), *_track_args(track), config.packed(track), g)
    return float(J), g


def cold_start(x0: AugmentedState, config: ControllerConfig, track: TrackSpec,
               params: VehicleParams = VehicleParams()) -> OcpSolution:
    lb, ub = decision_bounds(config, params, track)
    theta = float(np.clip(x0.vehicle.v, lb[2], ub[2]))
    n = config.intervals
    return OcpSolution(np.zeros((n, 2)), np.full(n, theta), math.inf, STATUS_ITERATION_CAP)


def solve_ocp(x0: AugmentedState, config: ControllerConfig, track: TrackSpec,
              warm_start: OcpSolution | None = None,
              params: VehicleParams = VehicleParams(),
              max_iter: int | None = None) -> OcpSolution:
    init = warm_start if warm_start is not None else cold_start(x0, config, track, params)
    z = init.decision_vector().copy()
    lb, ub = decision_bounds(config, params, track)
    x = x0.vehicle.as_array()
    if not np.all(np.isfinite(x)):
        return OcpSolution.from_decision_vector(np.clip(z, lb, ub), math.inf,
                                                STATUS_INFEASIBLE_START)
    cost, status, iters = _solve(
        x, float(x0.s), z, lb, ub, config.weights.as_array(), params.packed(),
        *_track_args(track), config.packed(track),
        int(max_iter if max_iter is not None else config.max_iter), float(config.tol))
    return OcpSolution.from_decision_vector(z, cost, status, iters)


def mpc_step(x0: AugmentedState, config: ControllerConfig, track: TrackSpec,
             prev: OcpSolution | None = None, params: VehicleParams = VehicleParams()):
    """Solve the OCP and return ``(first input, first vartheta, shifted solution)``.

    Pass ``sol.shifted(config.sample_time, config.interval_length)`` as
    ``prev`` on the next call to warm-start it.
    """
    sol = solve_ocp(x0, config, track, warm_start=prev, params=params)
    u = ControlInput(float(sol.inputs[0, 0]), float(sol.inputs[0, 1]))
    return u, float(sol.vartheta[0]), sol


class Controller:
    """Receding-horizon wrapper that keeps the warm start between calls."""

    def __init__(self, config: ControllerConfig, track: TrackSpec,
                 params: VehicleParams = VehicleParams()):
        self.config = config
        self.track = track
        self.params = params
        self.last: OcpSolution | None = None
        self._warm: OcpSolution | None = None

    def __call__(self, x0: AugmentedState):
        u, theta, sol = mpc_step(x0, self.config, self.track, self._warm, self.params)
        self.last = sol
        self._warm = sol.shifted(self.config.sample_time, self.config.interval_length)
        return u, theta, sol


def deviation_terms(state: VehicleState, s: float, track: TrackSpec, params: VehicleParams):
    """Path deviation and lateral acceleration for a state (diagnostics)."""
    return path_deviation(output(state, params), track, s), lateral_acceleration(state)
