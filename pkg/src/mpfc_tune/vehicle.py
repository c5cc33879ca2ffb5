"""Dynamic single-track vehicle model with actuator lags and RK4 integration.

State layout (index: meaning)::

    0 x          east position of the centre of gravity [m]
    1 y          north position [m]
    2 psi        yaw angle [rad]
    3 psi_dot    yaw rate [rad/s]
    4 beta       side slip angle [rad]
    5 v          velocity [m/s]
    6 v_ref      target velocity [m/s]
    7 delta_s    steering wheel angle [rad]
    8 delta_s_ref steering wheel target angle [rad]

The hot paths (``_derivative``, ``_rk4_step``) are numba kernels operating on
flat float arrays so that the controller can roll out thousands of
predictions per sampling instant.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
from numba import njit

STATE_DIM = 9
INPUT_DIM = 2

# indices into the packed parameter array used by the kernels
P_MASS, P_IZ, P_LF, P_LR, P_CF, P_CR, P_RATIO, P_TAU_V, P_TAU_D = range(9)
P_V_KIN, P_TAU_KIN, P_STEER_MAX = 9, 10, 11
N_PACKED = 12


class IntegrationError(RuntimeError):
    """Raised when the state becomes non-finite during integration."""


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    psi_dot: float = 0.0
    beta: float = 0.0
    v: float = 0.0
    v_ref: float = 0.0
    delta_s: float = 0.0
    delta_s_ref: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (STATE_DIM,):
            raise ValueError(f"expected state of shape ({STATE_DIM},), got {arr.shape}")
        return cls(*map(float, arr))


@dataclass(frozen=True)
class ControlInput:
    a_ref: float = 0.0
    omega_s_ref: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.a_ref, self.omega_s_ref], dtype=float)


@dataclass(frozen=True)
class VehicleOutput:
    x_f: float
    y_f: float
    psi: float


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters plus the input box U and state box X.

    Defaults describe a mid-size passenger car.
    """

    mass: float = 1500.0
    yaw_inertia: float = 2500.0
    l_f: float = 1.2
    l_r: float = 1.4
    c_f: float = 80000.0
    c_r: float = 80000.0
    steering_ratio: float = 15.0
    tau_v: float = 0.5
    tau_delta: float = 0.2
    # below this speed the lateral states relax to the kinematic bicycle
    v_kinematic: float = 0.5
    tau_kinematic: float = 0.05
    # input box U
    a_ref_min: float = -4.0
    a_ref_max: float = 3.0
    omega_s_max: float = 5.0
    # state box X
    steer_max: float = 7.5
    v_max: float = 25.0

    def __post_init__(self):
        positive = ("mass", "yaw_inertia", "c_f", "c_r", "steering_ratio", "tau_v",
                    "tau_delta", "tau_kinematic", "omega_s_max", "steer_max", "v_max")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"VehicleParams.{name} must be positive")
        if self.l_f < 0 or self.l_r < 0 or not self.l_f + self.l_r > 0:
            raise ValueError("axle distances must be non-negative with l_f + l_r > 0")
        if not self.a_ref_min < self.a_ref_max:
            raise ValueError("a_ref_min must be below a_ref_max")

    def packed(self) -> np.ndarray:
        return np.array([
            self.mass, self.yaw_inertia, self.l_f, self.l_r, self.c_f, self.c_r,
            self.steering_ratio, self.tau_v, self.tau_delta, self.v_kinematic,
            self.tau_kinematic, self.steer_max,
        ], dtype=float)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "VehicleParams":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown vehicle parameter(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


@njit(cache=True)
def _derivative(x, u, p, out):
    psi = x[2]
    r = x[3]
    beta = x[4]
    v = x[5]
    lf = p[P_LF]
    lr = p[P_LR]
    delta = x[7] / p[P_RATIO]

    if v >= p[P_V_KIN]:
        alpha_f = delta - beta - lf * r / v
        alpha_r = -beta + lr * r / v
        fyf = p[P_CF] * alpha_f
        fyr = p[P_CR] * alpha_r
        beta_dot = (fyf + fyr) / (p[P_MASS] * v) - r
        r_dot = (lf * fyf - lr * fyr) / p[P_IZ]
    else:
        wheelbase = lf + lr
        tan_d = np.tan(delta)
        beta_k = np.arctan(lr * tan_d / wheelbase)
        r_k = v * np.cos(beta_k) * tan_d / wheelbase
        beta_dot = (beta_k - beta) / p[P_TAU_KIN]
        r_dot = (r_k - r) / p[P_TAU_KIN]

    out[0] = v * np.cos(psi + beta)
    out[1] = v * np.sin(psi + beta)
    out[2] = r
    out[3] = r_dot
    out[4] = beta_dot
    out[5] = (x[6] - v) / p[P_TAU_V]
    # reference integrators saturate (anti-windup keeps v >= 0, |delta_s| bounded)
    a_ref = u[0]
    if x[6] <= 0.0 and a_ref < 0.0:
        a_ref = 0.0
    out[6] = a_ref
    out[7] = (x[8] - x[7]) / p[P_TAU_D]
    omega = u[1]
    if (x[8] >= p[P_STEER_MAX] and omega > 0.0) or (x[8] <= -p[P_STEER_MAX] and omega < 0.0):
        omega = 0.0
    out[8] = omega


@njit(cache=True)
def _derivative_vjp(x, u, p, a, xbar, ubar):
    """Accumulate ``a^T df/dx`` into ``xbar`` and ``a^T df/du`` into ``ubar``."""
    psi = x[2]
    r = x[3]
    beta = x[4]
    v = x[5]
    lf = p[P_LF]
    lr = p[P_LR]
    ratio = p[P_RATIO]
    delta = x[7] / ratio

    c = np.cos(psi + beta)
    s = np.sin(psi + beta)
    # position kinematics
    xbar[2] += -a[0] * v * s + a[1] * v * c
    xbar[4] += -a[0] * v * s + a[1] * v * c
    xbar[5] += a[0] * c + a[1] * s
    # psi' = r
    xbar[3] += a[2]

    if v >= p[P_V_KIN]:
        cf = p[P_CF]
        cr = p[P_CR]
        m = p[P_MASS]
        iz = p[P_IZ]
        alpha_f = delta - beta - lf * r / v
        alpha_r = -beta + lr * r / v
        fy = cf * alpha_f + cr * alpha_r
        # derivative of r_dot and beta_dot w.r.t. alpha_f / alpha_r
        g_af = a[3] * lf * cf / iz + a[4] * cf / (m * v)
        g_ar = -a[3] * lr * cr / iz + a[4] * cr / (m * v)
        xbar[7] += g_af / ratio
        xbar[4] += -g_af - g_ar
        xbar[3] += -g_af * lf / v + g_ar * lr / v - a[4]
        xbar[5] += g_af * lf * r / (v * v) - g_ar * lr * r / (v * v) - a[4] * fy / (m * v * v)
    else:
        tk = p[P_TAU_KIN]
        wb = lf + lr
        tan_d = np.tan(delta)
        sec2 = 1.0 + tan_d * tan_d
        q = lr * tan_d / wb
        beta_k = np.arctan(q)
        dbk_dd = (lr / wb) * sec2 / (1.0 + q * q)
        cbk = np.cos(beta_k)
        drk_dv = cbk * tan_d / wb
        drk_dd = v / wb * (-np.sin(beta_k) * dbk_dd * tan_d + cbk * sec2)
        xbar[7] += (a[4] * dbk_dd + a[3] * drk_dd) / (tk * ratio)
        xbar[5] += a[3] * drk_dv / tk
        xbar[4] += -a[4] / tk
        xbar[3] += -a[3] / tk

    tv = p[P_TAU_V]
    xbar[6] += a[5] / tv
    xbar[5] += -a[5] / tv
    if not (x[6] <= 0.0 and u[0] < 0.0):
        ubar[0] += a[6]
    td = p[P_TAU_D]
    xbar[8] += a[7] / td
    xbar[7] += -a[7] / td
    if not ((x[8] >= p[P_STEER_MAX] and u[1] > 0.0) or (x[8] <= -p[P_STEER_MAX] and u[1] < 0.0)):
        ubar[1] += a[8]


@njit(cache=True)
def _rk4_step(x, u, p, dt, out, work):
    """One classical RK4 step. ``work`` must have shape (5, 9)."""
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    tmp = work[4]
    n = x.shape[0]
    _derivative(x, u, p, k1)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _derivative(tmp, u, p, k2)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _derivative(tmp, u, p, k3)
    for i in range(n):
        tmp[i] = x[i] + dt * k3[i]
    _derivative(tmp, u, p, k4)
    for i in range(n):
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite {what}: {arr}")


def derivative(state: VehicleState, control: ControlInput, params: VehicleParams) -> np.ndarray:
    """Time derivative of the 9-dimensional state, returned as an array."""
    x = state.as_array()
    u = control.as_array()
    _check_finite(x, "state")
    _check_finite(u, "input")
    out = np.empty(STATE_DIM)
    _derivative(x, u, params.packed(), out)
    return out


def output(state: VehicleState, params: VehicleParams) -> VehicleOutput:
    """Front-axle midpoint and yaw angle."""
    _check_finite(state.as_array(), "state")
    return VehicleOutput(
        x_f=state.x + params.l_f * np.cos(state.psi),
        y_f=state.y + params.l_f * np.sin(state.psi),
        psi=state.psi,
    )


def rk4(f, x, dt):
    """Generic fixed-step RK4 for an autonomous system ``x' = f(x)``."""
    x = np.asarray(x, dtype=float)
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_rk4(state: VehicleState, control: ControlInput, params: VehicleParams,
             dt: float) -> VehicleState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = state.as_array()
    u = control.as_array()
    _check_finite(x, "state")
    _check_finite(u, "input")
    out = np.empty(STATE_DIM)
    _rk4_step(x, u, params.packed(), float(dt), out, np.empty((5, STATE_DIM)))
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"RK4 step produced a non-finite state from {state}")
    return VehicleState.from_array(out)


def lateral_acceleration(state: VehicleState) -> float:
    """Lateral acceleration approximated as ``v * psi_dot``."""
    return state.v * state.psi_dot
