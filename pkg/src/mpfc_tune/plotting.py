"""Figures written next to the CSV outputs (file backend only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulation import A_LAT_MAX, AX_MAX, AX_MIN, SimulationLog  # noqa: E402
from .track import TrackSpec, _path_point  # noqa: E402


def _centreline(track: TrackSpec, n: int = 2000):
    s = np.linspace(0.0, track.s_max, n, endpoint=False)
    pts = np.array([_path_point(track.geometry, si) for si in s])
    return pts[:, 0], pts[:, 1], pts[:, 2]


def plot_track(track: TrackSpec, path, lap: SimulationLog | None = None) -> None:
    x, y, psi = _centreline(track)
    half = track.lane_width / 2.0
    nx, ny = -np.sin(psi), np.cos(psi)
    fig, ax = plt.subplots(figsize=(7, 6))
    ax.plot(x, y, "k--", lw=0.6, label="centreline")
    for sgn in (-1, 1):
        ax.plot(x + sgn * half * nx, y + sgn * half * ny, "k-", lw=0.8)
    if lap is not None and lap.n_steps:
        ax.plot(lap.states[:, 0], lap.states[:, 1], "C0", lw=1.0, label="vehicle (CoG)")
    ax.set_aspect("equal")
    ax.set_xlabel("x east [m]")
    ax.set_ylabel("y north [m]")
    ax.set_title(track.name)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_lap(lap: SimulationLog, path) -> None:
    fig, axes = plt.subplots(4, 1, figsize=(8, 9), sharex=True)
    t = lap.t
    axes[0].plot(t, lap.v, label="v")
    axes[0].step(t, lap.v_lim, where="post", color="k", lw=0.8, label="speed limit")
    axes[0].set_ylabel("speed [m/s]")
    axes[0].legend(loc="lower right")
    axes[1].plot(t, lap.e_lat)
    for sgn in (-1, 1):
        axes[1].axhline(sgn * lap.lane_width / 2.0, color="r", lw=0.6)
    axes[1].set_ylabel("e_lat [m]")
    axes[2].plot(t, lap.a_x, label="a_x")
    axes[2].plot(t, lap.a_lat, label="a_lat")
    for val in (AX_MIN, AX_MAX, -A_LAT_MAX, A_LAT_MAX):
        axes[2].axhline(val, color="r", lw=0.6)
    axes[2].set_ylabel("accel. [m/s²]")
    axes[2].legend(loc="lower right")
    axes[3].plot(t, lap.jerk)
    axes[3].set_ylabel("jerk [m/s³]")
    axes[3].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_hv_curves(curves: dict, path, x_label: str = "evaluations") -> None:
    """``curves`` maps a label to ``(x, hv)`` arrays."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, (x, hv) in curves.items():
        ax.step(x, hv, where="post", label=label)
    ax.set_xlabel(x_label)
    ax.set_ylabel("hypervolume")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fronts(fronts: dict, path, names=("E_lat", "E_jerk", "E_v")) -> None:
    """Pairwise projections of one or more metric fronts."""
    pairs = ((0, 1), (0, 2), (1, 2))
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for k, (i, j) in enumerate(pairs):
        for n, (label, pts) in enumerate(fronts.items()):
            pts = np.asarray(pts, dtype=float).reshape(-1, 3)
            axes[k].scatter(pts[:, i], pts[:, j], s=14, color=f"C{n}", label=label)
        axes[k].set_xlabel(names[i])
        axes[k].set_ylabel(names[j])
        axes[k].set_xscale("log")
        axes[k].set_yscale("log")
    axes[0].legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
