"""Arc-length parameterised reference path built from straights and circular arcs.

A track is a sequence of segments. Each segment carries its own speed limit,
so the path velocity reference is piecewise constant. The geometry is packed
into a ``(n_segments, 7)`` array for the numba kernels; columns are
``s0, x0, y0, psi0, kappa, length, v_lim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit

from .vehicle import VehicleOutput

G_S0, G_X0, G_Y0, G_PSI0, G_KAPPA, G_LEN, G_VLIM = range(7)
CLOSURE_TOL = 1e-6


@dataclass(frozen=True)
class Segment:
    kind: str  # "straight" or "arc"
    length: float
    curvature: float = 0.0
    v_lim: float = 13.9

    def __post_init__(self):
        if self.kind not in ("straight", "arc"):
            raise ValueError(f"unknown segment type {self.kind!r}")
        if not self.length > 0:
            raise ValueError("segment length must be positive")
        if self.kind == "straight" and self.curvature != 0.0:
            raise ValueError("straight segments have zero curvature")
        if self.kind == "arc" and self.curvature == 0.0:
            raise ValueError("arc segments need non-zero curvature")
        if not self.v_lim > 0:
            raise ValueError("speed limit must be positive")


@dataclass(frozen=True)
class PathPoint:
    x_ref: float
    y_ref: float
    psi_ref: float


@dataclass(frozen=True)
class PathDeviation:
    e: tuple  # (dx_f, dy_f, dpsi)
    e_lat: float


@dataclass(frozen=True, eq=False)
class TrackSpec:
    segments: tuple
    lane_width: float = 3.5
    start: tuple = (0.0, 0.0, 0.0)
    name: str = field(default="track", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        if not self.segments:
            raise ValueError("track needs at least one segment")
        if not self.lane_width > 0:
            raise ValueError("lane width must be positive")

    def _key(self):
        return self.segments, self.lane_width, self.start

    def __eq__(self, other):
        return isinstance(other, TrackSpec) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    @cached_property
    def geometry(self) -> np.ndarray:
        geom = np.empty((len(self.segments), 7))
        s, (x, y, psi) = 0.0, self.start
        for i, seg in enumerate(self.segments):
            geom[i] = (s, x, y, psi, seg.curvature, seg.length, seg.v_lim)
            x, y, psi = _advance(x, y, psi, seg.curvature, seg.length)
            s += seg.length
        return geom

    @cached_property
    def s_max(self) -> float:
        return float(sum(seg.length for seg in self.segments))

    @cached_property
    def end_pose(self) -> tuple:
        g = self.geometry[-1]
        return _advance(g[G_X0], g[G_Y0], g[G_PSI0], g[G_KAPPA], g[G_LEN])

    @cached_property
    def closed(self) -> bool:
        x, y, psi = self.end_pose
        x0, y0, psi0 = self.start
        turns = (psi - psi0) / (2 * math.pi)
        return (math.hypot(x - x0, y - y0) <= CLOSURE_TOL
                and abs(turns - round(turns)) < 1e-9 and round(turns) != 0)

    @cached_property
    def v_lim_max(self) -> float:
        return max(seg.v_lim for seg in self.segments)

    @property
    def nominal_lap_time(self) -> float:
        return sum(seg.length / seg.v_lim for seg in self.segments)

    def _check_range(self, s):
        if not (0.0 <= s <= self.s_max):
            raise ValueError(f"path parameter {s} outside [0, {self.s_max}]")


def _advance(x, y, psi, kappa, ds):
    if kappa == 0.0:
        return x + ds * math.cos(psi), y + ds * math.sin(psi), psi
    psi1 = psi + kappa * ds
    return (x + (math.sin(psi1) - math.sin(psi)) / kappa,
            y - (math.cos(psi1) - math.cos(psi)) / kappa,
            psi1)


@njit(cache=True)
def _segment_index(geom, s):
    # left-closed: segment i covers [s0_i, s0_{i+1})
    n = geom.shape[0]
    lo, hi = 0, n - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if geom[mid, 0] <= s:
            lo = mid
        else:
            hi = mid - 1
    return lo


@njit(cache=True)
def _wrap_s(s, s_max, closed):
    if closed:
        s = s % s_max
    elif s < 0.0:
        s = 0.0
    elif s > s_max:
        s = s_max
    return s


@njit(cache=True)
def _path_point(geom, s):
    i = _segment_index(geom, s)
    ds = s - geom[i, 0]
    x0 = geom[i, 1]
    y0 = geom[i, 2]
    psi0 = geom[i, 3]
    kappa = geom[i, 4]
    if kappa == 0.0:
        return x0 + ds * np.cos(psi0), y0 + ds * np.sin(psi0), psi0
    psi = psi0 + kappa * ds
    return (x0 + (np.sin(psi) - np.sin(psi0)) / kappa,
            y0 - (np.cos(psi) - np.cos(psi0)) / kappa,
            psi)


@njit(cache=True)
def _speed_limit(geom, s):
    return geom[_segment_index(geom, s), 6]


@njit(cache=True)
def _wrap_angle(a):
    # result in (-pi, pi]
    a = (a + np.pi) % (2.0 * np.pi) - np.pi
    if a == -np.pi:
        a = np.pi
    return a


@njit(cache=True)
def _project(geom, s_max, closed, px, py, s_guess):
    """Closest centreline parameter near ``s_guess`` and the signed offset."""
    s = _wrap_s(s_guess, s_max, closed)
    for _ in range(8):
        xr, yr, psi = _path_point(geom, s)
        step = (px - xr) * np.cos(psi) + (py - yr) * np.sin(psi)
        if step > 5.0:
            step = 5.0
        elif step < -5.0:
            step = -5.0
        s = _wrap_s(s + step, s_max, closed)
        if abs(step) < 1e-9:
            break
    xr, yr, psi = _path_point(geom, s)
    e_lat = -(px - xr) * np.sin(psi) + (py - yr) * np.cos(psi)
    return s, e_lat


def eval_path(track: TrackSpec, s: float) -> PathPoint:
    track._check_range(s)
    return PathPoint(*map(float, _path_point(track.geometry, float(s))))


def speed_limit(track: TrackSpec, s: float) -> float:
    track._check_range(s)
    return float(_speed_limit(track.geometry, float(s)))


def path_deviation(out: VehicleOutput, track: TrackSpec, s: float) -> PathDeviation:
    """Deviation of the vehicle output from the path point at ``s``.

    ``e_lat`` is the offset along the left-pointing path normal.
    """
    p = eval_path(track, s)
    dx = out.x_f - p.x_ref
    dy = out.y_f - p.y_ref
    dpsi = float(_wrap_angle(out.psi - p.psi_ref))
    e_lat = -dx * math.sin(p.psi_ref) + dy * math.cos(p.psi_ref)
    return PathDeviation(e=(dx, dy, dpsi), e_lat=e_lat)


def project(track: TrackSpec, x: float, y: float, s_guess: float) -> tuple:
    """Locally closest centreline parameter and signed lateral offset."""
    s, e_lat = _project(track.geometry, track.s_max, track.closed, float(x), float(y),
                        float(s_guess))
    return float(s), float(e_lat)


def build_default_loop() -> TrackSpec:
    """Urban-like ~1 km anticlockwise loop with four corners of 15-30 m radius.

    Straights are limited to 13.9 m/s (50 km/h), corners to 8.3 m/s (30 km/h).
    Straight lengths are chosen so that the loop closes exactly.
    """
    v_straight, v_corner = 13.9, 8.3
    radii = (30.0, 15.0, 20.0, 25.0)
    a, b = 270.0, 140.0
    # east-west and north-south balance of the four left-hand quarter turns
    c = a + radii[0] - radii[1] - radii[2] + radii[3]
    d = b + radii[0] + radii[1] - radii[2] - radii[3]
    segs = []
    for straight, radius in zip((a, b, c, d), radii):
        segs.append(Segment("straight", straight, 0.0, v_straight))
        segs.append(Segment("arc", math.pi * radius / 2.0, 1.0 / radius, v_corner))
    return TrackSpec(tuple(segs), lane_width=3.5, start=(0.0, 0.0, 0.0), name="default-loop")


def format_track(track: TrackSpec) -> str:
    lines = ["# mpfc-tune track: one segment per line",
             "# straight <length_m> <v_lim_mps> | arc <length_m> <curvature_1pm> <v_lim_mps>",
             f"name {track.name}",
             f"lane_width {track.lane_width!r}",
             "start {!r} {!r} {!r}".format(*track.start)]
    for seg in track.segments:
        if seg.kind == "straight":
            lines.append(f"straight {seg.length!r} {seg.v_lim!r}")
        else:
            lines.append(f"arc {seg.length!r} {seg.curvature!r} {seg.v_lim!r}")
    return "\n".join(lines) + "\n"


def parse_track(text: str) -> TrackSpec:
    segs, lane_width, start, name = [], 3.5, (0.0, 0.0, 0.0), "track"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        try:
            if key == "name":
                name = " ".join(vals)
            elif key == "lane_width":
                (lane_width,) = map(float, vals)
            elif key == "start":
                start = tuple(map(float, vals))
                if len(start) != 3:
                    raise ValueError("start needs x y psi")
            elif key == "straight":
                length, v_lim = map(float, vals)
                segs.append(Segment("straight", length, 0.0, v_lim))
            elif key == "arc":
                length, kappa, v_lim = map(float, vals)
                segs.append(Segment("arc", length, kappa, v_lim))
            else:
                raise ValueError(f"unknown keyword {key!r}")
        except ValueError as exc:
            raise ValueError(f"track line {lineno}: {exc}") from None
    return TrackSpec(tuple(segs), lane_width=lane_width, start=start, name=name)


def load_track(path) -> TrackSpec:
    return parse_track(Path(path).read_text())


def save_track(track: TrackSpec, path) -> None:
    Path(path).write_text(format_track(track))
