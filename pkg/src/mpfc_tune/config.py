"""Run configuration: a single YAML tree with every default materialised."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .controller import DEFAULT_WEIGHTS, ControllerConfig, WeightVector
from .optimizer import WeightBox, WeightingScheme, generate_weight_grid
from .track import Segment, TrackSpec, build_default_loop, load_track
from .vehicle import VehicleParams

OUTPUT_ENV = "MPFC_TUNE_OUTPUT"
APPROACHES = ("weighted", "pareto")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class OptimizerSettings:
    approach: str = "pareto"
    seed: int = 0
    n0: int = 10
    budget: int = 30  # multi-objective search
    budget_per_weight: int = 15  # weighted-sum search
    grid_step: float = 0.5
    weightings: tuple | None = None  # explicit list overrides the grid
    acq_budget: int = 10_000
    gp_mode: str = "auto"
    include_expert: bool = True

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ConfigError(f"approach must be one of {APPROACHES}, got {self.approach!r}")
        if self.n0 < 1:
            raise ConfigError("n0 must be at least 1")
        if self.budget < self.n0 or self.budget_per_weight < self.n0:
            raise ConfigError("budgets must be at least n0")
        if self.acq_budget < 1:
            raise ConfigError("acq_budget must be at least 1")
        if self.gp_mode not in ("auto", "exact", "fitc"):
            raise ConfigError(f"unknown gp_mode {self.gp_mode!r}")

    def weighting_list(self) -> list[WeightingScheme]:
        if self.weightings is not None:
            return [WeightingScheme(*map(float, w)) for w in self.weightings]
        return generate_weight_grid(self.grid_step)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if self.weightings is not None:
            d["weightings"] = [list(map(float, w)) for w in self.weightings]
        return d


@dataclass(frozen=True)
class SimulationSettings:
    plant_dt: float = 0.01
    budget_factor: float = 3.0

    def to_dict(self) -> dict:
        return {"plant_dt": self.plant_dt, "budget_factor": self.budget_factor}


@dataclass(frozen=True)
class RunConfig:
    track: TrackSpec = field(default_factory=build_default_loop)
    track_source: str = "default"
    vehicle: VehicleParams = VehicleParams()
    controller: ControllerConfig = ControllerConfig()
    weight_box: WeightBox = WeightBox()
    expert_weights: WeightVector = DEFAULT_WEIGHTS
    optimizer: OptimizerSettings = OptimizerSettings()
    simulation: SimulationSettings = SimulationSettings()
    output_dir: str = "mpfc_output"

    def lap_kwargs(self) -> dict:
        return {"plant_dt": self.simulation.plant_dt,
                "budget_factor": self.simulation.budget_factor}

    def resolved_output_dir(self, override: str | None = None) -> Path:
        return Path(override or os.environ.get(OUTPUT_ENV) or self.output_dir)

    def to_dict(self) -> dict:
        ctrl = self.controller.to_dict()
        return {
            "track": _track_dict(self.track, self.track_source),
            "vehicle": self.vehicle.to_dict(),
            "controller": ctrl,
            "weight_box": self.weight_box.to_dict(),
            "expert_weights": self.expert_weights.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "simulation": self.simulation.to_dict(),
            "output_dir": self.output_dir,
        }


def _track_dict(track: TrackSpec, source: str) -> dict:
    segs = []
    for s in track.segments:
        d = {"kind": s.kind, "length": s.length, "v_lim": s.v_lim}
        if s.kind == "arc":
            d["curvature"] = s.curvature
        segs.append(d)
    return {"source": source, "name": track.name, "lane_width": track.lane_width,
            "start": list(track.start), "segments": segs}


def _parse_track(data, base: Path) -> tuple[TrackSpec, str]:
    if data is None or data == "default":
        return build_default_loop(), "default"
    if isinstance(data, str):
        path = (base / data) if not Path(data).is_absolute() else Path(data)
        if not path.exists():
            raise ConfigError(f"track file not found: {path}")
        return load_track(path), str(path)
    if not isinstance(data, dict):
        raise ConfigError("track must be 'default', a file path or a mapping")
    data = dict(data)
    data.pop("source", None)
    if "file" in data:
        return _parse_track(data["file"], base)
    if "segments" not in data:
        return build_default_loop(), "default"
    segs = tuple(Segment(d["kind"], float(d["length"]), float(d.get("curvature", 0.0)),
                         float(d.get("v_lim", 13.9))) for d in data["segments"])
    return TrackSpec(segs, lane_width=float(data.get("lane_width", 3.5)),
                     start=tuple(data.get("start", (0.0, 0.0, 0.0))),
                     name=str(data.get("name", "track"))), "inline"


def _section(data, name) -> dict:
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(sec)


KNOWN_SECTIONS = {"track", "vehicle", "controller", "weight_box", "expert_weights",
                  "optimizer", "simulation", "output_dir"}


def config_from_dict(data: dict | None, base: Path = Path(".")) -> RunConfig:
    data = dict(data or {})
    unknown = set(data) - KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    try:
        track, source = _parse_track(data.get("track"), base)
        opt = _section(data, "optimizer")
        if opt.get("weightings") is not None:
            opt["weightings"] = tuple(tuple(map(float, w)) for w in opt["weightings"])
        unknown = set(opt) - {f.name for f in fields(OptimizerSettings)}
        if unknown:
            raise ConfigError(f"unknown optimizer setting(s): {sorted(unknown)}")
        for key in ("seed", "n0", "budget", "budget_per_weight", "acq_budget"):
            if key in opt:
                opt[key] = int(opt[key])
        sim = _section(data, "simulation")
        unknown = set(sim) - {"plant_dt", "budget_factor"}
        if unknown:
            raise ConfigError(f"unknown simulation setting(s): {sorted(unknown)}")
        expert = data.get("expert_weights")
        cfg = RunConfig(
            track=track, track_source=source,
            vehicle=VehicleParams.from_dict(_section(data, "vehicle")),
            controller=ControllerConfig.from_dict(_section(data, "controller")),
            weight_box=WeightBox.from_dict(_section(data, "weight_box")),
            expert_weights=DEFAULT_WEIGHTS if expert is None else WeightVector.from_dict(expert),
            optimizer=OptimizerSettings(**opt),
            simulation=SimulationSettings(**{k: float(v) for k, v in sim.items()}),
            output_dir=str(data.get("output_dir", "mpfc_output")),
        )
        # validate eagerly (weightings, weights inside the box)
        cfg.optimizer.weighting_list()
        if cfg.optimizer.include_expert and not cfg.weight_box.contains(
                cfg.expert_weights.as_array()):
            raise ConfigError("expert weights lie outside the weight box")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return config_from_dict({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return config_from_dict(data, path.parent)


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
