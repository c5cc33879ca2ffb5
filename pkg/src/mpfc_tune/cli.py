"""Command-line interface: ``mpfc-tune <subcommand>``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
The output directory comes from ``--output``, else the ``MPFC_TUNE_OUTPUT``
environment variable, else the config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting
from .config import OUTPUT_ENV, ConfigError, RunConfig, dump_config, load_config
from .controller import WEIGHT_NAMES, WeightVector
from .optimizer import (LapProblem, ParetoArchive, SearchSettings, hv_curve, read_ledger,
                        run_pareto, run_weighted_sum, write_hv_curve_csv)
from .pareto import hypervolume, normalize_front, reference_point
from .simulation import LOG_COLUMNS, ObjectiveTriple, evaluate, write_log_csv
from .track import load_track, save_track

log = logging.getLogger("mpfc_tune")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

SCHEMAS = {
    "lap.csv": ("one row per controller period", LOG_COLUMNS),
    "archive.csv": ("one row per nondominated feasible evaluation",
                    ("E_lat", "E_jerk", "E_v", *WEIGHT_NAMES,
                     *(f"u_{n}" for n in WEIGHT_NAMES), "iteration", "instance")),
    "hv_curve.csv": ("archive hypervolume after each evaluation",
                     ("evaluations", "cumulative_time_s", "hypervolume")),
    "compare.csv": ("expert-normalised archive points of every compared run",
                    ("label", "E_lat", "E_jerk", "E_v")),
    "compare_table.csv": ("one row per compared run",
                          ("label", "evaluations", "run_time_s", "points", "hypervolume")),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _write_schema(out: Path, names) -> None:
    lines = ["# CSV files in this directory (comma separated, header row first)"]
    for name in names:
        desc, cols = SCHEMAS[name]
        lines.append(f"{name}: {desc}")
        lines.extend(f"  {i}: {c}" for i, c in enumerate(cols))
    (out / "schema.txt").write_text("\n".join(lines) + "\n")


def _prepare_output(cfg: RunConfig, override) -> Path:
    out = cfg.resolved_output_dir(override)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.resolved.yaml")
    return out


def _parse_weights(items, base: WeightVector) -> WeightVector:
    vals = base.to_dict()
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or name not in vals:
            raise ConfigError(f"bad --weight {item!r}; expected NAME=VALUE with NAME in "
                              f"{', '.join(WEIGHT_NAMES)}")
        try:
            vals[name] = float(value)
        except ValueError:
            raise ConfigError(f"bad weight value in {item!r}") from None
    return WeightVector.from_dict(vals)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    weights = _parse_weights(args.weight, cfg.expert_weights)
    if not cfg.weight_box.contains(weights.as_array()):
        raise ConfigError("weights lie outside the weight box "
                          f"[{cfg.weight_box.lower}, {cfg.weight_box.upper}]")
    out = _prepare_output(cfg, args.output)
    res = evaluate(cfg.track, cfg.controller.with_weights(weights), cfg.vehicle,
                   **cfg.lap_kwargs())
    write_log_csv(res.log, out / "lap.csv")
    payload = {"weights": weights.to_dict(), "objectives": res.objectives.to_dict(),
               "lap_complete": res.log.lap_complete, "steps": res.log.n_steps}
    (out / "objectives.json").write_text(json.dumps(payload, indent=1))
    _write_schema(out, ["lap.csv"])
    if res.log.n_steps:
        plotting.plot_lap(res.log, out / "lap.png")
    plotting.plot_track(cfg.track, out / "track.png", res.log)
    o = res.objectives
    print(f"E_lat={o.E_lat:.6g} E_jerk={o.E_jerk:.6g} E_v={o.E_v:.6g} g={o.g:+d}")
    return EXIT_OK


def _baseline(cfg: RunConfig) -> ObjectiveTriple:
    return evaluate(cfg.track, cfg.controller.with_weights(cfg.expert_weights), cfg.vehicle,
                    **cfg.lap_kwargs()).objectives


def cmd_tune(args) -> int:
    cfg = load_config(args.config)
    overrides = {k: v for k, v in (("approach", args.approach), ("seed", args.seed))
                 if v is not None}
    approach = overrides.get("approach", cfg.optimizer.approach)
    if args.budget is not None:
        overrides["budget" if approach == "pareto" else "budget_per_weight"] = args.budget
    try:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, **overrides))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    opt = cfg.optimizer
    out = _prepare_output(cfg, args.output)
    ledger_path = out / "ledger.jsonl"
    resume = []
    if args.resume:
        src = Path(args.resume)
        if not src.exists():
            raise ConfigError(f"ledger to resume not found: {src}")
        resume = read_ledger(src)
    problem = LapProblem(cfg.track, cfg.controller, cfg.vehicle, **cfg.lap_kwargs())
    settings = SearchSettings(n0=opt.n0, acq_budget=opt.acq_budget, gp_mode=opt.gp_mode)
    include = cfg.expert_weights if opt.include_expert else None

    def progress(r):
        o = r.objectives
        log.info("%s #%d/%d %s g=%+d E_lat=%.4g E_jerk=%.4g E_v=%.4g", r.approach,
                 r.instance, r.iteration, r.phase, o.g, o.E_lat, o.E_jerk, o.E_v)

    common = dict(seed=opt.seed, problem=problem, box=cfg.weight_box, settings=settings,
                  include=include, ledger_path=ledger_path, resume=resume, progress=progress)
    if opt.approach == "pareto":
        res = run_pareto(opt.budget, **common)
    else:
        res = run_weighted_sum(opt.weighting_list(), opt.budget_per_weight, **common)
    run_time = float(res.cumulative_time()[-1]) if res.records else 0.0
    res.archive.to_json(out / "archive.json", len(res.records), run_time)
    res.archive.to_csv(out / "archive.csv")

    front = res.archive.objectives()
    hv = np.zeros(len(res.records))
    if len(front):
        ref = reference_point(front)
        hv = hv_curve(res.records, ref)
    write_hv_curve_csv(out / "hv_curve.csv", res.records, hv)
    _write_schema(out, ["archive.csv", "hv_curve.csv"])
    plotting.plot_hv_curves({opt.approach: (np.arange(1, hv.size + 1), hv)},
                            out / "hv_curve.png")
    if len(front):
        plotting.plot_fronts({opt.approach: front}, out / "front.png")
    print(f"{opt.approach}: {len(res.records)} evaluations, {len(res.archive)} "
          f"nondominated points, {run_time:.1f} s")
    return EXIT_OK


def _read_archive(path) -> ParetoArchive:
    try:
        arch = ParetoArchive.from_json(path)
    except OSError as exc:
        raise ConfigError(f"cannot read archive {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot parse archive {path}: {exc}") from None
    if not len(arch):
        raise ConfigError(f"archive {path} is empty")
    return arch


def _baseline_from_args(args, cfg_path) -> np.ndarray:
    if args.baseline is not None:
        base = np.array(args.baseline, dtype=float)
    elif args.baseline_json is not None:
        data = json.loads(Path(args.baseline_json).read_text())
        obj = ObjectiveTriple.from_dict(data.get("objectives", data))
        base = obj.values()
    else:
        log.info("simulating the expert weights for the normalisation baseline")
        base = _baseline(load_config(cfg_path)).values()
    if np.any(~np.isfinite(base)) or np.any(base <= 0):
        raise ConfigError("baseline objectives must be positive and finite")
    return base


def _plain_output(args) -> Path:
    out = Path(args.output or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _labels(paths, labels):
    if labels:
        if len(labels) != len(paths):
            raise ConfigError("need one --label per archive")
        return labels
    return [f"{Path(p).parent.name}/{Path(p).name}" for p in paths]


def cmd_compare(args) -> int:
    archives = [_read_archive(p) for p in args.archives]
    labels = _labels(args.archives, args.label)
    base = _baseline_from_args(args, args.config)
    fronts = [normalize_front(a.objectives(), base) for a in archives]
    ref = reference_point(*fronts)
    out = _plain_output(args)
    rows = []
    print(f"{'run':<30} {'evaluations':>11} {'run time [s]':>13} {'points':>7} {'HV':>10}")
    for label, arch, front in zip(labels, archives, fronts):
        hv = hypervolume(front, ref)
        ev = arch.meta.get("evaluations")
        rt = arch.meta.get("run_time_s")
        rows.append((label, ev, rt, len(front), hv))
        print(f"{label:<30} {ev if ev is not None else 'n/a':>11} "
              f"{(f'{rt:.1f}' if rt is not None else 'n/a'):>13} {len(front):>7} {hv:>10.6g}")
    print("reference point: " + " ".join(f"{v:.6g}" for v in ref))
    with (out / "compare.csv").open("w") as fh:
        fh.write("label,E_lat,E_jerk,E_v\n")
        for label, front in zip(labels, fronts):
            for p in front:
                fh.write(f"{label},{p[0]!r},{p[1]!r},{p[2]!r}\n")
    with (out / "compare_table.csv").open("w") as fh:
        fh.write("label,evaluations,run_time_s,points,hypervolume\n")
        for label, ev, rt, n, hv in rows:
            fh.write(f"{label},{'' if ev is None else ev},{'' if rt is None else repr(rt)},"
                     f"{n},{hv!r}\n")
    _write_schema(out, ["compare.csv", "compare_table.csv"])
    plotting.plot_fronts(dict(zip(labels, fronts)), out / "compare_fronts.png")
    return EXIT_OK


def cmd_hv(args) -> int:
    ledgers = []
    for p in args.ledgers:
        try:
            recs = read_ledger(p)
        except OSError as exc:
            raise ConfigError(f"cannot read ledger {p}: {exc.strerror}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not recs:
            raise ConfigError(f"ledger {p} is empty")
        ledgers.append(recs)
    labels = _labels(args.ledgers, args.label)
    base = _baseline_from_args(args, args.config)
    fronts = []
    for recs in ledgers:
        arch = ParetoArchive.from_records(recs)
        fronts.append(normalize_front(arch.objectives(), base))
    ref = reference_point(*[f for f in fronts if len(f)])
    out = _plain_output(args)
    curves = {}
    for label, recs in zip(labels, ledgers):
        hv = hv_curve(recs, ref, base)
        name = "hv_" + "".join(c if c.isalnum() else "_" for c in label) + ".csv"
        write_hv_curve_csv(out / name, recs, hv)
        curves[label] = (np.arange(1, hv.size + 1), hv)
        print(f"{label}: {len(recs)} evaluations, final HV {hv[-1]:.6g} -> {out / name}")
    SCHEMAS.setdefault("hv_<label>.csv", SCHEMAS["hv_curve.csv"])
    _write_schema(out, ["hv_<label>.csv"])
    plotting.plot_hv_curves(curves, out / "hv_curves.png")
    return EXIT_OK


def cmd_export_track(args) -> int:
    cfg = load_config(args.config)
    track = load_track(args.track) if args.track else cfg.track
    dest = Path(args.destination)
    if dest.parent != Path(""):
        dest.parent.mkdir(parents=True, exist_ok=True)
    save_track(track, dest)
    plotting.plot_track(track, dest.with_suffix(".png"))
    print(f"wrote {dest} ({len(track.segments)} segments, {track.s_max:.2f} m, "
          f"{'closed' if track.closed else 'open'})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpfc-tune", description="Tune path-following MPC weights by "
                "constrained multi-objective Bayesian optimisation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="drive one lap and write the log")
    s.add_argument("--config", help="YAML run configuration")
    s.add_argument("--weight", action="append", metavar="NAME=VALUE",
                   help="override one controller weight (repeatable)")
    s.add_argument("--output", help="output directory")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("tune", help="run a Bayesian optimisation")
    t.add_argument("--config", help="YAML run configuration")
    t.add_argument("--approach", choices=("weighted", "pareto"))
    t.add_argument("--budget", type=int, help="evaluations (per weighting if weighted)")
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", metavar="LEDGER", help="replay an earlier ledger first")
    t.add_argument("--output", help="output directory")
    t.set_defaults(func=cmd_tune)

    for name, helptext, func, what in (
            ("compare", "compare archives by hypervolume", cmd_compare, "archives"),
            ("hv", "hypervolume-over-evaluations curves from ledgers", cmd_hv, "ledgers")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument(what, nargs="+")
        c.add_argument("--label", action="append")
        g = c.add_mutually_exclusive_group()
        g.add_argument("--baseline", nargs=3, type=float, metavar=("E_LAT", "E_JERK", "E_V"))
        g.add_argument("--baseline-json", help="objectives.json written by simulate")
        c.add_argument("--config", help="config used to simulate the baseline if not given")
        c.add_argument("--output", help="output directory")
        c.set_defaults(func=func)

    e = sub.add_parser("export-track", help="write the configured track to a text file")
    e.add_argument("destination")
    e.add_argument("--config")
    e.add_argument("--track", help="read this track file instead of the config's track")
    e.set_defaults(func=cmd_export_track)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"mpfc-tune: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"mpfc-tune: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"mpfc-tune: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("done in %.1f s", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
