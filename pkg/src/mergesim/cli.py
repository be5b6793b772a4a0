"""Command-line front end: simulate, extract, calibrate, bench, presets.

Exit codes: 0 success, 2 config/usage error, 3 data error.  Inputs are
validated before any output file is created, and partially written outputs
are removed on failure.
"""

from __future__ import annotations

import argparse
import statistics
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import calibration, extraction, presets
from .engine import (
    ConfigError,
    ScenarioConfig,
    load_scenario_config,
    run_scenario,
    write_trajectory_log,
)
from .extraction import TrajectoryFormatError

DEFAULT_SEED = 42  # used whenever a command takes --seed and none is given

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


class _OutputTracker:
    """Removes files created by a failed command so no partial outputs remain."""

    def __init__(self) -> None:
        self.paths: list[Path] = []

    def add(self, *paths) -> None:
        self.paths.extend(Path(p) for p in paths)

    def discard_all(self) -> None:
        for path in self.paths:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass


def _with_seed(config: ScenarioConfig, seed: Optional[int]) -> ScenarioConfig:
    if seed is None:
        return config
    from dataclasses import replace
    return replace(config, seed=seed)


def _cmd_simulate(args) -> int:
    try:
        config = _with_seed(load_scenario_config(args.config), args.seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracker = _OutputTracker()
    try:
        rows, metrics = run_scenario(config)
        log_path = out_dir / "trajectory.csv"
        tracker.add(log_path)
        write_trajectory_log(rows, log_path)
        metrics_path = out_dir / "metrics.yaml"
        tracker.add(metrics_path)
        metrics_path.write_text(metrics.to_yaml())
        if args.plots:
            from .plots import save_lane_occupancy
            tracker.add(out_dir / "lanes.png")
            save_lane_occupancy(rows, out_dir / "lanes.png")
    except Exception as exc:  # noqa: BLE001 - no partial outputs on any failure
        tracker.discard_all()
        return _fail(EXIT_DATA, f"simulation failed: {exc}")
    print(f"simulated {metrics.steps} steps ({metrics.sim_time_s:.1f} s) "
          f"with {len(config.actors)} actors, seed {config.seed}")
    print(f"real-time factor: {metrics.rtf_overall:.1f}x overall, "
          f"{metrics.rtf_model_only:.1f}x model-only")
    print(f"decisions: {metrics.decisions_keep_straight} keep, "
          f"{metrics.decisions_change_lanes} change; "
          f"{metrics.lane_changes_committed} lane changes committed")
    print(f"wrote {out_dir / 'trajectory.csv'} and {out_dir / 'metrics.yaml'}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    try:
        config = load_scenario_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    all_events = []
    for log_path in args.logs:
        try:
            frames = extraction.load_trajectory_log(log_path)
        except OSError as exc:
            return _fail(EXIT_DATA, f"cannot read {log_path}: {exc}")
        except TrajectoryFormatError as exc:
            return _fail(EXIT_DATA, f"{log_path}: {exc}")
        site = Path(log_path).stem
        all_events.extend(extraction.extract_lag0_events(frames, config.topology,
                                                         site_id=site))
    tracker = _OutputTracker()
    try:
        written = extraction.write_event_files(all_events, args.out)
        tracker.add(*written)
    except Exception as exc:  # noqa: BLE001
        tracker.discard_all()
        return _fail(EXIT_DATA, f"event writing failed: {exc}")
    n_lc = sum(1 for e in all_events if e.label.name == "CHANGE_LANES")
    print(f"extracted {len(all_events)} events "
          f"({n_lc} lane-change, {len(all_events) - n_lc} keep-straight) "
          f"from {len(args.logs)} log(s)")
    print(f"wrote {len(written)} files under {args.out}")
    return EXIT_OK


def _load_optimization_spec(args) -> calibration.OptimizationSpec:
    if args.spec is not None:
        try:
            data = yaml.safe_load(Path(args.spec).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read spec: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in spec: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("spec: must be a mapping")
        model = data.get("model")
        if model not in ("mobil", "mbrgt"):
            raise ConfigError("spec.model: must be mobil or mbrgt")
        bounds = data.get("bounds")
        if bounds is None:
            bounds = calibration.default_bounds(model)
        else:
            try:
                bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
            except (TypeError, ValueError):
                raise ConfigError("spec.bounds: must be [lo, hi] pairs") from None
        kwargs = {}
        for key in ("starts", "seed", "max_evals_per_start"):
            if key in data:
                kwargs[key] = int(data[key])
        for key in ("xatol", "fatol"):
            if key in data:
                kwargs[key] = float(data[key])
        if "cost" in data:
            kwargs["cost"] = data["cost"]
        try:
            return calibration.OptimizationSpec(model=model, bounds=bounds, **kwargs)
        except ValueError as exc:
            raise ConfigError(f"spec: {exc}") from None
    if args.model is None:
        raise ConfigError("either a spec file (--spec) or --model is required")
    try:
        return calibration.OptimizationSpec(
            model=args.model,
            bounds=calibration.default_bounds(args.model, narrow=args.model == "mbrgt"
                                              and args.cost == "lc"),
            starts=args.starts,
            cost=args.cost,
            seed=args.seed if args.seed is not None else DEFAULT_SEED,
        )
    except ValueError as exc:
        raise ConfigError(f"spec: {exc}") from None


def _cmd_calibrate(args) -> int:
    try:
        spec = _load_optimization_spec(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        events = extraction.load_event_dir(args.events)
    except (OSError, TrajectoryFormatError) as exc:
        return _fail(EXIT_DATA, f"cannot load events: {exc}")
    rng = np.random.default_rng(spec.seed)
    try:
        train, holdout = calibration.split_dataset(events, 0.7, rng)
        result = calibration.multistart_optimize(spec, train)
    except calibration.CalibrationDataError as exc:
        return _fail(EXIT_DATA, str(exc))
    train_rates = calibration.success_rates(spec.model, result.best_params, train)
    holdout_rates = calibration.success_rates(spec.model, result.best_params, holdout)
    tracker = _OutputTracker()
    try:
        written = calibration.write_calibration_report(args.out, spec, result,
                                                       train_rates, holdout_rates)
        tracker.add(*written)
        if args.plots:
            from .plots import save_decision_timelines
            plot_path = Path(args.out) / "decisions.png"
            tracker.add(plot_path)
            save_decision_timelines(holdout, spec.model, result.best_params, plot_path)
    except Exception as exc:  # noqa: BLE001
        tracker.discard_all()
        return _fail(EXIT_DATA, f"report writing failed: {exc}")
    print(f"calibrated {spec.model} on {len(train)} train / {len(holdout)} holdout events "
          f"({spec.cost} cost, {spec.starts} starts, seed {spec.seed})")
    print(f"best cost {result.best_cost:.4f} from start {result.best_start}")
    print(f"train rates: ks {train_rates.r_ks:.1f}% lc {train_rates.r_lc:.1f}% "
          f"overall {train_rates.r_overall:.1f}%")
    print(f"holdout rates: ks {holdout_rates.r_ks:.1f}% lc {holdout_rates.r_lc:.1f}% "
          f"overall {holdout_rates.r_overall:.1f}%")
    return EXIT_OK


def _cmd_bench(args) -> int:
    try:
        config = _with_seed(load_scenario_config(args.config), args.seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    overall = []
    model_only = []
    for rep in range(args.reps):
        _, metrics = run_scenario(config)
        overall.append(metrics.rtf_overall)
        model_only.append(metrics.rtf_model_only)
        print(f"rep {rep}: rtf_overall {metrics.rtf_overall:.2f}x "
              f"rtf_model_only {metrics.rtf_model_only:.2f}x "
              f"(wall {metrics.wall_time_s:.2f} s, model {metrics.model_time_s:.2f} s)")
    print(f"median over {args.reps} reps: rtf_overall {statistics.median(overall):.2f}x "
          f"rtf_model_only {statistics.median(model_only):.2f}x")
    return EXIT_OK


def _cmd_presets(args) -> int:
    ids = [args.preset] if args.preset else list(presets.available_presets())
    for preset_id in ids:
        try:
            entry = presets.PRESETS[preset_id]
        except KeyError:
            known = ", ".join(presets.available_presets())
            return _fail(EXIT_CONFIG, f"unknown preset {preset_id!r}; available: {known}")
        fields = ", ".join(f"{name}={value}"
                           for name, value in zip(entry.fields, entry.values))
        print(f"{preset_id} ({entry.model}): {fields}")
        print(f"  {entry.note}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mergesim",
        description="Highway-merge negotiation simulator and calibration toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario and write the trajectory log")
    p_sim.add_argument("--config", required=True, help="scenario YAML")
    p_sim.add_argument("--seed", type=int, default=None,
                       help=f"override the scenario seed (config default, else {DEFAULT_SEED})")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--plots", action="store_true", help="also write lane plots")
    p_sim.set_defaults(func=_cmd_simulate)

    p_ext = sub.add_parser("extract", help="extract merge events from trajectory logs")
    p_ext.add_argument("logs", nargs="+", help="trajectory CSV file(s)")
    p_ext.add_argument("--config", required=True, help="scenario YAML supplying the topology")
    p_ext.add_argument("--out", required=True, help="event output directory")
    p_ext.set_defaults(func=_cmd_extract)

    p_cal = sub.add_parser("calibrate", help="fit model parameters to extracted events")
    p_cal.add_argument("events", help="directory containing manifest.csv and event files")
    p_cal.add_argument("--spec", default=None, help="optimization spec YAML")
    p_cal.add_argument("--model", choices=("mobil", "mbrgt"), default=None,
                       help="model to fit when no spec file is given")
    p_cal.add_argument("--cost", choices=("overall", "ks", "lc"), default="overall")
    p_cal.add_argument("--starts", type=int, default=20)
    p_cal.add_argument("--seed", type=int, default=None,
                       help=f"search seed (default {DEFAULT_SEED})")
    p_cal.add_argument("--out", required=True, help="report output directory")
    p_cal.add_argument("--plots", action="store_true", help="also write decision timelines")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_bench = sub.add_parser("bench", help="measure real-time factors for a scenario")
    p_bench.add_argument("--config", required=True, help="scenario YAML")
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.set_defaults(func=_cmd_bench)

    p_pre = sub.add_parser("presets", help="list published parameter presets")
    p_pre.add_argument("--preset", default=None, help="show a single preset")
    p_pre.set_defaults(func=_cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
