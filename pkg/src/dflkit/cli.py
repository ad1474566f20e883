"""Command-line entry point.

Subcommands: simulate | localize | evaluate | decode-frames | make-scene.
Exit codes: 0 success, 2 configuration errors, 3 data/trace/frame errors,
4 degenerate-geometry or no-detection outcomes.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channelsim import ChannelPlan, ObstructionModel, SimConfig, simulate_scene
from .detection import DetectorConfig
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DflkitError,
    FrameError,
    NoDetectionError,
    TraceError,
)
from .evaluate import (
    Dataset,
    SweepConfig,
    localization_metrics,
    sweep_channels,
    sweep_threshold,
    write_rows_csv,
)
from .localization import RwlsConfig, WlsSystem, rwls_localize, wls_solve
from .manifest import RunManifest
from .scene import dump_scene, load_scene, office_16_layout
from .traceio import iter_frames, read_trace, write_trace

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GEOMETRY = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with simulation settings")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dflkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dflkit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("make-scene", help="write a scene config file")
    p.add_argument("--layout", default="office16", choices=["office16"],
                   help="bundled deployment to emit")
    p.add_argument("--out", type=Path, default=None, help="output path (default <out-dir>/<layout>.scene)")
    _add_common(p)

    p = sub.add_parser("simulate", help="synthesize calibration + observation traces")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--positions", type=Path, default=None,
                   help="CSV of target positions (position,x,y)")
    p.add_argument("--grid-step", type=float, default=None,
                   help="generate an interior test grid with this spacing (m)")
    p.add_argument("--target", action="append", default=None, metavar="X,Y",
                   help="explicit target position, repeatable")
    p.add_argument("--channels", type=int, default=16, help="number of 2.4 GHz channels (default 16)")
    p.add_argument("--radius", type=float, default=0.4, help="obstruction radius (m)")
    p.add_argument("--max-attenuation", type=float, default=7.0, help="peak LOS attenuation (dB)")
    p.add_argument("--paths", type=int, default=None, help="multipath count per link")
    p.add_argument("--multipath-scale", type=float, default=None)
    p.add_argument("--noise", type=float, default=None, help="per-sample noise sigma (dB)")
    p.add_argument("--samples", type=int, default=None, help="samples per (link, channel)")
    _add_common(p)

    p = sub.add_parser("localize", help="run the localization pipeline over observation traces")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--calibration", type=Path, required=True)
    p.add_argument("--observations", type=Path, nargs="+", required=True)
    p.add_argument("--gamma-th", type=float, default=4.0, help="detection threshold (dB)")
    p.add_argument("--r-th", type=float, default=0.5, help="spatial filter radius (m)")
    p.add_argument("--grid", type=float, default=0.1, help="coarse grid cell size (m)")
    p.add_argument("--vote-radius", type=float, default=0.3, help="grid vote radius (m)")
    p.add_argument("--estimator", default="variance",
                   help="variance | mean | single:<channel number>")
    p.add_argument("--no-spatial-filter", action="store_true",
                   help="also report plain (unfiltered) WLS estimates for A/B comparison")
    p.add_argument("--clamp-segments", action="store_true",
                   help="measure distances to link segments instead of infinite lines")
    _add_common(p)

    p = sub.add_parser("evaluate", help="score estimates or run sweeps")
    p.add_argument("--estimates", type=Path, default=None, help="estimates CSV from `localize`")
    p.add_argument("--truth", type=Path, required=True, help="truth positions CSV (position,x,y)")
    p.add_argument("--sweep", nargs=2, default=None, metavar=("KIND", "RANGE"),
                   help="gamma-th A:B:STEP or channels A:B")
    p.add_argument("--scene", type=Path, default=None)
    p.add_argument("--calibration", type=Path, default=None)
    p.add_argument("--observations", type=Path, nargs="+", default=None)
    p.add_argument("--radius", type=float, default=0.4, help="truth obstruction radius (m)")
    p.add_argument("--gamma-th", type=float, default=4.0)
    p.add_argument("--r-th", type=float, default=0.5)
    p.add_argument("--grid", type=float, default=0.1)
    p.add_argument("--vote-radius", type=float, default=0.3)
    p.add_argument("--with-spatial-filter", action="store_true",
                   help="add the post-filter variant to threshold sweeps / use RWLS in channel sweeps")
    _add_common(p)

    p = sub.add_parser("decode-frames", help="decode a binary frame stream to CSV")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--k", type=int, required=True, help="number of sensors")
    p.add_argument("--out", type=Path, default=None, help="CSV output (default stdout)")
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _manifest(args, argv, inputs, outputs) -> None:
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in ("subcommand", "quiet"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [str(v) for v in value]
        config[key] = value
    manifest = RunManifest(subcommand=args.subcommand, argv=[str(a) for a in argv],
                           config=config, seed=getattr(args, "seed", None),
                           inputs=[str(p) for p in inputs], outputs=[str(p) for p in outputs],
                           version=__version__)
    path = args.out_dir / f"manifest-{args.subcommand}.json"
    manifest.write(path)


def _read_positions_csv(path):
    ids, coords = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["position"])
            coords.append((float(row["x"]), float(row["y"])))
    if not ids:
        raise ConfigError(f"{path}: no positions")
    return ids, np.array(coords)


def _write_positions_csv(path, ids, coords) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "x", "y"])
        for pid, (x, y) in zip(ids, coords):
            writer.writerow([pid, x, y])


def _grid_positions(area, step: float):
    xs = np.arange(area.x_min + step, area.x_max - 1e-9, step)
    ys = np.arange(area.y_min + step, area.y_max - 1e-9, step)
    return [(float(x), float(y)) for y in ys for x in xs]


def _sim_config(args) -> SimConfig:
    cfg = SimConfig.from_json(args.config) if args.config else SimConfig()
    overrides = {}
    if args.paths is not None:
        overrides["path_count"] = args.paths
    if args.multipath_scale is not None:
        overrides["multipath_scale"] = args.multipath_scale
    if args.noise is not None:
        overrides["noise_db"] = args.noise
    if args.samples is not None:
        overrides["sample_count"] = args.samples
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def _detector_config(estimator: str, threshold: float, channels) -> DetectorConfig:
    if estimator.startswith("single"):
        _, _, suffix = estimator.partition(":")
        number = int(suffix) if suffix else channels[0]
        if number not in channels:
            raise ConfigError(f"channel {number} not in trace channels {channels}")
        return DetectorConfig(threshold_db=threshold, estimator="single",
                              single_channel=channels.index(number))
    if estimator not in ("variance", "mean"):
        raise ConfigError(f"unknown estimator {estimator!r}")
    return DetectorConfig(threshold_db=threshold, estimator=estimator)


def _parse_range(kind: str, spec: str):
    parts = spec.split(":")
    try:
        if kind == "gamma-th":
            if len(parts) != 3:
                raise ValueError("expected A:B:STEP")
            lo, hi, step = (float(v) for v in parts)
            return np.arange(lo, hi + step / 2, step)
        if kind == "channels":
            if len(parts) != 2:
                raise ValueError("expected A:B")
            lo, hi = (int(v) for v in parts)
            return list(range(lo, hi + 1))
    except ValueError as exc:
        raise ConfigError(f"bad --sweep range {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown sweep kind {kind!r} (gamma-th or channels)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_make_scene(args, argv) -> int:
    scene = office_16_layout()
    out = args.out or (args.out_dir / f"{args.layout}.scene")
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_scene(scene, out)
    _say(args, f"wrote {out} ({scene.n_sensors} sensors, {scene.n_links} links)")
    _manifest(args, argv, [], [out])
    return 0


def cmd_simulate(args, argv) -> int:
    scene = load_scene(args.scene)
    if args.positions:
        ids, coords = _read_positions_csv(args.positions)
        positions = [tuple(c) for c in coords]
    elif args.target:
        try:
            positions = [tuple(float(v) for v in t.split(",")) for t in args.target]
        except ValueError as exc:
            raise ConfigError(f"bad --target value: {exc}") from exc
        ids = [f"p{i + 1:02d}" for i in range(len(positions))]
    elif args.grid_step:
        positions = _grid_positions(scene.area, args.grid_step)
        ids = [f"p{i + 1:02d}" for i in range(len(positions))]
    else:
        raise ConfigError("one of --positions, --grid-step or --target is required")

    plan = ChannelPlan.ieee802154_2_4ghz(args.channels)
    obstruction = ObstructionModel(radius_m=args.radius, max_attenuation_db=args.max_attenuation)
    sim = _sim_config(args)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    scene_ref = args.scene.stem

    outputs = []
    cal = simulate_scene(scene, plan, obstruction, None, sim, args.seed)
    cal_path = args.out_dir / "calibration.trace"
    write_trace(cal_path, cal, scene.n_sensors, scene_ref, "calibration", "-")
    outputs.append(cal_path)
    for pid, pos in zip(ids, positions):
        obs = simulate_scene(scene, plan, obstruction, pos, sim, args.seed)
        path = args.out_dir / f"obs_{pid}.trace"
        write_trace(path, obs, scene.n_sensors, scene_ref, "observation", pid)
        outputs.append(path)
    truth_path = args.out_dir / "positions.csv"
    _write_positions_csv(truth_path, ids, positions)
    outputs.append(truth_path)
    _say(args, f"wrote {len(outputs)} files to {args.out_dir}")
    _manifest(args, argv, [args.scene], outputs)
    return 0


def _load_observations(paths):
    traces = [read_trace(p) for p in paths]
    traces.sort(key=lambda t: t.header.position_id)
    return traces


def cmd_localize(args, argv) -> int:
    scene = load_scene(args.scene)
    calibration = read_trace(args.calibration)
    observations = _load_observations(args.observations)
    detector = _detector_config(args.estimator, args.gamma_th, list(calibration.tensor.channels))
    cfg = RwlsConfig(detector=detector, grid_cell_m=args.grid, vote_radius_m=args.vote_radius,
                     filter_radius_m=args.r_th, clamp_to_segment=args.clamp_segments)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    header = ["position", "coarse_x", "coarse_y", "x", "y", "method", "n_detected", "n_filtered"]
    if args.no_spatial_filter:
        header += ["wls_x", "wls_y"]
    rows = []
    failures = 0
    outputs = []
    for trace in observations:
        pid = trace.header.position_id
        try:
            est = rwls_localize(scene, calibration.tensor, trace.tensor, cfg)
        except NoDetectionError:
            failures += 1
            rows.append([pid, "", "", "", "", "no-detection", 0, 0] + ([""] * 2 if args.no_spatial_filter else []))
            continue
        row = [pid, est.coarse[0], est.coarse[1], est.refined[0], est.refined[1],
               est.method, len(est.detection.obstructed), len(est.filtered.obstructed)]
        if args.no_spatial_filter:
            try:
                plain = wls_solve(WlsSystem.from_detection(scene, est.detection), cfg.condition_cap)
            except (DegenerateGeometryError, ValueError):
                plain = ("", "")
            row += [plain[0], plain[1]]
        rows.append(row)
        votes_path = args.out_dir / f"votes_{pid}.csv"
        np.savetxt(votes_path, est.votes, delimiter=",", fmt="%.6g")
        outputs.append(votes_path)

    est_path = args.out_dir / "estimates.csv"
    with open(est_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    outputs.insert(0, est_path)
    _say(args, f"localized {len(observations) - failures}/{len(observations)} positions -> {est_path}")
    _manifest(args, argv, [args.scene, args.calibration, *args.observations], outputs)
    return EXIT_GEOMETRY if failures else 0


def _build_dataset(args) -> Dataset:
    for name in ("scene", "calibration", "observations"):
        if getattr(args, name) is None:
            raise ConfigError(f"--{name} is required for sweeps")
    scene = load_scene(args.scene)
    calibration = read_trace(args.calibration)
    traces = _load_observations(args.observations)
    ids, coords = _read_positions_csv(args.truth)
    by_id = {t.header.position_id: t for t in traces}
    missing = [pid for pid in ids if pid not in by_id]
    if missing:
        raise ConfigError(f"no observation trace for truth positions {missing}")
    return Dataset(scene=scene, calibration=calibration.tensor, positions=coords,
                   observations=[by_id[pid].tensor for pid in ids],
                   truth_radius_m=args.radius)


def cmd_evaluate(args, argv) -> int:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if args.sweep is None:
        if args.estimates is None:
            raise ConfigError("--estimates is required without --sweep")
        ids, truth = _read_positions_csv(args.truth)
        estimates = {}
        with open(args.estimates, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["x"] != "":
                    estimates[row["position"]] = (float(row["x"]), float(row["y"]))
        known = [i for i, pid in enumerate(ids) if pid in estimates]
        if not known:
            raise ConfigError("no overlapping positions between estimates and truth")
        est = np.array([estimates[ids[i]] for i in known])
        metrics = localization_metrics(truth[known], est)
        metrics_path = args.out_dir / "metrics.csv"
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["rmse", metrics.rmse])
            writer.writerow(["positions", len(known)])
        cdf_path = args.out_dir / "cdf.csv"
        with open(cdf_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["error", "fraction"])
            writer.writerows(zip(metrics.cdf_error, metrics.cdf_fraction))
        outputs += [metrics_path, cdf_path]
        _say(args, f"rmse {metrics.rmse:.4f} m over {len(known)} positions")
    else:
        kind, spec = args.sweep
        values = _parse_range(kind, spec)
        dataset = _build_dataset(args)
        detector = _detector_config("variance", args.gamma_th, list(dataset.calibration.channels))
        sweep_cfg = SweepConfig(detector=detector, grid_cell_m=args.grid,
                                vote_radius_m=args.vote_radius, filter_radius_m=args.r_th,
                                include_spatial_filter=args.with_spatial_filter)
        if kind == "gamma-th":
            rows = sweep_threshold(dataset, values, sweep_cfg)
            path = args.out_dir / "sweep_gamma_th.csv"
        else:
            rows = sweep_channels(dataset, values, sweep_cfg)
            path = args.out_dir / "sweep_channels.csv"
        write_rows_csv(rows, path)
        outputs.append(path)
        _say(args, f"wrote {len(rows)} sweep rows -> {path}")
    inputs = [p for p in (args.estimates, args.truth, args.scene, args.calibration) if p]
    if args.observations:
        inputs += list(args.observations)
    _manifest(args, argv, inputs, outputs)
    return 0


def cmd_decode_frames(args, argv) -> int:
    raw = args.input.read_bytes()
    rows = [["index", "flag", "cid", "nid", "data_hex"]]
    for i, frame in enumerate(iter_frames(raw, args.k)):
        rows.append([i, frame.flag, frame.cid, frame.nid, frame.data.hex()])
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        _manifest(args, argv, [args.input], [args.out])
    else:
        for row in rows:
            print(",".join(str(v) for v in row))
    _say(args, f"decoded {len(rows) - 1} frames")
    return 0


_HANDLERS = {
    "make-scene": cmd_make_scene,
    "simulate": cmd_simulate,
    "localize": cmd_localize,
    "evaluate": cmd_evaluate,
    "decode-frames": cmd_decode_frames,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else [str(a) for a in argv]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.subcommand](args, argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceError, FrameError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NoDetectionError, DegenerateGeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except DflkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
