"""``tensormap`` command line: synth, build, localize, eval, sweep.

Exit status is 0 on success, 1 on a validation or usage error and 2 on an
I/O or file-format error. ``--config FILE`` reads ``key=value`` lines that
fill in any flag not given on the command line.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError, ValidationError
from .eval import (
    DEFAULT_MOTION_THRESHOLD,
    Holdout,
    NoiseSpec,
    SplitSpec,
    dumps_summary,
    evaluate,
    holdout_map,
    noisy_tensor,
    parameter_sweep,
    sweep_csv,
)
from .localizer import localize
from .map_builder import FORMAT_VERSION, build_map, load_map, memory_report, save_map
from .range_image import GridSpec, ScanMatrix, matricize_scan
from .scan_io import read_dataset, read_pose_stream, read_scan_bin, read_scan_csv, write_dataset
from .synthetic import corridor_scene, generate_synthetic_dataset, load_scene, scene_to_dict

DEFAULTS = {
    "synth": {"format": "csv", "preset": None, "scene": None, "seed": None},
    "build": {"grid": GridSpec(), "train_fraction": 1.0, "split": "stride", "split_seed": 0},
    "localize": {"json": False},
    "eval": {"poses": None, "noise": None, "seed": 0, "train_fraction": 0.8, "split": "stride",
             "split_seed": 0, "motion_threshold": DEFAULT_MOTION_THRESHOLD},
    "sweep": {"grid": GridSpec(), "train_fraction": 0.8, "split": "stride", "split_seed": 0},
}
REQUIRED = {
    "synth": ["out"],
    "build": ["scans", "k", "r1", "r2", "out"],
    "localize": ["map", "scan"],
    "eval": ["map", "scans", "report"],
    "sweep": ["scans", "params", "report"],
}
PRESETS = {
    "corridor": lambda seed: corridor_scene(seed=seed),
    "corridor-stationary": lambda seed: corridor_scene(seed=seed, stationary_boundary=4),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        # let "--grid -25,4,-180,180,1" through as a value
        self._negative_number_matcher = re.compile(r"^-\d[\d.,eE+-]*$|^-\.\d")

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _grid(text):
    return GridSpec.parse(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def build_parser() -> _Parser:
    p = _Parser(prog="tensormap", description="Tucker3 topological maps from Lidar scans.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    p.commands = {}

    def cmd(name, help):
        sp = sub.add_parser(name, help=help, argument_default=None)
        p.commands[name] = sp
        sp.add_argument("--config", help="key=value file; explicit flags win")
        return sp

    sp = cmd("synth", "generate a synthetic dataset")
    sp.add_argument("--scene", help="scene JSON file")
    sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in scene instead of --scene")
    sp.add_argument("--out", help="output dataset directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--format", choices=["csv", "bin"])

    sp = cmd("build", "build a map from a dataset")
    sp.add_argument("--scans", help="dataset directory")
    sp.add_argument("--grid", type=_grid, help="theta_min,theta_max,phi_min,phi_max,res")
    sp.add_argument("--k", type=int)
    sp.add_argument("--r1", type=int)
    sp.add_argument("--r2", type=int)
    sp.add_argument("--out", help="output .tmap file")
    _split_flags(sp)

    sp = cmd("localize", "localize one scan file")
    sp.add_argument("--map")
    sp.add_argument("--scan")
    sp.add_argument("--json", action="store_const", const=True)

    sp = cmd("eval", "evaluate a map on the held-out scans of a dataset")
    sp.add_argument("--map")
    sp.add_argument("--scans")
    sp.add_argument("--poses")
    sp.add_argument("--noise", help="gaussian:<sigma> or translate:<meters>")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--motion-threshold", type=float)
    sp.add_argument("--report", help="report directory")
    _split_flags(sp)

    sp = cmd("sweep", "hold-out evaluation over (r1, r2, k) combinations")
    sp.add_argument("--scans")
    sp.add_argument("--grid", type=_grid)
    sp.add_argument("--params", help="CSV file of r1,r2,k rows, or inline 'r1,r2,k;...'")
    sp.add_argument("--report")
    _split_flags(sp)
    return p


def _split_flags(sp):
    sp.add_argument("--train-fraction", type=float)
    sp.add_argument("--split", choices=["stride", "random"])
    sp.add_argument("--split-seed", type=int)


def _read_config_file(path, parser, command) -> dict:
    actions = {a.dest: a for a in parser.commands[command]._actions}
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in actions or key == "config":
            raise ValidationError(f"{path}:{lineno}: unknown config entry {line!r}")
        action = actions[key]
        value = value.strip()
        if action.const is True:
            out[key] = _bool(value)
        elif action.type is not None:
            try:
                out[key] = action.type(value)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
        else:
            out[key] = value
    return out


def resolve(parser, argv) -> dict:
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")
    explicit = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    from_file = _read_config_file(args.config, parser, args.command) if args.config else {}
    cfg = {**DEFAULTS[args.command], **from_file, **explicit}
    missing = [k for k in REQUIRED[args.command] if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    cfg["command"] = args.command
    return cfg


def _echo(cfg) -> dict:
    """Resolved configuration as embedded in every artifact."""
    out = {"map_format_version": FORMAT_VERSION, "tensormap_version": __version__}
    for key, val in cfg.items():
        out[key] = list(val.as_tuple()) if isinstance(val, GridSpec) else val
    return out


def _config_line(cfg) -> str:
    return "# config: " + json.dumps(_echo(cfg), sort_keys=True) + "\n"


def _write_metadata(directory: Path, cfg) -> None:
    meta = {"created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"), "config": _echo(cfg)}
    (directory / "metadata.json").write_text(dumps_summary(meta), encoding="utf-8")


def _split_spec(cfg) -> SplitSpec:
    return SplitSpec(cfg["train_fraction"], cfg["split"], cfg["split_seed"])


def _dataset_tensor(clouds, grid, noise=None):
    return noisy_tensor(clouds, grid, noise)


def cmd_synth(cfg) -> None:
    if (cfg["scene"] is None) == (cfg["preset"] is None):
        raise ValidationError("give exactly one of --scene or --preset")
    if cfg["scene"] is not None:
        spec = load_scene(cfg["scene"])
        if cfg["seed"] is not None:
            spec = spec.with_seed(cfg["seed"])
    else:
        spec = PRESETS[cfg["preset"]](cfg["seed"] or 0)
    clouds, poses = generate_synthetic_dataset(spec)
    out = write_dataset(cfg["out"], clouds, poses, cfg["format"])
    (out / "scene.json").write_text(json.dumps(scene_to_dict(spec)) + "\n", encoding="utf-8")
    (out / "synth_config.json").write_text(dumps_summary(_echo(cfg)), encoding="utf-8")
    print(f"wrote {len(clouds)} scans ({sum(len(c) for c in clouds)} returns) to {out}")


def cmd_build(cfg) -> None:
    ds = read_dataset(cfg["scans"])
    grid = cfg["grid"]
    x = _dataset_tensor(ds.clouds, grid)
    spec = _split_spec(cfg)
    if spec.train_fraction == 1.0:
        tmap = build_map(x, cfg["k"], cfg["r1"], cfg["r2"], grid)
    else:
        tmap = holdout_map(x, grid, cfg["k"], cfg["r1"], cfg["r2"], Holdout.make(x.shape[2], cfg["k"], spec))
    save_map(tmap, cfg["out"])
    mem = memory_report(tmap, ds.total_returns)
    report = {"config": _echo(cfg), "memory": mem.as_dict(), "segments": tmap.n_segments,
              "segment_lengths": tmap.lengths, "offsets": tmap.offsets}
    Path(str(cfg["out"]) + ".memory.json").write_text(dumps_summary(report), encoding="utf-8")
    print(f"map: {tmap.n_segments} segments, {mem.map_units} units "
          f"(full tensor 1:{mem.full_ratio:.1f}, raw clouds 1:{mem.raw_ratio:.1f}) -> {cfg['out']}")


def _read_scan_file(path):
    path = Path(path)
    if path.suffix == ".bin":
        return read_scan_bin(path)
    return read_scan_csv(path)


def cmd_localize(cfg) -> None:
    tmap = load_map(cfg["map"])
    cloud = _read_scan_file(cfg["scan"])
    res = localize(tmap, matricize_scan(cloud, tmap.grid))
    if cfg["json"]:
        d = res.as_dict()
        out = {"scan_id": cloud.scan_id, "segment": d["segment_index"], "scan_index": d["scan_index_in_segment"],
               "global_scan_index": d["global_scan_index"], "distance": d["distance"],
               "runner_up_distance": d["runner_up_distance"], "margin": d["margin"],
               "config": _echo(cfg)}
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"scan {cloud.scan_id}: segment {res.segment_index} scan {res.scan_index_in_segment} "
              f"(global {res.global_scan_index}) distance {res.distance:.6g} margin {res.margin:.6g}")


def cmd_eval(cfg) -> None:
    tmap = load_map(cfg["map"])
    ds = read_dataset(cfg["scans"])
    grid = tmap.grid
    spec = _split_spec(cfg)
    K = len(ds.clouds)
    holdout = Holdout.make(K, tmap.k, spec)
    if holdout.test.size == 0:
        raise ValidationError("split leaves no test scans; train_fraction must be below 1")
    per_segment = np.bincount(holdout.segment_of(holdout.train), minlength=len(holdout.bounds)).tolist()
    if per_segment != tmap.lengths:
        raise ValidationError(
            f"map segment lengths {tmap.lengths} do not match this dataset's training split {per_segment}; "
            "build and eval must use the same scans, k and split flags")
    poses = read_pose_stream(cfg["poses"]) if cfg["poses"] else ds.poses
    noise = NoiseSpec.parse(cfg["noise"], cfg["seed"]) if cfg["noise"] else None
    x = _dataset_tensor(ds.clouds, grid)
    q = x if noise is None else _dataset_tensor(ds.clouds, grid, noise)
    ids = np.array(ds.scan_ids)
    queries = [ScanMatrix(grid, q[:, :, p], int(ids[p])) for p in holdout.test]
    report = evaluate(tmap, queries, holdout.segment_of(holdout.test), poses=poses,
                      motion_threshold=cfg["motion_threshold"], train_ids=ids[holdout.train],
                      train_segments=holdout.train_segments(x),
                      params={"k": tmap.k, "r1": tmap.ranks[0], "r2": tmap.ranks[1]})
    out = Path(cfg["report"])
    out.mkdir(parents=True, exist_ok=True)
    head = _config_line(cfg)
    (out / "queries.csv").write_text(head + report.queries_csv(), encoding="utf-8")
    (out / "confusion.csv").write_text(head + report.confusion_csv(), encoding="utf-8")
    (out / "segments.csv").write_text(head + _segments_csv(tmap, holdout, report, ds), encoding="utf-8")
    summary = {"config": _echo(cfg), **report.summary(), "memory": memory_report(tmap, ds.total_returns).as_dict()}
    (out / "summary.json").write_text(dumps_summary(summary), encoding="utf-8")
    _write_metadata(out, cfg)
    moving = report.moving_only_accuracy
    print(f"segment accuracy {report.segment_accuracy:.4f}"
          + ("" if moving is None else f", moving-only {moving:.4f}")
          + f" over {len(queries)} queries -> {out}")


def _segments_csv(tmap, holdout, report, ds) -> str:
    """Segment table; node position is the pose of the segment's first scan."""
    pose_by_id = {p.scan_id: p for p in ds.poses} if ds.poses else {}
    lines = ["segment,first_scan_id,last_scan_id,train_scans,relative_error,slice_coherence,node_x,node_y\n"]
    for l, (a, b) in enumerate(holdout.bounds):
        first, last = ds.scan_ids[a], ds.scan_ids[b - 1]
        node = pose_by_id.get(first)
        nx, ny = ("", "") if node is None else (repr(node.x), repr(node.y))
        lines.append(f"{l},{first},{last},{tmap.lengths[l]},{report.relative_errors[l]!r},"
                     f"{report.coherence[l]!r},{nx},{ny}\n")
    return "".join(lines)


def _parse_params(text) -> list[tuple[int, int, int]]:
    path = Path(text)
    body = path.read_text(encoding="utf-8") if path.exists() else text.replace(";", "\n")
    rows = []
    for lineno, line in enumerate(body.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.replace(" ", "").lower() == "r1,r2,k":
            continue
        try:
            r1, r2, k = (int(v) for v in line.split(","))
        except ValueError:
            raise ValidationError(f"params line {lineno}: expected 'r1,r2,k', got {line!r}") from None
        rows.append((r1, r2, k))
    if not rows:
        raise ValidationError("no parameter combinations given")
    return rows


def cmd_sweep(cfg) -> None:
    ds = read_dataset(cfg["scans"])
    grid = cfg["grid"]
    x = _dataset_tensor(ds.clouds, grid)
    rows = parameter_sweep(x, grid, _parse_params(cfg["params"]), _split_spec(cfg))
    out = Path(cfg["report"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(_config_line(cfg) + sweep_csv(rows), encoding="utf-8")
    best = max(rows, key=lambda r: (r.accuracy, -r.map_units))
    summary = {"config": _echo(cfg), "rows": len(rows),
               "best": {"r1": best.r1, "r2": best.r2, "k": best.k, "accuracy": best.accuracy,
                        "map_units": best.map_units}}
    (out / "summary.json").write_text(dumps_summary(summary), encoding="utf-8")
    _write_metadata(out, cfg)
    for r in rows:
        print(f"r1={r.r1} r2={r.r2} k={r.k}: accuracy {r.accuracy:.4f}, {r.map_units} units, "
              f"mean rel. error {r.mean_relative_error:.4f}")


COMMANDS = {"synth": cmd_synth, "build": cmd_build, "localize": cmd_localize,
            "eval": cmd_eval, "sweep": cmd_sweep}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        cfg = resolve(parser, argv)
        COMMANDS[cfg["command"]](cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (FormatError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
