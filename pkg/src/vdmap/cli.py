"""Command line driver.

    vdmap build DATASET --out GRAPH_DIR
    vdmap global GRAPH_DIR --out MAP.ply
    vdmap eval MODEL.ply REFERENCE.ply
    vdmap compare DATASET_OR_SCENE [--reference REF.ply]
    vdmap synth SCENE --out DATASET_DIR

Exit codes: 0 success, 1 usage, 2 data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio, scenes
from .config import RunConfig, load_config
from .errors import EmptyInput, InvariantViolation, UsageError, VdmapError
from .eval import EvalReport, format_table, nearest_distances
from .graph import ActionKind
from .merge import build_global_map, sample_point_cloud
from .pipeline import build_graph, compare

log = logging.getLogger("vdmap")

BUILTIN_SCENES = {"room": scenes.room_scene, "desk": scenes.desk_scene,
                  "tilted": lambda m=0.0: scenes.tilted_plane(noise_multiplier=m)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", metavar="PATH", help="key = value settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--cell-px", type=int, dest="cell_px")
    p.add_argument("--voxel", type=float, action="append", metavar="M",
                   help="voxel size in meters (repeatable for compare)")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("ascii", "binary"), default="binary")
    p.add_argument("--dump-config", action="store_true", help="print effective settings and exit")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vdmap", description="View-dependent keyframe NDT mapping")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build", help="map a TUM-layout dataset into a keyframe graph")
    p.add_argument("dataset")
    _common(p)

    p = sub.add_parser("global", help="merge a keyframe graph into a global ellipsoid map")
    p.add_argument("graph_dir")
    p.add_argument("--samples", type=int, dest="samples_per_ellipsoid",
                   help="also write N samples per ellipsoid")
    _common(p)

    p = sub.add_parser("eval", help="nearest-neighbor RMSE of a model cloud")
    p.add_argument("model")
    p.add_argument("reference")
    _common(p)

    p = sub.add_parser("compare", help="VD against voxel baselines on the same frames")
    p.add_argument("input", help="TUM dataset directory, scene file or builtin scene name")
    p.add_argument("--reference", metavar="PLY")
    _common(p)

    p = sub.add_parser("synth", help="render a scene description to a TUM-layout dataset")
    p.add_argument("scene", help="scene file or builtin name (room, desk, tilted)")
    p.add_argument("--frames", type=int, dest="synth_frames")
    p.add_argument("--trajectory", metavar="PATH", help="TUM groundtruth-format poses")
    _common(p)
    return parser


def _config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "stride", "cell_px", "synth_frames", "samples_per_ellipsoid")}
    if args.voxel:
        overrides["voxel_size"] = args.voxel[0]
    return load_config(args.config, overrides)


def _require_out(args, what):
    if not args.out:
        raise UsageError(f"{args.command} needs --out {what}")
    return Path(args.out)


def _write_kv(path: Path, items) -> None:
    path.write_text("".join(f"{k}={v}\n" for k, v in items))


def _load_scene(name: str):
    p = Path(name)
    if p.is_file():
        return dataio.load_scene(p), False
    if name in BUILTIN_SCENES:
        return BUILTIN_SCENES[name](), name == "room"
    raise dataio.MissingFile(f"no scene file or builtin scene named {name!r}")


def _scene_frames(scene, is_room: bool, cfg: RunConfig, trajectory=None):
    intr = cfg.intrinsics()
    if trajectory:
        stamped = dataio.read_trajectory(trajectory)
    else:
        poses = (scenes.room_poses(cfg.synth_frames) if is_room
                 else scenes.sweep_poses(cfg.synth_frames))
        stamped = [(1.0 + 0.1 * k, p) for k, p in enumerate(poses)]
    return [dataio.render_synthetic(scene, pose, intr, seed=cfg.seed + k,
                                    noise=cfg.noise_model(), timestamp=ts)
            for k, (ts, pose) in enumerate(stamped)]


def cmd_build(args, cfg: RunConfig) -> int:
    out = _require_out(args, "GRAPH_DIR")
    frames = dataio.iter_tum_sequence(args.dataset, cfg.assoc_tolerance, cfg.depth_scale)
    graph, counts = build_graph(frames, cfg)
    dataio.save_graph(graph, out)
    (out / "config.txt").write_text(cfg.to_text())
    items = [("frames", sum(counts.values()))]
    items += [(k.value, counts[k]) for k in ActionKind]
    items += [("keyframes", len(graph)), ("edges", len(graph.edges))]
    _write_kv(out / "build_stats.txt", items)
    print(" ".join(f"{k}={v}" for k, v in items))
    return 0


def cmd_global(args, cfg: RunConfig) -> int:
    out = _require_out(args, "MAP.ply")
    graph = dataio.load_graph(args.graph_dir)
    gmap = build_global_map(graph, cfg.cluster_params())
    if gmap.output_count > gmap.input_count or gmap.output_count != len(gmap.ellipsoids):
        raise InvariantViolation("global map counts are inconsistent")
    if len(gmap.ellipsoids) and gmap.ellipsoids.eigenvalues.min() < -1e-9:
        raise InvariantViolation("global map holds a non-PSD covariance")
    dataio.export_ply(gmap, out, args.format)
    if cfg.samples_per_ellipsoid > 0:
        pts, cols = sample_point_cloud(gmap, cfg.samples_per_ellipsoid, cfg.seed)
        dataio.write_ply(out.with_suffix(".samples.ply"), pts, cols, fmt=args.format)
    items = [("keyframes", len(graph)), ("input_count", gmap.input_count),
             ("output_count", gmap.output_count), ("clusters_merged", gmap.clusters_merged),
             ("occluded_removed", gmap.occluded_removed),
             ("merge_groups", len(gmap.merge_groups))]
    _write_kv(out.with_suffix(".stats.txt"), items)
    _write_kv(out.with_suffix(".timing.txt"), [("generation_seconds",
                                                 f"{gmap.generation_seconds:.3f}")])
    print(f"submaps={len(graph)} sigma_e={gmap.input_count} sigma_e'={gmap.output_count} "
          f"t_g={gmap.generation_seconds:.2f}s")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    model, _ = dataio.load_ply_points(args.model)
    ref, _ = dataio.load_ply_points(args.reference)
    if len(model) == 0 or len(ref) == 0:
        raise EmptyInput("model and reference clouds must be non-empty")
    d = nearest_distances(model, ref)
    report = EvalReport(Path(args.model).stem, len(model),
                        float(np.sqrt(np.mean(d * d)) * 1e3), float(np.mean(d) * 1e3),
                        extra={"reference_count": len(ref)})
    sys.stdout.write(format_table([report]))
    sys.stdout.write(report.to_keyvalue())
    if args.out:
        out = Path(args.out)
        out.write_text(report.to_keyvalue())
        from .plotting import plot_error_histogram

        plot_error_histogram(d, out.with_suffix(".png"), report.method)
    return 0


def cmd_compare(args, cfg: RunConfig) -> int:
    src = Path(args.input)
    reference = None
    if src.is_dir():
        frames = dataio.load_tum_sequence(src, cfg.assoc_tolerance, cfg.depth_scale)
    else:
        scene, is_room = _load_scene(args.input)
        frames = _scene_frames(scene, is_room, cfg)
        reference = dataio.sample_scene_surface(scene, cfg.reference_spacing)
    if args.reference:
        reference, _ = dataio.load_ply_points(args.reference)
    voxels = args.voxel or [cfg.voxel_size]
    reports = compare(frames, cfg, voxels, reference)
    sys.stdout.write(format_table(reports))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.txt").write_text("".join(r.to_keyvalue(f"{r.method}.") for r in reports))
        (out / "compare_table.txt").write_text(format_table(reports))
        (out / "timing.txt").write_text("".join(f"{r.method}.{k}={v}\n" for r in reports
                                                for k, v in r.timing_items()))
        from .plotting import plot_comparison

        plot_comparison(reports, out / "compare.png")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    out = _require_out(args, "DATASET_DIR")
    scene, is_room = _load_scene(args.scene)
    frames = _scene_frames(scene, is_room, cfg, args.trajectory)
    dataio.write_tum_sequence(frames, out, cfg.depth_scale)
    print(f"frames={len(frames)} out={out}")
    return 0


COMMANDS = {"build": cmd_build, "global": cmd_global, "eval": cmd_eval,
            "compare": cmd_compare, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except UsageError as exc:
        print(f"vdmap: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.dump_config:
            sys.stdout.write(cfg.to_text())
            return 0
        return COMMANDS[args.command](args, cfg)
    except VdmapError as exc:
        print(f"vdmap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (AssertionError, FloatingPointError) as exc:
        print(f"vdmap: internal error: {exc}", file=sys.stderr)
        return 3


def run():
    sys.exit(main())
