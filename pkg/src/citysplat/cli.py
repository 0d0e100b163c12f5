"""Command-line pipeline.

Subcommands:
  synth      generate a seeded synthetic city (PLY + COLMAP text cameras)
  partition  contract, grid-split and assign training views, write manifests
  fuse       re-join fine-tuned block PLYs into one scene
  compress   build the detail-level bundle from a scene
  render     render a camera set from a bundle or raw PLY, with metrics
  bench      altitude sweep timing report (CSV + JSON)
  serve      run the HTTP render service on a bundle

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from ._util import atomic_write_text
from .colmap import assign_split, load_colmap, write_colmap_text
from .config import default_config, load_config
from .core import GaussianCloud
from .errors import ConfigError, DataError
from .images import load_png, save_png
from .lod import assemble_render_set, build_lod, load_lod, save_lod
from .metrics import psnr, ssim
from .partition import (
    ContractionMap,
    assign,
    export_manifests,
    fuse,
    grid_partition,
    load_grid,
)
from .ply import load_ply, save_ply
from .render import RenderSettings, rasterize_stats
from .synthetic import generate_synthetic_city, look_at


def _config_from(args):
    return load_config(args.config) if args.config else default_config()


def _contraction(args, config, cloud) -> ContractionMap:
    """Explicit configs carry their own foreground box; without one the box
    is derived from the scene (central third of the x-y footprint)."""
    if args.config:
        return ContractionMap.from_config(config, cloud)
    return ContractionMap.central_third(cloud)


def _settings(config) -> RenderSettings:
    return RenderSettings(background=config.background)


def _split_records(records, which: str):
    split = assign_split(records)
    if which == "all":
        return records
    return [r for r, s in zip(records, split) if s == which]


def _load_cameras(args):
    records = load_colmap(args.colmap)
    if not records:
        raise DataError(f"no cameras found in {args.colmap}")
    return records


def cmd_synth(args) -> int:
    bundle = generate_synthetic_city(
        seed=args.seed, extent=args.extent, n_buildings=args.buildings,
        n_cameras=args.cameras, target_gaussians=args.gaussians,
        image_size=(args.width, args.height),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_ply(bundle.cloud, out / "scene.ply")
    write_colmap_text(out / "sparse", bundle.cameras)
    if args.gt:
        gt_dir = out / "gt"
        gt_dir.mkdir(exist_ok=True)
        settings = RenderSettings()
        for record in bundle.cameras:
            image, _ = rasterize_stats(bundle.cloud, record.view, settings)
            save_png(image, gt_dir / record.name)
    print(f"wrote {bundle.cloud.count} gaussians, {len(bundle.cameras)} cameras -> {out}")
    return 0


def cmd_partition(args) -> int:
    config = _config_from(args)
    cloud = load_ply(args.ply_in)
    records = _split_records(_load_cameras(args), "train")
    cmap = _contraction(args, config, cloud)
    grid = grid_partition(cloud, cmap, config.block_dims)
    assignment = assign(
        records, grid, cloud, config.ssim_threshold,
        settings=_settings(config),
        assignment_scale=config.assignment_scale,
        enlarge_min_count=config.enlarge_min_count,
    )
    out = Path(args.out_dir)
    export_manifests(grid, assignment, config, out)
    blocks_dir = out / "blocks"
    blocks_dir.mkdir(exist_ok=True)
    for j in range(grid.n_blocks):
        save_ply(cloud.take(grid.members(j)), blocks_dir / f"block_{j}.ply")
    assigned = int(assignment.entries.sum())
    print(f"{grid.n_blocks} blocks, {len(records)} training views, "
          f"{assigned} assignments -> {out}")
    return 0


_BLOCK_INDEX = re.compile(r"(\d+)")


def cmd_fuse(args) -> int:
    grid = load_grid(args.grid_dir)
    pairs = []
    for path in args.block_plys:
        m = _BLOCK_INDEX.findall(Path(path).stem)
        if not m:
            raise DataError(f"cannot read a block index from file name {path}")
        pairs.append((load_ply(path), int(m[-1])))
    fused = fuse(pairs, grid)
    save_ply(fused, args.ply_out)
    print(f"fused {len(pairs)} blocks into {fused.count} gaussians -> {args.ply_out}")
    return 0


def cmd_compress(args) -> int:
    config = _config_from(args)
    cloud = load_ply(args.ply_in)
    records = _split_records(_load_cameras(args), "train")
    cmap = _contraction(args, config, cloud)
    grid = grid_partition(cloud, cmap, config.block_dims)
    scene = build_lod(cloud, grid, [r.view for r in records], config)
    save_lod(scene, args.out_dir)
    sizes = ", ".join(str(scene.level_size(i)) for i in range(scene.n_levels))
    print(f"{scene.n_levels} levels ({sizes} of {cloud.count}) -> {args.out_dir}")
    return 0


def _open_scene(path):
    """A bundle directory gives detail levels; a bare PLY renders full only."""
    p = Path(path)
    if p.is_dir():
        return load_lod(p), None
    return None, load_ply(p)


def cmd_render(args) -> int:
    scene, plain = _open_scene(args.input)
    records = _split_records(_load_cameras(args), args.split)
    settings = RenderSettings()
    out = Path(args.out_dir)
    renders = out / "renders"
    renders.mkdir(parents=True, exist_ok=True)

    rows = []
    for record in records:
        cam = record.view
        t0 = time.perf_counter()
        if scene is not None and not args.no_lod:
            assembled = assemble_render_set(scene, cam, mode=args.lod_mode)
            cloud = assembled.cloud
        else:
            cloud = scene.full if scene is not None else plain
        image, stats = rasterize_stats(cloud, cam, settings)
        render_ms = (time.perf_counter() - t0) * 1000.0
        save_png(image, renders / record.name)
        row = {
            "name": record.name,
            "render_ms": render_ms,
            "visible": stats.visible_splats,
            "assembled": cloud.count,
        }
        if args.gt:
            truth = load_png(Path(args.gt) / record.name)
            row["psnr"] = psnr(image, truth)
            row["ssim"] = ssim(image, truth)
        rows.append(row)

    report = {"frames": rows}
    if args.gt and rows:
        report["mean_psnr"] = float(np.mean([r["psnr"] for r in rows]))
        report["mean_ssim"] = float(np.mean([r["ssim"] for r in rows]))
    atomic_write_text(out / "metrics.json", json.dumps(report, indent=2))
    print(f"rendered {len(rows)} views -> {renders}")
    return 0


def _sweep_cameras(cloud: GaussianCloud, altitude: float, frames: int,
                   width: int, height: int):
    """Orbit of downward-tilted cameras circling the scene center at a fixed
    height above it."""
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    center = 0.5 * (lo + hi)
    radius = 0.5 * max(hi[0] - lo[0], hi[1] - lo[1])
    cams = []
    for i in range(frames):
        theta = 2.0 * math.pi * i / frames
        eye = center + np.array([
            radius * math.cos(theta), radius * math.sin(theta), altitude,
        ])
        cams.append(look_at(eye, center, width, height, 0.8 * width))
    return cams


def _parse_altitudes(spec: str, cloud: GaussianCloud):
    if spec != "auto":
        try:
            altitudes = [float(tok) for tok in spec.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"bad altitude list: {spec!r}") from None
        if not altitudes or any(a <= 0 for a in altitudes):
            raise ConfigError("altitudes must be positive")
        return altitudes
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    half = 0.5 * max(hi[0] - lo[0], hi[1] - lo[1])
    return [0.5 * half, 1.5 * half, 4.0 * half]


def cmd_bench(args) -> int:
    if args.frames < 1:
        raise ConfigError("--frames must be at least 1")
    scene, _ = _open_scene(args.bundle)
    if scene is None:
        raise DataError(f"{args.bundle} is not a detail-level bundle")
    altitudes = _parse_altitudes(args.altitudes, scene.full)
    settings = RenderSettings()

    rows = []
    for altitude in altitudes:
        cams = _sweep_cameras(scene.full, altitude, args.frames,
                              args.width, args.height)
        for frame, cam in enumerate(cams):
            for mode in ("lod", "finest", "full"):
                t0 = time.perf_counter()
                if mode == "full":
                    cloud, selection_ms = scene.full, 0.0
                else:
                    force = scene.finest if mode == "finest" else None
                    assembled = assemble_render_set(scene, cam, mode=args.lod_mode,
                                                    force_level=force)
                    cloud, selection_ms = assembled.cloud, assembled.selection_ms
                _, stats = rasterize_stats(cloud, cam, settings)
                render_ms = (time.perf_counter() - t0) * 1000.0
                rows.append({
                    "altitude": altitude, "frame": frame, "mode": mode,
                    "selection_ms": selection_ms, "render_ms": render_ms,
                    "visible": stats.visible_splats, "assembled": cloud.count,
                })

    aggregates = []
    for altitude in altitudes:
        for mode in ("lod", "finest", "full"):
            ms = [r["render_ms"] for r in rows
                  if r["altitude"] == altitude and r["mode"] == mode]
            visible = [r["visible"] for r in rows
                       if r["altitude"] == altitude and r["mode"] == mode]
            aggregates.append({
                "altitude": altitude, "mode": mode,
                "mean_fps": 1000.0 * len(ms) / sum(ms),
                "min_fps": 1000.0 / max(ms),
                "min_visible": min(visible), "mean_visible": float(np.mean(visible)),
            })

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "bench.json",
                      json.dumps({"rows": rows, "aggregates": aggregates}, indent=2))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_text(out / "bench.csv", buf.getvalue())
    for agg in aggregates:
        print(f"altitude {agg['altitude']:.1f} {agg['mode']:>6}: "
              f"mean {agg['mean_fps']:.2f} fps, min {agg['min_fps']:.2f} fps, "
              f"min visible {agg['min_visible']}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    scene, _ = _open_scene(args.bundle)
    if scene is None:
        raise DataError(f"{args.bundle} is not a detail-level bundle")
    app = create_app(scene, RenderSettings(), max_dim=args.max_dim)
    port = args.port if args.port else int(os.environ.get("CITYSPLAT_PORT", "8000"))
    uvicorn.run(app, host=args.bind, port=port, log_level="warning")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="citysplat", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic city scene")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extent", type=float, default=100.0)
    p.add_argument("--buildings", type=int, default=40)
    p.add_argument("--cameras", type=int, default=64)
    p.add_argument("--gaussians", type=int, default=50_000)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--gt", action="store_true",
                   help="also render ground-truth images for every camera")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="split a scene into blocks and assign views")
    p.add_argument("ply_in")
    p.add_argument("out_dir")
    p.add_argument("--colmap", required=True, help="COLMAP model directory")
    p.add_argument("--config")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("fuse", help="merge block PLYs back into one scene")
    p.add_argument("ply_out")
    p.add_argument("block_plys", nargs="+")
    p.add_argument("--grid", dest="grid_dir", required=True,
                   help="partition output directory (grid.json)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("compress", help="build the detail-level bundle")
    p.add_argument("ply_in")
    p.add_argument("out_dir")
    p.add_argument("--colmap", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("render", help="render cameras from a bundle or PLY")
    p.add_argument("input", help="bundle directory or .ply file")
    p.add_argument("out_dir")
    p.add_argument("--colmap", required=True)
    p.add_argument("--split", choices=("all", "train", "test"), default="all")
    p.add_argument("--no-lod", action="store_true",
                   help="render the full uncompressed cloud")
    p.add_argument("--lod-mode", choices=("block", "pointwise"), default="block")
    p.add_argument("--gt", help="directory of ground-truth images for metrics")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="altitude sweep timing report")
    p.add_argument("bundle")
    p.add_argument("out_dir")
    p.add_argument("--altitudes", default="auto",
                   help="comma-separated heights above the scene, or 'auto'")
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--lod-mode", choices=("block", "pointwise"), default="block")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP render service")
    p.add_argument("bundle")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0,
                   help="default: $CITYSPLAT_PORT or 8000")
    p.add_argument("--max-dim", type=int, default=1920)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
