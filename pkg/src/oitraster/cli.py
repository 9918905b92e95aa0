"""Command-line driver: render, compare and report statistics."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RasterLimits, RenderConfig
from .grouping import group_quads
from .image import load_png, save_png
from .oracle import compare_images
from .pipeline import render, render_oracle
from .scene import Camera, SceneError, look_at, load_camera, load_obj, perspective
from .synthetic import KINDS, default_camera, generate_synthetic_scene

EXIT_OK = 0
EXIT_DIFFERENT = 1
EXIT_ERROR = 2


def _floats(n):
    def parse(text):
        vals = [float(v) for v in text.replace(",", " ").split()]
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} numbers, got {text!r}")
        return tuple(vals)

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="oitraster",
        description="Render translucent scenes with a tiled software rasterizer and depth-filtered blending.",
    )
    p.add_argument("--scene", help=f"OBJ file or a generated scene: {', '.join(KINDS)}")
    p.add_argument("--camera", help="camera file (key = value); generated scenes have a default")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--output", "-o", help="output PNG (RGBA8)")
    p.add_argument("--depth-filter-size", type=int, default=3, metavar="N")
    p.add_argument("--alpha-threshold", action="store_true", help="stop blending opaque half-blocks early")
    p.add_argument("--visualize-errors", action="store_true", help="paint invalid pixels magenta")
    p.add_argument("--reference", action="store_true", help="render with the exact per-pixel reference")
    p.add_argument("--compare", nargs=2, metavar=("A", "B"), help="compare two PNG files")
    p.add_argument("--threads", type=int, default=1, metavar="N")
    p.add_argument("--stats", metavar="JSON", help="write the run report here")
    p.add_argument("--group-quads", action="store_true", help="pair triangles of the input into quads")
    p.add_argument("--force-high-path", action="store_true", help="run every bin through the high path")
    p.add_argument("--seed", type=int, default=0, help="seed for generated scenes")
    p.add_argument("--backface-culling", action="store_true")
    p.add_argument("--light-dir", type=_floats(3), default=(0.3, 0.5, 0.8), metavar="X,Y,Z")
    p.add_argument("--ambient", type=float, default=0.2)
    p.add_argument("--background", type=_floats(4), default=(0.0, 0.0, 0.0, 1.0), metavar="R,G,B,A")
    p.add_argument("--high-block-row-records", type=int, default=RasterLimits.high_block_row_records)
    p.add_argument("--high-half-block-records", type=int, default=RasterLimits.high_half_block_records)
    return p


def fit_camera(positions: np.ndarray, width: int, height: int) -> Camera:
    """Look at the mesh bounding box from +z so the whole box is in view."""
    lo, hi = positions.min(axis=0), positions.max(axis=0)
    center = (lo + hi) / 2
    radius = max(float(np.linalg.norm(hi - lo)) / 2, 1e-3)
    dist = radius / np.tan(np.radians(30.0)) * 1.1
    eye = center + np.array([0.0, 0.0, dist])
    vp = perspective(60.0, width / height, max(dist - radius * 1.5, dist * 1e-3), dist + radius * 1.5) @ look_at(eye, center)
    return Camera(vp, width, height)


def load_input(args):
    if args.scene is None:
        raise SceneError("--scene is required unless --compare is given")
    if args.scene in KINDS:
        scene = generate_synthetic_scene(args.scene, args.seed)
    else:
        path = Path(args.scene)
        if not path.exists():
            raise SceneError(f"scene {args.scene!r} is neither a file nor one of: {', '.join(KINDS)}")
        scene = load_obj(path)
    grouping = None
    if args.group_quads:
        scene, grouping = group_quads(scene)
    if args.camera:
        cam = load_camera(args.camera)
    elif args.scene in KINDS:
        cam = default_camera(args.width, args.height)
    else:
        cam = fit_camera(scene.positions, args.width, args.height) if len(scene.positions) else default_camera(args.width, args.height)
    return scene, cam, grouping


def run_compare(args) -> int:
    a, b = load_png(args.compare[0]), load_png(args.compare[1])
    diff = compare_images(a, b)
    result = {
        "differing_pixels": diff.differing_pixel_count,
        "max_channel_delta": diff.max_channel_delta,
        "total_pixels": int(diff.mask.size),
    }
    print(f"differing pixels: {diff.differing_pixel_count} / {diff.mask.size}, max channel delta: {diff.max_channel_delta}")
    if args.stats:
        Path(args.stats).write_text(json.dumps(result, indent=2) + "\n")
    return EXIT_OK if diff.identical else EXIT_DIFFERENT


def run_render(args) -> int:
    scene, cam, grouping = load_input(args)
    config = RenderConfig(
        backface_culling=args.backface_culling,
        alpha_threshold=args.alpha_threshold,
        visualize_errors=args.visualize_errors,
        depth_filter_size=args.depth_filter_size,
        worker_count=args.threads,
        force_high_path=args.force_high_path,
        light_dir=args.light_dir,
        ambient=args.ambient,
        background=args.background,
        limits=RasterLimits(
            high_block_row_records=args.high_block_row_records,
            high_half_block_records=args.high_half_block_records,
        ),
    )
    result = render_oracle(scene, cam, config) if args.reference else render(scene, cam, config)
    if args.output:
        save_png(args.output, result.image)
    report = result.report.to_json_dict()
    report["scene"] = scene.name
    t = report["timings_us"]
    report["table_row"] = {
        "setup": t["setup"],
        "binning": t["binning"],
        "low_raster": t["low_raster"],
        "hi_raster": t["hi_raster"],
        "Samples": report["samples"],
        "S/THB": report["samples_per_thb"],
    }
    if grouping is not None:
        report["grouping"] = {
            "triangles": grouping.triangles,
            "quads": grouping.quads,
            "degenerate_percent": grouping.degenerate_percent,
        }
    if args.stats:
        Path(args.stats).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    r = result.report
    print(
        f"{scene.name}: {r.width}x{r.height}, {r.visible_quads}/{r.input_quads} quads visible, "
        f"{r.samples} samples, S/THB {r.samples_per_thb:.2f}, invalid {r.invalid_pixels} ({r.invalid_percent:.4f}%), "
        f"{t['total'] / 1e3:.1f} ms"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.depth_filter_size < 1:
        parser.error("--depth-filter-size must be >= 1")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        if args.compare:
            return run_compare(args)
        return run_render(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
