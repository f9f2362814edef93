"""Command line entry points.

    strokeforge sketch photo.png --strokes 128 -o out/
    strokeforge serve --port 8000
    strokeforge eval --pair id photo.png render.png [--lpips]
    strokeforge compare-samplers photo.png --strokes 32

Exit codes for `sketch`: 2 for unreadable inputs or dimension mismatches,
3 when the loss backend fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from strokeforge.edges import detect_edges, to_grayscale
from strokeforge.errors import StrokeforgeError, TransportError
from strokeforge.geometry import Canvas
from strokeforge.loss import SERVICE_URL_ENV, LossConfig, RemoteLossClient
from strokeforge.metrics import evaluate_batch
from strokeforge.optimize import OptimConfig, run_session
from strokeforge.placement import sampling_spread_report
from strokeforge.raster import render
from strokeforge.regions import RegionMask, global_mask
from strokeforge.svgio import export_svg

log = logging.getLogger(__name__)


def _load_image(path: str) -> np.ndarray:
    try:
        img = Image.open(path).convert("RGB")
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise FileNotFoundError(f"cannot read image {path}: {exc}") from exc
    return np.asarray(img, dtype=np.float64) / 255.0


def _load_mask(path: str, region_id: int, shape: tuple[int, int]) -> RegionMask:
    try:
        img = Image.open(path).convert("L")
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise FileNotFoundError(f"cannot read mask {path}: {exc}") from exc
    bits = np.asarray(img, dtype=np.uint8) > 127
    if bits.shape != shape:
        raise StrokeforgeError(
            f"mask {path} is {bits.shape[1]}x{bits.shape[0]}, photo is "
            f"{shape[1]}x{shape[0]}")
    return RegionMask(bits, region_id, label=Path(path).stem)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strokes", type=int, default=128, help="total stroke budget N_s")
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--canny-low", type=float, default=20.0)
    p.add_argument("--canny-high", type=float, default=200.0)
    p.add_argument("--init-radius", type=float, default=0.05)
    p.add_argument("--sampler", choices=["fps", "random"], default="fps")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strokeforge",
                                     description="photo -> vector sketch engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sketch", help="batch-sketch one photo")
    p.add_argument("photo", help="input photograph (PNG/JPEG)")
    p.add_argument("--mask", action="append", default=[], metavar="PNG",
                   help="binary region mask, repeatable; order = round order")
    _add_common_flags(p)
    p.add_argument("--backend", choices=["builtin", "remote"], default="builtin")
    p.add_argument("--service-url", default=None,
                   help=f"perceptual service URL (default ${SERVICE_URL_ENV})")
    p.add_argument("--canvas", type=int, default=224, help="render resolution")
    p.add_argument("--freeze-previous", action="store_true",
                   help="train only the newest round's strokes")
    p.add_argument("--max-iters", type=int, default=800)
    p.add_argument("--eval-interval", type=int, default=10)
    p.add_argument("-o", "--out-dir", default=".", help="output directory")

    p = sub.add_parser("serve", help="run the interactive session API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("eval", help="SSIM/LPIPS over photo-render pairs")
    p.add_argument("--pair", nargs=3, action="append", required=True,
                   metavar=("ID", "PHOTO", "RENDER"))
    p.add_argument("--strokes", type=int, default=128,
                   help="stroke count recorded per item")
    p.add_argument("--lpips", action="store_true", help="also score LPIPS via the sidecar")
    p.add_argument("--service-url", default=None)
    p.add_argument("-o", "--out-dir", default=".")

    p = sub.add_parser("compare-samplers",
                       help="FPS vs random seed spread on one photo")
    p.add_argument("photo")
    _add_common_flags(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("-o", "--out-dir", default=".")
    return parser


def _cmd_sketch(args) -> int:
    try:
        photo = _load_image(args.photo)
        h, w = photo.shape[:2]
        regions = [global_mask(h, w)]
        for i, mask_path in enumerate(args.mask, start=1):
            regions.append(_load_mask(mask_path, i, (h, w)))
    except (FileNotFoundError, StrokeforgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    loss_cfg = LossConfig(backend=args.backend, service_url=args.service_url)
    optim = OptimConfig(max_iters_per_round=args.max_iters,
                        eval_interval=args.eval_interval,
                        retrain_previous_rounds=not args.freeze_previous)
    try:
        result = run_session(
            photo, regions, args.strokes, optim, loss_cfg,
            canvas=Canvas(args.canvas, args.canvas), rng_seed=args.seed,
            sampler=args.sampler, init_radius=args.init_radius,
            canny_low=args.canny_low, canny_high=args.canny_high)
    except TransportError as exc:
        print(f"loss backend failure: {exc}", file=sys.stderr)
        return 3
    except StrokeforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    config = {
        "strokes": args.strokes, "seed": args.seed, "backend": args.backend,
        "canvas": [args.canvas, args.canvas], "canny_low": args.canny_low,
        "canny_high": args.canny_high, "init_radius": args.init_radius,
        "sampler": args.sampler, "freeze_previous": args.freeze_previous,
    }
    import hashlib
    config_hash = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]

    svg = export_svg(result.sketch, meta={"seed": args.seed, "config_hash": config_hash})
    (out / "out.svg").write_text(svg)

    image = render(result.sketch).image
    u8 = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(out / "out.png")

    report = {
        "config": config,
        "config_hash": config_hash,
        "budgets": [e.budget for e in result.plan.entries],
        "plan": [{"region_id": e.region_id, "edge_count": e.edge_count,
                  "ratio": e.ratio, "budget": e.budget} for e in result.plan.entries],
        "strokes_total": len(result.sketch),
        "rounds": [r.as_dict() for r in result.rounds],
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(f"wrote {out / 'out.svg'}, {out / 'out.png'}, {out / 'report.json'}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from strokeforge.server import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def _cmd_eval(args) -> int:
    pairs = []
    try:
        for image_id, photo_path, render_path in args.pair:
            photo = to_grayscale(_load_image(photo_path)).pixels
            sketch_render = to_grayscale(_load_image(render_path)).pixels
            pairs.append((image_id, args.strokes, photo, sketch_render))
    except (FileNotFoundError, StrokeforgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    client = None
    if args.lpips:
        url = args.service_url or os.environ.get(SERVICE_URL_ENV)
        if not url:
            print(f"error: --lpips needs --service-url or ${SERVICE_URL_ENV}",
                  file=sys.stderr)
            return 2
        client = RemoteLossClient(url)

    report = evaluate_batch(pairs, with_lpips=args.lpips, client=client)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.to_json())
    (out / "metrics.csv").write_text(report.to_csv())
    print(f"mean ssim: {report.mean_ssim}, mean lpips: {report.mean_lpips}")
    return 0


def _cmd_compare_samplers(args) -> int:
    try:
        photo = _load_image(args.photo)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    gray = to_grayscale(photo)
    h, w = gray.shape
    edge_set = detect_edges(gray, global_mask(h, w),
                            low=args.canny_low, high=args.canny_high)
    pts = edge_set.as_array()
    if len(pts) < 2:
        print("error: photo yields too few edge points", file=sys.stderr)
        return 2
    k = min(args.strokes, len(pts))
    report = sampling_spread_report(pts, k, trials=args.trials, rng_seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sampler_report.json").write_text(json.dumps(report, indent=2))
    print(f"fps min distance {report['fps_min_distance']:.3f} px beats random in "
          f"{report['fps_wins']}/{report['trials']} trials")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    commands = {
        "sketch": _cmd_sketch,
        "serve": _cmd_serve,
        "eval": _cmd_eval,
        "compare-samplers": _cmd_compare_samplers,
    }
    return commands[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
