"""Command-line entry point for the detection pipeline and its stages."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .imgio import GrayImage, read_manifest, write_pgm
from .pipeline import (
    PipelineConfig,
    evaluate,
    extract_tips,
    extract_vessels,
    load_config,
    load_graphs,
    load_result_detections,
    load_tips,
    run_all,
    track,
)
from .synth import SceneSpec, generate, spec_from_json


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON (defaults apply when omitted)")
    p.add_argument("--verbose", action="store_true", help="per-frame progress and timing")
    p.add_argument("--jobs", type=int, default=None, help="worker threads for frame-level stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voidd",
        description="Guidewire tip detection and vessel-of-intervention tracking "
        "in fluoroscopy sequences.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom sequence")
    p.add_argument("--spec", help="scene spec JSON (defaults apply when omitted)")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("extract-vessels", help="vessel graph per reference phase")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    _add_common(p)

    p = sub.add_parser("extract-tips", help="tip candidates per navigation frame")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dump-tree", action="store_true", help="write per-frame component tree dumps")
    _add_common(p)

    p = sub.add_parser("track", help="match tips into graphs and track the vessel")
    p.add_argument("--manifest", required=True)
    p.add_argument("--graphs", required=True, help="directory with graph_*.json")
    p.add_argument("--tips", required=True, help="tips.json from extract-tips")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dump-pairs", action="store_true", help="write per-frame feature pair dumps")
    p.add_argument("--overlay", action="store_true", help="write tip/VOI overlay masks per frame")
    _add_common(p)

    p = sub.add_parser("evaluate", help="score a tracking result against ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--result", required=True, help="result.json from track")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("run-all", help="manifest to evaluation report in one go")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    return parser


def _draw_curve(canvas: np.ndarray, pts: np.ndarray) -> None:
    h, w = canvas.shape
    if len(pts) < 2:
        return
    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
    n = max(2, int(seg_len * 2))
    from .geometry import resample

    for x, y in resample(np.asarray(pts, dtype=float), n):
        xi, yi = int(round(x)), int(round(y))
        if 0 <= xi < w and 0 <= yi < h:
            canvas[yi, xi] = 255


def _write_overlays(result_doc: dict, man, out_dir: Path) -> None:
    from .imgio import read_pgm

    for det in result_doc["vessel"]["detections"]:
        frame = det["frame"]
        img = read_pgm(man.resolve(man.navigation_frames[frame].path))
        for kind, pts in (("tip", det["tip_points"]), ("voi", det["voi_points"])):
            canvas = np.zeros((img.height, img.width), dtype=np.uint8)
            _draw_curve(canvas, np.asarray(pts))
            write_pgm(GrayImage(pixels=canvas), out_dir / f"overlay_{kind}_{frame:03d}.pgm")


def _dispatch(args) -> None:
    if args.cmd == "synth":
        spec = SceneSpec()
        if args.spec:
            spec = spec_from_json(json.loads(Path(args.spec).read_text()))
        manifest_path, _ = generate(spec, args.out_dir)
        print(manifest_path)
        return

    if args.cmd == "run-all":
        cfg = load_config(args.config)
        table = run_all(args.manifest, cfg, args.out_dir, verbose=args.verbose)
        print(table, end="")
        return

    if args.cmd == "evaluate":
        man = read_manifest(args.manifest)
        result = load_result_detections(args.result)
        table = evaluate(man, result, args.out_dir)
        print(table, end="")
        return

    man = read_manifest(args.manifest)
    cfg = load_config(args.config)
    if args.cmd == "extract-vessels":
        extract_vessels(man, cfg, args.out_dir, verbose=args.verbose, jobs=args.jobs)
    elif args.cmd == "extract-tips":
        extract_tips(
            man, cfg, args.out_dir, verbose=args.verbose, dump_tree=args.dump_tree, jobs=args.jobs
        )
    elif args.cmd == "track":
        graphs = load_graphs(args.graphs)
        frame_tips = load_tips(args.tips)
        track(
            frame_tips,
            graphs,
            cfg,
            args.out_dir,
            frame_interval_s=man.frame_interval_s,
            verbose=args.verbose,
            dump_pairs=args.dump_pairs,
        )
        if args.overlay:
            doc = json.loads((Path(args.out_dir) / "result.json").read_text())
            _write_overlays(doc, man, Path(args.out_dir))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except (ValidationError, FormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
