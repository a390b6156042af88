"""Stage orchestration: vessel graphs, tip candidates, tracking, evaluation.

Each stage reads and writes plain JSON/PGM artifacts so the stages can be
chained from the command line; run_all invokes the same stage functions in
sequence, which makes the chained and one-shot outputs byte-identical.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from scipy import ndimage

from .errors import DegenerateSkeletonError, ValidationError
from .evaluation import GroundTruth, report, report_to_json, report_to_table
from .imgio import SequenceManifest, read_manifest, read_pgm
from .matching import MatchConfig, extract_feature_pairs, feature_pair_to_json
from .mintree import TipSegConfig, build_min_tree, select_tip_components, tree_to_json
from .skeleton import TipCandidate, skeleton_to_curve, thin
from .tracker import TrackerConfig, VoiddResult, result_to_json, run_voidd
from .vesselmap import VesselGraph, extract_graph, graph_from_json, graph_to_json


@dataclass
class FramePrep:
    """Navigation-frame preprocessing ahead of tip segmentation.

    Fluoroscopy noise produces elongated low-contrast filaments that satisfy
    the component shape criteria; light smoothing plus a minimum-contrast
    requirement (frame median minus darkest component pixel) removes them
    while a guidewire tip is far darker than the noise floor.
    """

    smooth_sigma: float = 1.0
    contrast_min: float = 25.0

    def __post_init__(self):
        if self.smooth_sigma < 0 or self.contrast_min < 0:
            raise ValueError("smooth_sigma and contrast_min must be >= 0")


@dataclass
class VesselParams:
    scales: tuple = (1.5, 2.5, 4.0)
    t_high_percentile: float = 98.0

    def __post_init__(self):
        if not (0 < self.t_high_percentile < 100):
            raise ValueError("t_high_percentile must be in (0, 100)")


@dataclass
class PipelineConfig:
    """Aggregated per-stage parameters, loadable from one JSON document."""

    tip: TipSegConfig = field(default_factory=TipSegConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    vessel: VesselParams = field(default_factory=VesselParams)
    frames: FramePrep = field(default_factory=FramePrep)


_SECTIONS = {
    "frames": FramePrep,
    "tip": TipSegConfig,
    "match": MatchConfig,
    "tracker": TrackerConfig,
    "vessel": VesselParams,
}


def config_from_json(doc: dict) -> PipelineConfig:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ValidationError("config", f"unknown sections {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            raise ValidationError(f"config.{name}", "expected object")
        extra = set(section) - set(cls.__dataclass_fields__)
        if extra:
            raise ValidationError(f"config.{name}", f"unknown fields {sorted(extra)}")
        if name == "vessel" and "scales" in section:
            section = dict(section, scales=tuple(section["scales"]))
        try:
            kwargs[name] = cls(**section)
        except ValueError as e:
            raise ValidationError(f"config.{name}", str(e)) from e
    return PipelineConfig(**kwargs)


def config_to_json(cfg: PipelineConfig) -> dict:
    out = {}
    for name, cls in _SECTIONS.items():
        section = getattr(cfg, name)
        out[name] = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in ((f, getattr(section, f)) for f in cls.__dataclass_fields__)
        }
    return out


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return config_from_json(json.loads(Path(path).read_text()))


def _load_image(man: SequenceManifest, rel_path: str) -> np.ndarray:
    return read_pgm(man.resolve(rel_path)).pixels.astype(np.float64)


def _pool_map(fn, items, jobs):
    """Ordered map over frames, optionally on a thread pool."""
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def extract_vessels(
    man: SequenceManifest, cfg: PipelineConfig, out_dir, verbose: bool = False, jobs: int | None = None
) -> dict[int, VesselGraph]:
    """One vessel graph per cardiac phase, from the reference frames."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(ref):
        t0 = time.perf_counter()
        img = _load_image(man, ref.path)
        g = extract_graph(
            img, ref.phase, scales=cfg.vessel.scales, t_high_percentile=cfg.vessel.t_high_percentile
        )
        return g, time.perf_counter() - t0

    graphs: dict[int, VesselGraph] = {}
    for ref, (g, dt) in zip(man.reference_frames, _pool_map(one, man.reference_frames, jobs)):
        graphs[ref.phase] = g
        (out / f"graph_{ref.phase:03d}.json").write_text(json.dumps(graph_to_json(g)))
        if verbose:
            print(f"phase {ref.phase}: {len(g.nodes)} nodes, {len(g.edges)} edges ({dt:.2f}s)")
    return graphs


def load_graphs(graph_dir) -> dict[int, VesselGraph]:
    graphs = {}
    for p in sorted(Path(graph_dir).glob("graph_*.json")):
        g = graph_from_json(json.loads(p.read_text()))
        graphs[g.phase] = g
    if not graphs:
        raise FileNotFoundError(f"no graph_*.json files in {graph_dir}")
    return graphs


def tips_for_frame(
    img: np.ndarray, cfg: TipSegConfig, frame: int, prep: FramePrep | None = None
) -> tuple[list[TipCandidate], object]:
    """Segment tip candidates in one navigation frame; also returns the tree."""
    prep = prep or FramePrep()
    if prep.smooth_sigma > 0:
        img = ndimage.gaussian_filter(img, prep.smooth_sigma)
    tree = build_min_tree(img, connectivity=cfg.connectivity)
    comps = select_tip_components(tree, cfg)
    median = float(np.median(img))
    tips = []
    for c in comps:
        if median - float(img[c.mask].min()) < prep.contrast_min:
            continue
        try:
            curve = skeleton_to_curve(thin(c.mask))
        except DegenerateSkeletonError:
            continue
        tips.append(TipCandidate(curve=curve, score=c.score, source_frame=frame))
    return tips, tree


def extract_tips(
    man: SequenceManifest,
    cfg: PipelineConfig,
    out_dir,
    verbose: bool = False,
    dump_tree: bool = False,
    jobs: int | None = None,
) -> list[tuple[int, int, list[TipCandidate]]]:
    """Tip candidates per navigation frame, written to tips.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(item):
        i, nav = item
        t0 = time.perf_counter()
        img = _load_image(man, nav.path)
        tips, tree = tips_for_frame(img, cfg.tip, i, cfg.frames)
        return tips, tree, time.perf_counter() - t0

    per_frame = []
    doc = []
    results = _pool_map(one, list(enumerate(man.navigation_frames)), jobs)
    for (i, nav), (tips, tree, dt) in zip(enumerate(man.navigation_frames), results):
        per_frame.append((i, nav.phase, tips))
        doc.append(
            {
                "frame": i,
                "phase": nav.phase,
                "tips": [
                    {"points": [[float(x), float(y)] for x, y in t.curve], "score": t.score}
                    for t in tips
                ],
            }
        )
        if dump_tree:
            (out / f"tree_{i:03d}.json").write_text(json.dumps(tree_to_json(tree)))
        if verbose:
            print(f"frame {i}: {len(tips)} tip candidates ({dt:.2f}s)")
    (out / "tips.json").write_text(json.dumps({"frames": doc}))
    return per_frame


def load_tips(tips_path) -> list[tuple[int, int, list[TipCandidate]]]:
    doc = json.loads(Path(tips_path).read_text())
    out = []
    for rec in doc["frames"]:
        tips = [
            TipCandidate(
                curve=np.asarray(t["points"]), score=t["score"], source_frame=rec["frame"]
            )
            for t in rec["tips"]
        ]
        out.append((rec["frame"], rec["phase"], tips))
    return out


def track(
    frame_tips: list[tuple[int, int, list[TipCandidate]]],
    graphs: dict[int, VesselGraph],
    cfg: PipelineConfig,
    out_dir,
    frame_interval_s: float = 0.1,
    verbose: bool = False,
    dump_pairs: bool = False,
) -> VoiddResult:
    """Match tips into graphs frame by frame and run track assignment."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame_pairs = []
    pairs_doc = []
    for frame, phase, tips in frame_tips:
        t0 = time.perf_counter()
        g = graphs.get(phase)
        pairs = extract_feature_pairs(tips, g, cfg.match) if g is not None and tips else []
        frame_pairs.append((frame, phase, pairs))
        if dump_pairs:
            pairs_doc.append(
                {"frame": frame, "pairs": [feature_pair_to_json(p) for p in pairs]}
            )
        if verbose:
            print(f"frame {frame}: {len(pairs)} pairs ({time.perf_counter() - t0:.3f}s)")
    if not frame_pairs:
        raise ValidationError("navigation_frames", "nothing to track")
    res = run_voidd(frame_pairs, graphs, cfg.tracker, frame_interval_s)
    (out / "result.json").write_text(json.dumps(result_to_json(res)))
    if dump_pairs:
        (out / "pairs.json").write_text(json.dumps({"frames": pairs_doc}))
    return res


def load_ground_truth(man: SequenceManifest) -> GroundTruth:
    if man.ground_truth is None:
        raise ValidationError("ground_truth", "manifest has no ground truth")
    doc = json.loads(man.resolve(man.ground_truth["voi_path"]).read_text())
    return GroundTruth(
        voi=np.asarray(doc["voi"]["points"]),
        tip_present=[bool(b) for b in doc["tip_present"]],
        pixel_spacing_mm=float(doc["pixel_spacing_mm"]),
    )


def load_result_detections(result_path):
    """Adapter exposing per_frame_detection from a serialized result."""
    doc = json.loads(Path(result_path).read_text())
    detections = {}
    for det in doc["vessel"]["detections"]:
        detections[det["frame"]] = SimpleNamespace(
            voi=SimpleNamespace(polyline=np.asarray(det["voi_points"]))
        )
    return SimpleNamespace(per_frame_detection=detections)


def evaluate(man: SequenceManifest, result, out_dir) -> str:
    """Score a tracking result against the manifest's ground truth.

    Writes report.json; returns the human-readable table.
    """
    gt = load_ground_truth(man)
    if len(gt.tip_present) != len(man.navigation_frames):
        raise ValidationError(
            "ground_truth.tip_present",
            f"{len(gt.tip_present)} flags for {len(man.navigation_frames)} navigation frames",
        )
    rep = report(result, gt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report_to_json(rep)))
    return report_to_table(rep)


def run_all(
    manifest_path, cfg: PipelineConfig, out_dir, verbose: bool = False
) -> str:
    """manifest -> graphs -> tips -> tracking -> evaluation report."""
    man = read_manifest(manifest_path)
    out = Path(out_dir)
    graphs = extract_vessels(man, cfg, out / "graphs", verbose=verbose)
    frame_tips = extract_tips(man, cfg, out, verbose=verbose)
    res = track(frame_tips, graphs, cfg, out, frame_interval_s=man.frame_interval_s, verbose=verbose)
    return evaluate(man, res, out)
