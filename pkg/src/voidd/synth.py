"""Synthetic fluoroscopy phantom: vessel tree, guidewire navigation, ground truth.

Renders a reference sequence (dark vessel tree, warped per cardiac phase) and
a navigation sequence (dark guidewire tip advancing along a chosen branch,
plus optional catheter-like distractor and noise) with exact ground truth.
Output is fully determined by the scene seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import cumulative_lengths, dedupe_points, polyline_length, resample, subcurve
from .imgio import GrayImage, write_pgm


@dataclass
class BranchSpec:
    control_points: list  # cubic Bezier control points [[x, y] x 4]
    width_sigma: float = 2.5

    def curve(self, n: int = 200) -> np.ndarray:
        cp = np.asarray(self.control_points, dtype=np.float64)
        t = np.linspace(0.0, 1.0, n)[:, None]
        b = (
            (1 - t) ** 3 * cp[0]
            + 3 * (1 - t) ** 2 * t * cp[1]
            + 3 * (1 - t) * t**2 * cp[2]
            + t**3 * cp[3]
        )
        return dedupe_points(b)


@dataclass
class MotionSpec:
    translate_x: float = 0.6
    translate_y: float = 0.6
    rotate_rad: float = 0.002
    radial: float = 0.3


@dataclass
class SceneSpec:
    width: int = 512
    height: int = 512
    cycle_length: int = 12
    n_navigation_frames: int = 60
    branches: dict[str, BranchSpec] = field(default_factory=dict)
    vessel_depth: float = 80.0
    navigated_route: list[str] = field(default_factory=list)
    tip_length_px: float = 60.0
    tip_speed_px_per_frame: float = 3.0
    tip_width_sigma: float = 1.2
    tip_depth: float = 90.0
    motion: MotionSpec = field(default_factory=MotionSpec)
    noise_sigma: float = 3.0
    distractor: bool = False
    tip_present: bool = True  # False renders a tip-free navigation sequence
    dropout_frames: list[int] = field(default_factory=list)
    pixel_spacing_mm: float = 0.2
    frame_interval_s: float = 0.1
    background: float = 200.0
    seed: int = 7

    def __post_init__(self):
        if not self.branches:
            self.branches = default_branches()
        if not self.navigated_route:
            self.navigated_route = ["trunk", "a1", "a1b"]

    def route_polyline(self) -> np.ndarray:
        pieces = []
        for bid in self.navigated_route:
            if bid not in self.branches:
                raise ValueError(f"navigated branch {bid!r} absent from tree")
            pieces.append(self.branches[bid].curve())
        return dedupe_points(np.vstack(pieces))


def default_branches() -> dict[str, BranchSpec]:
    """A two-level coronary-like tree in a 512x512 frame."""
    b1 = [230.0, 260.0]  # first bifurcation
    b2 = [258.0, 380.0]  # second bifurcation, on the navigated arm
    return {
        "trunk": BranchSpec(
            control_points=[[120, 30], [150, 120], [195, 205], b1], width_sigma=3.0
        ),
        "a1": BranchSpec(
            control_points=[b1, [245, 300], [255, 345], b2], width_sigma=2.5
        ),
        "a2": BranchSpec(
            control_points=[b1, [300, 285], [360, 330], [425, 375]], width_sigma=2.4
        ),
        "a1b": BranchSpec(
            control_points=[b2, [252, 420], [250, 450], [242, 482]], width_sigma=2.2
        ),
        "a1c": BranchSpec(
            control_points=[b2, [300, 410], [330, 435], [360, 465]], width_sigma=2.1
        ),
    }


def catheter_curve() -> np.ndarray:
    """Long, thin, gently curved distractor (elongation far above tip bounds)."""
    spec = BranchSpec(control_points=[[30, 50], [48, 190], [42, 350], [25, 475]])
    return spec.curve(400)


def warp_points(pts: np.ndarray, phase: int, cycle: int, motion: MotionSpec, center) -> np.ndarray:
    """Smooth per-phase warp: sinusoidal translation + rotation + radial bulge."""
    theta = 2.0 * np.pi * phase / cycle
    c = np.asarray(center, dtype=np.float64)
    rot = motion.rotate_rad * np.sin(theta)
    rmat = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
    out = (pts - c) @ rmat.T
    r = np.linalg.norm(out, axis=1, keepdims=True)
    rmax = float(np.linalg.norm(c)) or 1.0
    out = out * (1.0 + motion.radial * np.sin(theta) / rmax * (r / rmax))
    out = out + c
    out[:, 0] += motion.translate_x * np.sin(theta)
    out[:, 1] += motion.translate_y * np.cos(theta)
    return out


def _stamp(absorb: np.ndarray, pts: np.ndarray, sigma: float, depth: float) -> None:
    """Accumulate a dark Gaussian tube along pts into the absorption map."""
    if polyline_length(pts) < 1e-6:
        return
    n = max(2, int(np.ceil(polyline_length(pts) / 0.3)))
    samples = resample(pts, n)
    reach = 4.0 * sigma
    h, w = absorb.shape
    x0 = max(0, int(np.floor(samples[:, 0].min() - reach)))
    x1 = min(w - 1, int(np.ceil(samples[:, 0].max() + reach)))
    y0 = max(0, int(np.floor(samples[:, 1].min() - reach)))
    y1 = min(h - 1, int(np.ceil(samples[:, 1].max() + reach)))
    if x1 < x0 or y1 < y0:
        return
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    grid = np.column_stack([xx.ravel(), yy.ravel()]).astype(np.float64)
    d, _ = cKDTree(samples).query(grid, k=1)
    profile = depth * np.exp(-(d**2) / (2.0 * sigma**2))
    region = absorb[y0 : y1 + 1, x0 : x1 + 1]
    np.maximum(region, profile.reshape(region.shape), out=region)


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def _render(spec: SceneSpec, curves, rng) -> np.ndarray:
    absorb = np.zeros((spec.height, spec.width))
    for pts, sigma, depth in curves:
        _stamp(absorb, pts, sigma, depth)
    img = spec.background - absorb
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
    return _to_u8(img)


def generate(spec: SceneSpec, out_dir) -> tuple[Path, dict]:
    """Render the scene; write PGM frames, manifest and ground truth.

    Returns (manifest path, ground-truth dict).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    center = (spec.width / 2.0, spec.height / 2.0)
    route = spec.route_polyline()
    rng = np.random.default_rng(spec.seed)

    ref_entries = []
    for phase in range(spec.cycle_length):
        curves = []
        for bid in sorted(spec.branches):
            b = spec.branches[bid]
            pts = warp_points(b.curve(), phase, spec.cycle_length, spec.motion, center)
            curves.append((pts, b.width_sigma, spec.vessel_depth))
        img = _render(spec, curves, rng)
        name = f"ref_{phase:03d}.pgm"
        write_pgm(GrayImage(pixels=img), out / name)
        ref_entries.append({"path": name, "phase": phase})

    route_len = polyline_length(route)
    nav_entries = []
    tip_present_flags = []
    tip_curves = []
    for i in range(spec.n_navigation_frames):
        phase = i % spec.cycle_length
        curves = []
        present = spec.tip_present and i not in spec.dropout_frames
        tip_pts = None
        if present:
            s1 = min(spec.tip_length_px + spec.tip_speed_px_per_frame * i, route_len)
            s0 = max(0.0, s1 - spec.tip_length_px)
            tip_pts = warp_points(
                subcurve(route, s0, s1), phase, spec.cycle_length, spec.motion, center
            )
            curves.append((tip_pts, spec.tip_width_sigma, spec.tip_depth))
        if spec.distractor:
            cath = warp_points(catheter_curve(), phase, spec.cycle_length, spec.motion, center)
            curves.append((cath, 0.9, 70.0))
        img = _render(spec, curves, rng)
        name = f"nav_{i:03d}.pgm"
        write_pgm(GrayImage(pixels=img), out / name)
        nav_entries.append({"path": name, "phase": phase})
        tip_present_flags.append(bool(present))
        tip_curves.append(
            None if tip_pts is None else [[float(x), float(y)] for x, y in tip_pts]
        )

    gt_voi = warp_points(route, 0, spec.cycle_length, spec.motion, center)
    gt_doc = {
        "voi": {"points": [[float(x), float(y)] for x, y in gt_voi]},
        "tip_present": tip_present_flags,
        "tip_curves": tip_curves,
        "pixel_spacing_mm": spec.pixel_spacing_mm,
    }
    (out / "ground_truth.json").write_text(json.dumps(gt_doc))

    manifest_doc = {
        "pixel_spacing_mm": spec.pixel_spacing_mm,
        "frame_interval_s": spec.frame_interval_s,
        "cycle_length": spec.cycle_length,
        "reference_frames": ref_entries,
        "navigation_frames": nav_entries,
        "ground_truth": {"voi_path": "ground_truth.json", "tip_presence": tip_present_flags},
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest_doc, indent=1))
    return manifest_path, gt_doc


def spec_from_json(doc: dict) -> SceneSpec:
    doc = dict(doc)
    if "branches" in doc:
        doc["branches"] = {
            k: BranchSpec(**v) for k, v in doc["branches"].items()
        }
    if "motion" in doc:
        doc["motion"] = MotionSpec(**doc["motion"])
    known = set(SceneSpec.__dataclass_fields__)
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown scene spec fields {sorted(extra)}")
    return SceneSpec(**doc)
