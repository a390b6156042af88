"""Quantitative evaluation: TRE and per-frame detection classification.

TRE is the mean, over points resampled along the detected vessel candidate,
of the distance to the nearest ground-truth segment, converted to mm.  A
frame with the tip present counts as correct when TRE < 0.5 mm, wrong at or
above; frames without detection are missed.  Tip-absent frames with a
detection are false detections, otherwise true negatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_polyline, point_segment_distance, resample

TRE_THRESHOLD_MM = 0.5
DEFAULT_TRE_POINTS = 64

CATEGORIES = ("correct", "wrong", "missed", "false", "true_negative")


@dataclass
class GroundTruth:
    voi: np.ndarray  # polyline, pixels
    tip_present: list[bool]
    pixel_spacing_mm: float

    def __post_init__(self):
        self.voi = as_polyline(self.voi)
        if self.pixel_spacing_mm <= 0:
            raise ValueError("pixel_spacing_mm must be > 0")


def tre(x, gt, spacing_mm: float, n: int = DEFAULT_TRE_POINTS) -> float:
    """Target-to-registration error in mm.

    x is resampled to n points; each point contributes its distance to the
    nearest ground-truth segment.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    gt = as_polyline(gt)
    pts = resample(x, n)
    total = 0.0
    for q in pts:
        total += min(
            point_segment_distance(q, gt[j], gt[j + 1]) for j in range(len(gt) - 1)
        )
    return total / n * spacing_mm


def classify_frame(has_detection: bool, tip_present: bool, tre_mm: float | None) -> str:
    """Classify one frame into the five detection categories."""
    if has_detection and tip_present:
        if tre_mm is None:
            raise ValueError("tre_mm required when detection and tip are both present")
        return "correct" if tre_mm < TRE_THRESHOLD_MM else "wrong"
    if tre_mm is not None:
        raise ValueError("tre_mm only valid when detection and tip are both present")
    if tip_present:
        return "missed"
    return "false" if has_detection else "true_negative"


@dataclass
class EvalReport:
    counts: dict[str, int]
    rates: dict[str, float]
    per_frame_tre_mm: dict[int, float]
    per_frame_category: dict[int, str] = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return sum(self.counts.values())


def report(result, gt: GroundTruth, n_points: int = DEFAULT_TRE_POINTS) -> EvalReport:
    """Evaluate a tracking result against ground truth, frame by frame.

    result: VoiddResult (or anything with per_frame_detection).  Frames are
    indexed 0..len(gt.tip_present)-1 and must cover the navigation sequence.
    """
    detections = result.per_frame_detection
    counts = {c: 0 for c in CATEGORIES}
    tre_mm: dict[int, float] = {}
    cats: dict[int, str] = {}
    for frame, present in enumerate(gt.tip_present):
        det = detections.get(frame)
        t = None
        if det is not None and present:
            t = tre(det.voi.polyline, gt.voi, gt.pixel_spacing_mm, n_points)
            tre_mm[frame] = t
        cat = classify_frame(det is not None, present, t)
        counts[cat] += 1
        cats[frame] = cat
    total = max(1, len(gt.tip_present))
    rates = {c: counts[c] / total for c in CATEGORIES}
    return EvalReport(counts=counts, rates=rates, per_frame_tre_mm=tre_mm, per_frame_category=cats)


def report_to_json(rep: EvalReport) -> dict:
    return {
        "counts": rep.counts,
        "rates": rep.rates,
        "per_frame_tre_mm": {str(k): v for k, v in sorted(rep.per_frame_tre_mm.items())},
        "per_frame_category": {str(k): v for k, v in sorted(rep.per_frame_category.items())},
    }


def report_to_table(rep: EvalReport) -> str:
    """Aligned text table with one column per detection category."""
    headers = ["Frames", "Correct", "Wrong", "Missed", "False", "TrueNeg"]
    vals = [
        str(rep.n_frames),
        *(f"{rep.rates[c] * 100:.2f}%" for c in CATEGORIES),
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, vals)]
    line1 = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    line2 = "  ".join(v.rjust(w) for v, w in zip(vals, widths))
    return line1 + "\n" + line2 + "\n"
