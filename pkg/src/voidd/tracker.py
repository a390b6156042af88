"""Track management for vessel-of-intervention detection.

Feature pairs from each navigation frame are assigned to tracks by the track
assignment distance (TAD): the mean of exponentially normalized tip-shift,
VOI-endpoint, and along-graph distances to the track's latest entries.  A
pair joins the closest track when its TAD is under the threshold, otherwise
high-ranked pairs seed new tracks.  After the last frame the longest track
is the vessel of intervention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import resample
from .matching import FeaturePair
from .vesselmap import GraphPosition, VesselGraph, geodesic

TIP_COMPARE_POINTS = 32


def phi(d: float, lam: float) -> float:
    """Exponential normalization 1 - exp(-d / lam), mapping [0, inf) to [0, 1)."""
    if d < 0:
        raise ValueError("distance must be >= 0")
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    return 1.0 - math.exp(-d / lam)


@dataclass
class TrackEntry:
    frame: int
    phase: int
    pair: FeaturePair


@dataclass
class Track:
    id: int
    entries: list[TrackEntry] = field(default_factory=list)

    def add(self, frame: int, phase: int, pair: FeaturePair) -> None:
        if self.entries and frame <= self.entries[-1].frame:
            raise ValueError("track frames must be strictly increasing")
        self.entries.append(TrackEntry(frame=frame, phase=phase, pair=pair))

    @property
    def latest(self) -> TrackEntry:
        return self.entries[-1]

    def latest_iso_phase(self, phase: int) -> TrackEntry | None:
        for e in reversed(self.entries):
            if e.phase == phase:
                return e
        return None

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class TrackerConfig:
    """TAD scale and assignment thresholds.

    lambda_px defaults to the tip arc length of the first observed feature
    pair; tad_threshold defaults to phi of the maximum plausible inter-frame
    displacement (tip length + v_max * frame interval).
    """

    lambda_px: float | None = None
    v_max: float = 50.0  # px/s
    tad_threshold: float | None = None
    new_track_top_k: int = 3

    def __post_init__(self):
        if self.lambda_px is not None and self.lambda_px <= 0:
            raise ValueError("lambda_px must be > 0")
        if self.tad_threshold is not None and not (0 < self.tad_threshold < 1):
            raise ValueError("tad_threshold must be in (0, 1)")
        if self.new_track_top_k < 1:
            raise ValueError("new_track_top_k must be >= 1")


def _tip_distance(a: FeaturePair, b: FeaturePair) -> float:
    """Mean point-wise distance between tip curves, best over orientations."""
    pa = resample(a.tip.curve, TIP_COMPARE_POINTS)
    pb = resample(b.tip.curve, TIP_COMPARE_POINTS)
    d_fwd = float(np.mean(np.linalg.norm(pa - pb, axis=1)))
    d_rev = float(np.mean(np.linalg.norm(pa - pb[::-1], axis=1)))
    return min(d_fwd, d_rev)


def _voi_endpoint_distance(a: FeaturePair, b: FeaturePair) -> float:
    """Mean distance between matched VOI endpoints, best pairing of ends."""
    a0, a1 = a.voi.polyline[0], a.voi.polyline[-1]
    b0, b1 = b.voi.polyline[0], b.voi.polyline[-1]
    straight = np.linalg.norm(a0 - b0) + np.linalg.norm(a1 - b1)
    crossed = np.linalg.norm(a0 - b1) + np.linalg.norm(a1 - b0)
    return float(min(straight, crossed)) / 2.0


def _supports_overlap(a: FeaturePair, b: FeaturePair) -> bool:
    spans_a = _edge_spans(a)
    spans_b = _edge_spans(b)
    for eid, (lo, hi) in spans_a.items():
        if eid in spans_b:
            lo2, hi2 = spans_b[eid]
            if min(hi, hi2) - max(lo, lo2) > 1e-6:
                return True
    return False


def _edge_spans(p: FeaturePair) -> dict[int, tuple[float, float]]:
    """Arc-length interval covered on each edge of the candidate's path."""
    spans: dict[int, tuple[float, float]] = {}
    path = p.voi.edge_path
    for i, (eid, forward) in enumerate(path):
        if len(path) == 1:
            lo, hi = sorted((p.voi.start.offset, p.voi.end.offset))
        elif i == 0:
            # forward: exits via node_b, covering [offset, length]
            lo, hi = (p.voi.start.offset, math.inf) if forward else (0.0, p.voi.start.offset)
        elif i == len(path) - 1:
            # forward here means the edge was entered at node_a
            lo, hi = (0.0, p.voi.end.offset) if forward else (p.voi.end.offset, math.inf)
        else:
            lo, hi = 0.0, math.inf  # fully traversed
        spans[eid] = (lo, hi)
    return spans


def _graph_distance(a: FeaturePair, b: FeaturePair, g: VesselGraph) -> float | None:
    """Minimal along-graph distance between two VOI candidates.

    0 when their edge supports overlap; otherwise the minimum geodesic over
    the four endpoint pairings.  None encodes disconnected supports.
    """
    if _supports_overlap(a, b):
        return 0.0
    best = None
    for pa in (a.voi.start, a.voi.end):
        for pb in (b.voi.start, b.voi.end):
            d = geodesic(g, pa, pb)
            if d is not None and (best is None or d < best):
                best = d
    return best


def track_assignment_distance(
    t: Track, p: FeaturePair, phase: int, graphs: dict[int, VesselGraph], cfg: TrackerConfig, lam: float
) -> float:
    """TAD between a track and a proposed feature pair, in [0, 1).

    Mean of the phi-transformed tip distance and VOI endpoint distance to the
    track's latest entry, plus the along-graph distance to the latest entry
    of the same cardiac phase when one exists (disconnected saturates to 1).
    """
    if not t.entries:
        raise ValueError("track is empty")
    latest = t.latest
    terms = [
        phi(_tip_distance(p, latest.pair), lam),
        phi(_voi_endpoint_distance(p, latest.pair), lam),
    ]
    iso = t.latest_iso_phase(phase)
    if iso is not None:
        g = graphs.get(phase)
        if g is not None:
            d = _graph_distance(p, iso.pair, g)
            terms.append(1.0 if d is None else phi(d, lam))
    return float(sum(terms) / len(terms))


@dataclass
class VoiddResult:
    vessel_track: Track
    all_tracks: list[Track]
    per_frame_detection: dict[int, FeaturePair]
    config: TrackerConfig
    lambda_px: float
    tad_threshold: float


def default_tad_threshold(tip_len: float, frame_interval_s: float, cfg: TrackerConfig, lam: float) -> float:
    delta = tip_len + cfg.v_max * frame_interval_s
    return phi(delta, lam)


def run_voidd(
    frame_pairs: list[tuple[int, int, list[FeaturePair]]],
    graphs: dict[int, VesselGraph],
    cfg: TrackerConfig | None = None,
    frame_interval_s: float = 0.1,
) -> VoiddResult:
    """Assign per-frame feature pairs to tracks; longest track wins.

    frame_pairs: (frame index, phase, ranked feature pairs) in frame order;
    pairs must be sorted by descending score.  Each track accepts at most one
    entry per frame; a pair joins the track of minimal TAD when that TAD is
    under the threshold, and pairs ranked in the top new_track_top_k that
    stay unassigned seed new tracks.
    """
    if not frame_pairs:
        raise ValueError("no frames to process")
    cfg = cfg or TrackerConfig()

    lam = cfg.lambda_px
    threshold = cfg.tad_threshold
    tracks: list[Track] = []

    for frame, phase, pairs in frame_pairs:
        claimed: set[int] = set()  # track ids already extended this frame
        for rank, pair in enumerate(pairs):
            if lam is None:
                lam = pair.tip.arc_length
            if threshold is None:
                threshold = default_tad_threshold(pair.tip.arc_length, frame_interval_s, cfg, lam)
            best_track = None
            best_d = threshold
            for t in tracks:
                if t.id in claimed:
                    continue
                d = track_assignment_distance(t, pair, phase, graphs, cfg, lam)
                if d < best_d:
                    best_d = d
                    best_track = t
            if best_track is not None:
                best_track.add(frame, phase, pair)
                claimed.add(best_track.id)
            elif rank < cfg.new_track_top_k:
                t = Track(id=len(tracks))
                t.add(frame, phase, pair)
                tracks.append(t)
                claimed.add(t.id)

    if tracks:
        vessel = max(tracks, key=lambda t: (len(t), -t.id))
    else:
        vessel = Track(id=-1)
    detections = {e.frame: e.pair for e in vessel.entries}
    return VoiddResult(
        vessel_track=vessel,
        all_tracks=tracks,
        per_frame_detection=detections,
        config=cfg,
        lambda_px=lam if lam is not None else 0.0,
        tad_threshold=threshold if threshold is not None else 0.0,
    )


def result_to_json(res: VoiddResult) -> dict:
    frames = sorted(res.per_frame_detection)
    return {
        "vessel": {
            "frames": frames,
            "detections": [
                {
                    "frame": f,
                    "score": res.per_frame_detection[f].score,
                    "phase": res.per_frame_detection[f].voi.phase,
                    "tip_points": [
                        [float(x), float(y)] for x, y in res.per_frame_detection[f].tip.curve
                    ],
                    "voi_points": [
                        [float(x), float(y)] for x, y in res.per_frame_detection[f].voi.polyline
                    ],
                }
                for f in frames
            ],
        },
        "tracks_summary": [
            {"id": t.id, "entries": len(t), "frames": [e.frame for e in t.entries]}
            for t in res.all_tracks
        ],
        "config_echo": {
            "lambda_px": res.lambda_px,
            "v_max": res.config.v_max,
            "tad_threshold": res.tad_threshold,
            "new_track_top_k": res.config.new_track_top_k,
        },
    }
