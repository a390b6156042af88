"""Tip-to-vessel matching: admissible graph paths, discrete Frechet distance,
feature-pair scoring and ranking.

For one navigation frame, each tip candidate is paired with every admissible
path of the iso-phase vessel graph (paths joining graph positions near the
tip's two extremities, no edge repeated).  Each pairing is scored by the
residual discrete Frechet distance after rigid 2D alignment; the feature
pairs are ranked by score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    as_polyline,
    cumulative_lengths,
    dedupe_points,
    point_segment_distance,
    polyline_length,
    resample,
    rigid_align,
    subcurve,
)
from .skeleton import TipCandidate
from .vesselmap import GraphPosition, VesselGraph

RESAMPLE_POINTS = 32


def discrete_frechet(p, q) -> float:
    """Discrete Frechet distance between two polylines.

    Minimum over monotone couplings (each step advances one or both indices,
    covering every point of both curves in order) of the maximum pairwise
    point distance; dynamic programming in O(|p| * |q|).
    """
    p = as_polyline(p)
    q = as_polyline(q)
    d = np.sqrt(
        ((p[:, None, :] - q[None, :, :]) ** 2).sum(axis=2)
    )
    n, m = d.shape
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
        row_prev = ca[i - 1]
        row = ca[i]
        for j in range(1, m):
            row[j] = max(min(row_prev[j], row_prev[j - 1], row[j - 1]), d[i, j])
    return float(ca[-1, -1])


@dataclass
class MatchConfig:
    """Admissibility and scoring parameters; lengths in pixels.

    neighborhood_radius and lambda_s default to multiples of the tip arc
    length when left as None (scale-free defaults).
    """

    neighborhood_radius: float | None = None
    max_paths: int = 32
    lambda_s: float | None = None
    frechet_reject: float = 25.0

    def __post_init__(self):
        for name in ("neighborhood_radius", "lambda_s"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_paths <= 0 or self.frechet_reject <= 0:
            raise ValueError("max_paths and frechet_reject must be positive")

    def radius_for(self, tip_len: float) -> float:
        return self.neighborhood_radius if self.neighborhood_radius is not None else 1.0 * tip_len

    def lambda_for(self, tip_len: float) -> float:
        return self.lambda_s if self.lambda_s is not None else 0.25 * tip_len


@dataclass
class VoiCandidate:
    """A candidate vessel-of-intervention location: a trimmed graph path."""

    phase: int
    edge_path: list[tuple[int, bool]]  # (edge id, traversed node_a -> node_b)
    start: GraphPosition
    end: GraphPosition
    polyline: np.ndarray

    def __post_init__(self):
        self.polyline = as_polyline(self.polyline)

    @property
    def length(self) -> float:
        return polyline_length(self.polyline)

    def edge_ids(self) -> tuple[int, ...]:
        return tuple(e for e, _ in self.edge_path)


@dataclass
class FeaturePair:
    tip: TipCandidate
    voi: VoiCandidate
    frechet: float  # residual Frechet distance after rigid alignment, px
    score: float  # exp(-frechet / lambda_s), in (0, 1]


def _positions_near(g: VesselGraph, pt: np.ndarray, radius: float):
    """Closest graph position per edge within radius of pt, with distance."""
    out = []
    for e in g.edges:
        poly = e.polyline
        cum = cumulative_lengths(poly)
        best = None
        for i in range(len(poly) - 1):
            a, b = poly[i], poly[i + 1]
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0 else float((pt - a) @ ab) / denom
            t = min(max(t, 0.0), 1.0)
            proj = a + t * ab
            dist = float(np.linalg.norm(pt - proj))
            off = cum[i] + t * (cum[i + 1] - cum[i])
            if best is None or dist < best[0]:
                best = (dist, float(off))
        if best is not None and best[0] <= radius:
            out.append((best[0], GraphPosition(e.id, best[1])))
    out.sort(key=lambda t: (t[0], t[1].edge_id))
    return out


def _edge_piece(g: VesselGraph, eid: int, s0: float, s1: float, reverse: bool):
    """Sub-polyline of an edge between arc offsets, oriented s0 -> s1."""
    e = g.edges[eid]
    lo, hi = min(s0, s1), max(s0, s1)
    if hi - lo < 1e-9:
        return None
    piece = subcurve(e.polyline, lo, hi)
    if s0 > s1:
        piece = piece[::-1]
    return piece


def admissible_paths(g: VesselGraph, tip: TipCandidate, cfg: MatchConfig) -> list[VoiCandidate]:
    """Enumerate VOI candidates joining the neighborhoods of the tip extremities.

    Paths never repeat an edge and are depth-limited to 3x the tip arc
    length; the result is truncated to cfg.max_paths, taking start/end
    position pairs by ascending summed distance to the tip extremities.
    """
    tip_len = tip.arc_length
    radius = cfg.radius_for(tip_len)
    max_len = 3.0 * tip_len
    starts = _positions_near(g, tip.curve[0], radius)
    ends = _positions_near(g, tip.curve[-1], radius)
    if not starts or not ends:
        return []

    pairs = sorted(
        ((ds + de, s, t) for ds, s in starts for de, t in ends),
        key=lambda x: (x[0], x[1].edge_id, x[2].edge_id),
    )

    out: list[VoiCandidate] = []
    seen: set = set()
    for _, spos, epos in pairs:
        if len(out) >= cfg.max_paths:
            break
        for cand in _paths_between(g, spos, epos, max_len):
            key = (tuple(cand.edge_path), round(cand.start.offset, 3), round(cand.end.offset, 3))
            if key in seen:
                continue
            seen.add(key)
            out.append(cand)
            if len(out) >= cfg.max_paths:
                break
    return out


def _paths_between(g: VesselGraph, spos: GraphPosition, epos: GraphPosition, max_len: float):
    """All no-repeated-edge paths from spos to epos, arc length <= max_len."""
    results = []
    se, ee = g.edges[spos.edge_id], g.edges[epos.edge_id]

    # both positions on the same edge: direct sub-polyline
    if spos.edge_id == epos.edge_id and abs(spos.offset - epos.offset) > 1e-9:
        piece = _edge_piece(g, spos.edge_id, spos.offset, epos.offset, reverse=False)
        if piece is not None and len(piece) >= 2:
            forward = spos.offset < epos.offset
            results.append(
                VoiCandidate(
                    phase=g.phase,
                    edge_path=[(spos.edge_id, forward)],
                    start=spos,
                    end=epos,
                    polyline=piece,
                )
            )

    # multi-edge paths: leave the start edge via either endpoint node
    first_moves = []
    if spos.offset > 1e-9:
        piece = _edge_piece(g, spos.edge_id, spos.offset, 0.0, reverse=True)
        if piece is not None:
            first_moves.append((se.node_a, piece, (spos.edge_id, False), spos.offset))
    if se.length - spos.offset > 1e-9:
        piece = _edge_piece(g, spos.edge_id, spos.offset, se.length, reverse=False)
        if piece is not None:
            first_moves.append((se.node_b, piece, (spos.edge_id, True), se.length - spos.offset))

    incident: dict[int, list] = {}
    for e in g.edges:
        incident.setdefault(e.node_a, []).append(e)
        if e.node_b != e.node_a:
            incident.setdefault(e.node_b, []).append(e)

    def close_at(node, used, length, pieces, path):
        if epos.edge_id in used:
            return
        closes = []
        if node == ee.node_a and epos.offset > 1e-9:
            closes.append(_edge_piece(g, epos.edge_id, 0.0, epos.offset, reverse=False))
        if node == ee.node_b and ee.length - epos.offset > 1e-9:
            closes.append(_edge_piece(g, epos.edge_id, ee.length, epos.offset, reverse=False))
        for i, piece in enumerate(closes):
            if piece is None:
                continue
            enter_a = node == ee.node_a and i == 0
            full = dedupe_points(np.vstack(pieces + [piece]))
            if len(full) < 2:
                continue
            results.append(
                VoiCandidate(
                    phase=g.phase,
                    edge_path=path + [(epos.edge_id, enter_a)],
                    start=spos,
                    end=epos,
                    polyline=full,
                )
            )

    def dfs(node, used, length, pieces, path):
        if length > max_len:
            return
        close_at(node, used, length, pieces, path)
        for e in incident.get(node, []):
            if e.id in used:
                continue
            if length + e.length > max_len:
                continue
            if e.node_a == node:
                nxt, fwd, poly = e.node_b, True, e.polyline
            else:
                nxt, fwd, poly = e.node_a, False, e.polyline[::-1]
            dfs(nxt, used | {e.id}, length + e.length, pieces + [poly], path + [(e.id, fwd)])

    for node, piece, move, plen in first_moves:
        if plen > max_len:
            continue
        dfs(node, {spos.edge_id}, plen, [piece], [move])

    return results


def extract_feature_pairs(
    tips: list[TipCandidate], g: VesselGraph, cfg: MatchConfig | None = None
) -> list[FeaturePair]:
    """Score every tip x admissible path and rank by descending score.

    Both curves are resampled to a common point count, the tip is rigidly
    aligned onto the path (each path orientation is tried, the better
    residual wins), and the residual discrete Frechet distance is turned
    into score = exp(-residual / lambda_s).  Pairs with raw or residual
    Frechet above cfg.frechet_reject are dropped.
    """
    cfg = cfg or MatchConfig()
    out: list[FeaturePair] = []
    for tip in tips:
        tip_rs = resample(tip.curve, RESAMPLE_POINTS)
        lam = cfg.lambda_for(tip.arc_length)
        for voi in admissible_paths(g, tip, cfg):
            best = None
            voi_rs_fwd = resample(voi.polyline, RESAMPLE_POINTS)
            for voi_rs in (voi_rs_fwd, voi_rs_fwd[::-1]):
                raw = discrete_frechet(tip_rs, voi_rs)
                if raw > cfg.frechet_reject:
                    continue
                try:
                    _, _, moved = rigid_align(tip_rs, voi_rs)
                except ValueError:
                    continue
                residual = discrete_frechet(moved, voi_rs)
                if best is None or residual < best:
                    best = residual
            if best is None or best > cfg.frechet_reject:
                continue
            out.append(
                FeaturePair(tip=tip, voi=voi, frechet=float(best), score=float(np.exp(-best / lam)))
            )
    out.sort(key=lambda fp: (-fp.score, fp.voi.length, fp.voi.edge_ids()))
    return out


def feature_pair_to_json(fp: FeaturePair) -> dict:
    return {
        "score": fp.score,
        "frechet": fp.frechet,
        "tip_points": [[float(x), float(y)] for x, y in fp.tip.curve],
        "voi": {
            "phase": fp.voi.phase,
            "edges": [[e, bool(f)] for e, f in fp.voi.edge_path],
            "points": [[float(x), float(y)] for x, y in fp.voi.polyline],
        },
    }
