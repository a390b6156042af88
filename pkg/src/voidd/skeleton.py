"""Topology-preserving thinning and skeleton-to-curve conversion.

Thinning removes simple points (8-connected foreground, 4-connected
background) in directional raster passes until fixpoint, keeping curve
endpoints, so components and holes are preserved and the result is one
pixel wide.  A thinned tip mask is then reduced to its longest path and
returned as an ordered polyline.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
from numba import njit

from .errors import DegenerateSkeletonError
from .geometry import as_polyline

# 8-neighborhood offsets, bit i of the config word is neighbor i
_NEIGHBORS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


def _build_simple_lut() -> np.ndarray:
    """256-entry lookup: config -> 1 if the center pixel is simple.

    Simple iff exactly one 8-connected foreground component in the ring and
    exactly one 4-connected background component 4-adjacent to the center.
    """
    coords = {off: i for i, off in enumerate(_NEIGHBORS)}

    def components(cells, conn8):
        cells = set(cells)
        seen = set()
        count = 0
        for start in cells:
            if start in seen:
                continue
            count += 1
            stack = [start]
            seen.add(start)
            while stack:
                x, y = stack.pop()
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        if dx == 0 and dy == 0:
                            continue
                        if not conn8 and dx != 0 and dy != 0:
                            continue
                        n = (x + dx, y + dy)
                        if n in cells and n not in seen:
                            seen.add(n)
                            stack.append(n)
        return count

    lut = np.zeros(256, dtype=np.uint8)
    edge_neighbors = {(-1, 0), (1, 0), (0, -1), (0, 1)}
    for cfg in range(256):
        fg = {off for off, i in coords.items() if cfg >> i & 1}
        bg = {off for off in coords if off not in fg}
        if not fg:
            continue  # isolated pixel: removal deletes a component
        t8 = components(fg, conn8=True)
        bg4 = {off for off in bg}
        # count 4-components of the background ring that touch an edge neighbor
        t4 = 0
        seen = set()
        for start in bg4 & edge_neighbors:
            if start in seen:
                continue
            t4 += 1
            stack = [start]
            seen.add(start)
            while stack:
                x, y = stack.pop()
                for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    n = (x + dx, y + dy)
                    if n in bg4 and n not in seen and max(abs(n[0]), abs(n[1])) <= 1:
                        seen.add(n)
                        stack.append(n)
        lut[cfg] = 1 if (t8 == 1 and t4 == 1) else 0
    return lut


_SIMPLE_LUT = _build_simple_lut()


@njit(cache=True)
def _neighbor_config(bits, x, y, w, h):
    cfg = 0
    k = 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            nx_, ny_ = x + dx, y + dy
            if 0 <= nx_ < w and 0 <= ny_ < h and bits[ny_, nx_]:
                cfg |= 1 << k
            k += 1
    return cfg


@njit(cache=True)
def _thin_inplace(bits, lut):
    """Sequential directional thinning; returns number of removed pixels."""
    h, w = bits.shape
    removed_total = 0
    # border direction per sub-iteration: N, S, E, W offsets (dx, dy)
    dirs = ((0, -1), (0, 1), (1, 0), (-1, 0))
    border = np.zeros((h, w), dtype=np.bool_)
    changed = True
    while changed:
        changed = False
        for d in range(4):
            dx, dy = dirs[d]
            # snapshot the directional border so each sub-pass peels at most
            # one pixel layer; deleting a pixel must not expose its neighbor
            # within the same sub-pass
            for y in range(h):
                for x in range(w):
                    if bits[y, x]:
                        bx, by = x + dx, y + dy
                        border[y, x] = not (0 <= bx < w and 0 <= by < h and bits[by, bx])
                    else:
                        border[y, x] = False
            for y in range(h):
                for x in range(w):
                    if not (bits[y, x] and border[y, x]):
                        continue
                    cfg = _neighbor_config(bits, x, y, w, h)
                    # count foreground neighbors; endpoints are kept
                    n = 0
                    c = cfg
                    while c:
                        n += c & 1
                        c >>= 1
                    if n < 2:
                        continue
                    if lut[cfg]:
                        bits[y, x] = False
                        removed_total += 1
                        changed = True
    return removed_total


def thin(mask: np.ndarray) -> np.ndarray:
    """Thin a binary mask to a one-pixel-wide, topology-preserving skeleton."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or not mask.any():
        raise ValueError("mask must be 2D with at least one foreground pixel")
    out = mask.copy()
    _thin_inplace(out, _SIMPLE_LUT)
    return out


@dataclass
class TipCandidate:
    """Ordered tip centerline with its segmentation score."""

    curve: np.ndarray  # polyline (N, 2)
    score: float
    source_frame: int = -1

    def __post_init__(self):
        self.curve = as_polyline(self.curve)
        if self.score <= 0:
            raise ValueError("tip candidate score must be > 0")

    @property
    def arc_length(self) -> float:
        from .geometry import polyline_length

        return polyline_length(self.curve)


_STEP = {  # 8-neighborhood step lengths
    (dx, dy): float(np.hypot(dx, dy)) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
}


def _skeleton_graph(skel: np.ndarray) -> nx.Graph:
    g = nx.Graph()
    ys, xs = np.nonzero(skel)
    pix = set(zip(xs.tolist(), ys.tolist()))
    for x, y in pix:
        g.add_node((x, y))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                n = (x + dx, y + dy)
                if n in pix:
                    g.add_edge((x, y), n, weight=_STEP[(dx, dy)])
    return g


def _prune_spurs(g: nx.Graph, min_len: float) -> None:
    """Remove endpoint branches shorter than min_len (junction kept)."""
    changed = True
    while changed:
        changed = False
        for node in [n for n in g.nodes if g.degree(n) == 1]:
            if node not in g:
                continue
            path = [node]
            length = 0.0
            cur = node
            prev = None
            while True:
                nbrs = [n for n in g.neighbors(cur) if n != prev]
                if g.degree(cur) >= 3 or not nbrs:
                    break
                nxt = nbrs[0]
                length += g.edges[cur, nxt]["weight"]
                prev, cur = cur, nxt
                if g.degree(cur) >= 3:
                    break
                path.append(cur)
            if g.degree(cur) >= 3 and length < min_len:
                g.remove_nodes_from(path)
                changed = True


def skeleton_to_curve(skel: np.ndarray) -> np.ndarray:
    """Longest path through a thinned skeleton as an ordered polyline.

    Spur branches shorter than 3 px are pruned first.  The orientation is
    normalized so the first point is the endpoint with smaller (y, x).
    Raises DegenerateSkeletonError when the skeleton has no endpoints
    (closed loop): a guidewire tip cannot be a loop.
    """
    skel = np.asarray(skel, dtype=bool)
    g = _skeleton_graph(skel)
    if g.number_of_nodes() == 0:
        raise ValueError("empty skeleton")
    _prune_spurs(g, 3.0)

    # largest connected piece carries the tip
    comps = sorted(nx.connected_components(g), key=lambda c: (-len(c), sorted(c)))
    sub = g.subgraph(comps[0]).copy()
    if sub.number_of_nodes() == 1:
        (x, y) = next(iter(sub.nodes))
        return np.array([[x, y], [x, y + 1e-6]])  # degenerate but valid polyline
    endpoints = sorted(n for n in sub.nodes if sub.degree(n) == 1)
    if not endpoints:
        raise DegenerateSkeletonError("skeleton is a closed loop with no endpoints")

    best = None  # (-length, endpoint pair, path)
    for s in endpoints:
        dist, paths = nx.single_source_dijkstra(sub, s, weight="weight")
        for t in endpoints:
            if t == s or t not in dist:
                continue
            pair = tuple(sorted((s, t)))
            key = (-dist[t], pair)
            if best is None or key < best[0]:
                best = (key, paths[t])
    if best is None:
        raise DegenerateSkeletonError("no endpoint-to-endpoint path in skeleton")
    path = best[1]
    first = (path[0][1], path[0][0])  # (y, x)
    last = (path[-1][1], path[-1][0])
    if last < first:
        path = path[::-1]
    return np.array(path, dtype=np.float64)
