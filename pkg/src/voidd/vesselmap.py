"""Vessel enhancement, centerline extraction, and the per-phase vessel graph.

Reference frames are enhanced with a multi-scale Hessian ridge measure keyed
on dark tubular structures, reduced to one-pixel centerlines by non-maximum
suppression plus hysteresis thresholding, and assembled into an undirected
graph whose nodes are bifurcations/endpoints and whose edges carry sub-pixel
polylines.  Geodesic queries over the graph serve the matcher and the track
assignment distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import ndimage

from .geometry import as_polyline, cumulative_lengths, dedupe_points


def _hessian(img: np.ndarray, sigma: float):
    hxx = ndimage.gaussian_filter(img, sigma, order=(0, 2), mode="nearest")
    hyy = ndimage.gaussian_filter(img, sigma, order=(2, 0), mode="nearest")
    hxy = ndimage.gaussian_filter(img, sigma, order=(1, 1), mode="nearest")
    return hxx, hyy, hxy


def _eigvals(hxx, hyy, hxy):
    tr = hxx + hyy
    disc = np.sqrt((hxx - hyy) ** 2 + 4 * hxy * hxy)
    lam2 = 0.5 * (tr + disc)  # larger (signed)
    lam1 = 0.5 * (tr - disc)
    return lam1, lam2


def vesselness(img, scales=(1.5, 2.5, 4.0)) -> np.ndarray:
    """Multi-scale dark-tubular ridge response.

    Per scale sigma: response = sigma^2 * lam2 * max(0, 1 - |lam1|/|lam2|)
    where lam2 >= lam1 are the Gaussian-derivative Hessian eigenvalues
    (lam2 > 0 across a dark line); the output is the pixel-wise maximum over
    scales.  Adding a constant to the image does not change the response.
    """
    if hasattr(img, "pixels"):
        img = img.pixels
    img = np.asarray(img, dtype=np.float64)
    scales = list(scales)
    if not scales or any(not (0.5 <= s <= 8.0) for s in scales):
        raise ValueError("need at least one scale in [0.5, 8] px")
    # truncated derivative kernels do not sum exactly to zero; centering the
    # image makes the response exactly invariant to constant offsets
    img = img - img.mean()
    best = np.zeros_like(img)
    for sigma in scales:
        lam1, lam2 = _eigvals(*_hessian(img, sigma))
        with np.errstate(invalid="ignore", divide="ignore"):
            aniso = 1.0 - np.abs(lam1) / np.abs(lam2)
        resp = sigma * sigma * lam2 * np.clip(aniso, 0.0, None)
        resp[lam2 <= 0] = 0.0
        np.maximum(best, resp, out=best)
    return best


def _ridge_normal_angle(resp: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Angle of the cross-ridge direction, from the Hessian of the response.

    Along a ridge of resp, curvature across the ridge is strongly negative;
    the eigenvector of the most negative eigenvalue points across the ridge.
    """
    hxx, hyy, hxy = _hessian(resp, sigma)
    # eigenvector for the smaller eigenvalue of [[hxx, hxy], [hxy, hyy]]
    lam1 = 0.5 * ((hxx + hyy) - np.sqrt((hxx - hyy) ** 2 + 4 * hxy * hxy))
    vx = lam1 - hyy
    vy = hxy
    deg = np.degrees(np.arctan2(vy, vx)) % 180.0
    return deg


def nms_hysteresis(resp: np.ndarray, t_low: float, t_high: float) -> np.ndarray:
    """Ridge-transverse non-maximum suppression followed by hysteresis.

    A pixel survives iff it is a local maximum of resp along the quantized
    cross-ridge direction and is 8-connected through pixels >= t_low to some
    pixel >= t_high.
    """
    if not (0 <= t_low < t_high):
        raise ValueError("need 0 <= t_low < t_high")
    resp = np.asarray(resp, dtype=np.float64)
    deg = _ridge_normal_angle(resp)
    h, w = resp.shape
    padded = np.pad(resp, 1, constant_values=0.0)

    def shifted(dx, dy):
        return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    sector = ((deg + 22.5) // 45).astype(int) % 4
    nbr_a = np.empty_like(resp)
    nbr_b = np.empty_like(resp)
    pairs = {0: (1, 0), 1: (1, 1), 2: (0, 1), 3: (-1, 1)}
    for s, (dx, dy) in pairs.items():
        m = sector == s
        nbr_a[m] = shifted(dx, dy)[m]
        nbr_b[m] = shifted(-dx, -dy)[m]
    local_max = (resp >= nbr_a) & (resp >= nbr_b) & (resp > 0)

    weak = local_max & (resp >= t_low)
    strong = weak & (resp >= t_high)
    if not strong.any():
        return np.zeros_like(weak)
    lab, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(lab[strong])
    return np.isin(lab, keep[keep > 0])


@dataclass(frozen=True)
class GraphNode:
    id: int
    pos: np.ndarray  # (2,) x, y
    kind: str  # "bifurcation" | "endpoint"


@dataclass(frozen=True)
class GraphEdge:
    id: int
    node_a: int
    node_b: int
    polyline: np.ndarray  # (N, 2)

    @property
    def length(self) -> float:
        return float(cumulative_lengths(self.polyline)[-1])


@dataclass
class VesselGraph:
    phase: int
    nodes: list[GraphNode]
    edges: list[GraphEdge]
    _nx: nx.MultiGraph | None = field(default=None, repr=False)

    def node(self, nid: int) -> GraphNode:
        return self.nodes[nid]

    def edge(self, eid: int) -> GraphEdge:
        return self.edges[eid]

    def as_networkx(self) -> nx.MultiGraph:
        if self._nx is None:
            g = nx.MultiGraph()
            g.add_nodes_from(n.id for n in self.nodes)
            for e in self.edges:
                g.add_edge(e.node_a, e.node_b, key=e.id, weight=e.length)
            self._nx = g
        return self._nx


@dataclass(frozen=True)
class GraphPosition:
    """A sub-edge location: arc-length offset from the edge's node_a."""

    edge_id: int
    offset: float


def _smooth_polyline(pts: np.ndarray) -> np.ndarray:
    if len(pts) < 3:
        return pts
    out = pts.astype(np.float64).copy()
    out[1:-1] = (pts[:-2] + pts[1:-1] + pts[2:]) / 3.0
    return out


def build_graph(centerline_mask: np.ndarray, phase: int) -> VesselGraph:
    """Assemble the vessel graph from a one-pixel-wide centerline mask.

    Junction pixels (>= 3 skeletal neighbors) are clustered into bifurcation
    nodes, degree-1 pixels become endpoints, maximal junction-free paths
    become edges with lightly smoothed sub-pixel polylines.  Edges shorter
    than 5 px joining two bifurcations are contracted.
    """
    mask = np.asarray(centerline_mask, dtype=bool)
    if not mask.any():
        return VesselGraph(phase=phase, nodes=[], edges=[])
    kernel = np.ones((3, 3), dtype=int)
    kernel[1, 1] = 0
    deg = ndimage.convolve(mask.astype(int), kernel, mode="constant")
    deg[~mask] = 0

    junction = mask & (deg >= 3)
    endpoint = mask & (deg == 1)
    isolated = mask & (deg == 0)

    # cluster adjacent junction pixels into single nodes
    jlab, n_j = ndimage.label(junction, structure=np.ones((3, 3), dtype=int))
    nodes: list[GraphNode] = []
    node_of_pixel: dict[tuple[int, int], int] = {}
    for j in range(1, n_j + 1):
        ys, xs = np.nonzero(jlab == j)
        nid = len(nodes)
        nodes.append(GraphNode(id=nid, pos=np.array([xs.mean(), ys.mean()]), kind="bifurcation"))
        for x, y in zip(xs.tolist(), ys.tolist()):
            node_of_pixel[(x, y)] = nid
    for y, x in zip(*np.nonzero(endpoint)):
        nid = len(nodes)
        nodes.append(GraphNode(id=nid, pos=np.array([float(x), float(y)]), kind="endpoint"))
        node_of_pixel[(int(x), int(y))] = nid
    # isolated pixels carry no curve; skipped

    fg = set(zip(*[a.tolist() for a in np.nonzero(mask)[::-1]]))  # (x, y)

    def neighbors(p):
        x, y = p
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                q = (x + dx, y + dy)
                if q in fg:
                    yield q

    edges_raw: list[tuple[int, int, list[tuple[int, int]]]] = []
    used: set[frozenset] = set()
    for start_pix in sorted(node_of_pixel):
        sid = node_of_pixel[start_pix]
        for nb in sorted(neighbors(start_pix)):
            if nb in node_of_pixel and node_of_pixel[nb] == sid:
                continue  # internal to the same junction cluster
            step = frozenset((start_pix, nb))
            if step in used:
                continue
            path = [start_pix, nb]
            used.add(step)
            prev, cur = start_pix, nb
            while cur not in node_of_pixel:
                nxts = [q for q in neighbors(cur) if q != prev and frozenset((cur, q)) not in used]
                # prefer continuing off junction-free chain pixels
                if not nxts:
                    break
                nxt = sorted(nxts)[0]
                used.add(frozenset((cur, nxt)))
                path.append(nxt)
                prev, cur = cur, nxt
            if cur not in node_of_pixel:
                continue  # dead end inside a loop; dropped
            edges_raw.append((sid, node_of_pixel[cur], path))

    edges: list[GraphEdge] = []
    for sid, tid, path in edges_raw:
        pts = np.array(path, dtype=np.float64)
        pts = _smooth_polyline(pts)
        pts[0] = nodes[sid].pos
        pts[-1] = nodes[tid].pos
        pts = dedupe_points(pts)
        if len(pts) < 2:
            pts = np.vstack([nodes[sid].pos, nodes[tid].pos + 1e-6])
        edges.append(GraphEdge(id=len(edges), node_a=sid, node_b=tid, polyline=pts))

    nodes, edges = _contract_short_edges(nodes, edges, min_len=5.0)
    return VesselGraph(phase=phase, nodes=nodes, edges=edges)


def _contract_short_edges(nodes, edges, min_len):
    """Merge bifurcation pairs joined by edges shorter than min_len."""
    changed = True
    while changed:
        changed = False
        by_id = {n.id: n for n in nodes}
        for e in edges:
            if e.node_a == e.node_b:
                continue
            if e.length >= min_len:
                continue
            a, b = by_id[e.node_a], by_id[e.node_b]
            if a.kind != "bifurcation" or b.kind != "bifurcation":
                continue
            keep, drop = a.id, b.id
            newpos = (a.pos + b.pos) / 2.0
            remap = {drop: keep}
            new_nodes = []
            for n in nodes:
                if n.id == drop:
                    continue
                pos = newpos if n.id == keep else n.pos
                new_nodes.append(GraphNode(id=n.id, pos=pos, kind=n.kind))
            new_edges = []
            for f in edges:
                if f.id == e.id:
                    continue
                na = remap.get(f.node_a, f.node_a)
                nb = remap.get(f.node_b, f.node_b)
                poly = f.polyline.copy()
                if f.node_a in (keep, drop):
                    poly[0] = newpos
                if f.node_b in (keep, drop):
                    poly[-1] = newpos
                poly = dedupe_points(poly)
                if len(poly) < 2:
                    continue
                new_edges.append(GraphEdge(id=f.id, node_a=na, node_b=nb, polyline=poly))
            nodes, edges = new_nodes, new_edges
            changed = True
            break
    # compact ids
    id_map = {n.id: i for i, n in enumerate(nodes)}
    nodes = [GraphNode(id=i, pos=n.pos, kind=n.kind) for i, n in enumerate(nodes)]
    edges = [
        GraphEdge(id=i, node_a=id_map[e.node_a], node_b=id_map[e.node_b], polyline=e.polyline)
        for i, e in enumerate(edges)
    ]
    return nodes, edges


def geodesic(g: VesselGraph, a: GraphPosition, b: GraphPosition) -> float | None:
    """Shortest along-graph distance in pixels between two edge positions.

    Returns None when the positions lie in different connected components.
    """
    for pos in (a, b):
        if not (0 <= pos.edge_id < len(g.edges)):
            raise ValueError(f"invalid edge id {pos.edge_id}")
        if not (-1e-6 <= pos.offset <= g.edges[pos.edge_id].length + 1e-6):
            raise ValueError(f"offset {pos.offset} outside edge {pos.edge_id}")
    ea, eb = g.edges[a.edge_id], g.edges[b.edge_id]
    best = math.inf
    if a.edge_id == b.edge_id:
        best = abs(a.offset - b.offset)
    gx = g.as_networkx()
    # distance from each position to its edge's two endpoints
    a_ends = ((ea.node_a, a.offset), (ea.node_b, ea.length - a.offset))
    b_ends = ((eb.node_a, b.offset), (eb.node_b, eb.length - b.offset))
    for na, da in a_ends:
        try:
            dist = nx.single_source_dijkstra_path_length(gx, na, weight="weight")
        except nx.NodeNotFound:
            continue
        for nb, db in b_ends:
            if nb in dist:
                best = min(best, da + dist[nb] + db)
    return None if math.isinf(best) else float(best)


def position_point(g: VesselGraph, pos: GraphPosition) -> np.ndarray:
    """Image-plane point of a graph position."""
    from .geometry import point_at_arclength

    return point_at_arclength(g.edges[pos.edge_id].polyline, pos.offset)


def graph_to_json(g: VesselGraph) -> dict:
    return {
        "phase": g.phase,
        "nodes": [
            {"id": n.id, "x": float(n.pos[0]), "y": float(n.pos[1]), "kind": n.kind}
            for n in g.nodes
        ],
        "edges": [
            {
                "id": e.id,
                "a": e.node_a,
                "b": e.node_b,
                "points": [[float(x), float(y)] for x, y in e.polyline],
            }
            for e in g.edges
        ],
    }


def graph_from_json(obj) -> VesselGraph:
    nodes = [
        GraphNode(id=n["id"], pos=np.array([n["x"], n["y"]]), kind=n["kind"])
        for n in obj["nodes"]
    ]
    edges = [
        GraphEdge(id=e["id"], node_a=e["a"], node_b=e["b"], polyline=as_polyline(e["points"]))
        for e in obj["edges"]
    ]
    return VesselGraph(phase=obj["phase"], nodes=nodes, edges=edges)


def extract_graph(img, phase: int, scales=(1.5, 2.5, 4.0), t_high_percentile: float = 98.0):
    """Full reference-frame pipeline: vesselness -> NMS/hysteresis -> thin -> graph.

    Thresholds follow the percentile rule: t_high at the given percentile of
    the nonzero response, t_low = t_high / 3.
    """
    from .skeleton import thin

    resp = vesselness(img, scales)
    nz = resp[resp > 0]
    if nz.size == 0:
        return VesselGraph(phase=phase, nodes=[], edges=[])
    t_high = float(np.percentile(nz, t_high_percentile))
    mask = nms_hysteresis(resp, t_high / 3.0, t_high)
    if not mask.any():
        return VesselGraph(phase=phase, nodes=[], edges=[])
    mask = thin(mask)
    # drop specks that cannot carry a centerline
    lab, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    sizes = ndimage.sum_labels(mask, lab, index=np.arange(1, n + 1))
    small = np.nonzero(sizes < 5)[0] + 1
    if small.size:
        mask[np.isin(lab, small)] = False
    if not mask.any():
        return VesselGraph(phase=phase, nodes=[], edges=[])
    return build_graph(mask, phase)
