"""Min tree (component tree of lower level sets) with shape attributes.

The min tree structures the connected components of {p : f(p) <= lambda} by
inclusion; parents sit at strictly higher gray levels, the root is the whole
image at the global maximum.  Each node carries incremental moments of its
component's pixel coordinates, from which an elongation attribute is derived
to pick out thin, long, dark structures (guidewire tips).

Construction follows the classic union-find scheme (sort pixels by level,
flood from the darkest, canonicalize plateaus); the contract is the level-set
post-condition, not the algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit


@njit(cache=True)
def _build_parents(order, values, width, height, use_8):
    """Union-find pass over pixels in increasing level order.

    order: raveled pixel indices sorted ascending by (value, index).
    Returns the per-pixel parent array (min-tree convention: parent at a
    level >= own level; global-maximum pixel is root).
    """
    n = order.size
    parent = np.full(n, -1, dtype=np.int64)
    zpar = np.full(n, -1, dtype=np.int64)
    processed = np.zeros(n, dtype=np.uint8)

    # process darkest-first so that each union hangs darker roots below the
    # brighter pixel being processed -- the standard component-tree flooding
    # oriented for lower level sets (root ends at the global maximum)
    for k in range(n):
        p = order[k]
        parent[p] = p
        zpar[p] = p
        processed[p] = 1
        py = p // width
        px = p % width
        for d in range(8):
            if d == 0:
                nx, ny = px - 1, py
            elif d == 1:
                nx, ny = px + 1, py
            elif d == 2:
                nx, ny = px, py - 1
            elif d == 3:
                nx, ny = px, py + 1
            elif use_8:
                if d == 4:
                    nx, ny = px - 1, py - 1
                elif d == 5:
                    nx, ny = px + 1, py - 1
                elif d == 6:
                    nx, ny = px - 1, py + 1
                else:
                    nx, ny = px + 1, py + 1
            else:
                break
            if nx < 0 or nx >= width or ny < 0 or ny >= height:
                continue
            q = ny * width + nx
            if processed[q] == 0:
                continue
            # find root with path compression
            r = q
            while zpar[r] != r:
                r = zpar[r]
            s = q
            while zpar[s] != r:
                t = zpar[s]
                zpar[s] = r
                s = t
            if r != p:
                parent[r] = p
                zpar[r] = p

    # canonicalize root-first: plateau pixels point to their node's canonical
    # pixel; parents are already canonical when their children are visited
    for k in range(n - 1, -1, -1):
        p = order[k]
        q = parent[p]
        if values[parent[q]] == values[q]:
            parent[p] = parent[q]
    return parent


@dataclass
class MinTree:
    """Compact node-indexed min tree.

    parent[i] is the node id of node i's parent (root points to itself);
    level[i] the node's gray level; pixel_node maps each raveled pixel to
    its node.  Moment accumulators cover the full component (node plus all
    descendants).
    """

    width: int
    height: int
    parent: np.ndarray  # (n_nodes,) int
    level: np.ndarray  # (n_nodes,)
    pixel_node: np.ndarray  # (width*height,) int
    area: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sxx: np.ndarray
    syy: np.ndarray
    sxy: np.ndarray
    _elongation: np.ndarray | None = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return int(np.nonzero(self.parent == np.arange(self.node_count))[0][0])

    def children(self) -> list[list[int]]:
        ch = [[] for _ in range(self.node_count)]
        for i, p in enumerate(self.parent):
            if p != i:
                ch[p].append(i)
        return ch

    def elongation(self, node: int) -> float:
        """Elongation attribute: pi * l_max^2 / area.

        l_max = 2*sqrt(lambda_1) with lambda_1 the largest eigenvalue of the
        pixel-coordinate covariance (the semi-major axis of the component's
        equal-second-moments ellipse); a continuous disk scores exactly 1.
        Components of fewer than 3 pixels score 0.
        """
        return float(self.elongation_all()[node])

    def elongation_all(self) -> np.ndarray:
        if self._elongation is None:
            n = self.area.astype(np.float64)
            with np.errstate(invalid="ignore", divide="ignore"):
                mx = self.sx / n
                my = self.sy / n
                cxx = self.sxx / n - mx * mx
                cyy = self.syy / n - my * my
                cxy = self.sxy / n - mx * my
                tr = cxx + cyy
                disc = np.sqrt(np.maximum((cxx - cyy) ** 2 + 4 * cxy * cxy, 0.0))
                lam1 = 0.5 * (tr + disc)
                attr = np.pi * 4.0 * lam1 / n
            attr[self.area < 3] = 0.0
            self._elongation = attr
        return self._elongation

    def component_mask(self, node: int) -> np.ndarray:
        """Boolean (height, width) mask of all pixels in the node's component."""
        inside = np.zeros(self.node_count, dtype=bool)
        inside[node] = True
        # parents sit at strictly higher levels, so in descending level order
        # every node sees its parent's membership before its own is needed
        for i in np.argsort(-self.level, kind="stable"):
            if not inside[i] and self.parent[i] != i:
                inside[i] = inside[self.parent[i]]
        member = inside[self.pixel_node]
        return member.reshape(self.height, self.width)


def build_min_tree(img, connectivity: int = 4) -> MinTree:
    """Build the min tree of a grayscale image.

    img: 2D integer array or GrayImage; connectivity 4 or 8.
    """
    if hasattr(img, "pixels"):
        img = img.pixels
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("image must be 2D")
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    height, width = img.shape
    flat = img.ravel().astype(np.int64)
    order = np.argsort(flat, kind="stable").astype(np.int64)
    pix_parent = _build_parents(order, flat, width, height, connectivity == 8)

    # canonical pixels (one per node): root, or level differs from parent's
    is_canon = flat[pix_parent] != flat
    root_pix = int(np.nonzero(pix_parent == np.arange(flat.size))[0][0])
    is_canon[root_pix] = True
    canon_ids = np.nonzero(is_canon)[0]
    node_of_canon = np.full(flat.size, -1, dtype=np.int64)
    node_of_canon[canon_ids] = np.arange(len(canon_ids))

    pixel_node = np.where(is_canon, np.arange(flat.size), pix_parent)
    pixel_node = node_of_canon[pixel_node]
    parent = node_of_canon[pix_parent[canon_ids]]
    # root's pixel parent is itself
    level = flat[canon_ids]

    # per-node own-pixel sums, then accumulate child totals into parents
    ys, xs = np.divmod(np.arange(flat.size, dtype=np.float64), width)
    n_nodes = len(canon_ids)
    area = np.bincount(pixel_node, minlength=n_nodes).astype(np.int64)
    sx = np.bincount(pixel_node, weights=xs, minlength=n_nodes)
    sy = np.bincount(pixel_node, weights=ys, minlength=n_nodes)
    sxx = np.bincount(pixel_node, weights=xs * xs, minlength=n_nodes)
    syy = np.bincount(pixel_node, weights=ys * ys, minlength=n_nodes)
    sxy = np.bincount(pixel_node, weights=xs * ys, minlength=n_nodes)

    # children have strictly lower levels than parents; ascending level order
    # guarantees a node is finalized before it feeds its parent
    for i in np.argsort(level, kind="stable"):
        p = parent[i]
        if p != i:
            area[p] += area[i]
            sx[p] += sx[i]
            sy[p] += sy[i]
            sxx[p] += sxx[i]
            syy[p] += syy[i]
            sxy[p] += sxy[i]

    return MinTree(
        width=width,
        height=height,
        parent=parent,
        level=level,
        pixel_node=pixel_node,
        area=area,
        sx=sx,
        sy=sy,
        sxx=sxx,
        syy=syy,
        sxy=sxy,
    )


@dataclass
class TipSegConfig:
    """Bounds for tip-candidate component selection."""

    t_min: float = 5.0
    t_max: float = 150.0
    a_min: int = 30
    a_max: int = 3000
    connectivity: int = 4

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")
        if not (0 < self.a_min < self.a_max):
            raise ValueError("need 0 < a_min < a_max")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")


@dataclass
class TipComponent:
    mask: np.ndarray  # boolean (height, width)
    score: float
    node: int


def select_tip_components(tree: MinTree, cfg: TipSegConfig) -> list[TipComponent]:
    """Select elongated dark components as guidewire-tip candidates.

    The raw elongation attribute is regularized by a one-ring maximum over
    the node, its parent and its children (tree-local smoothing); nodes with
    t_min < attr <= t_max and a_min <= area <= a_max qualify; along any
    ancestor-descendant chain of qualifying nodes only the largest-area one
    (the highest qualifying ancestor) is kept.  Sorted by score descending.
    """
    attr = tree.elongation_all()
    reg = attr.copy()
    np.maximum(reg, attr[tree.parent], out=reg)
    for i, p in enumerate(tree.parent):
        if p != i and attr[i] > reg[p]:
            reg[p] = attr[i]

    qualifies = (
        (reg > cfg.t_min)
        & (reg <= cfg.t_max)
        & (tree.area >= cfg.a_min)
        & (tree.area <= cfg.a_max)
    )
    keep = []
    for i in np.nonzero(qualifies)[0]:
        j = int(tree.parent[i])
        blocked = False
        while True:
            if qualifies[j] and j != i:
                blocked = True
                break
            if tree.parent[j] == j:
                break
            j = int(tree.parent[j])
        if not blocked:
            keep.append(int(i))

    out = [TipComponent(mask=tree.component_mask(i), score=float(reg[i]), node=i) for i in keep]
    out.sort(key=lambda c: (-c.score, c.node))
    return out


def tree_to_json(tree: MinTree) -> dict:
    """Debug dump: node table plus run-length-encoded pixel-to-node map."""
    attr = tree.elongation_all()
    nodes = [
        {
            "id": int(i),
            "parent": int(tree.parent[i]),
            "level": int(tree.level[i]),
            "area": int(tree.area[i]),
            "attr": float(attr[i]),
        }
        for i in range(tree.node_count)
    ]
    runs = []
    pn = tree.pixel_node
    start = 0
    for i in range(1, len(pn) + 1):
        if i == len(pn) or pn[i] != pn[start]:
            runs.append([int(pn[start]), i - start])
            start = i
    return {"nodes": nodes, "pixel_node": runs}
