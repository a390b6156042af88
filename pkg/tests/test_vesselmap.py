import numpy as np
import pytest

from voidd.vesselmap import (
    GraphPosition,
    build_graph,
    geodesic,
    graph_from_json,
    graph_to_json,
    nms_hysteresis,
    vesselness,
)


def render_line(shape=(64, 64), y=32, depth=80.0, sigma=1.5, bg=200.0):
    yy = np.arange(shape[0])[:, None]
    img = np.full(shape, bg) - depth * np.exp(-((yy - y) ** 2) / (2 * sigma**2))
    return np.broadcast_to(img, shape).copy()


def render_blob(shape=(64, 64), c=(32, 32), depth=80.0, sigma=3.0, bg=200.0):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    r2 = (xx - c[0]) ** 2 + (yy - c[1]) ** 2
    return bg - depth * np.exp(-r2 / (2 * sigma**2))


class TestVesselness:
    def test_constant_image_zero(self):
        resp = vesselness(np.full((32, 32), 137.0))
        np.testing.assert_allclose(resp, 0.0, atol=1e-9)

    def test_dark_line_ridge(self):
        resp = vesselness(render_line(sigma=1.5), scales=[1.5])
        spine = resp[32, 10:54].mean()
        off = resp[32 + 9, 10:54].mean()  # about 6 sigma away, accounting for filter support
        assert spine > 5 * max(off, 1e-12)

    def test_dark_blob_suppressed(self):
        line_resp = vesselness(render_line(sigma=2.0), scales=[2.0])[32, 32]
        blob_resp = vesselness(render_blob(sigma=2.0), scales=[2.0])[32, 32]
        assert blob_resp < 0.1 * line_resp

    def test_offset_invariance(self):
        img = render_line()
        r1 = vesselness(img)
        r2 = vesselness(img + 17.0)
        np.testing.assert_allclose(r1, r2, atol=1e-9)

    def test_rotation_equivariance(self):
        img = render_line()
        r1 = vesselness(img)
        r2 = vesselness(np.rot90(img))
        np.testing.assert_allclose(np.rot90(r1), r2, atol=1e-6)

    def test_bad_scales_rejected(self):
        with pytest.raises(ValueError):
            vesselness(render_line(), scales=[])
        with pytest.raises(ValueError):
            vesselness(render_line(), scales=[20.0])


class TestNmsHysteresis:
    def test_threshold_semantics(self):
        resp = vesselness(render_line(sigma=1.5), scales=[1.5])
        peak = resp.max()
        kept = nms_hysteresis(resp, peak * 0.2, peak * 0.8)
        assert kept[32, 20:44].any()
        none = nms_hysteresis(resp, peak * 0.2, peak * 1.5)
        assert not none.any()

    def test_no_seed_no_output(self):
        resp = vesselness(render_line(sigma=1.5), scales=[1.5])
        peak = resp.max()
        out = nms_hysteresis(resp, peak * 1.01, peak * 2.0)
        assert not out.any()

    def test_parallel_ridges_separate(self):
        yy = np.arange(64)[:, None]
        img = np.full((64, 64), 200.0)
        for y0 in (30, 34):
            img = img - 80.0 * np.exp(-((yy - y0) ** 2) / (2 * 1.0**2))
        resp = vesselness(img, scales=[1.0])
        peak = resp.max()
        kept = nms_hysteresis(resp, peak * 0.1, peak * 0.5)
        cols = kept[:, 20:44]
        rows = np.nonzero(cols.any(axis=1))[0]
        assert set(rows) <= {29, 30, 31, 33, 34, 35}
        assert not kept[32, 20:44].any()  # the valley between the ridges

    def test_invalid_thresholds(self):
        with pytest.raises(ValueError):
            nms_hysteresis(np.zeros((4, 4)), 2.0, 1.0)


def plus_mask(size=45, arm=20):
    m = np.zeros((size, size), dtype=bool)
    c = size // 2
    m[c, c - arm : c + arm + 1] = True
    m[c - arm : c + arm + 1, c] = True
    return m


def y_mask():
    m = np.zeros((40, 40), dtype=bool)
    for i in range(15):
        m[20 - i, 20] = True  # up
        m[20 + i, 20 - i] = True  # down-left diagonal
        m[20 + i, 20 + i] = True  # down-right diagonal
    return m


class TestBuildGraph:
    def test_plus_sign(self):
        g = build_graph(plus_mask(), phase=0)
        kinds = sorted(n.kind for n in g.nodes)
        assert kinds.count("bifurcation") == 1
        assert kinds.count("endpoint") == 4
        assert len(g.edges) == 4
        for e in g.edges:
            assert e.length == pytest.approx(20.0, abs=1.5)

    def test_single_open_curve(self):
        m = np.zeros((10, 30), dtype=bool)
        m[4, 3:27] = True
        g = build_graph(m, phase=2)
        assert len(g.nodes) == 2
        assert all(n.kind == "endpoint" for n in g.nodes)
        assert len(g.edges) == 1
        assert g.edges[0].length == pytest.approx(23.0, abs=0.5)

    def test_y_shape(self):
        g = build_graph(y_mask(), phase=0)
        assert sum(n.kind == "bifurcation" for n in g.nodes) == 1
        assert sum(n.kind == "endpoint" for n in g.nodes) == 3
        assert len(g.edges) == 3

    def test_empty_mask(self):
        g = build_graph(np.zeros((8, 8), dtype=bool), phase=0)
        assert g.nodes == [] and g.edges == []

    def test_degree_sum(self):
        g = build_graph(plus_mask(), phase=0)
        deg = {n.id: 0 for n in g.nodes}
        for e in g.edges:
            deg[e.node_a] += 1
            deg[e.node_b] += 1
        assert sum(deg.values()) == 2 * len(g.edges)

    def test_edge_endpoints_on_nodes(self):
        g = build_graph(y_mask(), phase=0)
        for e in g.edges:
            assert np.linalg.norm(e.polyline[0] - g.nodes[e.node_a].pos) <= 0.5
            assert np.linalg.norm(e.polyline[-1] - g.nodes[e.node_b].pos) <= 0.5

    def test_mask_recovery(self):
        mask = plus_mask()
        g = build_graph(mask, phase=0)
        ys, xs = np.nonzero(mask)
        covered = 0
        pts = np.vstack([e.polyline for e in g.edges])
        for x, y in zip(xs, ys):
            if np.min(np.hypot(pts[:, 0] - x, pts[:, 1] - y)) <= 1.0:
                covered += 1
        assert covered / len(xs) >= 0.95

    def test_json_roundtrip(self):
        g = build_graph(y_mask(), phase=3)
        g2 = graph_from_json(graph_to_json(g))
        assert g2.phase == 3
        assert len(g2.nodes) == len(g.nodes)
        assert len(g2.edges) == len(g.edges)
        for e, f in zip(g.edges, g2.edges):
            np.testing.assert_allclose(e.polyline, f.polyline)


class TestGeodesic:
    def graph(self):
        return build_graph(plus_mask(), phase=0)

    def test_same_position(self):
        g = self.graph()
        p = GraphPosition(0, 3.0)
        assert geodesic(g, p, p) == pytest.approx(0.0)

    def test_same_edge(self):
        g = self.graph()
        assert geodesic(g, GraphPosition(0, 3.0), GraphPosition(0, 10.0)) == pytest.approx(7.0)

    def test_across_bifurcation(self):
        g = build_graph(y_mask(), phase=0)
        bif = next(n for n in g.nodes if n.kind == "bifurcation")
        # pick two different edges incident to the bifurcation, 5 px down each
        inc = [e for e in g.edges if bif.id in (e.node_a, e.node_b)][:2]
        pos = []
        for e in inc:
            off = 5.0 if e.node_a == bif.id else e.length - 5.0
            pos.append(GraphPosition(e.id, off))
        assert geodesic(g, pos[0], pos[1]) == pytest.approx(10.0, abs=0.5)

    def test_symmetry_and_triangle(self):
        g = self.graph()
        rng = np.random.default_rng(41)
        for _ in range(50):
            ps = [
                GraphPosition(int(rng.integers(len(g.edges))), 0.0)
                for _ in range(3)
            ]
            ps = [
                GraphPosition(p.edge_id, float(rng.uniform(0, g.edges[p.edge_id].length)))
                for p in ps
            ]
            d01 = geodesic(g, ps[0], ps[1])
            d10 = geodesic(g, ps[1], ps[0])
            d12 = geodesic(g, ps[1], ps[2])
            d02 = geodesic(g, ps[0], ps[2])
            assert d01 == pytest.approx(d10, abs=1e-9)
            assert d02 <= d01 + d12 + 1e-6

    def test_disconnected_none(self):
        m = np.zeros((10, 40), dtype=bool)
        m[2, 2:12] = True
        m[7, 25:35] = True
        g = build_graph(m, phase=0)
        assert len(g.edges) == 2
        assert geodesic(g, GraphPosition(0, 1.0), GraphPosition(1, 1.0)) is None

    def test_invalid_edge(self):
        g = self.graph()
        with pytest.raises(ValueError):
            geodesic(g, GraphPosition(99, 0.0), GraphPosition(0, 0.0))
