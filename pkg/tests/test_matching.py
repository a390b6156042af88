import itertools

import numpy as np
import pytest

from voidd.matching import (
    MatchConfig,
    admissible_paths,
    discrete_frechet,
    extract_feature_pairs,
)
from voidd.skeleton import TipCandidate
from voidd.vesselmap import build_graph


def frechet_oracle(p, q):
    """Exhaustive enumeration of monotone couplings (small curves only)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n, m = len(p), len(q)
    best = [np.inf]

    def rec(i, j, cur):
        cur = max(cur, float(np.linalg.norm(p[i] - q[j])))
        if cur >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = cur
            return
        if i + 1 < n:
            rec(i + 1, j, cur)
        if j + 1 < m:
            rec(i, j + 1, cur)
        if i + 1 < n and j + 1 < m:
            rec(i + 1, j + 1, cur)

    rec(0, 0, 0.0)
    return best[0]


class TestDiscreteFrechet:
    def test_identical(self):
        p = [(0, 0), (1, 2), (3, 3)]
        assert discrete_frechet(p, p) == 0.0

    def test_parallel_translate(self):
        assert discrete_frechet([(0, 0), (1, 0)], [(0, 1), (1, 1)]) == pytest.approx(1.0)

    def test_detour(self):
        d = discrete_frechet([(0, 0), (2, 0)], [(0, 0), (1, 1), (2, 0)])
        assert d == pytest.approx(np.sqrt(2))

    def test_symmetry(self):
        rng = np.random.default_rng(51)
        for _ in range(30):
            p = rng.normal(size=(5, 2)) * 5
            q = rng.normal(size=(4, 2)) * 5
            assert discrete_frechet(p, q) == pytest.approx(discrete_frechet(q, p), abs=1e-12)

    def test_lower_bound_endpoints(self):
        rng = np.random.default_rng(52)
        for _ in range(30):
            p = rng.normal(size=(6, 2)) * 5
            q = rng.normal(size=(6, 2)) * 5
            d = discrete_frechet(p, q)
            assert d >= np.linalg.norm(p[0] - q[0]) - 1e-12
            assert d >= np.linalg.norm(p[-1] - q[-1]) - 1e-12

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(53)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(2, 7))
            p = rng.normal(size=(n, 2)) * 4
            q = rng.normal(size=(m, 2)) * 4
            assert discrete_frechet(p, q) == pytest.approx(frechet_oracle(p, q), abs=1e-9)


def straight_graph():
    m = np.zeros((20, 120), dtype=bool)
    m[10, 5:115] = True
    return build_graph(m, phase=0)


def y_graph():
    m = np.zeros((120, 120), dtype=bool)
    for i in range(55):
        m[60 - i, 60] = True  # stem up from (60, 60)
    for i in range(50):
        m[60 + i, 60 - i] = True  # left diagonal arm
        m[60 + i, 60 + i] = True  # right diagonal arm
    return build_graph(m, phase=0)


class TestAdmissiblePaths:
    def test_tip_on_single_edge(self):
        g = straight_graph()
        tip = TipCandidate(curve=[(30.0, 10.0), (70.0, 10.0)], score=1.0)
        out = admissible_paths(g, tip, MatchConfig(neighborhood_radius=5.0))
        assert out
        best = out[0]
        xs = best.polyline[:, 0]
        assert xs.min() <= 31 and xs.max() >= 69
        np.testing.assert_allclose(best.polyline[:, 1], 10.0, atol=1.0)

    def test_bifurcation_spawns_one_per_arm(self):
        g = y_graph()
        # tip along the stem reaching past the bifurcation: end neighborhoods
        # cover both arms
        tip = TipCandidate(curve=[(60.0, 25.0), (60.0, 75.0)], score=1.0)
        out = admissible_paths(g, tip, MatchConfig(neighborhood_radius=25.0))
        arm_edges = {c.edge_ids() for c in out if len(c.edge_path) > 1}
        # paths through the bifurcation into different arms exist
        assert len(arm_edges) >= 2

    def test_far_tip_empty(self):
        g = straight_graph()
        tip = TipCandidate(curve=[(10.0, 110.0), (60.0, 110.0)], score=1.0)
        assert admissible_paths(g, tip, MatchConfig(neighborhood_radius=20.0)) == []

    def test_no_repeated_edges(self):
        g = y_graph()
        tip = TipCandidate(curve=[(60.0, 25.0), (60.0, 75.0)], score=1.0)
        for c in admissible_paths(g, tip, MatchConfig(neighborhood_radius=30.0)):
            ids = [e for e, _ in c.edge_path]
            assert len(ids) == len(set(ids))

    def test_candidates_lie_on_graph(self):
        g = y_graph()
        tip = TipCandidate(curve=[(60.0, 25.0), (60.0, 75.0)], score=1.0)
        from voidd.geometry import point_polyline_distance

        for c in admissible_paths(g, tip, MatchConfig(neighborhood_radius=30.0)):
            for pt in c.polyline:
                d = min(point_polyline_distance(pt, e.polyline) for e in g.edges)
                assert d <= 0.5

    def test_max_paths_respected(self):
        g = y_graph()
        tip = TipCandidate(curve=[(60.0, 25.0), (60.0, 75.0)], score=1.0)
        out = admissible_paths(g, tip, MatchConfig(neighborhood_radius=40.0, max_paths=2))
        assert len(out) <= 2


class TestExtractFeaturePairs:
    def test_overlaid_tip_scores_near_one(self):
        g = straight_graph()
        tip = TipCandidate(curve=[(30.0, 10.0), (50.0, 10.0), (70.0, 10.0)], score=1.0)
        pairs = extract_feature_pairs([tip], g, MatchConfig(neighborhood_radius=5.0))
        assert pairs
        assert pairs[0].frechet < 1.0
        assert pairs[0].score > 0.95
        assert pairs == sorted(pairs, key=lambda fp: -fp.score)

    def test_curved_tip_prefers_matching_arm(self):
        # graph with a straight arm and a curved arm from a common start
        m = np.zeros((80, 120), dtype=bool)
        m[40, 10:60] = True  # shared stem
        m[40, 60:110] = True  # straight continuation
        xs = np.arange(60, 110)
        ys = 40 - np.round((xs - 60) * (xs - 60) / 60.0).astype(int)
        for x, y in zip(xs, ys):
            m[y, x] = True  # curved continuation
        g = build_graph(m, phase=0)
        # curved tip mirroring the curved arm
        tx = np.linspace(62, 100, 24)
        ty = 40 - (tx - 60) ** 2 / 60.0
        tip = TipCandidate(curve=np.column_stack([tx, ty]), score=1.0)
        pairs = extract_feature_pairs([tip], g, MatchConfig(neighborhood_radius=15.0))
        assert pairs
        top = pairs[0]
        # best pair follows the curved arm: its polyline bends upward
        assert top.voi.polyline[:, 1].min() < 35

    def test_reject_threshold_empties(self):
        g = straight_graph()
        tip = TipCandidate(curve=[(30.0, 18.0), (70.0, 18.0)], score=1.0)
        pairs = extract_feature_pairs(
            [tip], g, MatchConfig(neighborhood_radius=30.0, frechet_reject=0.001)
        )
        assert pairs == []

    def test_deterministic_ranking(self):
        g = y_graph()
        tip = TipCandidate(curve=[(60.0, 25.0), (60.0, 75.0)], score=1.0)
        a = extract_feature_pairs([tip], g, MatchConfig(neighborhood_radius=30.0))
        b = extract_feature_pairs([tip], g, MatchConfig(neighborhood_radius=30.0))
        assert [(x.score, x.voi.edge_ids()) for x in a] == [
            (x.score, x.voi.edge_ids()) for x in b
        ]
