import numpy as np
import pytest

from firmnet.graph_store import FirmGraph
from firmnet.propagation import (
    PatternMatrices,
    default_patterns,
    directed_patterns,
    influence_by_distance,
    lm_curve,
    parse_pattern,
    pattern_neighbors,
    reverse_pattern,
)

from helpers import (
    adjacency,
    oracle_lm_points,
    oracle_pattern_set,
    random_graph,
    und_distances,
)

ALL_PATTERNS = directed_patterns(3) + ["U1", "U2", "U3"]


class TestPatternStrings:
    def test_fourteen_directed_patterns(self):
        pats = directed_patterns(3)
        assert len(pats) == 14
        assert len(set(pats)) == 14
        assert pats[0] == "F"
        assert set(len(p) for p in pats) == {1, 2, 3}

    def test_default_includes_undirected(self):
        assert default_patterns(3)[-3:] == ["U1", "U2", "U3"]

    def test_parse_validation(self):
        assert parse_pattern("FFB") == ("directed", "FFB")
        assert parse_pattern("U2") == ("und", 2)
        for bad in ("", "X", "U0", "Ux", "FU"):
            with pytest.raises(ValueError):
                parse_pattern(bad)

    def test_reverse_involution_and_flip(self):
        assert reverse_pattern("F") == "B"
        assert reverse_pattern("FFB") == "FBB"
        assert reverse_pattern("U2") == "U2"
        for p in ALL_PATTERNS:
            assert reverse_pattern(reverse_pattern(p)) == p


class TestPatternNeighbors:
    def test_chain(self):
        g = FirmGraph.from_edges([0, 1], [1, 2], node_count=3)
        assert pattern_neighbors(g, 0, "FF").tolist() == [2]
        assert pattern_neighbors(g, 0, "F").tolist() == [1]
        assert pattern_neighbors(g, 2, "BB").tolist() == [0]
        assert pattern_neighbors(g, 0, "FFF").tolist() == []

    def test_triangle_self_exclusion(self):
        g = FirmGraph.from_edges([0, 1, 2], [1, 2, 0], node_count=3)
        assert pattern_neighbors(g, 0, "FF").tolist() == [2]
        # walking the full cycle comes back to the start, which is excluded
        assert pattern_neighbors(g, 0, "FFF").tolist() == []

    def test_u1_equals_undirected_neighbors(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            graph, _ = random_graph(rng, n_max=80)
            for i in range(graph.node_count):
                assert (pattern_neighbors(graph, i, "U1").tolist()
                        == graph.und_neighbors(i).tolist())

    def test_matches_oracle_all_patterns(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            graph, edges = random_graph(rng, n_max=60, density=1.8)
            out, inn, und = adjacency(edges, graph.node_count)
            for pattern in ALL_PATTERNS:
                for i in range(graph.node_count):
                    got = set(pattern_neighbors(graph, i, pattern).tolist())
                    expect = oracle_pattern_set(out, inn, und, i, pattern)
                    assert got == expect, (pattern, i)

    def test_reciprocity(self):
        rng = np.random.default_rng(42)
        for _ in range(6):
            graph, _ = random_graph(rng, n_max=50, density=1.8)
            for pattern in ALL_PATTERNS:
                rev = reverse_pattern(pattern)
                sets = [set(pattern_neighbors(graph, i, pattern).tolist())
                        for i in range(graph.node_count)]
                rsets = [set(pattern_neighbors(graph, i, rev).tolist())
                         for i in range(graph.node_count)]
                for i in range(graph.node_count):
                    for j in sets[i]:
                        assert i in rsets[j], (pattern, i, j)

    def test_within_cumulates_shells(self):
        rng = np.random.default_rng(42)
        graph, edges = random_graph(rng, n_max=50)
        _, _, und = adjacency(edges, graph.node_count)
        for i in range(graph.node_count):
            got = set(pattern_neighbors(graph, i, "U3", within=True).tolist())
            dist = und_distances(und, i)
            expect = {v for v, d in dist.items() if 1 <= d <= 3}
            assert got == expect


class TestPatternMatrices:
    def test_rows_match_single_node_walks(self):
        rng = np.random.default_rng(42)
        for _ in range(6):
            graph, _ = random_graph(rng, n_max=50, density=2.0)
            cache = PatternMatrices(graph)
            for pattern in ALL_PATTERNS:
                mat = cache.pattern_matrix(pattern)
                for i in range(graph.node_count):
                    row = set(mat.getrow(i).indices.tolist())
                    assert row == set(
                        pattern_neighbors(graph, i, pattern).tolist())

    def test_cache_reuse(self):
        g = FirmGraph.from_edges([0, 1], [1, 2], node_count=3)
        cache = PatternMatrices(g)
        assert cache.pattern_matrix("U2") is cache.pattern_matrix("U2")

    def test_bad_step(self):
        g = FirmGraph.from_edges([0], [1], node_count=2)
        with pytest.raises(ValueError):
            PatternMatrices(g).step("X")


class TestLmCurve:
    def test_matches_nested_loops(self):
        rng = np.random.default_rng(42)
        for _ in range(15):
            graph, edges = random_graph(rng, n_max=70, density=2.0,
                                        label_rate=0.3)
            for direction in ("out", "in", "undirected"):
                curve = lm_curve(graph, direction, m_max=5,
                                 min_denominator=1)
                expect = oracle_lm_points(edges, graph.node_count,
                                          graph.labels, direction, 5)
                for row, m in enumerate(curve.m.tolist()):
                    denom, numer = expect[m]
                    assert curve.denominator[row] == denom
                    assert curve.numerator[row] == numer
                    assert curve.L[row] == pytest.approx(numer / denom)

    def test_m0_covers_whole_graph(self):
        rng = np.random.default_rng(42)
        graph, _ = random_graph(rng, n_max=100, label_rate=0.2)
        curve = lm_curve(graph, "out", m_max=0)
        assert curve.denominator[0] == graph.node_count
        assert curve.L[0] == pytest.approx(graph.labels.mean())

    def test_min_denominator_truncates(self):
        # marked hub feeding 30 spokes: every spoke sees one marked
        # in-neighbor, the hub itself sees 30 marked out-neighbors
        src = np.zeros(30, dtype=int)
        dst = np.arange(1, 31)
        labels = np.zeros(31, dtype=bool)
        labels[0] = True
        g = FirmGraph.from_edges(src, dst, node_count=31, labels=labels)
        curve = lm_curve(g, "in", min_denominator=2)
        assert curve.m.max() == 1
        assert curve.denominator.tolist() == [31, 30]
        tight = lm_curve(g, "in", min_denominator=31)
        assert tight.m.max() == 0
        hub_only = lm_curve(g.with_labels(~labels), "out", min_denominator=1)
        assert hub_only.m.max() == 30
        assert hub_only.denominator[-1] == 1

    def test_unknown_direction(self):
        g = FirmGraph.from_edges([0], [1], node_count=2)
        with pytest.raises(ValueError):
            lm_curve(g, "sideways")


class TestInfluence:
    def test_matches_oracle_rates(self):
        rng = np.random.default_rng(42)
        for _ in range(8):
            graph, edges = random_graph(rng, n_max=60, density=1.8,
                                        label_rate=0.3)
            if not graph.labels.any():
                continue
            out, inn, und = adjacency(edges, graph.node_count)
            records = influence_by_distance(graph, patterns=ALL_PATTERNS)
            by_pattern = {r.pattern: r for r in records}
            baseline = graph.labels.mean()
            for pattern in ALL_PATTERNS:
                have = [i for i in range(graph.node_count)
                        if any(graph.labels[v] for v in
                               oracle_pattern_set(out, inn, und, i, pattern))]
                if not have:
                    assert pattern not in by_pattern
                    continue
                rec = by_pattern[pattern]
                cond = np.mean([graph.labels[i] for i in have])
                assert rec.denominator == len(have)
                assert rec.conditional == pytest.approx(cond)
                assert rec.baseline == pytest.approx(baseline)
                assert rec.increment_rate == pytest.approx(
                    (cond - baseline) / baseline)

    def test_no_marks_gives_empty(self):
        g = FirmGraph.from_edges([0], [1], node_count=2)
        assert influence_by_distance(g) == []

    def test_records_keep_pattern_order(self):
        g = FirmGraph.from_edges([0, 1], [1, 2], node_count=3,
                                 labels=np.array([0, 1, 0], dtype=bool))
        records = influence_by_distance(g, patterns=["B", "F", "U1"])
        assert [r.pattern for r in records] == ["B", "F", "U1"]
