import math

import numpy as np
import pytest

from layoutpref.graphs import GraphFamily, generate_graph, make_graph, shortest_path_matrix
from layoutpref.layouts import (
    COARSE_ITERATIONS,
    ENGINE_ORDER,
    REFINE_ITERATIONS,
    Layout,
    LayoutEngine,
    layout_circular,
    layout_fr,
    layout_multilevel,
    layout_random,
    layout_stress,
    layout_suite,
    load_layout,
    raw_stress,
    save_layout,
    stress_descent,
)


def cycle_graph(n):
    return make_graph(f"c{n}", n, [(i, (i + 1) % n) for i in range(n)], GraphFamily.SPARSE)


def path_graph(n):
    return make_graph(f"p{n}", n, [(i, i + 1) for i in range(n - 1)], GraphFamily.SPARSE)


def grid_graph(rows, cols):
    idx = lambda r, c: r * cols + c
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                edges.append((idx(r, c), idx(r + 1, c)))
    return make_graph(f"grid{rows}x{cols}", rows * cols, edges, GraphFamily.MESH)


def assert_layout_ok(layout: Layout, n: int):
    assert layout.positions.shape == (n, 2)
    assert np.all(np.isfinite(layout.positions))
    assert len(np.unique(layout.positions, axis=0)) == n


class TestFR:
    def test_single_edge(self):
        g = make_graph("e", 2, [(0, 1)], GraphFamily.SPARSE)
        layout = layout_fr(g, 0)
        assert_layout_ok(layout, 2)

    def test_cycle_becomes_near_regular(self):
        g = cycle_graph(6)
        layout = layout_fr(g, 3, iterations=500)
        center = layout.positions.mean(axis=0)
        rel = layout.positions - center
        angles = np.sort(np.degrees(np.arctan2(rel[:, 1], rel[:, 0])))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 360.0]]))
        assert np.all(np.abs(gaps - 60.0) <= 15.0)

    def test_determinism(self):
        g = generate_graph(GraphFamily.SPARSE, 30, 5)
        a = layout_fr(g, 11, 80)
        b = layout_fr(g, 11, 80)
        assert np.array_equal(a.positions, b.positions)
        c = layout_fr(g, 12, 80)
        assert not np.array_equal(a.positions, c.positions)


class TestStressLayout:
    def test_path_embeds_exactly(self):
        from layoutpref.metrics import stress as stress_metric

        g = path_graph(3)
        dist = shortest_path_matrix(g)
        layout, _ = stress_descent(g, dist, 0, iterations=1000)
        assert stress_metric(g, dist, layout) < 1e-6

    def test_monotone_descent(self):
        for family, v, seed in [
            (GraphFamily.SPARSE, 20, 0),
            (GraphFamily.BICONNECTED, 15, 1),
            (GraphFamily.MESH, 16, 2),
        ]:
            g = generate_graph(family, v, seed)
            dist = shortest_path_matrix(g)
            _, trace = stress_descent(g, dist, seed)
            for before, after in zip(trace, trace[1:]):
                assert after <= before + 1e-12

    def test_beats_random_on_grid(self):
        from layoutpref.metrics import stress as stress_metric

        g = grid_graph(4, 4)
        dist = shortest_path_matrix(g)
        wins = 0
        for seed in range(100):
            s_layout = layout_stress(g, dist, seed, iterations=50)
            r_layout = layout_random(g, seed)
            if stress_metric(g, dist, s_layout) < stress_metric(g, dist, r_layout):
                wins += 1
        assert wins >= 95


class TestMultilevel:
    def test_small_graph_equals_plain_fr(self):
        g = generate_graph(GraphFamily.SPARSE, 18, 4)
        ml = layout_multilevel(g, 9)
        fr = layout_fr(g, 9, COARSE_ITERATIONS)
        assert np.array_equal(ml.positions, fr.positions)
        assert ml.engine == LayoutEngine.MULTILEVEL

    def test_determinism(self):
        g = generate_graph(GraphFamily.MESH, 42, 0)
        a = layout_multilevel(g, 7)
        b = layout_multilevel(g, 7)
        assert np.array_equal(a.positions, b.positions)

    def test_beats_plain_fr_on_mesh(self):
        # 20x20 mesh at an equal iteration budget. Plain FR fully unfolds the
        # mesh on a third of the seeds (tie at 0 crossings), so the advantage
        # is asserted as never-worse plus a majority of strict wins plus
        # planarity of the multilevel drawings.
        from layoutpref.metrics import count_crossings

        g = grid_graph(20, 20)
        levels = 0
        n = g.vertex_count
        while n > 20:
            n = (n + 1) // 2
            levels += 1
        total_iters = COARSE_ITERATIONS + REFINE_ITERATIONS * levels
        ml_counts, fr_counts = [], []
        for seed in range(12):
            ml_counts.append(count_crossings(g, layout_multilevel(g, seed)))
            fr_counts.append(count_crossings(g, layout_fr(g, seed, total_iters)))
        assert all(m <= f for m, f in zip(ml_counts, fr_counts))
        assert sum(m < f for m, f in zip(ml_counts, fr_counts)) >= 6
        assert sum(m == 0 for m in ml_counts) >= 9


class TestContrastEngines:
    def test_circular_square(self):
        g = cycle_graph(4)
        layout = layout_circular(g)
        assert_layout_ok(layout, 4)
        radii = np.sqrt((layout.positions**2).sum(-1))
        assert np.allclose(radii, 1.0)
        angles = np.degrees(np.arctan2(layout.positions[:, 1], layout.positions[:, 0]))
        gaps = np.diff(np.sort(angles))
        assert np.allclose(gaps, 90.0)

    def test_random_determinism(self):
        g = cycle_graph(10)
        assert np.array_equal(layout_random(g, 3).positions, layout_random(g, 3).positions)
        assert not np.array_equal(layout_random(g, 3).positions, layout_random(g, 4).positions)

    def test_k5_random_has_crossing(self):
        from layoutpref.metrics import count_crossings

        edges = [(i, j) for i in range(5) for j in range(i + 1, 5)]
        g = make_graph("k5", 5, edges, GraphFamily.BICONNECTED)
        assert count_crossings(g, layout_random(g, 0)) >= 1


class TestSuite:
    def test_five_layouts(self):
        g = generate_graph(GraphFamily.SPARSE, 25, 2)
        layouts = layout_suite(g, 0)
        assert len(layouts) == 5
        assert [l.layout_index for l in layouts] == [0, 1, 2, 3, 4]
        assert [l.engine for l in layouts] == ENGINE_ORDER
        for layout in layouts:
            assert_layout_ok(layout, g.vertex_count)

    def test_ten_pairs_available(self):
        layouts = layout_suite(generate_graph(GraphFamily.SPARSE, 25, 2), 0)
        pairs = {(a.layout_index, b.layout_index) for i, a in enumerate(layouts) for b in layouts[i + 1 :]}
        assert len(pairs) == 10


class TestLayoutIO:
    def test_round_trip_exact(self, tmp_path):
        g = generate_graph(GraphFamily.SPARSE, 25, 1)
        layout = layout_fr(g, 1)
        p = tmp_path / "l.json"
        save_layout(layout, p)
        back = load_layout(p)
        assert back.graph_id == layout.graph_id
        assert back.engine == layout.engine
        assert back.layout_index == layout.layout_index
        assert np.array_equal(back.positions, layout.positions)

    def test_jitter_separates_coincident(self):
        g = make_graph("t", 3, [(0, 1), (1, 2)], GraphFamily.SPARSE)
        pos = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
        from layoutpref.layouts import _finalize

        layout = _finalize("t", LayoutEngine.RANDOM, pos, 3)
        assert len(np.unique(layout.positions, axis=0)) == 3
        # displacement stays tiny relative to the drawing
        assert np.abs(layout.positions[:2]).max() < 1e-6
