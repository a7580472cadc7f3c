import random

import numpy as np
import pytest

from layoutpref.errors import GenerationError, ParameterError, ParseError, StructuralError
from layoutpref.graphs import (
    FAMILY_DENSITY_RANGE,
    Graph,
    GraphFamily,
    SizeClass,
    articulation_points,
    generate_graph,
    load_graph,
    make_graph,
    save_graph,
    shortest_path_matrix,
)


def bfs_reaches_all(g: Graph) -> bool:
    adj = g.adjacency()
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == g.vertex_count


def floyd_warshall(g: Graph) -> np.ndarray:
    """Independent O(n^3) oracle for hop distances."""
    n = g.vertex_count
    inf = 10**9
    d = [[0 if i == j else inf for j in range(n)] for i in range(n)]
    for u, v in g.edges:
        d[u][v] = 1
        d[v][u] = 1
    for k in range(n):
        for i in range(n):
            dik = d[i][k]
            if dik == inf:
                continue
            row_k = d[k]
            row_i = d[i]
            for j in range(n):
                alt = dik + row_k[j]
                if alt < row_i[j]:
                    row_i[j] = alt
    return np.array(d)


def removal_articulation_check(g: Graph) -> set[int]:
    """Brute-force cut vertices: delete each vertex, test connectivity."""
    cut = set()
    for x in range(g.vertex_count):
        kept = [i for i in range(g.vertex_count) if i != x]
        remap = {v: i for i, v in enumerate(kept)}
        edges = [(remap[u], remap[v]) for u, v in g.edges if u != x and v != x]
        adj = [[] for _ in kept]
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(kept):
            cut.add(x)
    return cut


class TestGenerators:
    @pytest.mark.parametrize("family", list(GraphFamily))
    @pytest.mark.parametrize("seed", [0, 1, 7])
    def test_invariants(self, family, seed):
        v = {GraphFamily.MESH: 42, GraphFamily.SCALEFREE: 60}.get(family, 40)
        g = generate_graph(family, v, seed)
        assert g.vertex_count == v
        assert bfs_reaches_all(g)
        assert all(u < v_ for u, v_ in g.edges)
        assert len(set(g.edges)) == len(g.edges)
        lo, hi = FAMILY_DENSITY_RANGE[family]
        assert g.density >= lo - 1e-9
        if hi is not None:
            assert g.density <= hi + 1e-9

    def test_determinism(self):
        for family in GraphFamily:
            v = 42 if family == GraphFamily.MESH else 40
            a = generate_graph(family, v, 123)
            b = generate_graph(family, v, 123)
            assert a.edges == b.edges
            c = generate_graph(family, v, 124)
            assert c.edges != a.edges or c.id != a.id

    def test_mesh_grid_without_diagonals(self):
        # 3x3 grid: 2*r*c - r - c = 12 edges, density 12/9.
        g = generate_graph(GraphFamily.MESH, 9, 0, mesh_diagonals=False)
        assert g.vertex_count == 9
        assert g.edge_count == 12
        assert abs(g.density - 12 / 9) < 1e-12

    def test_sparse_density_window(self):
        g = generate_graph(GraphFamily.SPARSE, 25, 3)
        assert g.vertex_count >= 25
        assert 1.00 - 1e-9 <= g.density <= 1.50 + 1e-9

    def test_biconnected_no_cut_vertices(self):
        g = generate_graph(GraphFamily.BICONNECTED, 40, 7)
        assert removal_articulation_check(g) == set()

    def test_articulation_matches_removal_oracle(self):
        rng = random.Random(5)
        for _ in range(20):
            n = rng.randint(5, 14)
            tree = [(rng.randrange(i), i) for i in range(1, n)]
            extra = set(tree)
            for _ in range(rng.randint(0, 4)):
                u, v = rng.randrange(n), rng.randrange(n)
                if u != v:
                    extra.add((min(u, v), max(u, v)))
            g = make_graph("t", n, sorted(extra), GraphFamily.SPARSE)
            assert articulation_points(g) == removal_articulation_check(g)

    def test_size_classes(self):
        assert generate_graph(GraphFamily.SPARSE, 30, 0).size_class == SizeClass.SMALL
        assert generate_graph(GraphFamily.BICONNECTED, 30, 0).size_class == SizeClass.SMALL
        assert generate_graph(GraphFamily.MESH, 42, 0).size_class == SizeClass.LARGE
        assert generate_graph(GraphFamily.SCALEFREE, 42, 0).size_class == SizeClass.LARGE

    def test_parameter_errors(self):
        with pytest.raises(ParameterError):
            generate_graph(GraphFamily.SPARSE, 3, 0)
        with pytest.raises(GenerationError):
            generate_graph(GraphFamily.MESH, 7, 0)  # prime, no r x c >= 2x2
        with pytest.raises(GenerationError):
            generate_graph(GraphFamily.SCALEFREE, 5, 0)


class TestDistances:
    def test_path(self):
        g = make_graph("p3", 3, [(0, 1), (1, 2)], GraphFamily.SPARSE)
        d = shortest_path_matrix(g)
        assert d[0, 2] == 2
        assert d[0, 1] == 1

    def test_complete_k4(self):
        edges = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        g = make_graph("k4", 4, edges, GraphFamily.BICONNECTED)
        d = shortest_path_matrix(g)
        off = d[~np.eye(4, dtype=bool)]
        assert np.all(off == 1)

    def test_matches_floyd_warshall(self):
        for seed in range(3):
            g = generate_graph(GraphFamily.SPARSE, 20, seed)
            assert np.array_equal(shortest_path_matrix(g), floyd_warshall(g))
        for family, v in [(GraphFamily.BICONNECTED, 50), (GraphFamily.SCALEFREE, 50)]:
            g = generate_graph(family, v, 1)
            assert np.array_equal(shortest_path_matrix(g), floyd_warshall(g))

    def test_properties(self):
        g = generate_graph(GraphFamily.BICONNECTED, 20, 0)
        d = shortest_path_matrix(g)
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0)
        # triangle inequality
        n = g.vertex_count
        for k in range(n):
            assert np.all(d <= d[:, [k]] + d[[k], :])


class TestIO:
    def test_round_trip(self, tmp_path):
        g = generate_graph(GraphFamily.BICONNECTED, 12, 9)
        p = tmp_path / "g.txt"
        save_graph(g, p)
        h = load_graph(p)
        assert h == g

    def test_self_loop_rejected(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("4 2\n0 1\n3 3\n")
        with pytest.raises(ParseError) as err:
            load_graph(p)
        assert "self-loop" in str(err.value)
        assert err.value.line == 3

    def test_index_out_of_range(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3 2\n0 1\n1 5\n")
        with pytest.raises(ParseError) as err:
            load_graph(p)
        assert "out of range" in str(err.value)

    def test_duplicate_edge(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("3 3\n0 1\n1 0\n1 2\n")
        with pytest.raises(ParseError):
            load_graph(p)

    def test_disconnected_rejected(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("4 2\n0 1\n2 3\n")
        with pytest.raises(ParseError):
            load_graph(p)

    def test_make_graph_validates(self):
        with pytest.raises(StructuralError):
            make_graph("x", 3, [(0, 1)], GraphFamily.SPARSE)  # disconnected
        with pytest.raises(StructuralError):
            make_graph("x", 2, [(0, 0)], GraphFamily.SPARSE)
