"""Graph representation, family generators, hop distances, and edge-list I/O.

Four graph families are synthesized: sparse (tree plus a few cycle-forming
chords), biconnected (Hamiltonian cycle plus chords), mesh (rectangular grid
with optional diagonals), and scale-free (preferential attachment). Families
carry the density ranges used to sanity-check generator output:

    sparse       D in [1.00, 1.50]   small
    biconnected  D in [1.90, 3.00]   small
    mesh         D in [1.40, 2.00]   large
    scalefree    D >= 2.30           large

All generators are deterministic for a fixed (family, v_target, seed).
"""

from __future__ import annotations

import os
import random
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .errors import GenerationError, ParameterError, ParseError, StructuralError

Edge = tuple[int, int]


class GraphFamily(str, Enum):
    SPARSE = "sparse"
    BICONNECTED = "biconnected"
    MESH = "mesh"
    SCALEFREE = "scalefree"


class SizeClass(str, Enum):
    SMALL = "small"
    LARGE = "large"


FAMILY_SIZE_CLASS = {
    GraphFamily.SPARSE: SizeClass.SMALL,
    GraphFamily.BICONNECTED: SizeClass.SMALL,
    GraphFamily.MESH: SizeClass.LARGE,
    GraphFamily.SCALEFREE: SizeClass.LARGE,
}

# (low, high); high=None means unbounded above.
FAMILY_DENSITY_RANGE: dict[GraphFamily, tuple[float, float | None]] = {
    GraphFamily.SPARSE: (1.00, 1.50),
    GraphFamily.BICONNECTED: (1.90, 3.00),
    GraphFamily.MESH: (1.40, 2.00),
    GraphFamily.SCALEFREE: (2.30, None),
}

# Default desk-scale vertex ranges used by the pipeline when sampling sizes.
DEFAULT_SIZE_RANGE = {
    SizeClass.SMALL: (25, 150),
    SizeClass.LARGE: (300, 1500),
}


@dataclass(frozen=True)
class Graph:
    """Undirected simple connected graph with 0-based vertex indices."""

    id: str
    vertex_count: int
    edges: tuple[Edge, ...]
    family: GraphFamily

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def density(self) -> float:
        return len(self.edges) / self.vertex_count

    @property
    def size_class(self) -> SizeClass:
        return FAMILY_SIZE_CLASS[self.family]

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj


def _normalize_edges(edges) -> tuple[Edge, ...]:
    return tuple(sorted((min(u, v), max(u, v)) for u, v in edges))


def _is_connected(n: int, edges) -> bool:
    if n == 0:
        return False
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                count += 1
                queue.append(w)
    return count == n


def validate_graph(g: Graph) -> None:
    """Raise if the graph violates a structural invariant."""
    if g.vertex_count <= 0:
        raise StructuralError(f"graph {g.id}: vertex_count must be positive")
    seen: set[Edge] = set()
    for u, v in g.edges:
        if u == v:
            raise StructuralError(f"graph {g.id}: self-loop at vertex {u}")
        if not (0 <= u < g.vertex_count and 0 <= v < g.vertex_count):
            raise StructuralError(f"graph {g.id}: edge ({u},{v}) out of range")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise StructuralError(f"graph {g.id}: duplicate edge ({u},{v})")
        seen.add(key)
    if not _is_connected(g.vertex_count, g.edges):
        raise StructuralError(f"graph {g.id}: graph is disconnected")


def make_graph(id: str, vertex_count: int, edges, family: GraphFamily) -> Graph:
    g = Graph(id=id, vertex_count=vertex_count, edges=_normalize_edges(edges), family=family)
    validate_graph(g)
    return g


def articulation_points(g: Graph) -> set[int]:
    """Cut vertices via iterative Tarjan lowlink."""
    adj = g.adjacency()
    n = g.vertex_count
    disc = [-1] * n
    low = [0] * n
    parent = [-1] * n
    cut: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        root_children = 0
        stack: list[tuple[int, int]] = [(root, 0)]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            u, i = stack[-1]
            if i < len(adj[u]):
                stack[-1] = (u, i + 1)
                w = adj[u][i]
                if disc[w] == -1:
                    parent[w] = u
                    disc[w] = low[w] = timer
                    timer += 1
                    if u == root:
                        root_children += 1
                    stack.append((w, 0))
                elif w != parent[u]:
                    low[u] = min(low[u], disc[w])
            else:
                stack.pop()
                if parent[u] != -1:
                    p = parent[u]
                    low[p] = min(low[p], low[u])
                    if p != root and low[u] >= disc[p]:
                        cut.add(p)
        if root_children > 1:
            cut.add(root)
    return cut


def _gen_sparse(v: int, rng: random.Random) -> list[Edge]:
    # Random recursive tree, then chords closing cycles; density lands in [1, 1.5).
    edges: list[Edge] = []
    order = list(range(v))
    rng.shuffle(order)
    for i in range(1, v):
        j = rng.randrange(i)
        edges.append((order[j], order[i]))
    present = {(min(u, w), max(u, w)) for u, w in edges}
    chords = rng.randint(1, max(1, v // 2))
    added = 0
    while added < chords:
        u = rng.randrange(v)
        w = rng.randrange(v)
        if u == w:
            continue
        key = (min(u, w), max(u, w))
        if key in present:
            continue
        present.add(key)
        edges.append(key)
        added += 1
    return edges


def _gen_biconnected(v: int, rng: random.Random) -> list[Edge]:
    if v < 5:
        raise GenerationError(f"biconnected family needs v_target >= 5, got {v}")
    order = list(range(v))
    rng.shuffle(order)
    edges = [(order[i], order[(i + 1) % v]) for i in range(v)]
    present = {(min(u, w), max(u, w)) for u, w in edges}
    max_edges = v * (v - 1) // 2
    target = min(max_edges, round(rng.uniform(1.95, 2.90) * v))
    while len(present) < target:
        u = rng.randrange(v)
        w = rng.randrange(v)
        if u == w:
            continue
        key = (min(u, w), max(u, w))
        if key in present:
            continue
        present.add(key)
        edges.append(key)
    return edges


def _mesh_dims(v: int) -> tuple[int, int]:
    best: tuple[int, int] | None = None
    r = 2
    while r * r <= v:
        if v % r == 0 and v // r >= 2:
            best = (r, v // r)
        r += 1
    if best is None:
        raise GenerationError(f"mesh family needs v_target expressible as rows x cols >= 2x2, got {v}")
    return best


def _gen_mesh(v: int, rng: random.Random, diagonals: bool | None) -> list[Edge]:
    rows, cols = _mesh_dims(v)
    idx = lambda r, c: r * cols + c
    edges: list[Edge] = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                edges.append((idx(r, c), idx(r + 1, c)))
    if diagonals is False:
        return edges
    base_density = len(edges) / v
    cells = [(r, c) for r in range(rows - 1) for c in range(cols - 1)]
    if diagonals is None:
        target = rng.uniform(1.50, 1.90)
        k = min(len(cells), max(0, round((target - base_density) * v)))
    else:
        k = len(cells)
    for r, c in rng.sample(cells, k):
        if rng.random() < 0.5:
            edges.append((idx(r, c), idx(r + 1, c + 1)))
        else:
            edges.append((idx(r, c + 1), idx(r + 1, c)))
    return edges


def _gen_scalefree(v: int, rng: random.Random, m: int = 3) -> list[Edge]:
    # Preferential attachment; m>=3 keeps density above 2.3 once v >= 9.
    if v < 3 * m:
        raise GenerationError(f"scalefree family needs v_target >= {3 * m}, got {v}")
    m0 = m + 1
    edges: list[Edge] = [(i, j) for i in range(m0) for j in range(i + 1, m0)]
    pool: list[int] = []
    for u, w in edges:
        pool.append(u)
        pool.append(w)
    for new in range(m0, v):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(pool[rng.randrange(len(pool))])
        for t in sorted(targets):
            edges.append((t, new))
            pool.append(t)
            pool.append(new)
    return edges


def generate_graph(
    family: GraphFamily,
    v_target: int,
    seed: int,
    mesh_diagonals: bool | None = None,
) -> Graph:
    """Build a connected graph of the requested family.

    Deterministic for fixed inputs. Raises ParameterError for bad sizes and
    GenerationError when the family constraints are unsatisfiable.
    """
    if v_target < 4:
        raise ParameterError(f"v_target must be >= 4, got {v_target}")
    if seed < 0:
        raise ParameterError(f"seed must be non-negative, got {seed}")
    # String seeding is deterministic across runs and platforms.
    rng = random.Random(f"{seed}:{family.value}")
    if family == GraphFamily.SPARSE:
        edges = _gen_sparse(v_target, rng)
    elif family == GraphFamily.BICONNECTED:
        edges = _gen_biconnected(v_target, rng)
        probe = Graph("probe", v_target, _normalize_edges(edges), family)
        if articulation_points(probe):
            raise GenerationError("biconnected generator produced a cut vertex")
    elif family == GraphFamily.MESH:
        edges = _gen_mesh(v_target, rng, mesh_diagonals)
    elif family == GraphFamily.SCALEFREE:
        edges = _gen_scalefree(v_target, rng)
    else:  # pragma: no cover
        raise ParameterError(f"unknown family {family}")
    gid = f"{family.value}-v{v_target}-s{seed}"
    return make_graph(gid, v_target, edges, family)


def shortest_path_matrix(g: Graph) -> np.ndarray:
    """All-pairs hop distances as an (n, n) int64 matrix."""
    n = g.vertex_count
    if g.edges:
        rows = [u for u, _ in g.edges] + [v for _, v in g.edges]
        cols = [v for _, v in g.edges] + [u for u, _ in g.edges]
        data = np.ones(2 * len(g.edges), dtype=np.int8)
        adj = scipy.sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    else:
        adj = scipy.sparse.csr_matrix((n, n), dtype=np.int8)
    dist = scipy.sparse.csgraph.shortest_path(adj, directed=False, unweighted=True)
    if not np.all(np.isfinite(dist)):
        raise StructuralError(f"graph {g.id}: graph is disconnected")
    return dist.astype(np.int64)


def save_graph(g: Graph, path) -> None:
    lines = [f"# id={g.id}", f"# family={g.family.value}", f"{g.vertex_count} {len(g.edges)}"]
    lines.extend(f"{u} {v}" for u, v in g.edges)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path) -> Graph:
    """Parse the edge-list format written by save_graph.

    Header comments may set id and family; otherwise the id falls back to the
    file stem and the family to sparse.
    """
    gid: str | None = None
    family = GraphFamily.SPARSE
    header: tuple[int, int] | None = None
    edges: list[Edge] = []
    edge_set: set[Edge] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("id="):
                    gid = body[3:].strip()
                elif body.startswith("family="):
                    value = body[7:].strip()
                    try:
                        family = GraphFamily(value)
                    except ValueError:
                        raise ParseError(f"unknown family {value!r}", str(path), lineno)
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected two integers, got {line!r}", str(path), lineno)
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer token in {line!r}", str(path), lineno)
            if header is None:
                if a <= 0 or b < 0:
                    raise ParseError(f"invalid header counts {line!r}", str(path), lineno)
                header = (a, b)
                continue
            n, m = header
            if a == b:
                raise ParseError(f"self-loop edge {a} {b}", str(path), lineno)
            if not (0 <= a < n and 0 <= b < n):
                raise ParseError(f"vertex index out of range in edge {a} {b}", str(path), lineno)
            key = (min(a, b), max(a, b))
            if key in edge_set:
                raise ParseError(f"duplicate edge {a} {b}", str(path), lineno)
            edge_set.add(key)
            edges.append(key)
    if header is None:
        raise ParseError("missing header line", str(path))
    n, m = header
    if len(edges) != m:
        raise ParseError(f"header declares {m} edges, found {len(edges)}", str(path))
    if gid is None:
        gid = os.path.splitext(os.path.basename(str(path)))[0]
    if not _is_connected(n, edges):
        raise ParseError("graph is disconnected", str(path))
    return make_graph(gid, n, edges, family)
