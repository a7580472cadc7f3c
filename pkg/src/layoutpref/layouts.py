"""The five layout engines used to form preference pairs.

Two contrast engines (circular, random) complete the suite next to three
serious ones (spring embedding, stress majorization, multilevel spring) so
that metric-based pair labels are rarely ties.

All randomness flows from explicit seeds; identical inputs give bitwise
identical positions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError, ParseError, StructuralError
from .graphs import Graph

# Spring-embedder constants: unit drawing area, k = C*sqrt(area/n).
FR_C = 1.0
FR_AREA = 1.0
FR_INITIAL_TEMP = 0.1 * math.sqrt(FR_AREA)
FR_DEFAULT_ITERATIONS = 100

SMACOF_DEFAULT_ITERATIONS = 200
SMACOF_REL_TOL = 1e-6

COARSEN_STOP = 20
COARSE_ITERATIONS = 100
REFINE_ITERATIONS = 30
REFINE_TEMP = 0.03

COINCIDENCE_EPS_REL = 1e-9


class LayoutEngine(str, Enum):
    FR = "fr"
    STRESS = "stress"
    MULTILEVEL = "multilevel"
    CIRCULAR = "circular"
    RANDOM = "random"


ENGINE_ORDER = [
    LayoutEngine.FR,
    LayoutEngine.STRESS,
    LayoutEngine.MULTILEVEL,
    LayoutEngine.CIRCULAR,
    LayoutEngine.RANDOM,
]

_ENGINE_STREAM = {e: i for i, e in enumerate(ENGINE_ORDER)}


@dataclass(eq=False)
class Layout:
    graph_id: str
    engine: LayoutEngine
    positions: np.ndarray  # (n, 2) float64
    layout_index: int = 0


def _rng(seed: int, engine: LayoutEngine) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _ENGINE_STREAM[engine]]))


def _finalize(graph_id: str, engine: LayoutEngine, pos: np.ndarray, n: int) -> Layout:
    if pos.shape != (n, 2):
        raise StructuralError(f"layout for {graph_id}: expected {(n, 2)} positions, got {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise StructuralError(f"layout for {graph_id}: non-finite coordinates")
    pos = _jitter_coincident(pos)
    return Layout(graph_id=graph_id, engine=engine, positions=pos)


def _jitter_coincident(pos: np.ndarray) -> np.ndarray:
    """Displace exact duplicates so downstream geometry is well defined."""
    if len(pos) < 2:
        return pos
    span = pos.max(axis=0) - pos.min(axis=0)
    diag = float(np.hypot(span[0], span[1]))
    eps = COINCIDENCE_EPS_REL * diag if diag > 0 else 1e-9
    golden = math.pi * (3 - math.sqrt(5))
    scale = 1
    while True:
        seen: dict[tuple[float, float], int] = {}
        moved = False
        for i in range(len(pos)):
            key = (pos[i, 0], pos[i, 1])
            if key in seen:
                rank = scale * (i + 1)
                pos = pos.copy() if not moved else pos
                pos[i, 0] += eps * rank * math.cos(golden * rank)
                pos[i, 1] += eps * rank * math.sin(golden * rank)
                moved = True
            else:
                seen[key] = i
        if not moved:
            return pos
        scale += 1


def _init_positions(n: int, seed: int, engine: LayoutEngine) -> np.ndarray:
    return _rng(seed, engine).random((n, 2))


def _fr_iterate(pos: np.ndarray, edges: np.ndarray, iterations: int, t0: float) -> np.ndarray:
    n = len(pos)
    if n == 1 or iterations <= 0:
        return pos.copy()
    k = FR_C * math.sqrt(FR_AREA / n)
    pos = pos.copy()
    for it in range(iterations):
        t = t0 * (1.0 - it / iterations)
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((delta**2).sum(-1))
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-12)
        rep = (k * k) / (dist**2)  # k^2/d along the unit vector
        np.fill_diagonal(rep, 0.0)
        disp = (delta * rep[:, :, None]).sum(axis=1)
        if len(edges):
            dvec = pos[edges[:, 0]] - pos[edges[:, 1]]
            d = np.maximum(np.sqrt((dvec**2).sum(-1)), 1e-12)
            pull = dvec * (d / k)[:, None]  # d^2/k along the unit vector
            np.add.at(disp, edges[:, 0], -pull)
            np.add.at(disp, edges[:, 1], pull)
        length = np.maximum(np.sqrt((disp**2).sum(-1)), 1e-12)
        step = np.minimum(length, t)
        pos += disp / length[:, None] * step[:, None]
    return pos


def layout_fr(g: Graph, seed: int, iterations: int = FR_DEFAULT_ITERATIONS) -> Layout:
    """Spring embedding with linear cooling and capped displacement."""
    if iterations <= 0:
        raise ParameterError("iterations must be positive")
    pos = _init_positions(g.vertex_count, seed, LayoutEngine.FR)
    pos = _fr_iterate(pos, np.asarray(g.edges, dtype=np.int64).reshape(-1, 2), iterations, FR_INITIAL_TEMP)
    return _finalize(g.id, LayoutEngine.FR, pos, g.vertex_count)


def raw_stress(pos: np.ndarray, dist: np.ndarray) -> float:
    """Sum over pairs of d^-2 * (euclidean - d)^2 at the current scale."""
    d = dist.astype(float)
    delta = pos[:, None, :] - pos[None, :, :]
    eu = np.sqrt((delta**2).sum(-1))
    off = ~np.eye(len(pos), dtype=bool)
    w = np.zeros_like(d)
    w[off] = 1.0 / d[off] ** 2
    return float((w * (eu - d) ** 2).sum() / 2.0)


def stress_descent(
    g: Graph,
    dist: np.ndarray,
    seed: int,
    iterations: int = SMACOF_DEFAULT_ITERATIONS,
) -> tuple[Layout, list[float]]:
    """Majorization descent on distance stress; returns the layout and the
    per-step raw stress trace (non-increasing by the majorization guarantee)."""
    n = g.vertex_count
    if dist.shape != (n, n):
        raise StructuralError(f"distance matrix shape {dist.shape} does not match |V|={n}")
    if iterations <= 0:
        raise ParameterError("iterations must be positive")
    d = dist.astype(float)
    pos = _init_positions(n, seed, LayoutEngine.STRESS)
    if n == 1:
        return _finalize(g.id, LayoutEngine.STRESS, pos, n), [0.0]
    w = np.zeros_like(d)
    off = ~np.eye(n, dtype=bool)
    w[off] = 1.0 / d[off] ** 2
    wsum = w.sum(axis=1)
    trace = [raw_stress(pos, dist)]
    for _ in range(iterations):
        for i in range(n):
            delta = pos[i] - pos
            norm = np.sqrt((delta**2).sum(-1))
            norm[i] = 1.0
            norm = np.maximum(norm, 1e-12)
            target = pos + delta * (d[i] / norm)[:, None]
            pos[i] = (w[i, :, None] * target).sum(axis=0) / wsum[i]
        trace.append(raw_stress(pos, dist))
        if trace[-2] - trace[-1] <= SMACOF_REL_TOL * max(trace[-2], 1e-30):
            break
    return _finalize(g.id, LayoutEngine.STRESS, pos, n), trace


def layout_stress(
    g: Graph,
    dist: np.ndarray,
    seed: int,
    iterations: int = SMACOF_DEFAULT_ITERATIONS,
) -> Layout:
    layout, _ = stress_descent(g, dist, seed, iterations)
    return layout


def _maximal_matching(n: int, edges: list[tuple[int, int]], rng: np.random.Generator) -> dict[int, int]:
    """Greedy maximal matching over a shuffled edge order; vertex -> group id."""
    order = rng.permutation(len(edges))
    matched: dict[int, int] = {}
    group = 0
    for e in order:
        u, v = edges[e]
        if u not in matched and v not in matched:
            matched[u] = group
            matched[v] = group
            group += 1
    for v in range(n):
        if v not in matched:
            matched[v] = group
            group += 1
    return matched


def layout_multilevel(g: Graph, seed: int) -> Layout:
    """Coarsen by matching contraction, lay out the coarsest level with the
    spring embedder, then place children at parent positions and refine."""
    n = g.vertex_count
    if n <= COARSEN_STOP:
        base = layout_fr(g, seed, COARSE_ITERATIONS)
        return Layout(graph_id=g.id, engine=LayoutEngine.MULTILEVEL, positions=base.positions)

    rng = _rng(seed, LayoutEngine.MULTILEVEL)
    levels: list[np.ndarray] = []  # child index -> parent index maps
    sizes = [n]
    edge_levels: list[np.ndarray] = [np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)]
    cur_n, cur_edges = n, list(map(tuple, g.edges))
    while cur_n > COARSEN_STOP:
        mapping = _maximal_matching(cur_n, cur_edges, rng)
        new_n = max(mapping.values()) + 1
        if new_n == cur_n:
            break
        parent = np.array([mapping[v] for v in range(cur_n)], dtype=np.int64)
        coarse = sorted({(min(mapping[u], mapping[v]), max(mapping[u], mapping[v])) for u, v in cur_edges if mapping[u] != mapping[v]})
        levels.append(parent)
        cur_n, cur_edges = new_n, coarse
        sizes.append(cur_n)
        edge_levels.append(np.asarray(coarse, dtype=np.int64).reshape(-1, 2))

    coarse_init = _init_positions(cur_n, seed, LayoutEngine.MULTILEVEL)
    pos = _fr_iterate(coarse_init, edge_levels[-1], COARSE_ITERATIONS, FR_INITIAL_TEMP)
    for level in range(len(levels) - 1, -1, -1):
        parent = levels[level]
        child_n = len(parent)
        span = pos.max(axis=0) - pos.min(axis=0)
        diag = float(np.hypot(span[0], span[1])) or 1.0
        offsets = (rng.random((child_n, 2)) - 0.5) * 0.02 * diag
        pos = pos[parent] + offsets
        pos = _fr_iterate(pos, edge_levels[level], REFINE_ITERATIONS, REFINE_TEMP)
    return _finalize(g.id, LayoutEngine.MULTILEVEL, pos, n)


def layout_circular(g: Graph) -> Layout:
    n = g.vertex_count
    angles = 2.0 * math.pi * np.arange(n) / max(n, 1)
    pos = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return _finalize(g.id, LayoutEngine.CIRCULAR, pos, n)


def layout_random(g: Graph, seed: int) -> Layout:
    pos = _rng(seed, LayoutEngine.RANDOM).random((g.vertex_count, 2))
    return _finalize(g.id, LayoutEngine.RANDOM, pos, g.vertex_count)


def layout_suite(g: Graph, seed: int, dist: np.ndarray | None = None) -> list[Layout]:
    """One layout per engine, layout_index 0..4 in engine order."""
    if dist is None:
        from .graphs import shortest_path_matrix

        dist = shortest_path_matrix(g)
    layouts = [
        layout_fr(g, seed),
        layout_stress(g, dist, seed),
        layout_multilevel(g, seed),
        layout_circular(g),
        layout_random(g, seed),
    ]
    for i, layout in enumerate(layouts):
        layout.layout_index = i
    return layouts


def save_layout(layout: Layout, path) -> None:
    doc = {
        "graph_id": layout.graph_id,
        "engine": layout.engine.value,
        "layout_index": layout.layout_index,
        "positions": [[float(x), float(y)] for x, y in layout.positions],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_layout(path) -> Layout:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        pos = np.array(doc["positions"], dtype=np.float64).reshape(-1, 2)
        return Layout(
            graph_id=doc["graph_id"],
            engine=LayoutEngine(doc["engine"]),
            positions=pos,
            layout_index=int(doc["layout_index"]),
        )
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad layout document: {exc}", str(path))
