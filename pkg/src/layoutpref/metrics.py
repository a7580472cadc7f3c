"""Layout quality metrics: straight-line edge crossings, scale-optimized
distance stress, and a proximity-graph shape score.

Crossing counts use float orientation predicates with a conservative error
filter; pairs too close to degeneracy are re-decided in exact rational
arithmetic, so counts never depend on epsilon luck.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import GeometryError, ParseError, StructuralError, ValidationError
from .graphs import Graph
from .layouts import Layout

_ORIENT_REL_ERR = 1e-12  # conservative float filter; below this go exact


class ProximityGraph(str, Enum):
    GABRIEL = "gabriel"
    RNG = "rng"


@dataclass(frozen=True)
class QualityMetrics:
    """The three per-layout quality scores.

    shape_score in [0,1], higher is better; crossing_count >= 0 and
    stress_score >= 0, lower is better.
    """

    graph_id: str
    layout_index: int
    shape_score: float
    crossing_count: int
    stress_score: float


def _check_layout(g: Graph, layout: Layout) -> np.ndarray:
    pos = np.asarray(layout.positions, dtype=np.float64)
    if pos.shape != (g.vertex_count, 2):
        raise StructuralError(
            f"layout {layout.graph_id}[{layout.layout_index}] has {pos.shape} positions for |V|={g.vertex_count}"
        )
    if len(np.unique(pos, axis=0)) != len(pos):
        raise GeometryError(f"layout {layout.graph_id}[{layout.layout_index}] has coincident vertices")
    return pos


def _sign_exact(a, b, c) -> int:
    """Exact orientation sign of (a, b, c); floats convert losslessly."""
    ax, ay = Fraction(float(a[0])), Fraction(float(a[1]))
    bx, by = Fraction(float(b[0])), Fraction(float(b[1]))
    cx, cy = Fraction(float(c[0])), Fraction(float(c[1]))
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (v > 0) - (v < 0)


def _collinear_on_segment(a, b, c) -> bool:
    """With c known collinear to segment ab: is c within the closed box?"""
    return (
        min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
    )


def _segments_intersect_exact(a, b, c, d) -> bool:
    """Closed-segment intersection for segments sharing no endpoint."""
    s1 = _sign_exact(a, b, c)
    s2 = _sign_exact(a, b, d)
    s3 = _sign_exact(c, d, a)
    s4 = _sign_exact(c, d, b)
    if s1 * s2 < 0 and s3 * s4 < 0:
        return True
    if s1 == 0 and _collinear_on_segment(a, b, c):
        return True
    if s2 == 0 and _collinear_on_segment(a, b, d):
        return True
    if s3 == 0 and _collinear_on_segment(c, d, a):
        return True
    if s4 == 0 and _collinear_on_segment(c, d, b):
        return True
    return False


def _orient_with_bound(ax, ay, bx, by, cx, cy):
    """Float orientation value plus an upper bound on its rounding error."""
    t1 = (bx - ax) * (cy - ay)
    t2 = (by - ay) * (cx - ax)
    det = t1 - t2
    bound = _ORIENT_REL_ERR * (np.abs(t1) + np.abs(t2))
    return det, bound


def count_crossings(g: Graph, layout: Layout) -> int:
    """Unordered edge pairs that share no endpoint yet properly intersect as
    closed segments; a collinear overlap counts once for the pair."""
    pos = _check_layout(g, layout)
    m = len(g.edges)
    if m < 2:
        return 0
    E = np.asarray(g.edges, dtype=np.int64)
    A = pos[E[:, 0]]
    B = pos[E[:, 1]]
    lo = np.minimum(A, B)
    hi = np.maximum(A, B)

    total = 0
    block = 256
    for i0 in range(0, m, block):
        i1 = min(i0 + block, m)
        rows = np.arange(i0, i1)
        # columns strictly above the row index
        share = (
            (E[rows, 0:1] == E[None, :, 0])
            | (E[rows, 0:1] == E[None, :, 1])
            | (E[rows, 1:2] == E[None, :, 0])
            | (E[rows, 1:2] == E[None, :, 1])
        )
        upper = np.arange(m)[None, :] > rows[:, None]
        bbox = (
            (lo[rows, None, 0] <= hi[None, :, 0])
            & (lo[None, :, 0] <= hi[rows, None, 0])
            & (lo[rows, None, 1] <= hi[None, :, 1])
            & (lo[None, :, 1] <= hi[rows, None, 1])
        )
        cand = upper & ~share & bbox
        ridx, cidx = np.nonzero(cand)
        if len(ridx) == 0:
            continue
        gi = rows[ridx]
        gj = cidx
        ax, ay = A[gi, 0], A[gi, 1]
        bx, by = B[gi, 0], B[gi, 1]
        cx, cy = A[gj, 0], A[gj, 1]
        dx, dy = B[gj, 0], B[gj, 1]
        d1, e1 = _orient_with_bound(ax, ay, bx, by, cx, cy)
        d2, e2 = _orient_with_bound(ax, ay, bx, by, dx, dy)
        d3, e3 = _orient_with_bound(cx, cy, dx, dy, ax, ay)
        d4, e4 = _orient_with_bound(cx, cy, dx, dy, bx, by)
        sure = (np.abs(d1) > e1) & (np.abs(d2) > e2) & (np.abs(d3) > e3) & (np.abs(d4) > e4)
        crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
        total += int(np.count_nonzero(sure & crossing))
        for t in np.nonzero(~sure)[0]:
            i, j = gi[t], gj[t]
            if _segments_intersect_exact(pos[E[i, 0]], pos[E[i, 1]], pos[E[j, 0]], pos[E[j, 1]]):
                total += 1
    return total


def stress(g: Graph, dist: np.ndarray, layout: Layout) -> float:
    """Scale-optimized stress, normalized by the pair count.

    The layout is scaled by the closed-form optimum a* before comparing drawn
    distances to hop distances:
        sigma = sum over i<j of (a* ||p_i - p_j|| - d_ij)^2 / d_ij^2
        a*    = sum(||p_i - p_j|| / d_ij) / sum(||p_i - p_j||^2 / d_ij^2)
    which makes the value invariant under translation, rotation, and uniform
    scaling of the drawing.
    """
    pos = np.asarray(layout.positions, dtype=np.float64)
    n = g.vertex_count
    if dist.shape != (n, n):
        raise StructuralError(f"distance matrix shape {dist.shape} does not match |V|={n}")
    if pos.shape != (n, 2):
        raise StructuralError(f"layout has {pos.shape} positions for |V|={n}")
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, k=1)
    d = dist.astype(np.float64)[iu]
    delta = pos[iu[0]] - pos[iu[1]]
    eu = np.sqrt((delta**2).sum(-1))
    den = float((eu**2 / d**2).sum())
    if den <= 0.0:
        raise GeometryError("degenerate layout: all vertices coincide")
    alpha = float((eu / d).sum()) / den
    sigma = float((((alpha * eu) - d) ** 2 / d**2).sum())
    return sigma / len(d)


def _gabriel_blocked_exact(pos: np.ndarray, u: int, v: int) -> bool:
    """Does any third point lie strictly inside the closed disk on uv?"""
    ux, uy = Fraction(float(pos[u, 0])), Fraction(float(pos[u, 1]))
    vx, vy = Fraction(float(pos[v, 0])), Fraction(float(pos[v, 1]))
    diam2 = (ux - vx) ** 2 + (uy - vy) ** 2
    for w in range(len(pos)):
        if w == u or w == v:
            continue
        wx, wy = Fraction(float(pos[w, 0])), Fraction(float(pos[w, 1]))
        if (2 * wx - ux - vx) ** 2 + (2 * wy - uy - vy) ** 2 < diam2:
            return True
    return False


def gabriel_adjacency(pos: np.ndarray) -> np.ndarray:
    """Boolean adjacency of the Gabriel graph on the given points.

    (u, v) is an edge iff no third point lies strictly inside the closed disk
    with diameter uv. Near-boundary witnesses are re-decided exactly.
    """
    n = len(pos)
    adj = np.zeros((n, n), dtype=bool)
    if n < 2:
        return adj
    for u in range(n - 1):
        vs = np.arange(u + 1, n)
        mids = (pos[u] + pos[vs]) / 2.0  # (k, 2)
        r2 = ((pos[u] - pos[vs]) ** 2).sum(-1) / 4.0  # (k,)
        # squared distance from every witness w to every midpoint
        d2 = ((pos[:, None, :] - mids[None, :, :]) ** 2).sum(-1)  # (n, k)
        s = d2 - r2[None, :]
        tol = 1e-9 * (d2 + r2[None, :])
        s[u, :] = np.inf
        s[vs, np.arange(len(vs))] = np.inf
        blocked = (s < -tol).any(axis=0)
        uncertain = (~blocked) & (np.abs(s) <= tol).any(axis=0)
        for t in np.nonzero(uncertain)[0]:
            blocked[t] = _gabriel_blocked_exact(pos, u, int(vs[t]))
        adj[u, vs] = ~blocked
        adj[vs, u] = ~blocked
    return adj


def rng_adjacency(pos: np.ndarray) -> np.ndarray:
    """Relative neighborhood graph (experimental alternative; float only)."""
    n = len(pos)
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    adj = np.zeros((n, n), dtype=bool)
    for u in range(n - 1):
        for v in range(u + 1, n):
            lune = np.maximum(d2[u], d2[v]) < d2[u, v]
            lune[u] = lune[v] = False
            if not lune.any():
                adj[u, v] = adj[v, u] = True
    return adj


def shape_metric(g: Graph, layout: Layout, proximity: ProximityGraph = ProximityGraph.GABRIEL) -> float:
    """Mean per-vertex Jaccard similarity between graph neighborhoods and
    proximity-graph neighborhoods of the drawing; 1.0 means they match."""
    pos = _check_layout(g, layout)
    if proximity == ProximityGraph.GABRIEL:
        prox = gabriel_adjacency(pos)
    else:
        prox = rng_adjacency(pos)
    n = g.vertex_count
    adj = np.zeros((n, n), dtype=bool)
    for u, v in g.edges:
        adj[u, v] = adj[v, u] = True
    inter = (adj & prox).sum(axis=1)
    union = (adj | prox).sum(axis=1)
    scores = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return float(scores.mean())


def metrics_for(g: Graph, dist: np.ndarray, layout: Layout) -> QualityMetrics:
    return QualityMetrics(
        graph_id=g.id,
        layout_index=layout.layout_index,
        shape_score=shape_metric(g, layout),
        crossing_count=count_crossings(g, layout),
        stress_score=stress(g, dist, layout),
    )


def save_metrics(records: list[QualityMetrics], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec)) + "\n")


def load_metrics(path) -> list[QualityMetrics]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                out.append(
                    QualityMetrics(
                        graph_id=doc["graph_id"],
                        layout_index=int(doc["layout_index"]),
                        shape_score=float(doc["shape_score"]),
                        crossing_count=int(doc["crossing_count"]),
                        stress_score=float(doc["stress_score"]),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad metrics record: {exc}", str(path), lineno)
    return out
