"""Undirected weighted graphs: shortest paths, hop diameter, tree flows.

A Graph stores each undirected edge once as (i, j, w) with i < j, plus a
directed-arc view (both orientations of every edge) used by the flow solver:
parallel arrays sorted by (src, dst) with a reverse-arc index and per-vertex
segment offsets, so per-sweep reductions can run vectorized.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

__all__ = [
    "Graph",
    "shortest_paths",
    "geodesic_matrix",
    "hop_diameter",
    "spanning_tree_flow",
]


class Graph:
    """Connected undirected graph with positive edge lengths.

    Args:
      n: vertex count, vertices are 0..n-1.
      edges: iterable of (i, j, w); endpoints in any order, each undirected
        edge given once, w finite and > 0.

    Raises:
      ValueError: on self-loops, duplicate edges, bad weights, out-of-range
        endpoints, or a disconnected graph.
    """

    def __init__(self, n: int, edges):
        if n < 1:
            raise ValueError(f"vertex count must be >= 1, got {n}")
        canon = []
        seen = set()
        for i, j, w in edges:
            i, j, w = int(i), int(j), float(w)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i},{j}) out of range for n={n}")
            if not (np.isfinite(w) and w > 0.0):
                raise ValueError(f"edge ({i},{j}) needs finite positive weight, got {w}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
            canon.append((i, j, w))
        canon.sort()
        self.n = n
        self.edges = tuple(canon)

        self.neighbors: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for i, j, w in self.edges:
            self.neighbors[i].append((j, w))
            self.neighbors[j].append((i, w))
        for adj in self.neighbors:
            adj.sort()

        if n > 1 and not self._connected():
            raise ValueError("graph is not connected")

        self._build_arcs()

    def _connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for w, _ in self.neighbors[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == self.n

    def _build_arcs(self):
        # Directed view: both orientations of each stored edge, sorted by
        # (src, dst). arc_rev[e] is the opposite orientation of arc e.
        arcs = []
        for i, j, w in self.edges:
            arcs.append((i, j, w))
            arcs.append((j, i, w))
        arcs.sort()
        self.p = len(arcs)
        self.arc_src = np.array([a[0] for a in arcs], dtype=np.intp)
        self.arc_dst = np.array([a[1] for a in arcs], dtype=np.intp)
        self.arc_w = np.array([a[2] for a in arcs], dtype=float)
        index = {(a[0], a[1]): e for e, a in enumerate(arcs)}
        self.arc_index = index
        self.arc_rev = np.array(
            [index[(d, s)] for s, d in zip(self.arc_src, self.arc_dst)],
            dtype=np.intp,
        )
        # Per-vertex offsets into the src-sorted arc arrays. Every vertex of
        # a connected graph with n >= 2 has at least one outgoing arc.
        starts = np.searchsorted(self.arc_src, np.arange(self.n))
        self.arc_seg_starts = starts.astype(np.intp)

    def __repr__(self):
        return f"Graph(n={self.n}, edges={len(self.edges)})"


def shortest_paths(g: Graph, source: int) -> np.ndarray:
    """Single-source shortest-path distances under the edge lengths."""
    if not (0 <= source < g.n):
        raise ValueError(f"source {source} out of range")
    dist = np.full(g.n, np.inf)
    dist[source] = 0.0
    done = np.zeros(g.n, dtype=bool)
    heap = [(0.0, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for w, length in g.neighbors[v]:
            nd = d + length
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def geodesic_matrix(g: Graph) -> np.ndarray:
    """All-pairs shortest-path matrix (symmetric, zero diagonal)."""
    return np.stack([shortest_paths(g, s) for s in range(g.n)])


def _hops_from(g: Graph, source: int) -> np.ndarray:
    hops = np.full(g.n, -1, dtype=int)
    hops[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w, _ in g.neighbors[v]:
            if hops[w] < 0:
                hops[w] = hops[v] + 1
                queue.append(w)
    return hops


def hop_diameter(g: Graph) -> int:
    """Largest over vertex pairs of the minimum edge count between them."""
    return max(int(_hops_from(g, s).max()) for s in range(g.n))


def spanning_tree_flow(g: Graph, b1, b2):
    """Feasible nonnegative arc flow with divergence b1 - b2 on a BFS tree.

    The tree is grown from vertex 0 with neighbors visited in ascending id
    order, so the result is deterministic. Each tree edge carries the net
    imbalance of the subtree hanging below it, placed on whichever directed
    orientation keeps the flow entry nonnegative.

    Raises:
      ValueError: if the marginals are unbalanced beyond 1e-12.
    """
    from .flowsinkhorn import EdgeFlow

    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    if b1.shape != (g.n,) or b2.shape != (g.n,):
        raise ValueError("marginals must have one entry per vertex")
    imbalance = float(b1.sum() - b2.sum())
    if abs(imbalance) > 1e-12:
        raise ValueError(f"marginals differ in total mass by {imbalance:.3e}")

    parent = np.full(g.n, -1, dtype=int)
    order = [0]
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w, _ in g.neighbors[v]:
            if w not in seen:
                seen.add(w)
                parent[w] = v
                order.append(w)
                queue.append(w)

    # Subtree surplus of (b1 - b2), accumulated leaves-first.
    surplus = (b1 - b2).copy()
    values = np.zeros(g.p)
    for v in reversed(order[1:]):
        u = parent[v]
        s = surplus[v]
        # div contribution: an arc (src=u, dst=v) adds +f to div at v.
        if s >= 0.0:
            values[g.arc_index[(u, v)]] += s
        else:
            values[g.arc_index[(v, u)]] += -s
        surplus[u] += s
    return EdgeFlow(g, values)
