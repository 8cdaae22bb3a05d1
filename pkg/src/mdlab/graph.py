"""Binomial random graphs with eager and deferred edge exposure.

The eager generator samples all edges up front via geometric skipping over
the pair-index space (expected O(p*n^2) work). The deferred variant samples
a pair's indicator only when it is first queried and remembers the outcome,
so an analysis that touches few pairs pays only for those pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "DeferredGraph",
    "DegreeClassification",
    "generate_gnp",
    "reveal_edges",
    "degree_threshold",
    "classify_degrees",
    "check_small_degree_separation",
    "is_connected",
    "save_edge_list",
    "load_edge_list",
]


class Graph:
    """Undirected simple graph over nodes 0..n-1, stored in CSR form."""

    __slots__ = ("n", "edge_count", "_indptr", "_indices", "_eu", "_ev")

    def __init__(self, n: int, u: np.ndarray, v: np.ndarray):
        if n < 1:
            raise ValueError("node count must be >= 1")
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if u.shape != v.shape:
            raise ValueError("edge endpoint arrays must have equal length")
        if u.size and (np.any(u == v) or np.any(u < 0) or np.any(np.maximum(u, v) >= n)):
            raise ValueError("edges must join two distinct nodes in range")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        if lo.size:
            order = np.lexsort((hi, lo))
            lo, hi = lo[order], hi[order]
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if np.any(dup):
                raise ValueError("duplicate edges are not allowed")
        self.n = int(n)
        self.edge_count = int(lo.size)
        self._eu = lo
        self._ev = hi
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        deg = np.bincount(src, minlength=n)
        self._indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
        self._indices = dst

    @classmethod
    def from_edge_list(cls, n: int, edges) -> "Graph":
        if len(edges) == 0:
            return cls(n, np.empty(0, np.int64), np.empty(0, np.int64))
        arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls(n, arr[:, 0], arr[:, 1])

    def neighbors(self, v: int) -> np.ndarray:
        return self._indices[self._indptr[v]:self._indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self._indptr[v + 1] - self._indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self._indptr)

    @property
    def adjacency(self) -> list[np.ndarray]:
        return [self.neighbors(v) for v in range(self.n)]

    def edges(self) -> np.ndarray:
        """(m, 2) array of edges with u < v, sorted lexicographically."""
        return np.stack([self._eu, self._ev], axis=1) if self.edge_count else np.empty((0, 2), np.int64)

    def directed_edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge; used for whole-graph tallies."""
        return (np.concatenate([self._eu, self._ev]), np.concatenate([self._ev, self._eu]))

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.size and row[i] == v)


def _row_starts(n: int) -> np.ndarray:
    """Start offset of row i in the (i<j) pair enumeration, row-major."""
    i = np.arange(n, dtype=np.int64)
    return i * (n - 1) - (i * (i - 1)) // 2


def _pairs_from_linear(n: int, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    starts = _row_starts(n)
    i = np.searchsorted(starts, m, side="right") - 1
    j = m - starts[i] + i + 1
    return i, j


def generate_gnp(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Sample G(n, p): every unordered pair is an edge independently w.p. p.

    Uses geometric skipping over the linearised pair space, so the cost is
    proportional to the number of edges rather than the number of pairs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    total = n * (n - 1) // 2
    if p == 0.0 or total == 0:
        return Graph(n, np.empty(0, np.int64), np.empty(0, np.int64))
    if p == 1.0:
        m = np.arange(total, dtype=np.int64)
        u, v = _pairs_from_linear(n, m)
        return Graph(n, u, v)
    hits: list[np.ndarray] = []
    pos = -1  # last sampled pair index
    batch = max(1024, int(total * p * 1.2) + 16)
    while pos < total:
        skips = rng.geometric(p, size=batch).astype(np.int64)
        idx = pos + np.cumsum(skips)
        inside = idx[idx < total]
        hits.append(inside)
        if inside.size < idx.size:
            break
        pos = int(idx[-1])
    m = np.concatenate(hits) if hits else np.empty(0, np.int64)
    u, v = _pairs_from_linear(n, m)
    return Graph(n, u, v)


class DeferredGraph:
    """G(n, p) whose pair indicators are sampled on first query.

    A queried pair's indicator is stored and never re-drawn. The per-node
    `queried_degree` counters let an audit confirm, in O(n), that no revealed
    pair touches a node the caller still treats as untouched.
    """

    __slots__ = ("n", "p", "_rng", "_pairs", "_realized", "queried_degree",
                 "revealed_pairs", "revealed_edge_count")

    def __init__(self, n: int, p: float, rng: np.random.Generator):
        if n < 1:
            raise ValueError("n must be >= 1")
        if not (0.0 <= p <= 1.0):
            raise ValueError("p must lie in [0, 1]")
        self.n = int(n)
        self.p = float(p)
        self._rng = rng
        self._pairs: dict[int, bool] = {}
        self._realized: list[list[int]] = [[] for _ in range(n)]
        self.queried_degree = np.zeros(n, dtype=np.int64)
        self.revealed_pairs = 0
        self.revealed_edge_count = 0

    def _key(self, u: int, w: int) -> int:
        return u * self.n + w if u < w else w * self.n + u

    def is_revealed(self, u: int, w: int) -> bool:
        return self._key(u, w) in self._pairs

    def reveal_edges(self, v: int, targets) -> np.ndarray:
        """Adjacent subset of `targets`; samples any not-yet-queried pair.

        Pairs already queried keep their stored indicator. `targets` must be
        a set of nodes distinct from `v`.
        """
        targets = np.asarray(targets, dtype=np.int64)
        if targets.size == 0:
            return targets
        if np.any(targets == v):
            raise ValueError("targets must not contain the source node")
        if np.unique(targets).size != targets.size:
            raise ValueError("targets must be distinct")
        pairs = self._pairs
        n = self.n
        keys = np.where(targets < v, targets * n + v, v * n + targets).tolist()
        fresh = [i for i, k in enumerate(keys) if k not in pairs]
        all_fresh = len(fresh) == len(keys)
        draws = None
        if fresh:
            draws = self._rng.random(len(fresh)) < self.p
            tlist = targets.tolist()
            rv = self._realized[v]
            hits = 0
            for j, i in enumerate(fresh):
                u = tlist[i]
                if draws[j]:
                    pairs[keys[i]] = True
                    rv.append(u)
                    self._realized[u].append(v)
                    hits += 1
                else:
                    pairs[keys[i]] = False
            fresh_targets = targets[fresh] if not all_fresh else targets
            self.queried_degree[fresh_targets] += 1
            self.queried_degree[v] += len(fresh)
            self.revealed_pairs += len(fresh)
            self.revealed_edge_count += hits
        if all_fresh:
            return targets[draws]
        mask = np.fromiter((pairs[k] for k in keys), dtype=bool, count=len(keys))
        return targets[mask]

    def realized_neighbors(self, v: int) -> np.ndarray:
        """Neighbours of v among pairs revealed so far."""
        return np.asarray(self._realized[v], dtype=np.int64)

    def revealed_pair_list(self) -> list[tuple[int, int]]:
        n = self.n
        return [(k // n, k % n) for k in self._pairs]

    def complete(self) -> Graph:
        """Draw every remaining pair and return the eager graph.

        Stored indicators are kept; only unqueried pairs consume randomness.
        """
        n = self.n
        total = n * (n - 1) // 2
        if self.p == 1.0:
            m = np.arange(total, dtype=np.int64)
            cu, cv = _pairs_from_linear(n, m)
        elif self.p == 0.0:
            cu = cv = np.empty(0, np.int64)
        else:
            hits: list[np.ndarray] = []
            pos = -1
            batch = max(1024, int(total * self.p * 1.2) + 16)
            while pos < total:
                skips = self._rng.geometric(self.p, size=batch).astype(np.int64)
                idx = pos + np.cumsum(skips)
                inside = idx[idx < total]
                hits.append(inside)
                if inside.size < idx.size:
                    break
                pos = int(idx[-1])
            m = np.concatenate(hits) if hits else np.empty(0, np.int64)
            cu, cv = _pairs_from_linear(n, m)
        # drop candidates whose pair was already queried, then add stored edges
        if self._pairs:
            keep = np.fromiter(
                (int(a * n + b) not in self._pairs for a, b in zip(cu, cv)),
                dtype=bool, count=cu.size,
            )
            cu, cv = cu[keep], cv[keep]
            su = np.array([k // n for k, present in self._pairs.items() if present], dtype=np.int64)
            sv = np.array([k % n for k, present in self._pairs.items() if present], dtype=np.int64)
            cu = np.concatenate([cu, su])
            cv = np.concatenate([cv, sv])
        return Graph(n, cu, cv)

    def reveal_all(self) -> Graph:
        """Query every pair through the deferred path and return the result."""
        for v in range(self.n - 1):
            self.reveal_edges(v, np.arange(v + 1, self.n, dtype=np.int64))
        eu, ev = [], []
        for v in range(self.n):
            for w in self._realized[v]:
                if v < w:
                    eu.append(v)
                    ev.append(w)
        return Graph(self.n, np.asarray(eu, np.int64), np.asarray(ev, np.int64))


def reveal_edges(dg: DeferredGraph, v: int, targets) -> np.ndarray:
    """Module-level alias of DeferredGraph.reveal_edges."""
    return dg.reveal_edges(v, targets)


def degree_threshold(n: int) -> float:
    """Small/large degree cutoff 5*ln(n)/sqrt(ln(ln(n))), natural logs."""
    if n < 16:
        raise ValueError("n must be >= 16 for a well-defined threshold")
    return 5.0 * math.log(n) / math.sqrt(math.log(math.log(n)))


@dataclass
class DegreeClassification:
    """Partition of nodes into small (degree <= threshold) and large."""

    threshold: float
    small_nodes: frozenset[int]
    large_nodes: frozenset[int]
    small_mask: np.ndarray = field(repr=False, default=None)


def classify_degrees(g: Graph, threshold: float) -> DegreeClassification:
    mask = g.degrees() <= threshold
    small = frozenset(np.flatnonzero(mask).tolist())
    large = frozenset(range(g.n)) - small
    return DegreeClassification(threshold=threshold, small_nodes=small, large_nodes=large, small_mask=mask)


def check_small_degree_separation(g: Graph, threshold: float) -> bool:
    """True iff no two distinct small-degree nodes are at distance 1 or 2."""
    small = g.degrees() <= threshold
    if small.sum() < 2:
        return True
    src, dst = g.directed_edge_arrays()
    if src.size == 0:
        return True
    if np.any(small[src] & small[dst]):
        return False
    small_nb = np.bincount(src, weights=small[dst].astype(np.float64), minlength=g.n)
    return not np.any(small_nb >= 2)


def is_connected(g: Graph) -> bool:
    if g.n == 1:
        return True
    if g.edge_count < g.n - 1:
        return False
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    frontier = [0]
    reached = 1
    while frontier:
        nxt = []
        for v in frontier:
            for w in g.neighbors(v):
                if not seen[w]:
                    seen[w] = True
                    reached += 1
                    nxt.append(int(w))
        frontier = nxt
    return reached == g.n


def save_edge_list(g: Graph, path) -> None:
    """Plain text dump: first line "n m", then m ascending lines "u v"."""
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.edge_count}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


def load_edge_list(path) -> Graph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("edge list header must be 'n m'")
        n, m = int(header[0]), int(header[1])
        pairs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b = line.split()
            pairs.append((int(a), int(b)))
    if len(pairs) != m:
        raise ValueError(f"edge list declares {m} edges but contains {len(pairs)}")
    return Graph.from_edge_list(n, pairs)
