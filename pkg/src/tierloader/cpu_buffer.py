"""Constant CPU-side feature buffer.

Nodes that neighborhood sampling touches most often are, to first order,
the ones a random walk along reversed edges keeps landing on.  Reverse
PageRank scores every node once, the top scorers by budget are pinned into
host memory, and the pinned set never changes during a run, so lookups are
a plain dict probe and the buffer needs no coherence traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import FeatureStore, GraphCsc, NodeId


@dataclass(frozen=True)
class PageRankResult:
    scores: np.ndarray  # float64, sums to 1 over all nodes
    converged: bool
    iterations: int


def reverse_pagerank(g: GraphCsc, damping: float = 0.85, tol: float = 1e-8,
                     max_iter: int = 200,
                     edge_weights: np.ndarray | None = None) -> PageRankResult:
    """Power iteration on the edge-reversed graph.

    Mass flows from each node to its in-neighbors, split by edge weight
    (uniform when ``edge_weights`` is None; the array aligns with the CSC
    ``indices`` order).  Nodes with no in-edges are dangling in the
    reversed graph; their mass is spread uniformly.  Iteration stops when
    the L1 step delta drops below ``tol``; if ``max_iter`` passes first,
    ``converged`` is False and the last iterate is returned.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must be in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = g.num_nodes
    if n == 0:
        return PageRankResult(np.empty(0), True, 0)

    indices = g.indices.astype(np.int64)
    deg = np.diff(g.indptr.astype(np.int64))
    # dst_of_edge[e] = the CSC segment edge e lives in
    dst_of_edge = np.repeat(np.arange(n, dtype=np.int64), deg)

    if edge_weights is None:
        weights = np.ones(g.num_edges)
    else:
        weights = np.asarray(edge_weights, dtype=np.float64)
        if weights.shape != (g.num_edges,):
            raise ValueError("edge_weights must have one entry per edge")
        if np.any(weights < 0):
            raise ValueError("edge_weights must be non-negative")
    out_weight = np.bincount(dst_of_edge, weights=weights, minlength=n)
    dangling = out_weight == 0
    safe_out = np.where(dangling, 1.0, out_weight)

    score = np.full(n, 1.0 / n)
    base = (1.0 - damping) / n
    for it in range(1, max_iter + 1):
        per_edge = (score / safe_out)[dst_of_edge] * weights
        new = np.bincount(indices, weights=per_edge, minlength=n).astype(np.float64)
        new *= damping
        new += base + damping * score[dangling].sum() / n
        delta = float(np.abs(new - score).sum())
        score = new
        if delta < tol:
            return PageRankResult(score, True, it)
    return PageRankResult(score, False, max_iter)


@dataclass(frozen=True)
class ConstantBuffer:
    """Immutable pinned feature rows, highest-scoring nodes first."""

    node_ids: np.ndarray          # pinned nodes in pin order
    rows: np.ndarray              # (k, dim) float32, aligned with node_ids
    budget_bytes: int
    _offsets: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.node_ids)

    @property
    def used_bytes(self) -> int:
        return self.rows.nbytes

    def __contains__(self, node: NodeId) -> bool:
        return node in self._offsets

    def lookup(self, node: NodeId) -> np.ndarray | None:
        """Pinned feature row, or None when the node is not resident."""
        off = self._offsets.get(node)
        return None if off is None else self.rows[off]


def top_k_nodes(scores: np.ndarray, k: int) -> np.ndarray:
    """The k best-scoring nodes; score ties break toward the lower node id."""
    n = len(scores)
    k = min(k, n)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(n), -scores))
    return order[:k].astype(np.int64)


def build_constant_buffer(scores: np.ndarray, features: FeatureStore,
                          budget_bytes: int,
                          pinned: np.ndarray | None = None) -> ConstantBuffer:
    """Pin as many top-scoring rows as the byte budget allows.

    ``pinned`` overrides the score ranking with an explicit node list (its
    order is kept); the budget still caps how many of them fit.
    """
    if budget_bytes < 0:
        raise ValueError("budget_bytes must be non-negative")
    k = budget_bytes // features.row_bytes
    if pinned is not None:
        chosen = np.asarray(pinned, dtype=np.int64)
        if len(np.unique(chosen)) != len(chosen):
            raise ValueError("pinned list contains duplicates")
        if len(chosen) and (chosen.min() < 0 or chosen.max() >= features.num_nodes):
            raise ValueError("pinned list names nodes outside the feature table")
        chosen = chosen[:k]
    else:
        if len(scores) != features.num_nodes:
            raise ValueError("scores must cover every node in the feature table")
        chosen = top_k_nodes(np.asarray(scores, dtype=np.float64), k)
    rows = features.rows(chosen).copy() if len(chosen) else \
        np.empty((0, features.dim), dtype=features.table.dtype)
    offsets = {int(node): i for i, node in enumerate(chosen)}
    return ConstantBuffer(node_ids=chosen, rows=rows,
                          budget_bytes=budget_bytes, _offsets=offsets)
