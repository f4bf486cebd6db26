"""Layered uniform neighborhood sampling.

Each layer draws up to ``fanout`` in-neighbors per frontier node, without
replacement, via a partial Fisher-Yates shuffle of the node's neighbor
slice.  The next frontier is the deduplicated set of sources drawn in the
current layer; a node that reappears in a later frontier is expanded again.
All randomness flows through one ``numpy.random.Generator``, so a sampler
seed fixes the entire sample sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .graph import GraphCsc

Fanouts = Sequence[int]


def check_fanouts(fanouts: Fanouts) -> list[int]:
    fans = [int(f) for f in fanouts]
    if not fans:
        raise ValueError("fanouts must be non-empty")
    if any(f < 1 for f in fans):
        raise ValueError("every fanout must be >= 1")
    return fans


@dataclass(frozen=True)
class MiniBatch:
    """One sampled minibatch.

    ``layers[l]`` holds the (src, dst) edges drawn at hop l as an (E_l, 2)
    array; dst is the frontier node, src the sampled in-neighbor.
    ``unique_nodes`` is the ascending dedup of seeds and all endpoints.
    """

    seeds: np.ndarray
    layers: list[np.ndarray]
    unique_nodes: np.ndarray

    @property
    def num_sampled_edges(self) -> int:
        return sum(len(l) for l in self.layers)


def sample_layer(g: GraphCsc, frontier, fanout: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Draw up to ``fanout`` distinct in-neighbors for each frontier node.

    Returns an (E, 2) array of (src, dst) pairs, grouped by frontier order.
    Nodes with degree <= fanout contribute their whole neighbor slice.
    """
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    frontier = np.asarray(frontier, dtype=np.int64)
    srcs: list[np.ndarray] = []
    dsts: list[np.ndarray] = []
    indptr = g.indptr
    indices = g.indices
    for v in frontier:
        lo = int(indptr[v])
        hi = int(indptr[v + 1])
        deg = hi - lo
        if deg == 0:
            continue
        if deg <= fanout:
            picked = indices[lo:hi].astype(np.int64)
        else:
            pool = indices[lo:hi].astype(np.int64)
            # partial Fisher-Yates: settle the first `fanout` positions
            draws = rng.random(fanout)
            for i in range(fanout):
                j = i + int(draws[i] * (deg - i))
                pool[i], pool[j] = pool[j], pool[i]
            picked = pool[:fanout]
        srcs.append(picked)
        dsts.append(np.full(len(picked), v, dtype=np.int64))
    if not srcs:
        return np.empty((0, 2), dtype=np.int64)
    return np.column_stack((np.concatenate(srcs), np.concatenate(dsts)))


def sample_subgraph(g: GraphCsc, seeds, fanouts: Fanouts,
                    rng: np.random.Generator) -> MiniBatch:
    """k-hop sample starting from ``seeds``, one layer per fanout entry."""
    fans = check_fanouts(fanouts)
    seeds = np.asarray(seeds, dtype=np.int64)
    if len(seeds) == 0:
        raise ValueError("seeds must be non-empty")
    if seeds.min() < 0 or seeds.max() >= g.num_nodes:
        bad = int(seeds[(seeds < 0) | (seeds >= g.num_nodes)][0])
        raise ValueError(f"seed node {bad} out of range (num_nodes={g.num_nodes})")

    layers: list[np.ndarray] = []
    frontier = np.unique(seeds)
    for fanout in fans:
        edges = sample_layer(g, frontier, fanout, rng)
        layers.append(edges)
        frontier = np.unique(edges[:, 0]) if len(edges) else np.empty(0, np.int64)
        if len(frontier) == 0:
            # remaining layers sample nothing; keep shapes explicit
            for _ in range(len(layers), len(fans)):
                layers.append(np.empty((0, 2), dtype=np.int64))
            break

    parts = [seeds] + [l.reshape(-1) for l in layers]
    unique_nodes = np.unique(np.concatenate(parts))
    return MiniBatch(seeds=seeds, layers=layers, unique_nodes=unique_nodes)


def batch_iterator(seed_set, batch_size: int, shuffle: bool = False,
                   rng: np.random.Generator | None = None) -> Iterator[np.ndarray]:
    """Partition ``seed_set`` into consecutive batches of ``batch_size``.

    The final batch may be short.  With ``shuffle`` the set is permuted
    first, which requires ``rng``.  An empty seed set yields nothing.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    seeds = np.asarray(seed_set, dtype=np.int64)
    if shuffle:
        if rng is None:
            raise ValueError("shuffle requires an rng")
        seeds = rng.permutation(seeds)
    for start in range(0, len(seeds), batch_size):
        yield seeds[start:start + batch_size]
