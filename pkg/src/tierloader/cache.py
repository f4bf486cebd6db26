"""Software feature cache with window-buffered eviction protection.

The cache is metadata-only: it decides hits, insertions, evictions, and
bypasses, while row payloads live with the caller.  Each line is sized to
one feature row padded to page granularity and is in one of three states:

* Empty       - never filled; lowest-indexed empty line is filled first.
* SafeToEvict - filled, no predicted reuse; eviction candidates.
* InUse       - filled and named by the lookahead window; never evicted.

A window of the next W iterations' node lists drives the protection.
``window_update`` adds, for every node of the current batch, the number of
future window lists naming it to that node's reuse counter (counters are
kept even for nodes not yet resident).  Every access of a node consumes one
predicted reuse; a counter reaching zero drops the line back to
SafeToEvict and the counter entry is purged.  Victims are drawn uniformly
at random from the SafeToEvict lines: the ascending-slot candidate list is
indexed by one draw from the eviction RNG, which makes replay exact.  When
every line is InUse an insertion gives up and the access is served without
caching (a bypass).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .graph import NodeId


class CacheProtocolError(Exception):
    """The window-buffer discipline was violated by the caller."""


class LineState(IntEnum):
    EMPTY = 0
    SAFE_TO_EVICT = 1
    IN_USE = 2


class AccessKind(Enum):
    HIT = "hit"
    MISS = "miss"
    BYPASS = "bypass"


@dataclass(frozen=True)
class AccessResult:
    kind: AccessKind
    slot: int | None = None       # line serving/holding the node, None on bypass
    evicted: NodeId | None = None


@dataclass(frozen=True)
class CacheStats:
    hits: int
    misses: int
    bypasses: int
    evictions: int
    hit_ratio: float


class WindowBuffer:
    """Ring of up to ``depth`` future per-iteration unique-node lists."""

    def __init__(self, depth: int):
        if depth < 0:
            raise ValueError("depth must be non-negative")
        self.depth = depth
        self.lists: deque[np.ndarray] = deque()

    def __len__(self) -> int:
        return len(self.lists)

    def push_iteration(self, nodes) -> None:
        """Append one future iteration's deduplicated, ascending node list."""
        if len(self.lists) >= self.depth:
            raise CacheProtocolError(
                f"window already holds {self.depth} iterations")
        arr = np.asarray(nodes, dtype=np.int64)
        if len(arr) and np.any(np.diff(arr) <= 0):
            raise CacheProtocolError("iteration list must be ascending and unique")
        self.lists.append(arr)

    def pop_iteration(self) -> np.ndarray:
        if not self.lists:
            raise CacheProtocolError("window is empty")
        return self.lists.popleft()


class CacheState:
    """Mutable cache metadata; see the module docstring for semantics."""

    def __init__(self, capacity_lines: int, line_bytes: int, eviction_seed: int = 0):
        if capacity_lines < 0:
            raise ValueError("capacity_lines must be non-negative")
        if line_bytes < 1:
            raise ValueError("line_bytes must be positive")
        self.capacity_lines = capacity_lines
        self.line_bytes = line_bytes
        self.resident: dict[NodeId, int] = {}
        self.slot_node = np.full(capacity_lines, -1, dtype=np.int64)
        self.line_state = np.full(capacity_lines, LineState.EMPTY, dtype=np.int8)
        self.reuse_counter: dict[NodeId, int] = {}
        self.rng = np.random.default_rng(eviction_seed)
        self.hits = 0
        self.misses = 0
        self.bypasses = 0
        self.evictions = 0
        self.total_increments = 0
        self.total_decrements = 0
        self._fill_ptr = 0
        self._safe_mask = np.zeros(capacity_lines, dtype=bool)
        self._safe_count = 0

    # -- internal state moves ------------------------------------------------

    def _consume_reuse(self, node: NodeId) -> int:
        """One access consumes one predicted reuse; returns the new count."""
        count = self.reuse_counter.get(node, 0)
        if count > 0:
            count -= 1
            self.total_decrements += 1
            if count == 0:
                del self.reuse_counter[node]
            else:
                self.reuse_counter[node] = count
        return count

    def _place(self, node: NodeId, slot: int, count: int) -> None:
        self.resident[node] = slot
        self.slot_node[slot] = node
        if count > 0:
            self.line_state[slot] = LineState.IN_USE
            self._safe_mask[slot] = False
        else:
            self.line_state[slot] = LineState.SAFE_TO_EVICT
            self._safe_mask[slot] = True
            self._safe_count += 1

    def access(self, node: NodeId) -> AccessResult:
        """Serve one node; classify as hit, miss (inserted), or bypass."""
        slot = self.resident.get(node)
        if slot is not None:
            self.hits += 1
            count = self._consume_reuse(node)
            if count == 0 and self.line_state[slot] == LineState.IN_USE:
                self.line_state[slot] = LineState.SAFE_TO_EVICT
                self._safe_mask[slot] = True
                self._safe_count += 1
            return AccessResult(AccessKind.HIT, slot=slot)

        count = self._consume_reuse(node)
        if self._fill_ptr < self.capacity_lines:
            slot = self._fill_ptr
            self._fill_ptr += 1
            self.misses += 1
            self._place(node, slot, count)
            return AccessResult(AccessKind.MISS, slot=slot)

        if self._safe_count > 0:
            pick = int(self.rng.integers(self._safe_count))
            slot = int(np.flatnonzero(self._safe_mask)[pick])
            victim = int(self.slot_node[slot])
            # a protected line must never be chosen
            assert self.line_state[slot] == LineState.SAFE_TO_EVICT
            assert self.reuse_counter.get(victim, 0) == 0
            del self.resident[victim]
            self._safe_mask[slot] = False
            self._safe_count -= 1
            self.evictions += 1
            self.misses += 1
            self._place(node, slot, count)
            return AccessResult(AccessKind.MISS, slot=slot, evicted=victim)

        self.bypasses += 1
        return AccessResult(AccessKind.BYPASS)

    def stats(self) -> CacheStats:
        total = self.hits + self.misses + self.bypasses
        ratio = self.hits / total if total else 0.0
        return CacheStats(hits=self.hits, misses=self.misses,
                          bypasses=self.bypasses, evictions=self.evictions,
                          hit_ratio=ratio)


def window_update(cache: CacheState, window: WindowBuffer,
                  current_batch) -> dict[NodeId, int]:
    """Fold the current batch's future occurrences into the cache metadata.

    For every node of ``current_batch``, counts how many of the window's
    future iteration lists contain it, raises the node's reuse counter by
    that amount, and flips the node's line (if resident) to InUse when the
    counter becomes positive.  Returns {node: count} for the whole batch,
    zeros included.
    """
    current = np.asarray(current_batch, dtype=np.int64)
    if len(window.lists):
        future = np.sort(np.concatenate(list(window.lists)))
        counts = (np.searchsorted(future, current, side="right")
                  - np.searchsorted(future, current, side="left"))
    else:
        counts = np.zeros(len(current), dtype=np.int64)

    for node, cnt in zip(current[counts > 0].tolist(), counts[counts > 0].tolist()):
        self_count = cache.reuse_counter.get(node, 0)
        cache.reuse_counter[node] = self_count + cnt
        cache.total_increments += cnt
        if self_count == 0:
            slot = cache.resident.get(node)
            if slot is not None and cache.line_state[slot] == LineState.SAFE_TO_EVICT:
                cache.line_state[slot] = LineState.IN_USE
                cache._safe_mask[slot] = False
                cache._safe_count -= 1
    return dict(zip(current.tolist(), counts.tolist()))
