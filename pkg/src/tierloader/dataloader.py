"""Tiered minibatch preparation pipeline.

Each iteration samples a neighborhood minibatch and serves every unique
node's feature row through the tier chain: software cache (free), pinned
CPU buffer (charged at CPU-link bandwidth), then SSD.  Sampling runs ahead
of serving so that SSD-bound requests from several queued batches are in
flight together; a batch's SSD time is its pro-rata share of the joint
fetch envelope for everything in flight at dispatch, which is what lets
small batches reach the device's target operating point.

Run-ahead is governed by a dynamic accumulator: sampling continues until
the pending non-redirected access count reaches
``ceil(base_threshold / max(eps, 1 - redirect_ema))``, where
base_threshold comes from the storage model's sizing formula and the EMA
tracks how many accesses the cache and CPU buffer absorb.  The lookahead
ring for the cache holds the next ``window_depth`` batches' unique-node
lists; its pops lag pushes by exactly the consumed batch.

Simulated durations are exact rationals (microsecond ticks) end to end,
so identical configurations replay bit-identically.  Walking the graph
structure itself is free; only feature rows cost time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import cache as cache_mod
from .cache import AccessKind, CacheState, WindowBuffer
from .config import ConfigError, InfeasibleError, PipelineConfig
from .cpu_buffer import build_constant_buffer, reverse_pagerank
from .graph import FeatureStore, generate_synthetic, load_features, load_graph
from .sampler import MiniBatch, batch_iterator, sample_subgraph
from .storage import _frac, fetch_total_us, required_accesses

EMA_EPSILON = 1e-3

CSV_HEADER = ("iteration,sampled_nodes,cache_hits,cpu_buffer_hits,ssd_accesses,"
              "bypasses,redirect_fraction,fetch_time_us,effective_bandwidth_gbps,"
              "cumulative_time_us")


@dataclass(frozen=True)
class IterationStats:
    """Per-iteration accounting; every unique node lands in exactly one of
    cache_hits, cpu_buffer_hits, or ssd_accesses (bypassed nodes are counted
    in the tier that actually served them)."""

    iteration: int
    sampled_nodes: int
    cache_hits: int
    cpu_buffer_hits: int
    ssd_accesses: int
    bypasses: int
    redirect_fraction: float
    fetch_time_us: float
    effective_bandwidth_bytes_per_s: float
    cumulative_time_us: float

    def csv_row(self) -> str:
        gbps = self.effective_bandwidth_bytes_per_s / 1e9
        return (f"{self.iteration},{self.sampled_nodes},{self.cache_hits},"
                f"{self.cpu_buffer_hits},{self.ssd_accesses},{self.bypasses},"
                f"{self.redirect_fraction:.6f},{self.fetch_time_us:.3f},"
                f"{gbps:.6f},{self.cumulative_time_us:.3f}")


def stats_csv(stats: list[IterationStats]) -> str:
    return "\n".join([CSV_HEADER] + [s.csv_row() for s in stats]) + "\n"


@dataclass(frozen=True)
class RunSummary:
    iterations_run: int
    sampled_total: int
    cache_hit_ratio: float        # cache hits / sampled, measured iterations
    redirect_fraction: float      # non-SSD serves / sampled, measured iterations
    mean_bandwidth_bytes_per_s: float
    total_fetch_us: float
    total_train_us: float
    total_time_us: float          # sum of max(fetch, train) per iteration


@dataclass
class _Pending:
    batch: MiniBatch
    storage_accesses: int  # enqueue-time count of nodes headed for SSD


class Dataloader:
    """Deterministic simulator for one preparation pipeline."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.spec = cfg.ssd_spec()

        ss = np.random.SeedSequence(cfg.seed)
        graph_ss, feat_ss, sampler_ss, shuffle_ss, evict_ss, work_ss = ss.spawn(6)

        if cfg.graph_path is not None:
            self.graph = load_graph(cfg.graph_path)
            self.features = load_features(cfg.features_path)
            if self.features.num_nodes != self.graph.num_nodes:
                raise ConfigError("feature table and graph disagree on node count")
        else:
            self.graph = generate_synthetic(
                cfg.num_nodes, cfg.avg_degree, cfg.degree_model,
                seed=int(graph_ss.generate_state(1)[0]),
                exponent=cfg.degree_exponent)
            self.features = FeatureStore.synthetic(
                cfg.num_nodes, cfg.feature_dim,
                seed=int(feat_ss.generate_state(1)[0]))

        row_bytes = self.features.row_bytes
        if row_bytes > self.spec.page_bytes:
            raise InfeasibleError(
                f"feature row ({row_bytes} B) exceeds one cache line / page "
                f"({self.spec.page_bytes} B)")

        budget = cfg.resolved_buffer_bytes(self.graph.num_nodes, row_bytes)
        if budget // row_bytes > 0:
            pr = reverse_pagerank(self.graph)
            self.pagerank = pr
            self.buffer = build_constant_buffer(pr.scores, self.features, budget)
        else:
            self.pagerank = None
            self.buffer = build_constant_buffer(
                np.empty(0), self.features, 0, pinned=np.empty(0, dtype=np.int64))
        self._pinned_mask = np.zeros(self.graph.num_nodes, dtype=bool)
        self._pinned_mask[self.buffer.node_ids] = True

        lines = cfg.resolved_cache_lines()
        self.cache = CacheState(lines, self.spec.page_bytes,
                                eviction_seed=int(evict_ss.generate_state(1)[0]))
        self._cache_rows = np.zeros((lines, self.features.dim),
                                    dtype=self.features.table.dtype)
        self.window = WindowBuffer(cfg.window_depth)

        self.base_threshold = required_accesses(self.spec, cfg.target_fraction)
        self.redirect_ema = 0.0

        self._sampler_rng = np.random.default_rng(sampler_ss)
        self._batches = self._seed_batches(work_ss, shuffle_ss)
        self._exhausted = False
        self._pending: deque[_Pending] = deque()
        self._pending_storage = 0
        self._ringed = 0  # how many leading pending batches sit in the window

        self._iteration = 0
        self._clock_us = Fraction(0)
        self._fetch_us_total = Fraction(0)
        self._train_us_total = Fraction(0)
        self._row_frac = Fraction(row_bytes)
        self._cpu_bytes_per_s = _frac(self.cfg.cpu_gbps) * 10**9

    # -- seed workload -------------------------------------------------------

    def _seed_batches(self, work_ss, shuffle_ss):
        cfg = self.cfg
        n = self.graph.num_nodes
        rng = np.random.default_rng(work_ss)
        demand = (cfg.warmup + cfg.iterations) * cfg.batch_size
        if cfg.seed_mode == "permutation":
            count = n if cfg.seed_count is None else min(cfg.seed_count, n)
            seeds = np.arange(n, dtype=np.int64)[:count]
            return batch_iterator(seeds, cfg.batch_size, shuffle=cfg.shuffle,
                                  rng=np.random.default_rng(shuffle_ss))
        count = demand if cfg.seed_count is None else cfg.seed_count
        if cfg.seed_mode == "uniform":
            seeds = rng.integers(0, n, size=count)
        else:  # zipf over node ids: low ids are the hot seeds
            p = np.arange(1, n + 1, dtype=np.float64) ** (-cfg.zipf_a)
            p /= p.sum()
            seeds = rng.choice(n, size=count, p=p)
        return batch_iterator(seeds, cfg.batch_size, shuffle=False)

    # -- run-ahead accumulator -------------------------------------------------

    def effective_threshold(self) -> int:
        denom = max(EMA_EPSILON, 1.0 - self.redirect_ema)
        return math.ceil(self.base_threshold / denom)

    def _enqueue_contribution(self, batch: MiniBatch) -> int:
        unique = batch.unique_nodes
        unpinned = unique[~self._pinned_mask[unique]]
        resident = self.cache.resident
        return sum(1 for u in unpinned.tolist() if u not in resident)

    def _sample_one(self) -> bool:
        try:
            seeds = next(self._batches)
        except StopIteration:
            self._exhausted = True
            return False
        batch = sample_subgraph(self.graph, seeds, self.cfg.fanouts,
                                self._sampler_rng)
        contrib = self._enqueue_contribution(batch)
        self._pending.append(_Pending(batch, contrib))
        self._pending_storage += contrib
        return True

    def run_ahead(self) -> None:
        """Sample until the window is supplied and the accumulator is met.

        Stops early when seeds run out, when everything pending is being
        redirected (full-redirect runs would otherwise look ahead forever),
        or at the configured hard cap on queued batches.
        """
        want_pending = self.cfg.window_depth + 1
        while not self._exhausted:
            need_window = len(self._pending) < want_pending
            need_threshold = self._pending_storage < self.effective_threshold()
            if not (need_window or need_threshold):
                break
            if len(self._pending) >= self.cfg.runahead_cap:
                break
            if (not need_window) and self._pending_storage == 0:
                break
            self._sample_one()
        # mirror the leading pending batches into the lookahead ring
        while self._ringed < min(self.window.depth, len(self._pending)):
            self.window.push_iteration(self._pending[self._ringed].batch.unique_nodes)
            self._ringed += 1

    # -- serving ---------------------------------------------------------------

    def next_batch(self) -> tuple[MiniBatch, np.ndarray, IterationStats]:
        """Serve the next minibatch; returns (batch, gathered rows, stats).

        Raises StopIteration when the seed supply is exhausted.
        """
        self.run_ahead()
        if not self._pending:
            raise StopIteration
        dispatch_inflight = self._pending_storage
        entry = self._pending.popleft()
        self._pending_storage -= entry.storage_accesses
        if self._ringed > 0:
            self.window.pop_iteration()  # the consumed iteration's own list
            self._ringed -= 1
        self.run_ahead()  # top the ring back up before the lookahead update

        current = entry.batch
        unique = current.unique_nodes
        cache_mod.window_update(self.cache, self.window, unique)

        hit_pos: list[int] = []
        hit_slot: list[int] = []
        buf_pos: list[int] = []
        buf_node: list[int] = []
        ssd_pos: list[int] = []
        ssd_node: list[int] = []
        bypasses = 0
        insert_pos: dict[int, int] = {}  # slot -> position of the row it now holds
        access = self.cache.access
        pinned = self.buffer._offsets
        for pos, node in enumerate(unique.tolist()):
            res = access(node)
            if res.kind is AccessKind.HIT:
                hit_pos.append(pos)
                hit_slot.append(res.slot)
                continue
            if res.kind is AccessKind.BYPASS:
                bypasses += 1
            else:
                insert_pos[res.slot] = pos
            if node in pinned:
                buf_pos.append(pos)
                buf_node.append(node)
            else:
                ssd_pos.append(pos)
                ssd_node.append(node)

        gathered = np.empty((len(unique), self.features.dim),
                            dtype=self.features.table.dtype)
        if hit_pos:  # read cached rows before insertions overwrite any slot
            gathered[hit_pos] = self._cache_rows[hit_slot]
        if buf_pos:
            offs = [pinned[n] for n in buf_node]
            gathered[buf_pos] = self.buffer.rows[offs]
        if ssd_pos:
            gathered[ssd_pos] = self.features.rows(ssd_node)
        if insert_pos:
            slots = list(insert_pos.keys())
            self._cache_rows[slots] = gathered[list(insert_pos.values())]
        if self.cfg.verify_gather:
            expect = self.features.rows(unique)
            if not np.array_equal(gathered, expect):
                raise AssertionError("gathered rows diverge from the feature table")

        stats = self._account(len(unique), len(hit_pos), len(buf_pos),
                              len(ssd_pos), bypasses, dispatch_inflight)
        self._iteration += 1
        return current, gathered, stats

    def _account(self, sampled: int, hits: int, buf_hits: int, ssd: int,
                 bypasses: int, inflight: int) -> IterationStats:
        if ssd > 0:
            joint = max(inflight, ssd)
            ssd_us = fetch_total_us(self.spec, joint) * Fraction(ssd, joint)
        else:
            ssd_us = Fraction(0)
        cpu_us = Fraction(buf_hits) * self._row_frac * 1_000_000 / self._cpu_bytes_per_s
        fetch_us = ssd_us + cpu_us
        if self.cfg.consume_rate > 0:
            train_us = Fraction(sampled) * 1_000_000 / _frac(self.cfg.consume_rate)
        else:
            train_us = Fraction(0)
        self._clock_us += max(fetch_us, train_us)
        self._fetch_us_total += fetch_us
        self._train_us_total += train_us

        redirect = (hits + buf_hits) / sampled if sampled else 0.0
        alpha = self.cfg.redirect_ema_alpha
        self.redirect_ema = alpha * redirect + (1.0 - alpha) * self.redirect_ema

        if fetch_us > 0:
            bw = float(Fraction(sampled) * self._row_frac * 1_000_000 / fetch_us)
        else:
            bw = float("inf") if sampled else 0.0
        return IterationStats(
            iteration=self._iteration,
            sampled_nodes=sampled,
            cache_hits=hits,
            cpu_buffer_hits=buf_hits,
            ssd_accesses=ssd,
            bypasses=bypasses,
            redirect_fraction=redirect,
            fetch_time_us=float(fetch_us),
            effective_bandwidth_bytes_per_s=bw,
            cumulative_time_us=float(self._clock_us),
        )

    def __iter__(self):
        return self

    def __next__(self):
        return self.next_batch()


def run(dl: Dataloader, iterations: int | None = None,
        warmup: int | None = None) -> tuple[list[IterationStats], RunSummary]:
    """Execute warmup then measured iterations (config defaults apply).

    Stops early if the seed supply ends.  Returns the measured iterations'
    stats and a summary over exactly those iterations.
    """
    iterations = dl.cfg.iterations if iterations is None else iterations
    warmup = dl.cfg.warmup if warmup is None else warmup
    for _ in range(warmup):
        try:
            dl.next_batch()
        except StopIteration:
            break
    clock0 = dl._clock_us
    fetch0 = dl._fetch_us_total
    train0 = dl._train_us_total
    measured: list[IterationStats] = []
    for _ in range(iterations):
        try:
            _, _, stats = dl.next_batch()
        except StopIteration:
            break
        measured.append(stats)
    sampled = sum(s.sampled_nodes for s in measured)
    hits = sum(s.cache_hits for s in measured)
    redirected = hits + sum(s.cpu_buffer_hits for s in measured)
    fetch_us = dl._fetch_us_total - fetch0
    total_us = dl._clock_us - clock0
    train_us = dl._train_us_total - train0
    row_bytes = dl.features.row_bytes
    mean_bw = (float(sampled * row_bytes * 1_000_000 / fetch_us)
               if fetch_us > 0 else 0.0)
    summary = RunSummary(
        iterations_run=len(measured),
        sampled_total=sampled,
        cache_hit_ratio=hits / sampled if sampled else 0.0,
        redirect_fraction=redirected / sampled if sampled else 0.0,
        mean_bandwidth_bytes_per_s=mean_bw,
        total_fetch_us=float(fetch_us),
        total_train_us=float(train_us),
        total_time_us=float(total_us),
    )
    return measured, summary
