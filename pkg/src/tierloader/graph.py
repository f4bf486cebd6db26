"""Graph and feature storage.

Graphs are held as CSC-style in-neighbor lists: ``indices[indptr[v]:indptr[v+1]]``
are the sources of all edges pointing into ``v``, sorted ascending.  The
structure arrays are assumed pinned in host memory, so walking them costs no
simulated I/O time; only feature rows move through the storage tiers.

Feature tables are dense row-major float32.  Synthetic tables are filled with
a keyed pseudo-random pattern, so any row can be recomputed from
``(node_id, column, seed)`` alone and checked against what a pipeline
actually gathered.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

NodeId = int

GRAPH_MAGIC = b"GCSC"
FEATURE_MAGIC = b"GFEA"
FORMAT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4")}


class FileFormatError(Exception):
    """A graph or feature file is not readable in this format."""


class BadMagicError(FileFormatError):
    """Leading magic bytes do not identify a known file type."""


class VersionMismatchError(FileFormatError):
    """The file's format version is not one this reader understands."""


class TruncatedFileError(FileFormatError):
    """The file ends before the payload promised by its header."""


@dataclass(frozen=True)
class GraphCsc:
    """Immutable in-neighbor CSC graph."""

    num_nodes: int
    num_edges: int
    indptr: np.ndarray   # uint64, len num_nodes + 1, non-decreasing
    indices: np.ndarray  # uint64, len num_edges, ascending within each segment

    def __post_init__(self):
        if self.num_nodes < 0:
            raise ValueError("num_nodes must be non-negative")
        if len(self.indptr) != self.num_nodes + 1:
            raise ValueError("indptr length must be num_nodes + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != self.num_edges:
            raise ValueError("indptr must start at 0 and end at num_edges")
        if np.any(np.diff(self.indptr.astype(np.int64)) < 0):
            raise ValueError("indptr must be non-decreasing")
        if len(self.indices) != self.num_edges:
            raise ValueError("indices length must equal num_edges")
        if self.num_edges and int(self.indices.max()) >= self.num_nodes:
            bad = int(self.indices.max())
            raise ValueError(f"node {bad} out of range (num_nodes={self.num_nodes})")

    def degree(self, v: NodeId) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])


def build_csc(edges, num_nodes: int) -> GraphCsc:
    """Build a GraphCsc from (src, dst) pairs.

    Edges are grouped by destination; sources within a destination are stored
    ascending.  Parallel edges are kept as given.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if num_nodes < 0:
        raise ValueError("num_nodes must be non-negative")
    for col, role in ((0, "src"), (1, "dst")):
        if edges.size and (edges[:, col].min() < 0 or edges[:, col].max() >= num_nodes):
            sel = (edges[:, col] < 0) | (edges[:, col] >= num_nodes)
            s, d = edges[sel][0]
            bad = s if role == "src" else d
            raise ValueError(
                f"edge ({s}, {d}): node {bad} out of range (num_nodes={num_nodes})"
            )
    srcs = edges[:, 0]
    dsts = edges[:, 1]
    order = np.lexsort((srcs, dsts))
    indices = srcs[order].astype(np.uint64)
    counts = np.bincount(dsts, minlength=num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.uint64)
    np.cumsum(counts, out=indptr[1:])
    return GraphCsc(num_nodes=num_nodes, num_edges=len(edges),
                    indptr=indptr, indices=indices)


def neighbors(g: GraphCsc, v: NodeId) -> np.ndarray:
    """In-neighbors of v, ascending.  A view into the CSC arrays."""
    if v < 0 or v >= g.num_nodes:
        raise ValueError(f"node {v} out of range (num_nodes={g.num_nodes})")
    return g.indices[g.indptr[v]:g.indptr[v + 1]]


# ---------------------------------------------------------------------------
# synthetic graphs

def _rank_weights(num_nodes: int, exponent: float) -> np.ndarray:
    # rank-r node gets weight r**(-1/(exponent-1)); exponent is the
    # degree-distribution tail index, > 1 required for a normalizable tail
    s = 1.0 / (exponent - 1.0)
    return np.arange(1, num_nodes + 1, dtype=np.float64) ** (-s)


def _target_degrees(weights: np.ndarray, total: int, cap: int) -> np.ndarray:
    """Integer degree targets summing to ~total, none above cap."""
    deg = np.zeros(len(weights), dtype=np.float64)
    room = np.full(len(weights), float(cap))
    remaining = float(total)
    for _ in range(8):
        if remaining < 0.5:
            break
        open_mask = room > 1e-9
        if not open_mask.any():
            break
        w = np.where(open_mask, weights, 0.0)
        share = w / w.sum() * remaining
        add = np.minimum(share, room)
        deg += add
        room -= add
        remaining -= float(add.sum())
    out = np.floor(deg).astype(np.int64)
    # hand out the rounding remainder to the largest fractional parts
    short = int(round(deg.sum())) - int(out.sum())
    if short > 0:
        frac = deg - out
        frac[out >= cap] = -1.0
        top = np.argpartition(-frac, short - 1)[:short]
        out[top] += 1
    return out


def generate_synthetic(num_nodes: int, avg_degree: float,
                       degree_model: str = "uniform", seed: int = 0,
                       exponent: float = 2.0) -> GraphCsc:
    """Deterministic random graph with the requested in-degree shape.

    ``uniform`` spreads edges evenly; ``powerlaw`` gives both endpoints a
    Zipf-ranked popularity (tail index ``exponent``), so in-degrees are
    heavy-tailed and a small core of sources shows up in most neighbor
    lists.  Parallel edges are discarded and redrawn, so the realized edge
    count can fall slightly short of ``num_nodes * avg_degree``; for graphs
    of 10^4+ nodes it lands within 1%.
    """
    if num_nodes <= 0:
        raise ValueError("num_nodes must be positive")
    if avg_degree < 0:
        raise ValueError("avg_degree must be non-negative")
    if degree_model not in ("uniform", "powerlaw"):
        raise ValueError(f"unknown degree_model {degree_model!r}")
    if degree_model == "powerlaw" and exponent <= 1.0:
        raise ValueError("powerlaw exponent must be > 1")

    rng = np.random.default_rng(seed)
    target = int(round(num_nodes * avg_degree))
    if target == 0:
        return build_csc(np.empty((0, 2), dtype=np.int64), num_nodes)

    if degree_model == "uniform":
        p_src = None
        p_dst = None
    else:
        cap = max(4, num_nodes // 4)
        w = _rank_weights(num_nodes, exponent)
        deg_src = _target_degrees(w, target, cap).astype(np.float64)
        deg_dst = _target_degrees(w, target, cap).astype(np.float64)
        # scatter the popular ranks over node ids, independently per side
        p_src = np.empty(num_nodes)
        p_src[rng.permutation(num_nodes)] = deg_src / deg_src.sum()
        p_dst = np.empty(num_nodes)
        p_dst[rng.permutation(num_nodes)] = deg_dst / deg_dst.sum()

    def draw(k: int) -> np.ndarray:
        if p_src is None:
            s = rng.integers(0, num_nodes, size=k)
            d = rng.integers(0, num_nodes, size=k)
        else:
            s = rng.choice(num_nodes, size=k, p=p_src)
            d = rng.choice(num_nodes, size=k, p=p_dst)
        return s.astype(np.int64) * num_nodes + d

    # draw, dedupe, and top up the shortfall a few rounds; popular pairs
    # collide the most, so the realized count converges from below
    keys = np.unique(draw(target))
    for _ in range(6):
        short = target - len(keys)
        if short <= 0:
            break
        keys = np.union1d(keys, draw(short))
    keys = keys[:target]

    edges = np.column_stack((keys // num_nodes, keys % num_nodes))
    return build_csc(edges, num_nodes)


# ---------------------------------------------------------------------------
# binary formats

def save_graph(g: GraphCsc, path) -> None:
    """magic 'GCSC' | u32 version | u64 nodes | u64 edges | indptr | indices."""
    with open(path, "wb") as f:
        f.write(GRAPH_MAGIC)
        f.write(struct.pack("<IQQ", FORMAT_VERSION, g.num_nodes, g.num_edges))
        f.write(g.indptr.astype("<u8").tobytes())
        f.write(g.indices.astype("<u8").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"file ends inside {what} ({len(buf)}/{n} bytes)")
    return buf


def _check_header(f, magic: bytes) -> None:
    got = _read_exact(f, 4, "magic")
    if got != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {got!r}")
    (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported format version {version}")


def load_graph(path) -> GraphCsc:
    with open(path, "rb") as f:
        _check_header(f, GRAPH_MAGIC)
        num_nodes, num_edges = struct.unpack("<QQ", _read_exact(f, 16, "header"))
        indptr = np.frombuffer(
            _read_exact(f, 8 * (num_nodes + 1), "indptr"), dtype="<u8")
        indices = np.frombuffer(
            _read_exact(f, 8 * num_edges, "indices"), dtype="<u8")
    try:
        return GraphCsc(num_nodes=num_nodes, num_edges=num_edges,
                        indptr=indptr, indices=indices)
    except ValueError as e:
        raise FileFormatError(f"inconsistent graph file: {e}") from e


# ---------------------------------------------------------------------------
# features

def synthetic_feature_rows(seed: int, node_ids, dim: int) -> np.ndarray:
    """Feature rows for the given nodes, recomputable from (node, column, seed).

    A splitmix64-style mix of the key maps each cell to a float32 in [0, 1)
    with 24 significant bits, so equality checks are exact.
    """
    nodes = np.asarray(node_ids, dtype=np.uint64).reshape(-1, 1)
    cols = np.arange(dim, dtype=np.uint64).reshape(1, -1)
    seed_mix = ((seed & 0xFFFFFFFFFFFFFFFF) * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF
    z = (nodes * np.uint64(0x9E3779B97F4A7C15)
         ^ cols * np.uint64(0xC2B2AE3D27D4EB4F)
         ^ np.uint64(seed_mix))
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return ((z >> np.uint64(40)).astype(np.float32)
            / np.float32(1 << 24)).astype("<f4")


@dataclass(frozen=True)
class FeatureStore:
    """Dense float32 feature table, one row per node."""

    num_nodes: int
    dim: int
    table: np.ndarray  # (num_nodes, dim) float32

    @property
    def row_bytes(self) -> int:
        return self.dim * 4

    def row(self, node: NodeId) -> np.ndarray:
        return self.table[node]

    def rows(self, node_ids) -> np.ndarray:
        return self.table[np.asarray(node_ids, dtype=np.int64)]

    @classmethod
    def synthetic(cls, num_nodes: int, dim: int, seed: int) -> "FeatureStore":
        if num_nodes <= 0 or dim <= 0:
            raise ValueError("num_nodes and dim must be positive")
        table = synthetic_feature_rows(seed, np.arange(num_nodes), dim)
        return cls(num_nodes=num_nodes, dim=dim, table=table)


def save_features(store: FeatureStore, path) -> None:
    """magic 'GFEA' | u32 version | u64 nodes | u32 dim | u32 dtype | rows."""
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<IQII", FORMAT_VERSION, store.num_nodes, store.dim, 0))
        f.write(np.ascontiguousarray(store.table, dtype="<f4").tobytes())


def load_features(path, mmap: bool = False) -> FeatureStore:
    with open(path, "rb") as f:
        _check_header(f, FEATURE_MAGIC)
        num_nodes, dim, dtype_code = struct.unpack(
            "<QII", _read_exact(f, 16, "header"))
        if dtype_code not in _DTYPE_CODES:
            raise FileFormatError(f"unknown dtype code {dtype_code}")
        dt = _DTYPE_CODES[dtype_code]
        offset = f.tell()
        if mmap:
            table = np.memmap(path, dtype=dt, mode="r", offset=offset,
                              shape=(num_nodes, dim))
        else:
            raw = _read_exact(f, num_nodes * dim * dt.itemsize, "feature rows")
            table = np.frombuffer(raw, dtype=dt).reshape(num_nodes, dim)
    return FeatureStore(num_nodes=num_nodes, dim=dim, table=table)
