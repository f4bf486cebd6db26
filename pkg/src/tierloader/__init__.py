"""tierloader: a deterministic simulator for GNN feature loading over
tiered storage (software cache, pinned CPU buffer, SSD)."""

from .cache import (AccessKind, AccessResult, CacheProtocolError, CacheState,
                    CacheStats, LineState, WindowBuffer, window_update)
from .config import (ConfigError, InfeasibleError, PipelineConfig, load_config,
                     make_config)
from .cpu_buffer import (ConstantBuffer, PageRankResult, build_constant_buffer,
                         reverse_pagerank, top_k_nodes)
from .dataloader import (CSV_HEADER, Dataloader, IterationStats, RunSummary,
                         run, stats_csv)
from .graph import (BadMagicError, FeatureStore, FileFormatError, GraphCsc,
                    TruncatedFileError, VersionMismatchError, build_csc,
                    generate_synthetic, load_features, load_graph, neighbors,
                    save_features, save_graph, synthetic_feature_rows)
from .sampler import (Fanouts, MiniBatch, batch_iterator, sample_layer,
                      sample_subgraph)
from .storage import (PRESETS, FetchTiming, SsdSpec, achieved_fraction,
                      fetch_total_us, preset, required_accesses, simulate_fetch)

__version__ = "0.1.0"
