"""Command-line front end.

Subcommands::

    tierloader gen       write a synthetic graph + feature table pair
    tierloader model     closed-form vs simulated SSD throughput curves
    tierloader pagerank  reverse-PageRank scores of a stored graph
    tierloader simulate  run a pipeline config, emit per-iteration CSV

Exit codes: 0 success, 2 bad parameters, 3 I/O or file-format trouble,
4 infeasible pipeline configuration.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ConfigError, InfeasibleError, load_config, make_config
from .cpu_buffer import reverse_pagerank
from .dataloader import Dataloader, run, stats_csv
from .graph import (FeatureStore, FileFormatError, generate_synthetic,
                    load_graph, save_features, save_graph)
from .storage import (PRESETS, SsdSpec, achieved_fraction, preset,
                      required_accesses, simulate_fetch)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4


def _cmd_gen(args) -> int:
    g = generate_synthetic(args.nodes, args.avg_degree, args.model,
                           seed=args.seed, exponent=args.exponent)
    feats = FeatureStore.synthetic(args.nodes, args.dim, seed=args.seed)
    save_graph(g, args.out + ".gcsc")
    save_features(feats, args.out + ".gfea")
    print(f"graph: {g.num_nodes} nodes, {g.num_edges} edges -> {args.out}.gcsc")
    print(f"features: dim {feats.dim} ({feats.row_bytes} B/row) -> {args.out}.gfea")
    return EXIT_OK


def _spec_from_args(args) -> SsdSpec:
    if args.spec is not None:
        base = preset(args.spec, n_ssd=args.n_ssd)
        kwargs = {}
        if args.page_bytes is not None:
            kwargs["page_bytes"] = args.page_bytes
        if args.iop_peak is not None:
            kwargs["iop_peak"] = args.iop_peak
        if args.t_init_us is not None:
            kwargs["t_init"] = args.t_init_us * 1e-6
        if args.t_term_us is not None:
            kwargs["t_term"] = args.t_term_us * 1e-6
        if kwargs:
            from dataclasses import replace
            base = replace(base, **kwargs)
        return base
    if args.iop_peak is None:
        raise ValueError("either --spec or --iop-peak is required")
    return SsdSpec(iop_peak=args.iop_peak, n_ssd=args.n_ssd,
                   t_init=(args.t_init_us if args.t_init_us is not None else 25.0) * 1e-6,
                   t_term=(args.t_term_us if args.t_term_us is not None else 5.0) * 1e-6,
                   page_bytes=args.page_bytes if args.page_bytes is not None else 4096)


def _cmd_model(args) -> int:
    spec = _spec_from_args(args)
    if args.fraction:
        points = [required_accesses(spec, f) for f in args.fraction]
    elif args.n_access:
        points = list(args.n_access)
    else:
        points = [1 << k for k in range(4, 15)]  # 16 .. 16384
    print("n_access,model_fraction,sim_fraction,model_bw_gbps,sim_bw_gbps")
    for n in points:
        model = achieved_fraction(spec, n)
        timing = simulate_fetch(spec, n)
        model_bw = model * spec.peak_bandwidth / 1e9
        sim_bw = timing.achieved_iops * spec.page_bytes / 1e9
        print(f"{n},{model:.6f},{timing.achieved_fraction:.6f},"
              f"{model_bw:.6f},{sim_bw:.6f}")
    return EXIT_OK


def _cmd_pagerank(args) -> int:
    g = load_graph(args.graph)
    result = reverse_pagerank(g, damping=args.damping, tol=args.tol,
                              max_iter=args.max_iter)
    if not result.converged:
        print(f"warning: not converged after {result.iterations} iterations",
              file=sys.stderr)
    scores = result.scores
    k = len(scores) if args.top is None else min(args.top, len(scores))
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    print("node_id,score")
    for node in order.tolist():
        print(f"{node},{scores[node]:.12e}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    overrides = {}
    for name in ("window_depth", "buffer_fraction", "iterations", "warmup",
                 "seed", "batch_size", "cache_lines", "target_fraction"):
        val = getattr(args, name)
        if val is not None:
            overrides[name] = val
    cfg = load_config(args.config, overrides) if args.config \
        else make_config(overrides)
    dl = Dataloader(cfg)
    stats, summary = run(dl)
    csv = stats_csv(stats)
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(csv)
    else:
        sys.stdout.write(csv)
    print(f"iterations: {summary.iterations_run}")
    print(f"sampled nodes: {summary.sampled_total}")
    print(f"cache hit ratio: {summary.cache_hit_ratio:.6f}")
    print(f"redirect fraction: {summary.redirect_fraction:.6f}")
    print(f"mean effective bandwidth: "
          f"{summary.mean_bandwidth_bytes_per_s / 1e9:.6f} GB/s")
    print(f"prep time: {summary.total_fetch_us:.3f} us")
    print(f"train time: {summary.total_train_us:.3f} us")
    print(f"total time: {summary.total_time_us:.3f} us")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tierloader",
        description="GNN feature-loading simulator over tiered storage")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a synthetic graph and features")
    gen.add_argument("--nodes", type=int, required=True)
    gen.add_argument("--avg-degree", type=float, default=15.0)
    gen.add_argument("--model", choices=("uniform", "powerlaw"),
                     default="uniform")
    gen.add_argument("--exponent", type=float, default=2.0,
                     help="powerlaw tail index, must be > 1")
    gen.add_argument("--dim", type=int, default=1024)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True,
                     help="output path prefix (.gcsc/.gfea appended)")
    gen.set_defaults(func=_cmd_gen)

    model = sub.add_parser("model", help="SSD throughput model vs simulation")
    model.add_argument("--spec", choices=sorted(PRESETS), default=None)
    model.add_argument("--iop-peak", type=float, default=None)
    model.add_argument("--n-ssd", type=int, default=1)
    model.add_argument("--t-init-us", type=float, default=None)
    model.add_argument("--t-term-us", type=float, default=None)
    model.add_argument("--page-bytes", type=int, default=None)
    model.add_argument("--n-access", type=int, nargs="*", default=None,
                       help="explicit sweep points (default: 16..16384 doubling)")
    model.add_argument("--fraction", type=float, nargs="*", default=None,
                       help="size the sweep from target fractions instead")
    model.set_defaults(func=_cmd_model)

    pr = sub.add_parser("pagerank", help="reverse-PageRank scores, CSV")
    pr.add_argument("--graph", required=True)
    pr.add_argument("--damping", type=float, default=0.85)
    pr.add_argument("--tol", type=float, default=1e-8)
    pr.add_argument("--max-iter", type=int, default=200)
    pr.add_argument("--top", type=int, default=None,
                    help="emit only the best k nodes")
    pr.set_defaults(func=_cmd_pagerank)

    sim = sub.add_parser("simulate", help="run a pipeline configuration")
    sim.add_argument("--config", default=None, help="YAML config file")
    sim.add_argument("--csv", default=None,
                     help="write per-iteration stats here instead of stdout")
    sim.add_argument("--window-depth", type=int, default=None)
    sim.add_argument("--buffer-fraction", type=float, default=None)
    sim.add_argument("--iterations", type=int, default=None)
    sim.add_argument("--warmup", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--batch-size", type=int, default=None)
    sim.add_argument("--cache-lines", type=int, default=None)
    sim.add_argument("--target-fraction", type=float, default=None)
    sim.set_defaults(func=_cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
