"""Pipeline configuration.

One flat YAML mapping configures a whole run.  Every key has a default;
unknown keys are rejected so typos fail loudly.  CLI flags override file
values after loading.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any

import yaml

from .storage import PRESETS, SsdSpec, preset


class ConfigError(Exception):
    """The configuration file or override set is not usable."""


class InfeasibleError(ConfigError):
    """The configuration is well-formed but no pipeline can satisfy it."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a Dataloader needs, with desk-scale-friendly defaults.

    Data source: either ``graph_path``/``features_path`` name files on
    disk, or (when null) a synthetic graph and feature table are generated
    from the sizing knobs.  All randomness derives from ``seed``.
    """

    # data source
    graph_path: str | None = None
    features_path: str | None = None
    num_nodes: int = 100_000
    avg_degree: float = 15.0
    degree_model: str = "powerlaw"     # uniform | powerlaw
    degree_exponent: float = 2.0
    feature_dim: int = 1024
    # sampling
    fanouts: tuple[int, ...] = (5, 5, 5)
    batch_size: int = 4096
    seed_mode: str = "permutation"     # permutation | uniform | zipf
    seed_count: int | None = None      # default: one epoch's worth
    zipf_a: float = 1.2
    shuffle: bool = True
    # storage tier
    ssd_preset: str | None = "intel-optane"
    iop_peak: float | None = None
    n_ssd: int = 1
    t_init_us: float | None = None
    t_term_us: float | None = None
    page_bytes: int = 4096
    target_fraction: float = 0.95
    # cache and CPU buffer tiers
    cache_mb: float = 8192.0           # 8 GiB of lines unless overridden
    cache_lines: int | None = None     # wins over cache_mb when set
    window_depth: int = 8
    buffer_fraction: float = 0.10      # share of nodes pinned in CPU memory
    buffer_bytes: int | None = None    # wins over buffer_fraction when set
    cpu_gbps: float = 25.0             # CPU-to-GPU redirect bandwidth
    # run shape
    consume_rate: float = 2.9e7        # trainer demand, node rows/second; 0 = unbounded
    iterations: int = 100
    warmup: int = 10
    seed: int = 42
    redirect_ema_alpha: float = 0.2
    runahead_cap: int = 256
    verify_gather: bool = False

    def ssd_spec(self) -> SsdSpec:
        """Resolve the storage tier: preset, optionally patched by raw knobs."""
        if self.ssd_preset is not None:
            if self.ssd_preset not in PRESETS:
                known = ", ".join(sorted(PRESETS))
                raise ConfigError(
                    f"unknown ssd_preset {self.ssd_preset!r} (have: {known})")
            base = preset(self.ssd_preset, n_ssd=self.n_ssd)
        else:
            if self.iop_peak is None:
                raise ConfigError("custom SSD spec requires iop_peak")
            base = SsdSpec(iop_peak=self.iop_peak, n_ssd=self.n_ssd,
                           page_bytes=self.page_bytes)
        kwargs: dict[str, Any] = {"page_bytes": self.page_bytes}
        if self.iop_peak is not None:
            kwargs["iop_peak"] = self.iop_peak
        if self.t_init_us is not None:
            kwargs["t_init"] = self.t_init_us * 1e-6
        if self.t_term_us is not None:
            kwargs["t_term"] = self.t_term_us * 1e-6
        try:
            return replace(base, **kwargs)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def resolved_cache_lines(self) -> int:
        if self.cache_lines is not None:
            if self.cache_lines < 0:
                raise ConfigError("cache_lines must be non-negative")
            return self.cache_lines
        return int(self.cache_mb * 2**20) // self.page_bytes

    def resolved_buffer_bytes(self, num_nodes: int, row_bytes: int) -> int:
        if self.buffer_bytes is not None:
            if self.buffer_bytes < 0:
                raise ConfigError("buffer_bytes must be non-negative")
            return self.buffer_bytes
        if not 0.0 <= self.buffer_fraction <= 1.0:
            raise ConfigError("buffer_fraction must be within [0, 1]")
        return int(num_nodes * self.buffer_fraction) * row_bytes


_FIELDS = {f.name: f for f in fields(PipelineConfig)}
_LIST_FIELDS = {"fanouts"}


def _coerce(name: str, value: Any) -> Any:
    """Check a raw value against the field's annotated type.

    YAML 1.1 reads unsigned scientific notation like ``2.9e7`` as a plain
    string, so numeric fields accept number-shaped strings too; everything
    else mismatched is a ConfigError rather than a downstream TypeError.
    """
    if name in _LIST_FIELDS:
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{name} must be a non-empty list")
        return tuple(int(v) for v in value)
    ann = _FIELDS[name].type
    base = ann.replace(" | None", "")
    if value is None:
        if base != ann:
            return None
        raise ConfigError(f"{name} must not be null")
    try:
        if base == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(value, bool):  # YAML bools must not pass as numbers
            raise TypeError
        if base == "int":
            as_float = float(value)
            if not as_float.is_integer():
                raise TypeError
            return int(as_float)
        if base == "float":
            return float(value)
        if base == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{name} expects {base}, got {value!r}") from None
    return value


def make_config(overrides: dict[str, Any]) -> PipelineConfig:
    """Build a config from a flat mapping, rejecting unknown keys."""
    clean: dict[str, Any] = {}
    for key, value in overrides.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        clean[key] = _coerce(key, value)
    cfg = PipelineConfig(**clean)
    validate_config(cfg)
    return cfg


def load_config(path, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Read a flat YAML mapping; ``overrides`` (e.g. CLI flags) win."""
    with open(path) as f:
        raw = yaml.safe_load(f)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a single mapping")
    if overrides:
        raw.update(overrides)
    return make_config(raw)


def validate_config(cfg: PipelineConfig) -> None:
    if not 0.0 < cfg.target_fraction < 1.0:
        raise ConfigError("target_fraction must be strictly between 0 and 1")
    if cfg.batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if not cfg.fanouts or any(f < 1 for f in cfg.fanouts):
        raise ConfigError("fanouts must be non-empty with every entry >= 1")
    if cfg.window_depth < 0:
        raise ConfigError("window_depth must be non-negative")
    if cfg.iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if cfg.warmup < 0:
        raise ConfigError("warmup must be non-negative")
    if cfg.seed_mode not in ("permutation", "uniform", "zipf"):
        raise ConfigError(f"unknown seed_mode {cfg.seed_mode!r}")
    if cfg.seed_mode == "zipf" and cfg.zipf_a <= 1.0:
        raise ConfigError("zipf_a must be > 1")
    if cfg.degree_model not in ("uniform", "powerlaw"):
        raise ConfigError(f"unknown degree_model {cfg.degree_model!r}")
    if cfg.degree_model == "powerlaw" and cfg.degree_exponent <= 1.0:
        raise ConfigError("degree_exponent must be > 1")
    if cfg.consume_rate < 0:
        raise ConfigError("consume_rate must be non-negative (0 = unbounded)")
    if cfg.cpu_gbps <= 0:
        raise ConfigError("cpu_gbps must be positive")
    if cfg.runahead_cap < 1:
        raise ConfigError("runahead_cap must be >= 1")
    if cfg.redirect_ema_alpha < 0 or cfg.redirect_ema_alpha > 1:
        raise ConfigError("redirect_ema_alpha must be within [0, 1]")
    if (cfg.graph_path is None) != (cfg.features_path is None):
        raise ConfigError("graph_path and features_path must be given together")
