"""Run configuration: one TOML file drives every command.

CLI flags override individual values; each run writes its fully resolved
configuration next to its outputs as run_config.json so results can be
reproduced from the artifacts alone.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .datagen import GeneratorConfig
from .geo import DistanceBins, default_distance_bins
from .mechanism import PrivacyParams
from .retrieval import RetrievalConfig

API_KEY_ENV = "PASRAG_API_KEY"


class ConfigError(ValueError):
    """The run configuration is missing, malformed or self-inconsistent."""


@dataclass(frozen=True)
class GenerationSettings:
    enabled: bool = False
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.1
    max_parallel: int = 4


@dataclass(frozen=True)
class EmbedderSettings:
    kind: str = "lexical"          # "lexical" or "precomputed"
    dim: int = 512
    precomputed_path: str = ""


@dataclass(frozen=True)
class RunConfig:
    dataset_dir: str = "data"
    output_dir: str = "out"
    bins: DistanceBins = field(default_factory=default_distance_bins)
    privacy: PrivacyParams = field(
        default_factory=lambda: PrivacyParams(epsilon=1.0, scale_m=500.0)
    )
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    embedder: EmbedderSettings = field(default_factory=EmbedderSettings)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def to_dict(self) -> dict[str, Any]:
        return {
            "paths": {"dataset_dir": self.dataset_dir, "output_dir": self.output_dir},
            "bins": {"edges_m": list(self.bins.edges), "cap_m": self.bins.cap_m},
            "privacy": {"epsilon": self.privacy.epsilon, "scale_m": self.privacy.scale_m},
            "retrieval": {
                "lambda": self.retrieval.hybrid_lambda,
                "top_k": self.retrieval.top_k,
                "mc_samples": self.retrieval.mc_samples,
                "prune_mode": self.retrieval.prune_mode,
                "global_r_max": self.retrieval.global_r_max,
                "embed_raw_query": self.retrieval.embed_raw_query,
            },
            "seeds": {"mechanism": list(self.seeds)},
            "embedder": {
                "kind": self.embedder.kind,
                "dim": self.embedder.dim,
                "precomputed_path": self.embedder.precomputed_path,
            },
            "generation": {
                "enabled": self.generation.enabled,
                "endpoint": self.generation.endpoint,
                "model": self.generation.model,
                "temperature": self.generation.temperature,
                "max_parallel": self.generation.max_parallel,
            },
            "generator": {
                "lat_min": self.generator.lat_min,
                "lat_max": self.generator.lat_max,
                "lon_min": self.generator.lon_min,
                "lon_max": self.generator.lon_max,
                "n_anchors": self.generator.n_anchors,
                "n_chunks": self.generator.n_chunks,
                "n_queries": self.generator.n_queries,
                "k_tags": self.generator.k_tags,
                "anchor_min_sep_m": self.generator.anchor_min_sep_m,
                "chunk_cluster_frac": self.generator.chunk_cluster_frac,
                "chunk_cluster_sigma_m": self.generator.chunk_cluster_sigma_m,
                "dir_constraint_prob": self.generator.dir_constraint_prob,
                "query_radii_m": list(self.generator.query_radii_m),
            },
        }


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"section [{name}] must be a table")
    return value


def _build(raw: dict[str, Any]) -> RunConfig:
    try:
        paths = _section(raw, "paths")
        bins_raw = _section(raw, "bins")
        privacy = _section(raw, "privacy")
        retrieval = _section(raw, "retrieval")
        seeds_raw = _section(raw, "seeds")
        embedder = _section(raw, "embedder")
        generation = _section(raw, "generation")
        generator = _section(raw, "generator")

        cfg = RunConfig()
        bins = cfg.bins
        if bins_raw:
            bins = DistanceBins(
                edges=tuple(bins_raw.get("edges_m", cfg.bins.edges)),
                cap_m=float(bins_raw.get("cap_m", cfg.bins.cap_m)),
            )
        gen_cfg = GeneratorConfig.from_dict({**generator, "bins": bins} if generator else
                                            {"bins": bins})
        return RunConfig(
            dataset_dir=str(paths.get("dataset_dir", cfg.dataset_dir)),
            output_dir=str(paths.get("output_dir", cfg.output_dir)),
            bins=bins,
            privacy=PrivacyParams(
                epsilon=float(privacy.get("epsilon", 1.0)),
                scale_m=float(privacy.get("scale_m", 500.0)),
            ),
            retrieval=RetrievalConfig(
                hybrid_lambda=float(retrieval.get("lambda", 0.8)),
                top_k=int(retrieval.get("top_k", 5)),
                mc_samples=int(retrieval.get("mc_samples", 1000)),
                prune_mode=str(retrieval.get("prune_mode", "distance")),
                global_r_max=bool(retrieval.get("global_r_max", False)),
                embed_raw_query=bool(retrieval.get("embed_raw_query", False)),
            ),
            seeds=tuple(int(s) for s in seeds_raw.get("mechanism", cfg.seeds)),
            embedder=EmbedderSettings(
                kind=str(embedder.get("kind", "lexical")),
                dim=int(embedder.get("dim", 512)),
                precomputed_path=str(embedder.get("precomputed_path", "")),
            ),
            generation=GenerationSettings(
                enabled=bool(generation.get("enabled", False)),
                endpoint=str(generation.get("endpoint", "")),
                model=str(generation.get("model", "")),
                temperature=float(generation.get("temperature", 0.1)),
                max_parallel=int(generation.get("max_parallel", 4)),
            ),
            generator=gen_cfg,
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    """Load a TOML config, or the defaults when no path is given."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    with open(p, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    cfg = _build(raw)
    if cfg.embedder.kind == "precomputed":
        vec_path = Path(cfg.embedder.precomputed_path)
        if not vec_path.exists():
            raise ConfigError(f"precomputed vectors not found: {vec_path}")
    elif cfg.embedder.kind != "lexical":
        raise ConfigError(f"unknown embedder kind {cfg.embedder.kind!r}")
    return cfg


def with_overrides(
    cfg: RunConfig,
    epsilon: float | None = None,
    hybrid_lambda: float | None = None,
    n_seeds: int | None = None,
) -> RunConfig:
    """Apply the common CLI overrides onto a loaded config."""
    if epsilon is not None:
        cfg = replace(cfg, privacy=PrivacyParams(epsilon=epsilon,
                                                 scale_m=cfg.privacy.scale_m))
    if hybrid_lambda is not None:
        cfg = replace(cfg, retrieval=replace(cfg.retrieval, hybrid_lambda=hybrid_lambda))
    if n_seeds is not None:
        if n_seeds < 1:
            raise ConfigError(f"--seeds must be >= 1, got {n_seeds}")
        cfg = replace(cfg, seeds=tuple(range(1, n_seeds + 1)))
    return cfg


def write_resolved_config(cfg: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "run_config.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
