"""Command-line entry point wiring the full pipeline.

Exit codes: 0 success, 2 usage/config problems, 3 audit-bound failure,
4 runtime failure.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
from pathlib import Path

import click
import numpy as np

from .config import (
    API_KEY_ENV,
    ConfigError,
    RunConfig,
    load_config,
    with_overrides,
    write_resolved_config,
)
from .corpus import Dataset, SchemaError, load_dataset, save_dataset
from .datagen import GenerationError, generate_dataset
from .evaluation import (
    run_eval,
    sweep,
    write_per_query_csv,
    write_summary_csv,
)
from .generation import HttpChatClient, stub_client
from .geo import GeoPoint
from .mechanism import PrivacyParams, audit_geo_dp
from .semantics import LexicalEmbedder, load_precomputed


class ConfigUsageError(click.ClickException):
    exit_code = 2


class AuditBoundError(click.ClickException):
    exit_code = 3


class RuntimeFailure(click.ClickException):
    exit_code = 4


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ConfigError, SchemaError, GenerationError, FileNotFoundError) as exc:
            raise ConfigUsageError(str(exc)) from exc
        except Exception as exc:
            raise RuntimeFailure(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def _provider(cfg: RunConfig):
    if cfg.embedder.kind == "precomputed":
        return load_precomputed(cfg.embedder.precomputed_path)
    return LexicalEmbedder(cfg.embedder.dim)


def _client(cfg: RunConfig, dataset: Dataset, stub: bool, with_gen: bool):
    if stub:
        return stub_client(dataset)
    if with_gen or cfg.generation.enabled:
        if not cfg.generation.endpoint or not cfg.generation.model:
            raise ConfigError("generation requires endpoint and model in the config")
        return HttpChatClient(
            endpoint=cfg.generation.endpoint,
            model=cfg.generation.model,
            api_key=os.environ.get(API_KEY_ENV, ""),
            temperature=cfg.generation.temperature,
        )
    return None


def _load(cfg: RunConfig) -> Dataset:
    d = Path(cfg.dataset_dir)
    if not d.exists():
        raise ConfigError(f"dataset directory not found: {d}")
    return load_dataset(d)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ConfigUsageError(f"{flag} expects comma-separated numbers: {text!r}") from exc
    if not values:
        raise ConfigUsageError(f"{flag} must list at least one value")
    return values


def _default_jobs() -> int:
    return os.cpu_count() or 1


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML run configuration; defaults apply when omitted.")
@click.pass_context
def cli(ctx, config_path):
    """Privacy-preserving spatial retrieval pipeline."""
    try:
        ctx.obj = load_config(config_path)
    except ConfigError as exc:
        raise ConfigUsageError(str(exc)) from exc


@cli.command("gen-dataset")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Target directory (defaults to paths.dataset_dir).")
@click.pass_obj
@_guarded
def gen_dataset_cmd(cfg: RunConfig, seed: int, out_dir: str | None):
    """Generate the synthetic dataset JSONL files."""
    target = Path(out_dir or cfg.dataset_dir)
    dataset = generate_dataset(cfg.generator, seed)
    save_dataset(dataset, target)
    write_resolved_config(cfg, target)
    click.echo(
        f"anchors={len(dataset.anchors)} chunks={len(dataset.chunks)}"
        f" queries={len(dataset.queries)}"
    )
    for name in ("anchors.jsonl", "chunks.jsonl", "queries.jsonl"):
        click.echo(f"sha256 {name} {_sha256(target / name)}")


@cli.command("query")
@click.option("--mode", type=click.Choice(["baseline", "pas"]), required=True)
@click.option("--query-id", required=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--stub-generation", is_flag=True, default=False)
@click.option("--with-generation", is_flag=True, default=False)
@click.pass_obj
@_guarded
def query_cmd(cfg: RunConfig, mode: str, query_id: str, seed: int,
              stub_generation: bool, with_generation: bool):
    """Run a single query and print the ranked results."""
    from .evaluation import _query_rng
    from .generation import generate_answer
    from .retrieval import retrieve_baseline, retrieve_pas

    dataset = _load(cfg)
    try:
        query = dataset.query_by_id(query_id)
    except KeyError as exc:
        raise ConfigUsageError(f"unknown query id {query_id!r}") from exc
    qi = next(i for i, q in enumerate(dataset.queries) if q.query_id == query_id)
    provider = _provider(cfg)

    if mode == "pas":
        rng = _query_rng(seed, qi)
        result = retrieve_pas(query, dataset, provider, cfg.privacy, cfg.bins,
                              cfg.retrieval, rng)
        token = result.token
        click.echo(
            f"token: (anchor={token.anchor_id}, dir={token.dir.label},"
            f" dist_bin={token.dist_bin})"
        )
    else:
        result = retrieve_baseline(query, dataset, provider, cfg.retrieval)

    click.echo("rank  doc_id  s_sem  s_sp  s_hybrid")
    for rank, e in enumerate(result.entries, start=1):
        click.echo(f"{rank}  {e.doc_id}  {e.s_sem:.6f}  {e.s_sp:.6f}  {e.s_hybrid:.6f}")
    if not result.entries:
        click.echo("(no results)")

    client = _client(cfg, dataset, stub_generation, with_generation)
    if client is not None:
        record = generate_answer(client, query, result, dataset)
        click.echo(f"answer: {record.answer}")
        click.echo(f"citations: {json.dumps(record.citations)}")


@cli.command("audit-dp")
@click.option("--grid-size", type=int, default=5, show_default=True)
@click.option("--eps", type=float, default=None, help="Override privacy.epsilon.")
@click.option("--scale", type=float, default=None, help="Override privacy.scale_m.")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.pass_obj
@_guarded
def audit_dp_cmd(cfg: RunConfig, grid_size: int, eps: float | None,
                 scale: float | None, out_dir: str | None):
    """Audit the geo-indistinguishability ratio bounds on a location grid."""
    if grid_size < 1:
        raise ConfigUsageError(f"--grid-size must be >= 1, got {grid_size}")
    dataset = _load(cfg)
    params = PrivacyParams(
        epsilon=eps if eps is not None else cfg.privacy.epsilon,
        scale_m=scale if scale is not None else cfg.privacy.scale_m,
    )
    lats = [a.loc.lat for a in dataset.anchors]
    lons = [a.loc.lon for a in dataset.anchors]
    grid = [
        GeoPoint(la, lo)
        for la in np.linspace(min(lats), max(lats), grid_size)
        for lo in np.linspace(min(lons), max(lons), grid_size)
    ]
    report = audit_geo_dp(dataset.anchors, params, grid, bins=cfg.bins)

    target = Path(out_dir or Path(cfg.output_dir) / "audit")
    target.mkdir(parents=True, exist_ok=True)
    (target / "audit_report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    write_resolved_config(cfg, target)

    if report.pairs_checked == 0:
        click.echo("warning: no pairs (grid has fewer than 2 distinct points)")
        click.echo("audit: trivially passed")
        return
    click.echo(f"pairs_checked={report.pairs_checked}")
    click.echo(f"max_ratio_anchor_marginal={report.max_ratio_anchor_marginal:.6g}")
    click.echo(
        f"eps_bound: max_normalized_ratio={report.bound_eps.max_normalized_ratio:.6g}"
        f" holds={report.bound_eps.holds}"
    )
    click.echo(
        f"2eps_bound: max_normalized_ratio={report.bound_2eps.max_normalized_ratio:.6g}"
        f" holds={report.bound_2eps.holds}"
    )
    click.echo(f"full_token_violations={report.full_token_violation_count}")
    if not report.bound_2eps.holds:
        raise AuditBoundError("anchor-marginal ratio exceeded the 2*eps bound")


@cli.command("eval")
@click.option("--mode", type=click.Choice(["baseline", "pas"]), required=True)
@click.option("--eps", type=float, default=None, help="Override privacy.epsilon.")
@click.option("--lambda", "hybrid_lambda", type=float, default=None,
              help="Override retrieval.lambda.")
@click.option("--seeds", "n_seeds", type=int, default=None,
              help="Use mechanism seeds 1..N.")
@click.option("--with-generation", is_flag=True, default=False)
@click.option("--stub-generation", is_flag=True, default=False)
@click.option("--jobs", type=int, default=None, help="Worker threads (default: cores).")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.pass_obj
@_guarded
def eval_cmd(cfg: RunConfig, mode: str, eps: float | None, hybrid_lambda: float | None,
             n_seeds: int | None, with_generation: bool, stub_generation: bool,
             jobs: int | None, out_dir: str | None):
    """Evaluate retrieval (and optionally generation) over every query."""
    cfg = with_overrides(cfg, epsilon=eps, hybrid_lambda=hybrid_lambda, n_seeds=n_seeds)
    dataset = _load(cfg)
    provider = _provider(cfg)
    client = _client(cfg, dataset, stub_generation, with_generation)

    n_jobs = jobs or _default_jobs()
    if isinstance(client, HttpChatClient):
        # bound in-flight chat requests
        n_jobs = max(1, min(n_jobs, cfg.generation.max_parallel))
    report = run_eval(
        dataset, mode, cfg.privacy, cfg.bins, cfg.retrieval, provider,
        seeds=cfg.seeds, client=client, jobs=n_jobs,
    )

    target = Path(out_dir or Path(cfg.output_dir) / "eval")
    target.mkdir(parents=True, exist_ok=True)
    write_per_query_csv(target / "per_query.csv", report.outcomes)
    write_summary_csv(target / "summary.csv", [report])
    if client is not None:
        with open(target / "gen_records.jsonl", "w", encoding="utf-8") as fh:
            for o in report.outcomes:
                fh.write(json.dumps({
                    "query_id": o.query_id, "seed": o.seed,
                    "record": o.gen.to_dict() if o.gen else None,
                }))
                fh.write("\n")
    write_resolved_config(cfg, target)

    row = report.summary_row()
    click.echo(",".join(row.keys()))
    click.echo(",".join(row.values()))


@cli.command("sweep")
@click.option("--eps", "eps_text", default="1,2,5", show_default=True)
@click.option("--lambda", "lambda_text", default="0.8", show_default=True)
@click.option("--seeds", "n_seeds", type=int, default=5, show_default=True)
@click.option("--stub-generation", is_flag=True, default=False)
@click.option("--jobs", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.pass_obj
@_guarded
def sweep_cmd(cfg: RunConfig, eps_text: str, lambda_text: str, n_seeds: int,
              stub_generation: bool, jobs: int | None, out_dir: str | None):
    """Run the epsilon x lambda grid and write one summary row per cell."""
    eps_list = _parse_float_list(eps_text, "--eps")
    lambda_list = _parse_float_list(lambda_text, "--lambda")
    cfg = with_overrides(cfg, n_seeds=n_seeds)
    dataset = _load(cfg)
    provider = _provider(cfg)
    client = stub_client(dataset) if stub_generation else None

    reports = sweep(
        dataset, eps_list, lambda_list, cfg.seeds, cfg.retrieval, cfg.bins, provider,
        scale_m=cfg.privacy.scale_m, client=client, jobs=jobs or _default_jobs(),
    )

    target = Path(out_dir or Path(cfg.output_dir) / "sweep")
    target.mkdir(parents=True, exist_ok=True)
    write_summary_csv(target / "sweep.csv", reports)
    write_per_query_csv(
        target / "sweep_per_query.csv",
        [o for r in reports for o in r.outcomes],
    )
    write_resolved_config(cfg, target)
    click.echo(f"rows={len(reports)}")
    click.echo(f"wrote {target / 'sweep.csv'}")


def main():
    cli()


if __name__ == "__main__":
    main()
