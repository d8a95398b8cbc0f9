"""Retrieval/generation/security metrics and the evaluation harness.

Per-query outcomes are written as CSV rows; a summary row aggregates
arithmetic means (and standard errors) over seeds x queries. The sweep
harness runs the full epsilon x lambda grid and records one summary row per
configuration; it records, and never asserts, any trend in the curves.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Dataset, SpatialQuery
from .geo import DistanceBins
from .mechanism import PasToken, PrivacyParams, make_token
from .region import ale
from .retrieval import CorpusIndex, RetrievalConfig, retrieve_baseline, retrieve_pas
from .semantics import tokenize
from . import generation as genmod

PER_QUERY_COLUMNS = (
    "query_id", "mode", "epsilon", "lambda", "seed",
    "recall_at_k", "ndcg_at_k", "f1", "citation_strict", "citation_grounded", "ale_m",
)

SUMMARY_COLUMNS = (
    "mode", "epsilon", "lambda", "top_k", "mc_samples", "n_seeds", "n_queries", "n_rows",
    "recall_mean", "recall_stderr", "ndcg_mean", "ndcg_stderr",
    "f1_mean", "f1_stderr", "citation_strict_mean", "citation_strict_stderr",
    "citation_grounded_mean", "citation_grounded_stderr",
    "ale_mean", "ale_stderr", "retriever",
)


def recall_at_k(retrieved: Sequence[str], ground_truth: Sequence[str], k: int) -> float:
    """Fraction of the relevant set present in the top-k retrieved ids."""
    relevant = set(ground_truth)
    if not relevant:
        raise ValueError("ground truth must be non-empty")
    return len(set(retrieved[:k]) & relevant) / len(relevant)


def ndcg_at_k(retrieved: Sequence[str], ground_truth: Sequence[str], k: int) -> float:
    """Binary-relevance nDCG: DCG of the top-k over the ideal DCG."""
    relevant = set(ground_truth)
    if not relevant:
        raise ValueError("ground truth must be non-empty")
    dcg = sum(
        1.0 / math.log2(i + 2) for i, doc in enumerate(retrieved[:k]) if doc in relevant
    )
    ideal = sum(1.0 / math.log2(i + 2) for i in range(min(len(relevant), k)))
    return dcg / ideal


def f1_overlap(generated_answer: str, reference_answer: str) -> float:
    """Token-level bag-overlap F1 between two texts (lowercase alphanumeric)."""
    gen = Counter(tokenize(generated_answer))
    ref = Counter(tokenize(reference_answer))
    overlap = sum((gen & ref).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(gen.values())
    recall = overlap / sum(ref.values())
    return 2.0 * precision * recall / (precision + recall)


def citation_correctness(
    citations: Sequence[str],
    retrieved_context: Sequence[str],
    ground_truth: Sequence[str],
) -> float:
    """Strict grounding: cited ids must appear in the context AND the ground truth.

    An empty citation list counts as fully ungrounded (0).
    """
    if not citations:
        return 0.0
    valid = set(retrieved_context) & set(ground_truth)
    return sum(1 for c in citations if c in valid) / len(citations)


def citation_grounded(citations: Sequence[str], retrieved_context: Sequence[str]) -> float:
    """Lenient variant: cited ids need only appear in the retrieved context."""
    if not citations:
        return 0.0
    ctx = set(retrieved_context)
    return sum(1 for c in citations if c in ctx) / len(citations)


def reference_answer(query: SpatialQuery, dataset: Dataset) -> str:
    """Deterministic reference: the ground-truth POI names, doc_id order."""
    names = [dataset.chunk_by_id(d).name for d in sorted(query.ground_truth)]
    return ", ".join(names)


@dataclass
class QueryOutcome:
    query_id: str
    mode: str
    epsilon: float | None
    hybrid_lambda: float
    seed: int
    retrieved: list[str]
    ground_truth: list[str]
    recall: float
    ndcg: float
    f1: float
    citation_strict: float
    citation_grounded: float
    ale_m: float
    token: PasToken | None = None
    gen: "genmod.GenerationRecord | None" = None

    def csv_row(self) -> dict[str, str]:
        return {
            "query_id": self.query_id,
            "mode": self.mode,
            "epsilon": "" if self.epsilon is None else f"{self.epsilon:.6f}",
            "lambda": f"{self.hybrid_lambda:.6f}",
            "seed": str(self.seed),
            "recall_at_k": f"{self.recall:.6f}",
            "ndcg_at_k": f"{self.ndcg:.6f}",
            "f1": f"{self.f1:.6f}",
            "citation_strict": f"{self.citation_strict:.6f}",
            "citation_grounded": f"{self.citation_grounded:.6f}",
            "ale_m": f"{self.ale_m:.6f}",
        }


@dataclass
class EvalReport:
    retriever: str
    mode: str
    epsilon: float | None
    hybrid_lambda: float
    top_k: int
    mc_samples: int
    seeds: tuple[int, ...]
    n_queries: int
    n_rows: int
    means: dict[str, float]
    stderrs: dict[str, float]
    outcomes: list[QueryOutcome] = field(default_factory=list, repr=False)

    def summary_row(self) -> dict[str, str]:
        m, s = self.means, self.stderrs
        return {
            "mode": self.mode,
            "epsilon": "" if self.epsilon is None else f"{self.epsilon:.6f}",
            "lambda": f"{self.hybrid_lambda:.6f}",
            "top_k": str(self.top_k),
            "mc_samples": str(self.mc_samples),
            "n_seeds": str(len(self.seeds)),
            "n_queries": str(self.n_queries),
            "n_rows": str(self.n_rows),
            "recall_mean": f"{m['recall']:.6f}",
            "recall_stderr": f"{s['recall']:.6f}",
            "ndcg_mean": f"{m['ndcg']:.6f}",
            "ndcg_stderr": f"{s['ndcg']:.6f}",
            "f1_mean": f"{m['f1']:.6f}",
            "f1_stderr": f"{s['f1']:.6f}",
            "citation_strict_mean": f"{m['citation_strict']:.6f}",
            "citation_strict_stderr": f"{s['citation_strict']:.6f}",
            "citation_grounded_mean": f"{m['citation_grounded']:.6f}",
            "citation_grounded_stderr": f"{s['citation_grounded']:.6f}",
            "ale_mean": f"{m['ale_m']:.6f}",
            "ale_stderr": f"{s['ale_m']:.6f}",
            "retriever": self.retriever,
        }


_METRIC_KEYS = ("recall", "ndcg", "f1", "citation_strict", "citation_grounded", "ale_m")


def _aggregate(outcomes: list[QueryOutcome]) -> tuple[dict[str, float], dict[str, float]]:
    means, stderrs = {}, {}
    for key in _METRIC_KEYS:
        vals = np.array([getattr(o, key) for o in outcomes])
        means[key] = float(vals.mean())
        stderrs[key] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return means, stderrs


def provider_tag(provider) -> str:
    name = type(provider).__name__
    if name == "LexicalEmbedder":
        return f"lexical-{provider.dim()}"
    if name == "PrecomputedEmbedder":
        return f"precomputed-{provider.dim()}"
    return name


def _query_rng(mechanism_seed: int, query_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((mechanism_seed, query_index)))


def _evaluate_one(
    dataset: Dataset,
    index: CorpusIndex,
    query: SpatialQuery,
    query_index: int,
    mode: str,
    params: PrivacyParams,
    bins: DistanceBins,
    cfg: RetrievalConfig,
    provider,
    seed: int,
    client,
) -> QueryOutcome:
    token = None
    ale_m = 0.0
    if mode == "pas":
        rng = _query_rng(seed, query_index)
        token = make_token(query.true_loc, dataset.anchors, params, bins, rng)
        result = retrieve_pas(query, dataset, provider, params, bins, cfg, rng,
                              index=index, token=token)
        ale_m = ale(query.true_loc, token, dataset.anchors, bins, cfg.mc_samples, rng)
    elif mode == "baseline":
        result = retrieve_baseline(query, dataset, provider, cfg, index=index)
    else:
        raise ValueError(f"unknown eval mode {mode!r}")

    retrieved = result.doc_ids
    f1 = 0.0
    cit_strict = 0.0
    cit_grounded = 0.0
    record = None
    if client is not None:
        record = genmod.generate_answer(client, query, result, dataset)
        cited = [c["doc_id"] for c in record.citations]
        f1 = f1_overlap(record.answer, reference_answer(query, dataset))
        cit_strict = citation_correctness(cited, retrieved, query.ground_truth)
        cit_grounded = citation_grounded(cited, retrieved)

    return QueryOutcome(
        query_id=query.query_id,
        mode=mode,
        epsilon=params.epsilon if mode == "pas" else None,
        hybrid_lambda=cfg.hybrid_lambda,
        seed=seed,
        retrieved=retrieved,
        ground_truth=list(query.ground_truth),
        recall=recall_at_k(retrieved, query.ground_truth, cfg.top_k),
        ndcg=ndcg_at_k(retrieved, query.ground_truth, cfg.top_k),
        f1=f1,
        citation_strict=cit_strict,
        citation_grounded=cit_grounded,
        ale_m=ale_m if mode == "pas" else 0.0,
        token=token,
        gen=record,
    )


def run_eval(
    dataset: Dataset,
    mode: str,
    params: PrivacyParams,
    bins: DistanceBins,
    cfg: RetrievalConfig,
    provider,
    seeds: Sequence[int] = (1, 2, 3, 4, 5),
    client=None,
    index: CorpusIndex | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Evaluate every query, in PAS mode once per mechanism seed.

    ``client`` enables the generation metrics (F1, citation); without it
    those columns are zero-filled. Results are deterministic for fixed
    (dataset, config, seeds) regardless of ``jobs``.
    """
    if index is None:
        index = CorpusIndex.build(dataset, provider)
    seed_list = [0] if mode == "baseline" else list(seeds)

    tasks = [
        (seed, qi, query)
        for seed in seed_list
        for qi, query in enumerate(dataset.queries)
    ]

    def work(task):
        seed, qi, query = task
        return _evaluate_one(dataset, index, query, qi, mode, params, bins, cfg,
                             provider, seed, client)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(t) for t in tasks]

    means, stderrs = _aggregate(outcomes)
    return EvalReport(
        retriever=provider_tag(provider),
        mode=mode,
        epsilon=params.epsilon if mode == "pas" else None,
        hybrid_lambda=cfg.hybrid_lambda,
        top_k=cfg.top_k,
        mc_samples=cfg.mc_samples,
        seeds=tuple(seed_list),
        n_queries=len(dataset.queries),
        n_rows=len(outcomes),
        means=means,
        stderrs=stderrs,
        outcomes=outcomes,
    )


def sweep(
    dataset: Dataset,
    eps_list: Sequence[float],
    lambda_list: Sequence[float],
    seeds: Sequence[int],
    cfg: RetrievalConfig,
    bins: DistanceBins,
    provider,
    scale_m: float = 500.0,
    client=None,
    jobs: int = 1,
) -> list[EvalReport]:
    """PAS evaluation over the full epsilon x lambda Cartesian product."""
    if not eps_list or not lambda_list:
        raise ValueError("sweep grids must be non-empty")
    index = CorpusIndex.build(dataset, provider)
    reports = []
    for eps in eps_list:
        for lam in lambda_list:
            reports.append(run_eval(
                dataset, "pas",
                PrivacyParams(epsilon=eps, scale_m=scale_m),
                bins, replace(cfg, hybrid_lambda=lam), provider,
                seeds=seeds, client=client, index=index, jobs=jobs,
            ))
    return reports


def write_per_query_csv(path: str | Path, outcomes: Iterable[QueryOutcome]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PER_QUERY_COLUMNS)
        writer.writeheader()
        for o in outcomes:
            writer.writerow(o.csv_row())


def write_summary_csv(path: str | Path, reports: Iterable[EvalReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.summary_row())


def read_per_query_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def recompute_means(rows: Sequence[dict[str, str]]) -> dict[str, float]:
    """Re-derive the summary means from per-query CSV rows (consistency check)."""
    cols = {"recall": "recall_at_k", "ndcg": "ndcg_at_k", "f1": "f1",
            "citation_strict": "citation_strict", "citation_grounded": "citation_grounded",
            "ale_m": "ale_m"}
    return {
        key: float(np.mean([float(r[col]) for r in rows])) for key, col in cols.items()
    }


def retention_of(pas: EvalReport, baseline: EvalReport) -> dict[str, float]:
    """Per-metric PAS/baseline ratio, computed on the report means."""
    out = {}
    for key in ("recall", "ndcg", "f1", "citation_strict"):
        base = baseline.means[key]
        out[key] = pas.means[key] / base if base > 0 else float("nan")
    return out
