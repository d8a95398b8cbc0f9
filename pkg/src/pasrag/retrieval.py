"""Hybrid spatial/semantic retrieval over the POI corpus.

Candidates are pruned around the token's anchor by the triangle inequality,
their user-relative spatial constraints are Monte Carlo-estimated over latent
user locations in the uncertainty region, and final ranking combines the
semantic cosine and the spatial probability with a configurable weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .corpus import Anchor, Chunk, Dataset, SpatialQuery
from .geo import (
    DirectionBin,
    DistanceBins,
    GeoPoint,
    bearing_deg,
    dir_bin,
    dir_index_arr,
    bearing_deg_arr,
    haversine_m,
    haversine_m_arr,
)
from .mechanism import PasToken, PrivacyParams, make_token
from .region import LatentSamples, region_from_token, sample_region
from .semantics import Embedding, chunk_text, cosine, query_text


@dataclass(frozen=True)
class RetrievalConfig:
    """Ranking knobs: hybrid weight, cut-off, sample count and prune mode."""

    hybrid_lambda: float = 0.8
    top_k: int = 5
    mc_samples: int = 1000
    prune_mode: str = "distance"  # "distance" or "tag"
    global_r_max: bool = False    # prune with the cap instead of the token's ring
    embed_raw_query: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.hybrid_lambda <= 1.0:
            raise ValueError(f"hybrid_lambda must be in [0, 1], got {self.hybrid_lambda}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.mc_samples < 1:
            raise ValueError(f"mc_samples must be >= 1, got {self.mc_samples}")
        if self.prune_mode not in ("distance", "tag"):
            raise ValueError(f"unknown prune_mode {self.prune_mode!r}")


@dataclass(frozen=True)
class RankedEntry:
    doc_id: str
    s_sem: float
    s_sp: float
    s_hybrid: float


@dataclass
class RankedResult:
    """Top-k entries sorted by hybrid score desc, doc_id asc on ties."""

    entries: list[RankedEntry]
    token: PasToken | None = None

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": [
                {"doc_id": e.doc_id, "s_sem": e.s_sem, "s_sp": e.s_sp,
                 "s_hybrid": e.s_hybrid}
                for e in self.entries
            ],
            "token": self.token.to_dict() if self.token else None,
        }


@dataclass(eq=False)
class CorpusIndex:
    """Precomputed per-chunk arrays: coordinates and embedding matrix."""

    chunks: list[Chunk]
    lats: np.ndarray
    lons: np.ndarray
    vectors: np.ndarray          # row-L2-normalized; zero rows stay zero
    zero_rows: np.ndarray
    doc_pos: dict[str, int] = field(default_factory=dict)

    @classmethod
    def build(cls, dataset: Dataset, provider) -> "CorpusIndex":
        chunks = dataset.chunks
        lats = np.array([c.loc.lat for c in chunks])
        lons = np.array([c.loc.lon for c in chunks])
        mat = np.stack([provider.embed(chunk_text(c)).values for c in chunks])
        norms = np.linalg.norm(mat, axis=1)
        zero_rows = norms == 0.0
        safe = np.where(zero_rows, 1.0, norms)
        mat = mat / safe[:, None]
        return cls(
            chunks=chunks, lats=lats, lons=lons, vectors=mat, zero_rows=zero_rows,
            doc_pos={c.doc_id: i for i, c in enumerate(chunks)},
        )

    def semantic_scores(self, q_emb: Embedding, positions: np.ndarray) -> np.ndarray:
        qv = q_emb.values
        qn = np.linalg.norm(qv)
        if qn == 0.0:
            return np.zeros(positions.shape[0])
        scores = np.clip(self.vectors[positions] @ (qv / qn), -1.0, 1.0)
        scores[self.zero_rows[positions]] = 0.0
        return scores


def _r_max(token: PasToken, bins: DistanceBins, global_r_max: bool) -> float:
    if global_r_max:
        return bins.cap_m
    return bins.ring(token.dist_bin)[1]


def prune_candidates(
    token: PasToken,
    chunks: Sequence[Chunk],
    anchors: Sequence[Anchor],
    radius_m: float,
    bins: DistanceBins,
    mode: str = "distance",
    global_r_max: bool = False,
) -> list[Chunk]:
    """Candidate superset around the token's anchor.

    Distance mode keeps every chunk within ``radius_m + r_max`` of the
    anchor, where r_max is the token ring's outer edge; since the user is at
    most r_max from the anchor, the triangle inequality guarantees no chunk
    within ``radius_m`` of the user is dropped. Tag mode keeps only chunks
    whose stored anchor tags include this anchor, at the same distance cut.
    """
    r_cut = radius_m + _r_max(token, bins, global_r_max)
    if mode == "distance":
        anchor = next(a for a in anchors if a.id == token.anchor_id)
        lats = np.array([c.loc.lat for c in chunks])
        lons = np.array([c.loc.lon for c in chunks])
        d = haversine_m_arr(anchor.loc.lat, anchor.loc.lon, lats, lons)
        keep = d <= r_cut
        return [c for c, k in zip(chunks, keep) if k]
    if mode == "tag":
        out = []
        for c in chunks:
            for t in c.anchor_tags:
                if t.anchor_id == token.anchor_id and t.dist_m <= r_cut:
                    out.append(c)
                    break
        return out
    raise ValueError(f"unknown prune mode {mode!r}")


def _direction_ok_arr(
    from_lats: np.ndarray, from_lons: np.ndarray,
    to_lat: float, to_lon: float,
    direction: DirectionBin | None,
) -> np.ndarray:
    if direction is None:
        return np.ones(from_lats.shape[0], dtype=bool)
    b = bearing_deg_arr(from_lats, from_lons, to_lat, to_lon)
    return dir_index_arr(b) == int(direction)


def spatial_score_mc(
    chunk: Chunk,
    samples: LatentSamples,
    radius_m: float,
    direction: DirectionBin | None,
) -> float:
    """Fraction of latent user locations from which the chunk satisfies the query."""
    d = haversine_m_arr(samples.lats, samples.lons, chunk.loc.lat, chunk.loc.lon)
    hit = d <= radius_m
    hit &= _direction_ok_arr(samples.lats, samples.lons,
                             chunk.loc.lat, chunk.loc.lon, direction)
    return float(hit.mean())


def spatial_scores_mc(
    lats: np.ndarray,
    lons: np.ndarray,
    samples: LatentSamples,
    radius_m: float,
    direction: DirectionBin | None,
) -> np.ndarray:
    """Vectorized ``spatial_score_mc`` over many chunk coordinates at once."""
    d = haversine_m_arr(samples.lats[:, None], samples.lons[:, None],
                        lats[None, :], lons[None, :])
    hit = d <= radius_m
    if direction is not None:
        b = bearing_deg_arr(samples.lats[:, None], samples.lons[:, None],
                            lats[None, :], lons[None, :])
        hit &= dir_index_arr(b) == int(direction)
    return hit.mean(axis=0)


def spatial_score_true(
    chunk: Chunk,
    u: GeoPoint,
    radius_m: float,
    direction: DirectionBin | None,
) -> float:
    """Non-private indicator: chunk within radius and sector of the true location."""
    if haversine_m(u, chunk.loc) > radius_m:
        return 0.0
    if direction is not None and dir_bin(bearing_deg(u, chunk.loc)) != direction:
        return 0.0
    return 1.0


def hybrid_rank(
    candidates: Sequence[Chunk],
    q_emb: Embedding,
    provider,
    spatial_scores: dict[str, float],
    cfg: RetrievalConfig,
    semantic_scores: dict[str, float] | None = None,
) -> RankedResult:
    """Combine semantic and spatial scores and keep the top-k.

    Semantic scores are cosine(q_emb, chunk embedding); precomputed values
    may be passed to skip the per-chunk embed call. Ties break on doc_id.
    """
    lam = cfg.hybrid_lambda
    entries = []
    for chunk in candidates:
        if semantic_scores is not None:
            s_sem = semantic_scores[chunk.doc_id]
        else:
            s_sem = cosine(q_emb, provider.embed(chunk_text(chunk)))
        s_sp = spatial_scores[chunk.doc_id]
        entries.append(RankedEntry(
            doc_id=chunk.doc_id,
            s_sem=float(s_sem),
            s_sp=float(s_sp),
            s_hybrid=float(lam * s_sem + (1.0 - lam) * s_sp),
        ))
    entries.sort(key=lambda e: (-e.s_hybrid, e.doc_id))
    return RankedResult(entries=entries[: cfg.top_k])


def retrieve_pas(
    query: SpatialQuery,
    dataset: Dataset,
    provider,
    params: PrivacyParams,
    bins: DistanceBins,
    cfg: RetrievalConfig,
    rng: np.random.Generator,
    index: CorpusIndex | None = None,
    token: PasToken | None = None,
) -> RankedResult:
    """Privacy-preserving retrieval: privatize, sample the region, rank.

    The true location is consumed only by the token mechanism; every spatial
    signal downstream comes from the token's uncertainty region. A
    pre-drawn ``token`` may be supplied (e.g. to share it with the
    localization-error metric).
    """
    if index is None:
        index = CorpusIndex.build(dataset, provider)
    if token is None:
        token = make_token(query.true_loc, dataset.anchors, params, bins, rng)
    region = region_from_token(token, dataset.anchors, bins)
    samples = sample_region(region, cfg.mc_samples, rng)

    candidates = prune_candidates(
        token, dataset.chunks, dataset.anchors, query.radius_m, bins,
        mode=cfg.prune_mode, global_r_max=cfg.global_r_max,
    )
    if not candidates:
        return RankedResult(entries=[], token=token)

    pos = np.array([index.doc_pos[c.doc_id] for c in candidates])
    sp = spatial_scores_mc(index.lats[pos], index.lons[pos], samples,
                           query.radius_m, query.direction_constraint)
    q_emb = provider.embed(query_text(query, cfg.embed_raw_query))
    sem = index.semantic_scores(q_emb, pos)

    result = hybrid_rank(
        candidates, q_emb, provider,
        spatial_scores={c.doc_id: float(s) for c, s in zip(candidates, sp)},
        cfg=cfg,
        semantic_scores={c.doc_id: float(s) for c, s in zip(candidates, sem)},
    )
    result.token = token
    return result


def retrieve_baseline(
    query: SpatialQuery,
    dataset: Dataset,
    provider,
    cfg: RetrievalConfig,
    index: CorpusIndex | None = None,
) -> RankedResult:
    """Non-private reference retrieval using the true location directly."""
    if index is None:
        index = CorpusIndex.build(dataset, provider)
    u = query.true_loc
    d = haversine_m_arr(u.lat, u.lon, index.lats, index.lons)
    keep = d <= query.radius_m
    in_radius = np.flatnonzero(keep)
    candidates = [index.chunks[i] for i in in_radius]
    if not candidates:
        return RankedResult(entries=[], token=None)

    sp = np.ones(in_radius.shape[0])
    if query.direction_constraint is not None:
        b = bearing_deg_arr(u.lat, u.lon, index.lats[in_radius], index.lons[in_radius])
        sp = (dir_index_arr(b) == int(query.direction_constraint)).astype(float)

    q_emb = provider.embed(query_text(query, cfg.embed_raw_query))
    sem = index.semantic_scores(q_emb, in_radius)
    return hybrid_rank(
        candidates, q_emb, provider,
        spatial_scores={c.doc_id: float(s) for c, s in zip(candidates, sp)},
        cfg=cfg,
        semantic_scores={c.doc_id: float(s) for c, s in zip(candidates, sem)},
    )
