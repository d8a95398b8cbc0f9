"""Data model for anchors, POI chunks and evaluation queries, plus JSONL IO.

Datasets are three JSONL files (anchors.jsonl, chunks.jsonl, queries.jsonl).
Loading is lenient by default: unknown fields are preserved and written back
on save. Strict mode rejects them. Schema violations are reported with the
offending file and line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .geo import (
    DirectionBin,
    DistanceBins,
    GeoPoint,
    bearing_deg,
    dir_bin,
    dist_bin,
    haversine_m,
)

ANCHORS_FILE = "anchors.jsonl"
CHUNKS_FILE = "chunks.jsonl"
QUERIES_FILE = "queries.jsonl"


class SchemaError(ValueError):
    """A JSONL record violated the dataset schema."""


@dataclass
class Anchor:
    id: str
    name: str
    neighborhood: str
    loc: GeoPoint
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AnchorTag:
    """Spatial relation of a chunk to one anchor, recomputable from coordinates."""

    anchor_id: str
    dir: DirectionBin
    dist_bin: int
    dist_m: float


@dataclass
class Chunk:
    doc_id: str
    name: str
    category: str
    tags: tuple[str, ...]
    description: str
    loc: GeoPoint
    anchor_tags: tuple[AnchorTag, ...]
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass
class SpatialQuery:
    query_id: str
    raw_query: str
    entity_category: str
    must_have_tags: tuple[str, ...]
    true_loc: GeoPoint
    radius_m: float
    direction_constraint: DirectionBin | None  # None means "any"
    ground_truth: tuple[str, ...]
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass
class Dataset:
    anchors: list[Anchor]
    chunks: list[Chunk]
    queries: list[SpatialQuery]

    def anchor_by_id(self, anchor_id: str) -> Anchor:
        try:
            return self._anchor_index[anchor_id]
        except AttributeError:
            self._anchor_index = {a.id: a for a in self.anchors}
            return self._anchor_index[anchor_id]

    def chunk_by_id(self, doc_id: str) -> Chunk:
        try:
            return self._chunk_index[doc_id]
        except AttributeError:
            self._chunk_index = {c.doc_id: c for c in self.chunks}
            return self._chunk_index[doc_id]

    def query_by_id(self, query_id: str) -> SpatialQuery:
        try:
            return self._query_index[query_id]
        except AttributeError:
            self._query_index = {q.query_id: q for q in self.queries}
            return self._query_index[query_id]


def ground_truth_for(
    true_loc: GeoPoint,
    radius_m: float,
    direction: DirectionBin | None,
    entity_category: str,
    must_have_tags: Sequence[str],
    chunks: Iterable[Chunk],
) -> list[str]:
    """Brute-force ground truth: every chunk matching all query constraints.

    A chunk qualifies when its category matches, it carries all required
    tags, it lies within ``radius_m`` of ``true_loc``, and (when a direction
    is given) the bearing from ``true_loc`` to the chunk falls in that sector.
    """
    need = set(must_have_tags)
    out = []
    for chunk in chunks:
        if chunk.category != entity_category:
            continue
        if not need.issubset(chunk.tags):
            continue
        if haversine_m(true_loc, chunk.loc) > radius_m:
            continue
        if direction is not None and dir_bin(bearing_deg(true_loc, chunk.loc)) != direction:
            continue
        out.append(chunk.doc_id)
    return sorted(out)


def recompute_anchor_tag(anchor: Anchor, chunk_loc: GeoPoint, bins: DistanceBins) -> AnchorTag:
    """Derive the tag a chunk at ``chunk_loc`` carries for ``anchor``."""
    d = haversine_m(anchor.loc, chunk_loc)
    return AnchorTag(
        anchor_id=anchor.id,
        dir=dir_bin(bearing_deg(anchor.loc, chunk_loc)),
        dist_bin=dist_bin(d, bins).index,
        dist_m=d,
    )


# -- JSONL (de)serialization ------------------------------------------------

def _loc_to_dict(p: GeoPoint) -> dict[str, float]:
    return {"lat": p.lat, "lon": p.lon}


def _loc_from_dict(obj: Any, where: str) -> GeoPoint:
    if not isinstance(obj, dict) or set(obj) != {"lat", "lon"}:
        raise SchemaError(f"{where}: loc must be an object with lat and lon")
    lat, lon = obj["lat"], obj["lon"]
    if not isinstance(lat, (int, float)) or not isinstance(lon, (int, float)):
        raise SchemaError(f"{where}: lat/lon must be numbers")
    if not -90.0 <= lat <= 90.0:
        raise SchemaError(f"{where}: lat {lat} outside [-90, 90]")
    if not -180.0 <= lon < 180.0:
        raise SchemaError(f"{where}: lon {lon} outside [-180, 180)")
    return GeoPoint(float(lat), float(lon))


def _direction_from(value: Any, where: str) -> DirectionBin:
    if isinstance(value, str) and value in DirectionBin.__members__:
        return DirectionBin[value]
    raise SchemaError(f"{where}: unknown direction label {value!r}")


_ANCHOR_FIELDS = {"id", "name", "neighborhood", "loc"}
_CHUNK_FIELDS = {"doc_id", "name", "category", "tags", "description", "loc", "anchor_tags"}
_TAG_FIELDS = {"anchor_id", "dir", "dist_bin", "dist_m"}
_QUERY_FIELDS = {
    "query_id", "raw_query", "entity_category", "must_have_tags",
    "true_loc", "radius_m", "direction_constraint", "ground_truth",
}


def _split_extras(obj: dict, known: set[str], strict: bool, where: str) -> dict[str, Any]:
    unknown = set(obj) - known
    if unknown and strict:
        raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")
    missing = known - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing fields {sorted(missing)}")
    return {k: obj[k] for k in unknown}


def anchor_to_dict(a: Anchor) -> dict[str, Any]:
    return {"id": a.id, "name": a.name, "neighborhood": a.neighborhood,
            "loc": _loc_to_dict(a.loc), **a.extras}


def anchor_from_dict(obj: dict, where: str = "<anchor>", strict: bool = False) -> Anchor:
    extras = _split_extras(obj, _ANCHOR_FIELDS, strict, where)
    return Anchor(
        id=str(obj["id"]),
        name=str(obj["name"]),
        neighborhood=str(obj["neighborhood"]),
        loc=_loc_from_dict(obj["loc"], where),
        extras=extras,
    )


def chunk_to_dict(c: Chunk) -> dict[str, Any]:
    return {
        "doc_id": c.doc_id,
        "name": c.name,
        "category": c.category,
        "tags": list(c.tags),
        "description": c.description,
        "loc": _loc_to_dict(c.loc),
        "anchor_tags": [
            {"anchor_id": t.anchor_id, "dir": t.dir.label,
             "dist_bin": t.dist_bin, "dist_m": t.dist_m}
            for t in c.anchor_tags
        ],
        **c.extras,
    }


def chunk_from_dict(obj: dict, where: str = "<chunk>", strict: bool = False) -> Chunk:
    extras = _split_extras(obj, _CHUNK_FIELDS, strict, where)
    raw_tags = obj["anchor_tags"]
    if not isinstance(raw_tags, list) or len(raw_tags) < 2:
        raise SchemaError(f"{where}: anchor_tags must list at least two anchors")
    tags = []
    for i, t in enumerate(raw_tags):
        t_where = f"{where} anchor_tags[{i}]"
        if not isinstance(t, dict):
            raise SchemaError(f"{t_where}: must be an object")
        _split_extras(t, _TAG_FIELDS, True, t_where)
        if not isinstance(t["dist_bin"], int) or t["dist_bin"] < 0:
            raise SchemaError(f"{t_where}: dist_bin must be a non-negative integer")
        if not isinstance(t["dist_m"], (int, float)) or t["dist_m"] < 0:
            raise SchemaError(f"{t_where}: dist_m must be a non-negative number")
        tags.append(AnchorTag(
            anchor_id=str(t["anchor_id"]),
            dir=_direction_from(t["dir"], t_where),
            dist_bin=t["dist_bin"],
            dist_m=float(t["dist_m"]),
        ))
    return Chunk(
        doc_id=str(obj["doc_id"]),
        name=str(obj["name"]),
        category=str(obj["category"]),
        tags=tuple(str(x) for x in obj["tags"]),
        description=str(obj["description"]),
        loc=_loc_from_dict(obj["loc"], where),
        anchor_tags=tuple(tags),
        extras=extras,
    )


def query_to_dict(q: SpatialQuery) -> dict[str, Any]:
    return {
        "query_id": q.query_id,
        "raw_query": q.raw_query,
        "entity_category": q.entity_category,
        "must_have_tags": list(q.must_have_tags),
        "true_loc": _loc_to_dict(q.true_loc),
        "radius_m": q.radius_m,
        "direction_constraint": (
            q.direction_constraint.label if q.direction_constraint is not None else "any"
        ),
        "ground_truth": list(q.ground_truth),
        **q.extras,
    }


def query_from_dict(obj: dict, where: str = "<query>", strict: bool = False) -> SpatialQuery:
    extras = _split_extras(obj, _QUERY_FIELDS, strict, where)
    if not isinstance(obj["radius_m"], (int, float)) or obj["radius_m"] < 0:
        raise SchemaError(f"{where}: radius_m must be a non-negative number")
    gt = obj["ground_truth"]
    if not isinstance(gt, list) or not gt:
        raise SchemaError(f"{where}: ground_truth must be a non-empty list")
    dc = obj["direction_constraint"]
    direction = None if dc == "any" else _direction_from(dc, where)
    return SpatialQuery(
        query_id=str(obj["query_id"]),
        raw_query=str(obj["raw_query"]),
        entity_category=str(obj["entity_category"]),
        must_have_tags=tuple(str(x) for x in obj["must_have_tags"]),
        true_loc=_loc_from_dict(obj["true_loc"], where),
        radius_m=float(obj["radius_m"]),
        direction_constraint=direction,
        ground_truth=tuple(str(x) for x in gt),
        extras=extras,
    )


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, separators=(", ", ": ")))
            fh.write("\n")


def _read_jsonl(path: Path, parse: Callable[[dict, str, bool], Any], strict: bool) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise SchemaError(f"{where}: expected a JSON object")
            out.append(parse(obj, where, strict))
    return out


def save_dataset(dataset: Dataset, dataset_dir: str | Path) -> None:
    """Write anchors/chunks/queries JSONL files into ``dataset_dir``."""
    d = Path(dataset_dir)
    d.mkdir(parents=True, exist_ok=True)
    _write_jsonl(d / ANCHORS_FILE, (anchor_to_dict(a) for a in dataset.anchors))
    _write_jsonl(d / CHUNKS_FILE, (chunk_to_dict(c) for c in dataset.chunks))
    _write_jsonl(d / QUERIES_FILE, (query_to_dict(q) for q in dataset.queries))


def load_dataset(dataset_dir: str | Path, strict: bool = False) -> Dataset:
    """Load the three JSONL files from ``dataset_dir``."""
    d = Path(dataset_dir)
    anchors = _read_jsonl(d / ANCHORS_FILE, anchor_from_dict, strict)
    chunks = _read_jsonl(d / CHUNKS_FILE, chunk_from_dict, strict)
    queries = _read_jsonl(d / QUERIES_FILE, query_from_dict, strict)
    ids = [a.id for a in anchors]
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{d / ANCHORS_FILE}: duplicate anchor ids")
    doc_ids = [c.doc_id for c in chunks]
    if len(set(doc_ids)) != len(doc_ids):
        raise SchemaError(f"{d / CHUNKS_FILE}: duplicate doc_ids")
    return Dataset(anchors=anchors, chunks=chunks, queries=queries)


def verify_tag_consistency(dataset: Dataset, bins: DistanceBins) -> list[str]:
    """Full-corpus scan: recompute every anchor tag from coordinates.

    Returns a list of human-readable mismatch descriptions (empty when the
    corpus is consistent).
    """
    problems = []
    for chunk in dataset.chunks:
        for tag in chunk.anchor_tags:
            anchor = dataset.anchor_by_id(tag.anchor_id)
            fresh = recompute_anchor_tag(anchor, chunk.loc, bins)
            if fresh.dir != tag.dir or fresh.dist_bin != tag.dist_bin:
                problems.append(
                    f"{chunk.doc_id}/{tag.anchor_id}: stored ({tag.dir.label}, {tag.dist_bin})"
                    f" != recomputed ({fresh.dir.label}, {fresh.dist_bin})"
                )
            elif abs(fresh.dist_m - tag.dist_m) > 1e-6:
                problems.append(
                    f"{chunk.doc_id}/{tag.anchor_id}: dist_m {tag.dist_m} != {fresh.dist_m}"
                )
    return problems
