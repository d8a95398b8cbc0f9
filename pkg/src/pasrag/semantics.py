"""Pluggable semantic scoring.

Text relevance is cosine similarity between fixed-dimension embeddings. The
built-in provider is a deterministic signed feature-hashing embedder, so the
whole pipeline runs with no model downloads; real transformer vectors can be
injected through the precomputed-vector loader.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Chunk, SpatialQuery

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True, eq=False)
class Embedding:
    """A fixed-length real vector; ``is_zero`` flags degenerate (empty) text."""

    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


def cosine(a: Embedding, b: Embedding) -> float:
    """Cosine similarity in [-1, 1]; zero vectors score 0 against anything."""
    if a.dim != b.dim:
        raise ValueError(f"embedding dims differ: {a.dim} vs {b.dim}")
    if a.is_zero or b.is_zero:
        return 0.0
    num = float(np.dot(a.values, b.values))
    den = float(np.linalg.norm(a.values) * np.linalg.norm(b.values))
    return max(-1.0, min(1.0, num / den))


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _hash_token(token: str) -> int:
    # blake2b-64 of the utf-8 token; pinned: changing this invalidates all
    # stored vectors
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")


class LexicalEmbedder:
    """Deterministic signed feature hashing over lowercase alphanumeric tokens.

    Each token lands in bucket ``blake2b64(token) % dim`` with sign taken
    from the hash's top bit; the bucket counts are L2-normalized. The same
    text yields the same vector in every process.
    """

    def __init__(self, dim: int = 512):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self._dim = dim

    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> Embedding:
        vec = np.zeros(self._dim)
        for token in tokenize(text):
            h = _hash_token(token)
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            vec[h % self._dim] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return Embedding(values=vec)


class PrecomputedEmbedder:
    """Serves vectors from a JSONL file of {"id": ..., "vector": [...]} rows.

    Lookup is by exact id, falling back to the sha256 hex digest of the
    text, so files may be keyed either by raw text or by its digest.
    """

    def __init__(self, vectors: Mapping[str, np.ndarray], dim: int):
        self._vectors = dict(vectors)
        self._dim = dim

    def dim(self) -> int:
        return self._dim

    def embed(self, text: str) -> Embedding:
        vec = self._vectors.get(text)
        if vec is None:
            vec = self._vectors.get(hashlib.sha256(text.encode("utf-8")).hexdigest())
        if vec is None:
            raise KeyError(f"no precomputed vector for text {text[:80]!r}")
        return Embedding(values=vec)


def load_precomputed(path: str | Path) -> PrecomputedEmbedder:
    """Load a precomputed-vector provider; all rows must share one dimension."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            vec = np.asarray(obj["vector"], dtype=float)
            if vec.ndim != 1 or vec.shape[0] < 1:
                raise ValueError(f"{path}:{lineno}: vector must be a non-empty list")
            if dim is None:
                dim = int(vec.shape[0])
            elif vec.shape[0] != dim:
                raise ValueError(
                    f"{path}:{lineno}: vector dim {vec.shape[0]} != expected {dim}"
                )
            vectors[str(obj["id"])] = vec
    if dim is None:
        raise ValueError(f"{path}: no vectors found")
    return PrecomputedEmbedder(vectors, dim)


def save_vectors(path: str | Path, entries: Iterable[tuple[str, Embedding]]) -> None:
    """Write id/vector rows readable by ``load_precomputed``."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, emb in entries:
            fh.write(json.dumps({"id": key, "vector": emb.values.tolist()}))
            fh.write("\n")


def chunk_text(chunk: Chunk) -> str:
    """The document text that gets embedded: every semantic attribute."""
    return " ".join([chunk.name, chunk.category, *chunk.tags, chunk.description])


def query_text(query: SpatialQuery, use_raw_query: bool = False) -> str:
    """The semantic component of a query (or the raw query when flagged)."""
    if use_raw_query:
        return query.raw_query
    return " ".join([query.entity_category, *query.must_have_tags])
