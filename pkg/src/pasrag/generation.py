"""Grounded answer generation over the retrieved context.

Prompts are assembled byte-stably from a fixed template; responses must be
strict JSON with exactly three keys. A generic OpenAI-compatible HTTP chat
client (with retries) talks to any hosted model; the offline stub client
makes the full evaluation path runnable with no network at all.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from typing import Any

import requests

from .corpus import Dataset, SpatialQuery
from .geo import MILE_M
from .retrieval import RankedResult

DEFAULT_TEMPERATURE = 0.1

SYSTEM_PROMPT = """You are a careful RAG answering assistant.
Answer the user's query using ONLY the retrieved context.
Do not use outside knowledge.
If the evidence is weak or partially mismatched, say so briefly.
Prefer concise answers that directly name the best matching places.
Only cite documents that actually support your answer.
Return STRICT JSON with exactly these keys:
{
  "answer": string,
  "citations": [{"title": string, "doc_id": string}],
  "faithfulness_notes": [string]
}
Do not include markdown fences."""

USER_PROMPT_TEMPLATE = """User query: {raw_query}

Semantic target:
- entity_type: {entity}
- must_have_tags: {must_have_tags}

Spatial intent:
- direction_constraint: {direction_constraint}
- radius_miles: {radius_miles}

Retrieved context:
{context_text}

Instructions:
1. Write a grounded answer that directly answers the user query.
2. Mention strongest matching places first.
3. Exclude unsupported claims.
4. Mention uncertainty for weak spatial matches.
5. Cite only docs used in the answer.
6. Output STRICT JSON only."""

_CONTENT_KEYS = {"answer", "citations", "faithfulness_notes"}
_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\n(.*)\n?```$", re.DOTALL)
_CONTEXT_DOC_RE = re.compile(r"^\s*\d+\.\s*\[([^\]]+)\]", re.MULTILINE)


@dataclass
class GenerationRecord:
    """One parsed model response; parse failures are recorded, never dropped."""

    answer: str
    citations: list[dict[str, str]]
    faithfulness_notes: list[str]
    model_tag: str = ""
    raw: str = ""
    parse_error: str | None = None
    fence_stripped: bool = False

    @property
    def ok(self) -> bool:
        return self.parse_error is None

    def to_dict(self) -> dict[str, Any]:
        return {
            "answer": self.answer,
            "citations": self.citations,
            "faithfulness_notes": self.faithfulness_notes,
            "model_tag": self.model_tag,
            "raw": self.raw,
            "parse_error": self.parse_error,
            "fence_stripped": self.fence_stripped,
        }

    def to_content_json(self) -> str:
        """Serialize just the three content keys, re-parseable by parse_response."""
        return json.dumps({
            "answer": self.answer,
            "citations": self.citations,
            "faithfulness_notes": self.faithfulness_notes,
        })


def build_prompt(
    query: SpatialQuery, result: RankedResult, dataset: Dataset
) -> tuple[str, str]:
    """Render the (system, user) prompt pair for one retrieval result."""
    if result.entries:
        blocks = []
        for i, entry in enumerate(result.entries, start=1):
            chunk = dataset.chunk_by_id(entry.doc_id)
            blocks.append(f"{i}. [{chunk.doc_id}] {chunk.name} — {chunk.description}")
        context_text = "\n".join(blocks)
    else:
        context_text = "(no documents retrieved)"
    user = USER_PROMPT_TEMPLATE.format(
        raw_query=query.raw_query,
        entity=query.entity_category,
        must_have_tags=", ".join(query.must_have_tags) if query.must_have_tags else "(none)",
        direction_constraint=(
            query.direction_constraint.label
            if query.direction_constraint is not None else "any"
        ),
        radius_miles=f"{query.radius_m / MILE_M:.2f}",
        context_text=context_text,
    )
    return SYSTEM_PROMPT, user


def parse_response(text: str, model_tag: str = "") -> GenerationRecord:
    """Parse a strict-JSON model response into a record.

    Tolerates surrounding whitespace and strips one layer of markdown fences
    (flagged) despite the instructions. Anything else malformed yields an
    error record with an empty answer so the pipeline can keep going.
    """
    raw = text
    body = text.strip()
    fence_stripped = False
    m = _FENCE_RE.match(body)
    if m:
        body = m.group(1).strip()
        fence_stripped = True

    def error(msg: str) -> GenerationRecord:
        return GenerationRecord(
            answer="", citations=[], faithfulness_notes=[],
            model_tag=model_tag, raw=raw, parse_error=msg,
            fence_stripped=fence_stripped,
        )

    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        return error(f"invalid JSON: {exc.msg}")
    if not isinstance(obj, dict):
        return error("response is not a JSON object")
    keys = set(obj)
    if keys != _CONTENT_KEYS:
        missing = sorted(_CONTENT_KEYS - keys)
        extra = sorted(keys - _CONTENT_KEYS)
        return error(f"wrong keys (missing={missing}, unexpected={extra})")
    if not isinstance(obj["answer"], str):
        return error("answer must be a string")
    if not isinstance(obj["citations"], list):
        return error("citations must be a list")
    citations = []
    for c in obj["citations"]:
        if not isinstance(c, dict) or set(c) != {"title", "doc_id"}:
            return error("each citation must be an object with title and doc_id")
        citations.append({"title": str(c["title"]), "doc_id": str(c["doc_id"])})
    if not isinstance(obj["faithfulness_notes"], list):
        return error("faithfulness_notes must be a list")
    return GenerationRecord(
        answer=obj["answer"],
        citations=citations,
        faithfulness_notes=[str(n) for n in obj["faithfulness_notes"]],
        model_tag=model_tag,
        raw=raw,
        fence_stripped=fence_stripped,
    )


class GenerationTransportError(RuntimeError):
    """The chat endpoint could not be reached after all retries."""


class HttpChatClient:
    """Minimal OpenAI-compatible chat-completions client with retries.

    Transport errors and 5xx responses are retried with exponential backoff;
    after the last attempt the error propagates for the caller to record.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        temperature: float = DEFAULT_TEMPERATURE,
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_s: float = 1.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.model_tag = model

    def _url(self) -> str:
        if self.endpoint.endswith("/chat/completions"):
            return self.endpoint
        return f"{self.endpoint}/chat/completions"

    def complete(self, system: str, user: str, temperature: float | None = None) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature if temperature is None else temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(self._url(), json=payload, headers=headers,
                                     timeout=self.timeout_s)
                if resp.status_code >= 500:
                    raise requests.RequestException(f"server error {resp.status_code}")
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_s * (2 ** attempt))
        raise GenerationTransportError(str(last_error))


class StubClient:
    """Offline deterministic client for end-to-end runs without a model.

    Answers with the retrieved documents that belong to the query's ground
    truth, citing exactly those; retrieval quality therefore propagates into
    the generation metrics the same way a faithful model would propagate it.
    """

    model_tag = "stub"

    def __init__(self, dataset: Dataset):
        self._dataset = dataset
        self._by_raw_query = {q.raw_query: q for q in dataset.queries}

    def complete(self, system: str, user: str,
                 temperature: float | None = None) -> str:
        first_line = user.split("\n", 1)[0]
        raw_query = first_line.removeprefix("User query: ").strip()
        query = self._by_raw_query.get(raw_query)
        context_ids = _CONTEXT_DOC_RE.findall(user)
        gt = set(query.ground_truth) if query else set()
        hits = [doc_id for doc_id in context_ids if doc_id in gt]
        if hits:
            names = [self._dataset.chunk_by_id(d).name for d in hits]
            answer = ", ".join(names)
            citations = [{"title": n, "doc_id": d} for n, d in zip(names, hits)]
            notes: list[str] = []
        else:
            answer = "no supporting evidence"
            citations = []
            notes = ["retrieved context does not support the query"]
        return json.dumps({
            "answer": answer, "citations": citations, "faithfulness_notes": notes,
        })


def stub_client(dataset: Dataset) -> StubClient:
    return StubClient(dataset)


def generate_answer(
    client, query: SpatialQuery, result: RankedResult, dataset: Dataset
) -> GenerationRecord:
    """Run one query through a client; failures become scored-zero records."""
    system, user = build_prompt(query, result, dataset)
    model_tag = getattr(client, "model_tag", type(client).__name__)
    try:
        text = client.complete(system, user)
    except Exception as exc:
        return GenerationRecord(
            answer="", citations=[], faithfulness_notes=[],
            model_tag=model_tag, raw="", parse_error=f"transport: {exc}",
        )
    return parse_response(text, model_tag=model_tag)
