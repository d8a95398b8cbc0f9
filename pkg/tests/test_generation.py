from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from pasrag.evaluation import run_eval
from pasrag.generation import (
    GenerationTransportError,
    HttpChatClient,
    build_prompt,
    generate_answer,
    parse_response,
    stub_client,
)
from pasrag.mechanism import PrivacyParams
from pasrag.retrieval import RankedEntry, RankedResult, RetrievalConfig, retrieve_baseline
from pasrag.semantics import LexicalEmbedder


def ranked(*doc_ids):
    return RankedResult(entries=[
        RankedEntry(doc_id=d, s_sem=0.5, s_sp=1.0, s_hybrid=0.6) for d in doc_ids
    ])


class TestBuildPrompt:
    def test_empty_retrieval_placeholder(self, micro_dataset):
        q = micro_dataset.queries[0]
        _, user = build_prompt(q, ranked(), micro_dataset)
        assert "(no documents retrieved)" in user

    def test_two_doc_context_lists_each_once(self, micro_dataset):
        q = micro_dataset.queries[0]
        _, user = build_prompt(q, ranked("c0000", "c0001"), micro_dataset)
        assert user.count("[c0000]") == 1
        assert user.count("[c0001]") == 1
        assert "1. [c0000]" in user and "2. [c0001]" in user

    def test_radius_unit_conversion(self, micro_dataset):
        q = micro_dataset.queries[0]
        q2 = type(q)(**{**q.__dict__, "radius_m": 1609.344})
        _, user = build_prompt(q2, ranked("c0000"), micro_dataset)
        assert "radius_miles: 1.00" in user

    def test_byte_stability(self, micro_dataset):
        q = micro_dataset.queries[0]
        a = build_prompt(q, ranked("c0000"), micro_dataset)
        b = build_prompt(q, ranked("c0000"), micro_dataset)
        assert a == b

    def test_system_prompt_strictness_lines(self, micro_dataset):
        system, _ = build_prompt(micro_dataset.queries[0], ranked(), micro_dataset)
        assert "ONLY the retrieved context" in system
        assert "STRICT JSON" in system
        assert "markdown fences" in system

    def test_direction_and_tags_rendered(self, micro_dataset):
        q = micro_dataset.queries[0]
        _, user = build_prompt(q, ranked(), micro_dataset)
        assert "direction_constraint: N" in user
        assert "must_have_tags: espresso" in user


class TestParseResponse:
    def valid_payload(self):
        return json.dumps({
            "answer": "North Cafe fits",
            "citations": [{"title": "North Cafe", "doc_id": "c0000"}],
            "faithfulness_notes": [],
        })

    def test_valid_json(self):
        record = parse_response(self.valid_payload(), model_tag="m")
        assert record.ok
        assert record.answer == "North Cafe fits"
        assert record.citations == [{"title": "North Cafe", "doc_id": "c0000"}]
        assert record.model_tag == "m"

    def test_fenced_json_tolerated_and_flagged(self):
        fenced = f"```json\n{self.valid_payload()}\n```"
        record = parse_response(fenced)
        assert record.ok
        assert record.fence_stripped

    def test_whitespace_tolerated(self):
        record = parse_response("\n  " + self.valid_payload() + "  \n")
        assert record.ok

    def test_not_json_is_error_record(self):
        record = parse_response("not json")
        assert not record.ok
        assert record.answer == ""
        assert "invalid JSON" in record.parse_error
        assert record.raw == "not json"

    def test_missing_key_is_error(self):
        record = parse_response(json.dumps({"answer": "x", "citations": []}))
        assert not record.ok
        assert "faithfulness_notes" in record.parse_error

    def test_unexpected_key_is_error(self):
        payload = json.loads(self.valid_payload())
        payload["confidence"] = 0.9
        record = parse_response(json.dumps(payload))
        assert not record.ok
        assert "confidence" in record.parse_error

    def test_malformed_citation_is_error(self):
        record = parse_response(json.dumps({
            "answer": "x", "citations": ["c0000"], "faithfulness_notes": [],
        }))
        assert not record.ok

    def test_round_trip(self):
        record = parse_response(self.valid_payload())
        again = parse_response(record.to_content_json())
        assert again.ok
        assert again.answer == record.answer
        assert again.citations == record.citations
        assert again.faithfulness_notes == record.faithfulness_notes


class TestStubClient:
    def test_perfect_retrieval_yields_full_citation(self, micro_dataset, bins):
        provider = LexicalEmbedder(128)
        q = micro_dataset.queries[0]
        result = retrieve_baseline(q, micro_dataset, provider, RetrievalConfig())
        record = generate_answer(stub_client(micro_dataset), q, result, micro_dataset)
        assert record.ok
        cited = [c["doc_id"] for c in record.citations]
        assert cited == ["c0000"]
        assert "North Cafe" in record.answer

    def test_empty_retrieval(self, micro_dataset):
        q = micro_dataset.queries[0]
        record = generate_answer(stub_client(micro_dataset), q, ranked(), micro_dataset)
        assert record.ok
        assert record.answer == "no supporting evidence"
        assert record.citations == []

    def test_deterministic(self, micro_dataset):
        q = micro_dataset.queries[0]
        client = stub_client(micro_dataset)
        system, user = build_prompt(q, ranked("c0000"), micro_dataset)
        assert client.complete(system, user) == client.complete(system, user)

    def test_full_eval_pipeline_offline(self, micro_dataset, bins):
        provider = LexicalEmbedder(128)
        report = run_eval(micro_dataset, "pas", PrivacyParams(1.0, 500.0), bins,
                          RetrievalConfig(mc_samples=200), provider, seeds=(1,),
                          client=stub_client(micro_dataset))
        o = report.outcomes[0]
        assert o.gen is not None and o.gen.ok


class _Handler(BaseHTTPRequestHandler):
    failures_left = 0
    calls = 0

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        body = self.rfile.read(int(self.headers["Content-Length"]))
        payload = json.loads(body)
        if cls.failures_left > 0:
            cls.failures_left -= 1
            self.send_response(503)
            self.end_headers()
            return
        answer = json.dumps({
            "answer": f"echo {payload['model']}",
            "citations": [],
            "faithfulness_notes": [],
        })
        out = json.dumps({"choices": [{"message": {"content": answer}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture()
def local_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1"
    server.shutdown()


class TestHttpChatClient:
    def test_completes_against_local_endpoint(self, local_server):
        _Handler.failures_left = 0
        client = HttpChatClient(local_server, model="test-model", backoff_s=0.01)
        text = client.complete("sys", "user")
        record = parse_response(text, model_tag=client.model_tag)
        assert record.ok
        assert record.answer == "echo test-model"

    def test_retries_transient_failures(self, local_server):
        _Handler.failures_left = 2
        _Handler.calls = 0
        client = HttpChatClient(local_server, model="m", max_retries=3, backoff_s=0.01)
        text = client.complete("sys", "user")
        assert _Handler.calls == 3
        assert parse_response(text).ok

    def test_exhausted_retries_raise(self, local_server):
        _Handler.failures_left = 99
        client = HttpChatClient(local_server, model="m", max_retries=2, backoff_s=0.01)
        with pytest.raises(GenerationTransportError):
            client.complete("sys", "user")

    def test_eval_survives_transport_failure(self, micro_dataset, local_server, bins):
        _Handler.failures_left = 99
        client = HttpChatClient(local_server, model="m", max_retries=1, backoff_s=0.01)
        q = micro_dataset.queries[0]
        record = generate_answer(client, q, ranked("c0000"), micro_dataset)
        assert not record.ok
        assert record.parse_error.startswith("transport:")
        assert record.answer == ""

    def test_url_assembly(self):
        c1 = HttpChatClient("http://x/v1", model="m")
        assert c1._url() == "http://x/v1/chat/completions"
        c2 = HttpChatClient("http://x/v1/chat/completions", model="m")
        assert c2._url() == "http://x/v1/chat/completions"
