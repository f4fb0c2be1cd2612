import hashlib
import json

import httpx
import pytest

from vsspipe import fixtures as fx
from vsspipe import prompts
from vsspipe.gateway import (
    DecodingConfig, Gateway, GatewayError, GenerationRecord, GenerationRequest, MockBackend,
    RecordStore, RemoteBackend, ReplayBackend, ReplayMiss, StoreCorruption, mock_select, request_digest,
)
from vsspipe.pipeline import build_mapping_prompt
from vsspipe.retrieval import Shortlist


def _req(user="hello", **kw):
    return GenerationRequest("system", user, DecodingConfig(**kw))


def test_decoding_defaults():
    d = DecodingConfig()
    assert (d.temperature, d.max_tokens, d.selection_cap) == (0.0, 1024, 25)
    with pytest.raises(ValueError):
        DecodingConfig(temperature=-1)
    with pytest.raises(ValueError):
        GenerationRequest(" ", "x")


def test_digest_of_canonical_payload():
    payload = ('{"decoding":{"max_tokens":1024,"selection_cap":25,"temperature":0.0},'
               '"system":"system","user":"hello"}')
    assert request_digest(_req()) == hashlib.sha256(payload.encode()).hexdigest()


def test_digest_is_stable():
    assert request_digest(_req()) == request_digest(_req())
    assert request_digest(_req()) != request_digest(_req(temperature=0.5))
    assert request_digest(_req()) != request_digest(_req("hello!"))
    assert len(request_digest(_req())) == 64


def test_record_store_empty(tmp_path):
    assert RecordStore(tmp_path / "none.jsonl").load() == []


def test_record_store_keeps_order(tmp_path):
    store = RecordStore(tmp_path / "r.jsonl")
    recs = [GenerationRecord(f"d{i}", f"text {i}", "mock", float(i)) for i in range(3)]
    store.extend(recs)
    assert store.load() == recs


def test_record_store_detects_tampering(tmp_path):
    p = tmp_path / "r.jsonl"
    store = RecordStore(p)
    store.extend(GenerationRecord(f"d{i}", f"text {i}", "mock", 0.0) for i in range(3))
    lines = p.read_text().splitlines()
    lines[1] = lines[1].replace("text 1", "text X")
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(StoreCorruption) as err:
        store.load()
    assert err.value.index == 1


def test_replay_returns_recorded_text():
    req = _req()
    backend = ReplayBackend([GenerationRecord(req.digest, "recorded answer", "mock", 0.0)])
    text, rec = Gateway(backend).generate(req)
    assert text == "recorded answer"
    assert rec.digest == req.digest


def test_replay_miss_lists_digest():
    with pytest.raises(ReplayMiss) as err:
        ReplayBackend([]).complete(_req())
    assert err.value.digest in str(err.value)


def test_gateway_appends_to_store(tmp_path):
    store = RecordStore(tmp_path / "r.jsonl")
    Gateway(ReplayBackend([GenerationRecord(_req().digest, "x", "mock", 0.0)]), store, clock=lambda: 5.0).generate(_req())
    (rec,) = store.load()
    assert rec.timestamp == 5.0
    assert rec.response_text == "x"


def test_fixture_records_load():
    recs = fx.recorded_store().load()
    assert len(recs) == 4


def test_mock_selection_filters_by_scenario_tokens(catalog):
    entries = [catalog.index[p] for p in (
        "Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified",
        "Vehicle.Cabin.HVAC.CabinTemperature",
        "Vehicle.Body.Horn.IsActive",
    )]
    req = build_mapping_prompt("The driver is notified. The horn is active.", Shortlist.from_entries("s", entries))
    assert prompts.MAPPING_MARKER in req.user_message
    out = MockBackend().complete(req)
    assert out == ("Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified, "
                   "Vehicle.Body.Horn.IsActive")
    assert mock_select(req.user_message) == out


def test_mock_gherkin_uses_templates():
    backend = MockBackend({"Req_X_1.1": "Feature: X\n\n  Scenario: s\n    Given a [Req_X_1.1]\n"})
    msg = prompts.gherkin_user_message("Req_X_1.1: do a thing", "", "Feature: example")
    out = backend.complete(GenerationRequest("sys", msg))
    assert out.startswith("Feature: X")
    with pytest.raises(GatewayError):
        backend.complete(GenerationRequest("sys", prompts.gherkin_user_message("Req_Y_1.1: b", "", "ex")))


def test_mock_unrecognised_prompt():
    with pytest.raises(GatewayError):
        MockBackend().complete(_req("what is the weather"))


def _remote(handler, **kw):
    return RemoteBackend("http://model.test/v1/chat/completions", client=httpx.Client(transport=httpx.MockTransport(handler)), **kw)


def test_remote_posts_chat_payload(monkeypatch):
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "Vehicle.Speed"}}]})

    monkeypatch.setenv("TEST_KEY", "k123")
    out = _remote(handler, credential_env="TEST_KEY", model="m").complete(_req())
    assert out == "Vehicle.Speed"
    assert seen["auth"] == "Bearer k123"
    assert seen["body"]["temperature"] == 0.0
    assert seen["body"]["max_tokens"] == 1024
    assert [m["role"] for m in seen["body"]["messages"]] == ["system", "user"]


def test_remote_auth_failure_names_provider():
    backend = _remote(lambda r: httpx.Response(401))
    req = GenerationRequest("s", "u", provider_id="prov-a")
    with pytest.raises(GatewayError) as err:
        backend.complete(req)
    assert err.value.provider_id == "prov-a"


def test_remote_missing_credential(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    with pytest.raises(GatewayError, match="NOPE_KEY"):
        _remote(lambda r: httpx.Response(200), credential_env="NOPE_KEY").complete(_req())


def test_unreachable_host_writes_no_record(tmp_path):
    store = RecordStore(tmp_path / "r.jsonl")
    backend = RemoteBackend("http://127.0.0.1:9/v1", timeout=1.0)
    with pytest.raises(GatewayError):
        Gateway(backend, store).generate(_req())
    assert store.load() == []
