"""Text-generation gateway: the only place that talks to a language model.

Three backends share one interface:

* ``RemoteBackend`` posts chat-completions style requests over HTTP,
* ``MockBackend`` answers deterministically from templates,
* ``ReplayBackend`` returns previously recorded responses by request digest.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import httpx

from . import prompts
from .catalog import SignalEntry, signal_phrase, tokenize


class GatewayError(RuntimeError):
    def __init__(self, message: str, provider_id: str = ""):
        super().__init__(f"[{provider_id}] {message}" if provider_id else message)
        self.provider_id = provider_id


class ReplayMiss(GatewayError):
    def __init__(self, digest: str, provider_id: str = ""):
        super().__init__(f"no recorded response for digest {digest}", provider_id)
        self.digest = digest


class StoreCorruption(RuntimeError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"record {index}: {reason}")
        self.index = index


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float = 0.0
    max_tokens: int = 1024
    selection_cap: int | None = 25

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.selection_cap is not None and self.selection_cap < 1:
            raise ValueError("selection_cap must be positive")


@dataclass(frozen=True)
class GenerationRequest:
    system_message: str
    user_message: str
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    provider_id: str = "mock"

    def __post_init__(self):
        if not self.system_message.strip() or not self.user_message.strip():
            raise ValueError("system and user messages must be non-empty")

    @property
    def digest(self) -> str:
        return request_digest(self)


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def request_digest(request: GenerationRequest) -> str:
    payload = {
        "system": request.system_message,
        "user": request.user_message,
        "decoding": asdict(request.decoding),
    }
    return hashlib.sha256(_canonical(payload)).hexdigest()


@dataclass(frozen=True)
class GenerationRecord:
    digest: str
    response_text: str
    provider_id: str
    timestamp: float

    def checksum(self) -> str:
        return hashlib.sha256(_canonical(asdict(self))).hexdigest()


class RecordStore:
    """Append-only newline-delimited JSON file of generation records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: GenerationRecord) -> None:
        line = json.dumps({**asdict(record), "checksum": record.checksum()}, sort_keys=True)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def extend(self, records) -> None:
        for r in records:
            self.append(r)

    def load(self) -> list[GenerationRecord]:
        if not self.path.exists():
            return []
        records = []
        for i, line in enumerate(self.path.read_text(encoding="utf-8").splitlines()):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                checksum = raw.pop("checksum")
                record = GenerationRecord(**raw)
            except (ValueError, KeyError, TypeError) as exc:
                raise StoreCorruption(i, f"unreadable record ({exc})") from None
            if record.checksum() != checksum:
                raise StoreCorruption(i, "checksum mismatch")
            records.append(record)
        return records


class Backend:
    name = "backend"

    def complete(self, request: GenerationRequest) -> str:
        raise NotImplementedError


class RemoteBackend(Backend):
    """Chat-completions over HTTP; the credential is read from an environment variable."""

    name = "remote"

    def __init__(self, endpoint: str, credential_env: str | None = None, model: str | None = None,
                 client: httpx.Client | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.credential_env = credential_env
        self.model = model
        self.client = client or httpx.Client(timeout=timeout)

    def complete(self, request):
        headers = {}
        if self.credential_env:
            key = os.environ.get(self.credential_env)
            if not key:
                raise GatewayError(f"credential variable {self.credential_env} is not set", request.provider_id)
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model or request.provider_id,
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_tokens,
        }
        try:
            resp = self.client.post(self.endpoint, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise GatewayError(f"transport failure: {exc}", request.provider_id) from exc
        if resp.status_code in (401, 403):
            raise GatewayError(f"authentication failed ({resp.status_code})", request.provider_id)
        if resp.status_code >= 400:
            raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}", request.provider_id)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed response: {exc}", request.provider_id) from exc


class ReplayBackend(Backend):
    name = "replay"

    def __init__(self, records):
        self._by_key: dict[tuple[str, str], str] = {}
        self._by_digest: dict[str, str] = {}
        for r in records:
            self._by_key[(r.digest, r.provider_id)] = r.response_text
            self._by_digest.setdefault(r.digest, r.response_text)

    @classmethod
    def from_store(cls, store: RecordStore) -> "ReplayBackend":
        return cls(store.load())

    def complete(self, request):
        key = (request.digest, request.provider_id)
        if key in self._by_key:
            return self._by_key[key]
        if request.provider_id in ("", "replay") and request.digest in self._by_digest:
            return self._by_digest[request.digest]
        raise ReplayMiss(request.digest, request.provider_id)


def mock_select(message: str) -> str:
    """Keep the listed candidates whose signal phrase occurs in the scenario text."""
    scenario, paths = prompts.split_mapping_message(message)
    words = set(tokenize(scenario))
    keep = [p for p in paths if signal_phrase(SignalEntry(p, "sensor", "boolean")) <= words]
    return ", ".join(keep)


class MockBackend(Backend):
    """Deterministic stand-in keyed on prompt markers.

    ``gherkin_templates`` maps requirement ids to Gherkin text (a ``Feature:``
    line followed by scenario blocks); ``codegen`` turns the Gherkin block of a
    code-generation prompt into the two-section answer.
    """

    name = "mock"

    def __init__(self, gherkin_templates: Mapping[str, str] | None = None,
                 codegen: Callable[[str], str] | None = None):
        self.gherkin_templates = dict(gherkin_templates or {})
        self.codegen = codegen

    def _gherkin(self, message: str) -> str:
        ids = prompts.requirement_ids(message)
        blocks = [self.gherkin_templates[i] for i in ids if i in self.gherkin_templates]
        if not blocks:
            raise GatewayError(f"mock has no Gherkin template for {ids}", self.name)
        head, *rest = blocks
        out = [head.rstrip("\n")]
        for block in rest:
            body = "\n".join(l for l in block.splitlines() if not l.startswith("Feature:"))
            out.append(body.rstrip("\n"))
        return "\n".join(out) + "\n"

    def complete(self, request):
        msg = request.user_message
        if prompts.MAPPING_MARKER in msg:
            return mock_select(msg)
        if prompts.GHERKIN_REF_HEADER in msg and prompts.REQUIREMENTS_HEADER in msg:
            return self._gherkin(msg)
        if prompts.CODEGEN_GHERKIN_HEADER in msg:
            if self.codegen is None:
                raise GatewayError("mock has no code generator configured", self.name)
            gherkin = prompts.section(msg, prompts.CODEGEN_GHERKIN_HEADER, [prompts.CODEGEN_BROKER_HEADER])
            return self.codegen(gherkin)
        raise GatewayError("mock cannot recognise the prompt", self.name)


class Gateway:
    def __init__(self, backend: Backend, store: RecordStore | None = None,
                 clock: Callable[[], float] = time.time):
        self.backend = backend
        self.store = store
        self.clock = clock

    def generate(self, request: GenerationRequest) -> tuple[str, GenerationRecord]:
        text = self.backend.complete(request)
        record = GenerationRecord(request.digest, text, request.provider_id, self.clock())
        if self.store is not None:
            self.store.append(record)
        return text, record
