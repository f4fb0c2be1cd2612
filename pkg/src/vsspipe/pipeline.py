"""The four generation phases: Gherkin drafts, signal mapping, enrichment, step bindings."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .catalog import Catalog, UnknownSignal, validate_path
from .codegen import CodegenError, parse_response
from .gateway import DecodingConfig, GenerationRequest
from .gherkin import (
    Feature, Scenario, ValidityReport, check_feature, enrich_with_vss,
    hallucinated_paths, parse_feature, serialize_feature,
)
from .retrieval import RetrievalConfig, Shortlist, shortlist
from .runner import StepBinding, StepsFormatError, bind, dump_steps, validate_bindings

_REQ_ID_RE = re.compile(r"^Req_[A-Za-z0-9_.]+$")
_STATE_LINE_RE = re.compile(r"^(\w+)\s*:\s*(.+)$")
_TRANSITION_RE = re.compile(r"^(\w+)\s*--\[(.*)\]-->\s*(\w+)$")


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class Requirement:
    id: str
    body: str
    parent_id: str | None = None

    def __post_init__(self):
        if not _REQ_ID_RE.match(self.id):
            raise ValueError(f"bad requirement id {self.id!r}")


def parse_requirements(text: str) -> list[Requirement]:
    reqs, seen = [], set()
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            req = Requirement(rec["id"], rec["body"], rec.get("parent"))
        except (ValueError, KeyError, TypeError) as exc:
            raise PipelineError(f"requirements line {n}: {exc}") from None
        if req.id in seen:
            raise PipelineError(f"requirements line {n}: duplicate id {req.id}")
        seen.add(req.id)
        reqs.append(req)
    return reqs


def load_requirements(path: str | Path) -> list[Requirement]:
    return parse_requirements(Path(path).read_text(encoding="utf-8"))


def requirements_block(reqs) -> str:
    return "\n".join(f"{r.id}: {r.body}" for r in reqs)


@dataclass(frozen=True)
class FlowchartDoc:
    states: tuple[tuple[str, str], ...] = ()
    transitions: tuple[tuple[str, str, str], ...] = ()

    def __post_init__(self):
        ids = {s for s, _ in self.states}
        if len(ids) != len(self.states):
            raise ValueError("duplicate state id")
        for src, dst, _ in self.transitions:
            if src not in ids or dst not in ids:
                raise ValueError(f"transition {src} -> {dst} references an undeclared state")

    def render(self) -> str:
        lines = [f"{s}: {label}" for s, label in self.states]
        lines += [f"{a} --[{g}]--> {b}" for a, b, g in self.transitions]
        return "\n".join(lines)


def parse_flowchart(text: str) -> FlowchartDoc:
    states, transitions = [], []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _TRANSITION_RE.match(line)
        if m:
            transitions.append((m.group(1), m.group(3), m.group(2).strip()))
            continue
        m = _STATE_LINE_RE.match(line)
        if m:
            states.append((m.group(1), m.group(2).strip()))
            continue
        raise PipelineError(f"flowchart line {n}: cannot parse {line!r}")
    try:
        return FlowchartDoc(tuple(states), tuple(transitions))
    except ValueError as exc:
        raise PipelineError(f"flowchart: {exc}") from None


def load_flowchart(path: str | Path) -> FlowchartDoc:
    return parse_flowchart(Path(path).read_text(encoding="utf-8"))


@dataclass
class GherkinCandidate:
    requirement_ids: list[str]
    raw: str
    report: ValidityReport

    @property
    def valid(self) -> bool:
        return self.report.ok

    @property
    def feature(self) -> Feature | None:
        return self.report.feature


def gherkin_request(reqs, flowchart: FlowchartDoc, gherkin_example: str,
                    provider_id: str = "mock", decoding: DecodingConfig | None = None) -> GenerationRequest:
    return GenerationRequest(
        prompts.GHERKIN_SYSTEM,
        prompts.gherkin_user_message(requirements_block(reqs), flowchart.render(), gherkin_example),
        decoding or DecodingConfig(), provider_id)


def gen_gherkin(requirements, flowchart: FlowchartDoc, gateway, gherkin_example: str,
                provider_id: str = "mock", decoding: DecodingConfig | None = None) -> list[GherkinCandidate]:
    """Draft one feature per requirement and classify each draft.

    Drafts that fail to parse are kept, with diagnostics, for human review.
    """
    if not requirements:
        raise PipelineError("no requirements given")
    out = []
    for req in requirements:
        req_ = gherkin_request([req], flowchart, gherkin_example, provider_id, decoding)
        text, _ = gateway.generate(req_)
        out.append(GherkinCandidate([req.id], text, check_feature(text)))
    if not any(c.valid for c in out):
        raise PipelineError("no generated feature could be parsed")
    return out


@dataclass
class MappingResult:
    scenario_id: str
    selected: list[str]
    raw_response: str
    normalized: bool = True
    rejected: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"scenario_id": self.scenario_id, "selected": self.selected,
                "rejected": self.rejected, "raw_response": self.raw_response,
                "normalized": self.normalized}

    @classmethod
    def from_json(cls, d: dict) -> "MappingResult":
        return cls(d["scenario_id"], list(d["selected"]), d["raw_response"],
                   d.get("normalized", True), list(d.get("rejected", [])))


def build_mapping_prompt(scenario_text: str, candidates: Shortlist, provider_id: str = "mock",
                         decoding: DecodingConfig | None = None) -> GenerationRequest:
    entries = candidates.entries
    if not entries:
        raise PipelineError("mapping needs a non-empty shortlist")
    lines = [f"{e.path}: {e.datatype}" for e in entries]
    return GenerationRequest(prompts.MAPPING_SYSTEM, prompts.mapping_user_message(scenario_text.strip(), lines),
                             decoding or DecodingConfig(), provider_id)


_SPLIT_RE = re.compile(r"[,;\n]")
_BULLET_RE = re.compile(r"^(?:[-*+•]|\d+[.)])\s+")


def normalize_selection(raw: str, catalog: Catalog, cap: int = 25, scenario_id: str = "") -> MappingResult:
    items = []
    for piece in _SPLIT_RE.split(raw):
        item = piece.strip()
        while True:
            before = item
            item = _BULLET_RE.sub("", item).strip().strip("`*\"'").strip()
            if item == before:
                break
        if item and item not in items:
            items.append(item)
    items = items[:cap]
    selected = [p for p in items if p in catalog]
    rejected = [p for p in items if p not in catalog]
    return MappingResult(scenario_id, selected, raw, True, rejected)


def scenario_text(feature: Feature, scenario: Scenario) -> str:
    return serialize_feature(Feature(feature.title, scenarios=(scenario,)))


def map_scenario(feature: Feature, scenario: Scenario, catalog: Catalog, gateway,
                 config: RetrievalConfig | None = None, provider_id: str = "mock",
                 decoding: DecodingConfig | None = None) -> tuple[Shortlist, MappingResult]:
    text = scenario_text(feature, scenario)
    sl = shortlist(text, catalog, config, scenario_id=scenario.name)
    req = build_mapping_prompt(text, sl, provider_id, decoding)
    raw, _ = gateway.generate(req)
    cap = (decoding or DecodingConfig()).selection_cap
    return sl, normalize_selection(raw, catalog, cap, scenario.name)


def refine_feature(feature: Feature, mappings, catalog: Catalog) -> Feature:
    """Inject the mapped VSS paths into the matching steps."""
    if isinstance(mappings, MappingResult):
        mappings = [mappings]
    joined = {}
    for m in mappings:
        if not m.normalized:
            raise PipelineError(f"mapping for {m.scenario_id!r} is not normalized")
        joined[m.scenario_id] = [validate_path(catalog, p) for p in m.selected]
    return enrich_with_vss(feature, joined, catalog)


@dataclass
class CodegenBundle:
    feature_text: str
    environment_stub: dict
    steps_artifact: str

    @property
    def feature(self) -> Feature:
        return parse_feature(self.feature_text)

    @property
    def bindings(self) -> list[StepBinding]:
        from .runner import load_steps
        return load_steps(self.steps_artifact)

    def write(self, directory: str | Path, stem: str) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        out = {"feature": d / f"{stem}.feature", "environment": d / f"{stem}.environment.json",
               "steps": d / f"{stem}.steps.jsonl"}
        out["feature"].write_text(self.feature_text, encoding="utf-8")
        out["environment"].write_text(json.dumps(self.environment_stub, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
        out["steps"].write_text(self.steps_artifact, encoding="utf-8")
        return out


def codegen_request(feature: Feature, broker_example: str, runner_example: str,
                    provider_id: str = "mock", decoding: DecodingConfig | None = None) -> GenerationRequest:
    return GenerationRequest(
        prompts.CODEGEN_SYSTEM,
        prompts.codegen_user_message(serialize_feature(feature), broker_example, runner_example),
        decoding or DecodingConfig(), provider_id)


def gen_code(feature: Feature, broker_example: str, runner_example: str, gateway, catalog: Catalog,
             provider_id: str = "mock", decoding: DecodingConfig | None = None) -> CodegenBundle:
    bad = hallucinated_paths(feature, catalog)
    if bad:
        try:
            validate_path(catalog, bad[0])
        except UnknownSignal as exc:
            raise CodegenError(f"feature references signals outside the catalog: {exc}", bad) from exc
    text, _ = gateway.generate(codegen_request(feature, broker_example, runner_example, provider_id, decoding))
    try:
        env, bindings = parse_response(text)
        validate_bindings(bindings, catalog)
    except (StepsFormatError, UnknownSignal, TypeError) as exc:
        raise CodegenError(f"generated artifact rejected: {exc}") from exc
    plan = bind(feature, bindings)
    if plan.undefined:
        raise CodegenError("no binding produced for step(s):", [s.text for s in plan.undefined])
    return CodegenBundle(serialize_feature(feature), env, dump_steps(bindings))


REVIEW_STATUSES = ("pending", "approved", "edited", "rejected")


class ReviewError(RuntimeError):
    pass


class ReviewManifest:
    """File-backed approval state for generated artifacts.

    ``edited`` means a reviewer changed the artifact and accepted the result,
    so it opens the gate just like ``approved``.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.entries: dict[str, dict] = {}
        if self.path.exists():
            self.entries = json.loads(self.path.read_text(encoding="utf-8"))

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.entries, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def register(self, artifact: str, digest: str, note: str = "") -> None:
        cur = self.entries.get(artifact)
        if cur and cur["digest"] == digest:
            return
        self.entries[artifact] = {"status": "pending", "digest": digest, "note": note}

    def set(self, artifact: str, status: str, note: str = "", digest: str | None = None) -> None:
        if status not in REVIEW_STATUSES:
            raise ReviewError(f"unknown status {status!r}")
        if artifact not in self.entries:
            raise ReviewError(f"unknown artifact {artifact!r}")
        e = self.entries[artifact]
        e["status"] = status
        if note:
            e["note"] = note
        if digest:
            e["digest"] = digest

    def status(self, artifact: str) -> str:
        return self.entries.get(artifact, {}).get("status", "missing")

    def passes(self, artifact: str) -> bool:
        return self.status(artifact) in ("approved", "edited")

    def require(self, artifact: str) -> None:
        if not self.passes(artifact):
            raise ReviewError(f"{artifact} is {self.status(artifact)}, not approved")

    def counts(self) -> dict[str, int]:
        c = {s: 0 for s in REVIEW_STATUSES}
        for e in self.entries.values():
            c[e["status"]] += 1
        return c
