"""Project configuration and the on-disk workspace the CLI phases operate on.

Workspace layout under the output directory::

    review.json                   approval manifest (artifact -> status, digest, note)
    gherkin/<req>.feature         phase 1 drafts (+ <req>.diagnostics.txt when unparseable)
    gherkin/summary.json          valid / needs-review split
    mappings/<req>.json           phase 2 mapping results per scenario
    mappings/<req>.shortlist.csv  the candidates each scenario was mapped against
    enriched/<req>.feature        phase 3 features with VSS paths
    bundles/<req>.*               phase 4 feature, environment stub, steps artifact
    eval/                         run results and tables
    records/<phase>.jsonl         every model exchange of the last run of a phase
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .broker import Broker
from .catalog import Catalog, load_catalog_file
from .clock import VirtualClock
from .codegen import CodegenError, MockCodegen
from .cpds import CpdsConfig, SutHandle
from .evaluation import GoldMapping, format_table, judge_run, load_gold, load_overrides, score_result
from .gateway import DecodingConfig, Gateway, GatewayError, MockBackend, RecordStore, RemoteBackend, ReplayBackend
from .gherkin import check_feature, parse_feature, serialize_feature
from .pipeline import (
    CodegenBundle, MappingResult, ReviewManifest, build_mapping_prompt,
    gen_code, gen_gherkin, load_flowchart, load_requirements, map_scenario, normalize_selection,
    refine_feature,
)
from .retrieval import RetrievalConfig, Shortlist
from .runner import RunReport, bind, execute

log = logging.getLogger(__name__)

BACKENDS = ("mock", "replay", "remote")


class ConfigError(ValueError):
    pass


class PhaseError(RuntimeError):
    """A phase was asked to run before its inputs were approved."""


@dataclass
class ProjectConfig:
    catalog: Path
    requirements: Path
    flowchart: Path
    gherkin_example: Path
    broker_example: Path
    runner_example: Path
    output: Path
    gold: Path | None = None
    templates: Path | None = None
    records: Path | None = None
    mapping_runs: Path | None = None
    eval_overrides: Path | None = None
    backend: str = "mock"
    provider_id: str = "mock"
    endpoint: str | None = None
    credential_env: str | None = None
    model: str | None = None
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    decoding: DecodingConfig = field(default_factory=DecodingConfig)
    cpds: CpdsConfig = field(default_factory=CpdsConfig)

    _FILES = ("catalog", "requirements", "flowchart", "gherkin_example", "broker_example", "runner_example")
    _OPTIONAL = ("gold", "templates", "records", "mapping_runs", "eval_overrides")

    def check(self) -> "ProjectConfig":
        for name in self._FILES + self._OPTIONAL:
            p = getattr(self, name)
            if p is None and name in self._OPTIONAL:
                continue
            if not Path(p).is_file():
                raise ConfigError(f"{name}: file not found: {p}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}, got {self.backend!r}")
        if self.backend == "remote" and not (self.endpoint and self.credential_env):
            raise ConfigError("backend 'remote' needs both endpoint and credential_env")
        if self.backend == "replay" and self.records is None:
            raise ConfigError("backend 'replay' needs a records file")
        if self.backend == "mock" and self.templates is None:
            raise ConfigError("backend 'mock' needs a templates file")
        return self

    @classmethod
    def from_mapping(cls, data: dict, base: Path) -> "ProjectConfig":
        data = dict(data or {})
        known = set(cls.__dataclass_fields__) - {"_FILES", "_OPTIONAL"}
        examples = data.pop("examples", {}) or {}
        for k in ("gherkin", "broker", "runner"):
            if k in examples:
                data[f"{k}_example"] = examples[k]
        backend = data.pop("backend", {}) or {}
        if isinstance(backend, str):
            backend = {"kind": backend}
        data["backend"] = backend.get("kind", "mock")
        for k in ("provider_id", "endpoint", "credential_env", "model"):
            if k in backend:
                data[k] = backend[k]
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for k, v in data.items():
            if k in cls._FILES + cls._OPTIONAL + ("output",):
                kw[k] = None if v is None else (base / v if not Path(v).is_absolute() else Path(v))
            elif k == "retrieval":
                kw[k] = RetrievalConfig(**v)
            elif k == "decoding":
                kw[k] = DecodingConfig(**v)
            elif k == "cpds":
                kw[k] = CpdsConfig.from_mapping(v)
            else:
                kw[k] = v
        missing = [f for f in cls._FILES + ("output",) if f not in kw]
        if missing:
            raise ConfigError(f"missing config keys: {missing}")
        try:
            return cls(**kw).check()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path, output: str | Path | None = None) -> "ProjectConfig":
        p = Path(path)
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {p} is not valid YAML: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {p} must be a mapping")
        cfg = cls.from_mapping(data, p.resolve().parent)
        if output is not None:
            cfg.output = Path(output)
        return cfg

    @classmethod
    def fixture(cls, output: str | Path = "vsspipe-out") -> "ProjectConfig":
        """The bundled CPDS corpus with the mock backend."""
        from . import fixtures as fx
        return cls(
            catalog=fx.path("vss_catalog.json"), requirements=fx.path("requirements.jsonl"),
            flowchart=fx.path("flowchart.txt"), gherkin_example=fx.path("gherkin_example.feature"),
            broker_example=fx.path("broker_example.py.txt"), runner_example=fx.path("runner_example.txt"),
            output=Path(output), gold=fx.path("gold_mappings.json"),
            templates=fx.path("gherkin_templates.txt"), records=fx.path("recorded_mapping.jsonl"),
            mapping_runs=fx.path("mapping_runs.json"),
        ).check()

    def to_mapping(self) -> dict:
        out = {}
        for k in self._FILES + self._OPTIONAL + ("output",):
            v = getattr(self, k)
            if v is not None:
                out[k] = str(v)
        out["backend"] = {k: v for k, v in (("kind", self.backend), ("provider_id", self.provider_id),
                                            ("endpoint", self.endpoint), ("credential_env", self.credential_env),
                                            ("model", self.model)) if v is not None}
        out["retrieval"] = asdict(self.retrieval)
        out["decoding"] = asdict(self.decoding)
        out["cpds"] = asdict(self.cpds)
        return out


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def split_blocks(text: str) -> dict[str, str]:
    from .fixtures import split_blocks as _split
    return _split(text)


@dataclass
class PhaseResult:
    phase: str
    written: list[str] = field(default_factory=list)
    kept: list[str] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def run_bundle(bundle: CodegenBundle, catalog: Catalog, config: CpdsConfig | None = None,
               strict: bool = True, time_scale: float = 1000.0, echo=None) -> tuple[RunReport, Broker]:
    """Execute one bundle against a fresh in-process broker and SUT."""
    clock = VirtualClock()
    broker = Broker(catalog, clock)
    sut = SutHandle(broker, config or CpdsConfig(), clock, echo).start()
    try:
        plan = bind(bundle.feature, bundle.bindings, strict)
        return execute(plan, broker, sut, time_scale), broker
    finally:
        sut.stop()


def mapping_table(runs: list[dict], catalog: Catalog, gold: dict[str, GoldMapping], gateway: Gateway,
                  data_dir: Path, cap: int | None = 25) -> list[dict]:
    """Replay recorded mapping runs and score them; one row per run."""
    pools: dict[str, Catalog] = {}
    rows = []
    for run in runs:
        src = run.get("candidates", "vss_catalog.json")
        if src not in pools:
            p = data_dir / src
            if p.suffix == ".json" and p.name != "vss_catalog.json":
                pools[src] = catalog.subset(json.loads(p.read_text(encoding="utf-8")))
            else:
                pools[src] = catalog if p.name == "vss_catalog.json" else load_catalog_file(p)
        g = gold[run["scenario"]]
        req = build_mapping_prompt(g.text, Shortlist.from_entries(run["scenario"], pools[src].flat),
                                   provider_id=run["provider"])
        raw, _ = gateway.generate(req)
        score = score_result(normalize_selection(raw, catalog, cap or 10**9, run["scenario"]), g)
        rows.append({"run": run["run"], "provider": run["provider"], "candidates": len(pools[src]),
                     "correct": f"{score.correct}/{score.expected}", "false_positives": score.false_positives,
                     "expected": run.get("expected")})
    return rows


class Workspace:
    def __init__(self, config: ProjectConfig, force: bool = False):
        self.config = config
        self.out = Path(config.output)
        self.force = force
        self.manifest = ReviewManifest(self.out / "review.json")
        self._catalog: Catalog | None = None

    # -- shared resources

    @property
    def catalog(self) -> Catalog:
        if self._catalog is None:
            self._catalog = load_catalog_file(self.config.catalog)
        return self._catalog

    def gateway(self, records: list | None = None) -> Gateway:
        c = self.config
        if c.backend == "mock":
            templates = split_blocks(Path(c.templates).read_text(encoding="utf-8"))
            backend = MockBackend(templates, MockCodegen(self.catalog, c.cpds))
            clock = lambda: 0.0  # noqa: E731  keeps mock artifacts byte-identical across runs
        elif c.backend == "replay":
            backend, clock = ReplayBackend(RecordStore(c.records).load()), lambda: 0.0  # noqa: E731
        else:
            backend, clock = RemoteBackend(c.endpoint, c.credential_env, c.model), time.time
        gw = Gateway(backend, clock=clock)
        if records is not None:
            inner = gw.generate

            def generate(req):
                text, rec = inner(req)
                records.append(rec)
                return text, rec
            gw.generate = generate
        return gw

    def _save_records(self, phase: str, records: list) -> None:
        p = self.out / "records" / f"{phase}.jsonl"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.unlink(missing_ok=True)
        RecordStore(p).extend(records)

    # -- artifacts and review state

    def file(self, rel: str) -> Path:
        return self.out / rel

    def read(self, rel: str) -> str:
        return self.file(rel).read_text(encoding="utf-8")

    def approved(self, rel: str) -> bool:
        """Approved or edited, and the file still has the reviewed content."""
        p = self.file(rel)
        if not self.manifest.passes(rel) or not p.exists():
            return False
        return self.manifest.entries[rel]["digest"] == _sha(p.read_text(encoding="utf-8"))

    def write(self, rel: str, text: str, result: PhaseResult, note: str = "", register: bool = True) -> bool:
        p = self.file(rel)
        if p.exists() and self.manifest.passes(rel) and not self.force and p.read_text(encoding="utf-8") != text:
            result.kept.append(rel)
            return False
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        if register:
            if self.force and self.manifest.passes(rel) and self.manifest.entries[rel]["digest"] != _sha(text):
                self.manifest.entries.pop(rel)
            self.manifest.register(rel, _sha(text), note)
        result.written.append(rel)
        return True

    def artifacts(self, folder: str, suffix: str) -> list[str]:
        return sorted(rel for rel in self.manifest.entries if rel.startswith(folder + "/") and rel.endswith(suffix))

    def approve(self, rel: str, note: str = "") -> None:
        p = self.file(rel)
        if rel not in self.manifest.entries or not p.exists():
            raise PhaseError(f"unknown artifact {rel!r}")
        text = p.read_text(encoding="utf-8")
        if rel.endswith(".feature"):
            rep = check_feature(text)
            if not rep.ok:
                first = rep.diagnostics[0]
                raise PhaseError(f"{rel} does not parse (line {first.line}: {first.message}); "
                                 "fix it and record the change with 'review edit'")
        cur = self.manifest.entries[rel]
        status = "edited" if cur["digest"] != _sha(text) or cur["status"] == "edited" else "approved"
        self.manifest.set(rel, status, note, _sha(text))
        self.manifest.save()

    def edit(self, rel: str, new_text: str | None = None, note: str = "") -> None:
        p = self.file(rel)
        if rel not in self.manifest.entries:
            raise PhaseError(f"unknown artifact {rel!r}")
        text = new_text if new_text is not None else p.read_text(encoding="utf-8")
        if rel.endswith(".feature"):
            rep = check_feature(text)
            if not rep.ok:
                first = rep.diagnostics[0]
                raise PhaseError(f"edited {rel} still does not parse (line {first.line}: {first.message})")
        p.write_text(text, encoding="utf-8")
        diag = p.with_suffix(".diagnostics.txt")
        if diag.exists():
            diag.unlink()
        self.manifest.set(rel, "edited", note or "edited by reviewer", _sha(text))
        self.manifest.save()

    def reject(self, rel: str, note: str = "") -> None:
        if rel not in self.manifest.entries:
            raise PhaseError(f"unknown artifact {rel!r}")
        self.manifest.set(rel, "rejected", note)
        self.manifest.save()

    def _auto_approve(self, rels) -> None:
        for rel in rels:
            if self.manifest.status(rel) == "pending":
                self.manifest.set(rel, "approved", "auto-approved")

    # -- phases

    def gen_gherkin(self, auto_approve: bool = False) -> PhaseResult:
        c = self.config
        res = PhaseResult("gherkin")
        records: list = []
        cands = gen_gherkin(load_requirements(c.requirements), load_flowchart(c.flowchart),
                            self.gateway(records), Path(c.gherkin_example).read_text(encoding="utf-8"),
                            c.provider_id, c.decoding)
        valid, review = [], []
        for cand in cands:
            rid = cand.requirement_ids[0]
            rel = f"gherkin/{rid}.feature"
            diag = self.file(f"gherkin/{rid}.diagnostics.txt")
            if cand.valid:
                valid.append(rid)
                written = self.write(rel, cand.raw, res, "valid_spec")
                if written and diag.exists():
                    diag.unlink()
            else:
                review.append(rid)
                self.write(rel, cand.raw, res, "parse_error: needs review")
                if not self.approved(rel):
                    diag.parent.mkdir(parents=True, exist_ok=True)
                    diag.write_text("".join(f"line {d.line}: {d.message}\n" for d in cand.report.diagnostics),
                                    encoding="utf-8")
        if auto_approve:
            self._auto_approve(f"gherkin/{rid}.feature" for rid in valid)
        res.summary = {"total": len(cands), "valid": len(valid), "needs_review": review,
                       "executable_rate": round(len(valid) / len(cands), 4)}
        self.write("gherkin/summary.json", json.dumps(res.summary, indent=2) + "\n", res, register=False)
        self._save_records("gherkin", records)
        self.manifest.save()
        return res

    def _feature_ids(self) -> list[str]:
        return [Path(rel).stem for rel in self.artifacts("gherkin", ".feature")]

    def map_signals(self, auto_approve: bool = False) -> PhaseResult:
        res = PhaseResult("mapping")
        records: list = []
        gw = self.gateway(records)
        ready = [rid for rid in self._feature_ids() if self.approved(f"gherkin/{rid}.feature")]
        if not ready:
            raise PhaseError("no approved Gherkin drafts; run 'review approve' first")
        for rid in ready:
            feature = parse_feature(self.read(f"gherkin/{rid}.feature"))
            results, csv = [], []
            for sc in feature.scenarios:
                sl, m = map_scenario(feature, sc, self.catalog, gw, self.config.retrieval,
                                     self.config.provider_id, self.config.decoding)
                results.append(m.to_json())
                csv.append(f"# {sc.name}\n" + sl.to_delimited())
            doc = {"feature": f"gherkin/{rid}.feature", "results": results}
            rel = f"mappings/{rid}.json"
            self.write(rel, json.dumps(doc, indent=2) + "\n", res)
            self.write(f"mappings/{rid}.shortlist.csv", "".join(csv), res, register=False)
            rejected = sum(len(r["rejected"]) for r in results)
            if rejected:
                res.problems.append(f"{rid}: {rejected} non-catalog path(s) rejected")
        if auto_approve:
            self._auto_approve(f"mappings/{rid}.json" for rid in ready)
        res.summary = {"features": len(ready), "skipped_unapproved": len(self._feature_ids()) - len(ready)}
        self._save_records("mapping", records)
        self.manifest.save()
        return res

    def refine(self, auto_approve: bool = False) -> PhaseResult:
        res = PhaseResult("refine")
        ready = []
        for rel in self.artifacts("mappings", ".json"):
            rid = Path(rel).stem
            if self.approved(rel) and self.approved(f"gherkin/{rid}.feature"):
                ready.append(rid)
        if not ready:
            raise PhaseError("no approved signal mappings; run 'map signals' and 'review approve' first")
        for rid in ready:
            feature = parse_feature(self.read(f"gherkin/{rid}.feature"))
            doc = json.loads(self.read(f"mappings/{rid}.json"))
            mappings = [MappingResult.from_json(r) for r in doc["results"]]
            enriched = refine_feature(feature, mappings, self.catalog)
            self.write(f"enriched/{rid}.feature", serialize_feature(enriched), res)
        if auto_approve:
            self._auto_approve(f"enriched/{rid}.feature" for rid in ready)
        res.summary = {"features": len(ready)}
        self.manifest.save()
        return res

    def gen_code(self, auto_approve: bool = False) -> PhaseResult:
        c = self.config
        res = PhaseResult("codegen")
        records: list = []
        gw = self.gateway(records)
        ready = [Path(rel).stem for rel in self.artifacts("enriched", ".feature") if self.approved(rel)]
        if not ready:
            raise PhaseError("no approved enriched features; run 'refine' and 'review approve' first")
        broker_ex = Path(c.broker_example).read_text(encoding="utf-8")
        runner_ex = Path(c.runner_example).read_text(encoding="utf-8")
        done = []
        for rid in ready:
            feature = parse_feature(self.read(f"enriched/{rid}.feature"))
            try:
                bundle = gen_code(feature, broker_ex, runner_ex, gw, self.catalog, c.provider_id, c.decoding)
            except (CodegenError, GatewayError) as exc:
                res.problems.append(f"{rid}: {exc}")
                continue
            self.write(f"bundles/{rid}.feature", bundle.feature_text, res, register=False)
            self.write(f"bundles/{rid}.environment.json",
                       json.dumps(bundle.environment_stub, indent=2, sort_keys=True) + "\n", res, register=False)
            self.write(f"bundles/{rid}.steps.jsonl", bundle.steps_artifact, res)
            done.append(rid)
        if auto_approve:
            self._auto_approve(f"bundles/{rid}.steps.jsonl" for rid in done)
        res.summary = {"bundles": len(done), "failed": len(ready) - len(done)}
        self._save_records("codegen", records)
        self.manifest.save()
        return res

    def load_bundle(self, rid: str) -> CodegenBundle:
        env = json.loads(self.read(f"bundles/{rid}.environment.json"))
        return CodegenBundle(self.read(f"bundles/{rid}.feature"), env, self.read(f"bundles/{rid}.steps.jsonl"))

    def evaluate(self) -> PhaseResult:
        """Execute every bundle in a fresh broker+SUT sandbox and judge it; replay mapping runs."""
        c = self.config
        res = PhaseResult("eval")
        overrides = load_overrides(c.eval_overrides)
        runs = []
        for rel in self.artifacts("bundles", ".steps.jsonl"):
            rid = rel.split("/", 1)[1][: -len(".steps.jsonl")]
            bundle = self.load_bundle(rid)
            env = bundle.environment_stub
            report, _ = run_bundle(bundle, self.catalog, c.cpds, bool(env.get("strict", True)),
                                   float(env.get("time_scale", 1000.0)))
            verdict = judge_run(bundle, report, overrides, rid)
            s = report.step_counts
            runs.append({"bundle": rid, "correct": verdict.correct, "reasons": verdict.reasons,
                         "steps": {"passed": s.passed, "failed": s.failed, "skipped": s.skipped,
                                   "undefined": s.undefined}})
        reqs = load_requirements(c.requirements)
        drafts = json.loads(self.read("gherkin/summary.json")) if self.file("gherkin/summary.json").exists() else {}
        correct = sum(r["correct"] for r in runs)
        summary = {
            "requirements": len(reqs),
            "gherkin_valid": drafts.get("valid"),
            "gherkin_needs_review": len(drafts.get("needs_review", [])),
            "executable_rate": drafts.get("executable_rate"),
            "bundles": len(runs),
            "bundles_correct": correct,
        }
        self.write("eval/runs.json", json.dumps(runs, indent=2) + "\n", res, register=False)
        lines = [f"requirements            {summary['requirements']}",
                 f"gherkin valid           {summary['gherkin_valid']} "
                 f"({summary['gherkin_needs_review']} need review edits)",
                 f"executable rate         {summary['executable_rate']}",
                 f"bundles run             {summary['bundles']}",
                 f"bundles correct         {correct}"]
        if c.mapping_runs and c.gold:
            rows = mapping_table(json.loads(Path(c.mapping_runs).read_text(encoding="utf-8")), self.catalog,
                                 load_gold(c.gold), Gateway(ReplayBackend(RecordStore(c.records).load())),
                                 Path(c.mapping_runs).parent, c.decoding.selection_cap) if c.records else []
            if rows:
                summary["mapping"] = rows
                lines += ["", format_table(rows, ["run", "candidates", "correct", "false_positives"])]
        self.write("eval/summary.json", json.dumps(summary, indent=2) + "\n", res, register=False)
        self.write("eval/summary.txt", "\n".join(lines) + "\n", res, register=False)
        res.summary = summary
        return res

    def pipeline_all(self, auto_approve: bool = False) -> list[PhaseResult]:
        out = [self.gen_gherkin(auto_approve)]
        for phase in (self.map_signals, self.refine, self.gen_code):
            out.append(phase(auto_approve))
        out.append(self.evaluate())
        return out
