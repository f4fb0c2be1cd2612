"""The CPDS desk-scale corpus shipped with the package, plus helpers to load it.

Everything under ``data/`` is regenerated by ``scripts/build_fixtures.py`` and
pinned by ``data/manifest.json`` (sha256 per file plus expected counts).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from ..catalog import Catalog, load_catalog_file
from ..codegen import MockCodegen
from ..cpds import CpdsConfig
from ..evaluation import GoldMapping, load_gold
from ..gateway import Gateway, MockBackend, RecordStore, ReplayBackend
from ..gherkin import check_feature
from ..pipeline import FlowchartDoc, Requirement, load_flowchart, load_requirements

DATA_DIR = Path(__file__).resolve().parent / "data"
MANIFEST = "manifest.json"


def path(name: str) -> Path:
    return DATA_DIR / name


def read(name: str) -> str:
    return path(name).read_text(encoding="utf-8")


@dataclass
class ManifestReport:
    checked: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    expected: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


class ManifestError(RuntimeError):
    pass


def _sha256(p: Path) -> str:
    return hashlib.sha256(p.read_bytes()).hexdigest()


def split_blocks(text: str) -> dict[str, str]:
    """Split a ``=== <id>`` delimited file into {id: body}."""
    out: dict[str, str] = {}
    key = None
    buf: list[str] = []
    for line in text.splitlines(keepends=True):
        if line.startswith("=== "):
            if key is not None:
                out[key] = "".join(buf)
            key, buf = line[4:].strip(), []
        elif key is not None:
            buf.append(line)
    if key is not None:
        out[key] = "".join(buf)
    return out


def verify_manifest(data_dir: str | Path | None = None, strict: bool = False) -> ManifestReport:
    """Check file digests, then recount the quantities the manifest promises."""
    d = Path(data_dir) if data_dir else DATA_DIR
    manifest = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
    rep = ManifestReport(expected=manifest["expected"])
    for name, digest in sorted(manifest["files"].items()):
        p = d / name
        if not p.exists():
            rep.failures.append(f"{name}: missing")
        elif _sha256(p) != digest:
            rep.failures.append(f"{name}: digest mismatch")
        else:
            rep.checked.append(name)
    if rep.ok:
        exp = manifest["expected"]
        found = {
            "catalog_entries": len(load_catalog_file(d / "vss_catalog.json")),
            "candidate_pool": len(json.loads((d / "candidate_pool_16.json").read_text(encoding="utf-8"))),
            "requirements": len(load_requirements(d / "requirements.jsonl")),
        }
        fc = load_flowchart(d / "flowchart.txt")
        found["flowchart_states"] = len(fc.states)
        found["flowchart_transitions"] = len(fc.transitions)
        drafts = split_blocks((d / "gherkin_templates.txt").read_text(encoding="utf-8"))
        valid = sum(check_feature(t).ok for t in drafts.values())
        found["gherkin_valid"] = valid
        found["gherkin_review"] = len(drafts) - valid
        runs = {r["run"]: r["expected"] for r in json.loads((d / "mapping_runs.json").read_text(encoding="utf-8"))}
        found["mapping_rows"] = runs
        for key, want in exp.items():
            if key in found and found[key] != want:
                rep.failures.append(f"expected[{key}] = {want!r} but the corpus gives {found[key]!r}")
            elif key not in found and key != "hvac_summary":
                rep.failures.append(f"expected[{key}] does not resolve to a corpus quantity")
    if strict and not rep.ok:
        raise ManifestError("; ".join(rep.failures))
    return rep


@lru_cache(maxsize=None)
def catalog() -> Catalog:
    return load_catalog_file(path("vss_catalog.json"))


def candidate_pool() -> list[str]:
    return json.loads(read("candidate_pool_16.json"))


def pool_catalog() -> Catalog:
    return catalog().subset(candidate_pool())


def requirements() -> list[Requirement]:
    return load_requirements(path("requirements.jsonl"))


def flowchart() -> FlowchartDoc:
    return load_flowchart(path("flowchart.txt"))


def gherkin_templates() -> dict[str, str]:
    return split_blocks(read("gherkin_templates.txt"))


def review_edits() -> dict[str, str]:
    return split_blocks(read("review_edits.txt"))


def gold() -> dict[str, GoldMapping]:
    return load_gold(path("gold_mappings.json"))


def mapping_runs() -> list[dict]:
    return json.loads(read("mapping_runs.json"))


def recorded_store() -> RecordStore:
    return RecordStore(path("recorded_mapping.jsonl"))


def replay_gateway() -> Gateway:
    return Gateway(ReplayBackend(recorded_store().load()))


def mock_backend(config: CpdsConfig | None = None) -> MockBackend:
    return MockBackend(gherkin_templates(), MockCodegen(catalog(), config))


def mock_gateway(store: RecordStore | None = None, config: CpdsConfig | None = None) -> Gateway:
    return Gateway(mock_backend(config), store, clock=lambda: 0.0)


def gherkin_example() -> str:
    return read("gherkin_example.feature")


def broker_example() -> str:
    return read("broker_example.py.txt")


def runner_example() -> str:
    return read("runner_example.txt")


def hvac_feature() -> str:
    return read("hvac_adjustment.feature")


def hvac_steps() -> str:
    return read("hvac_adjustment.steps.jsonl")


def hvac_outline() -> str:
    return read("hvac_outline.feature")


def expected(key: str):
    return json.loads(read(MANIFEST))["expected"][key]
