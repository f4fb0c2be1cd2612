"""A small, strict Gherkin dialect: parse, serialize, expand and enrich.

Supported: tags, ``Feature``, ``Scenario``, ``Scenario Outline`` with a single
``Examples`` table, and Given/When/Then/And/But steps. Step lines indented
deeper than their step are joined onto it as continuation text. Comments are
dropped. Background, Rule, doc strings and data tables outside ``Examples``
are rejected.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .catalog import Catalog, SignalEntry, find_paths, path_tokens, signal_phrase, tokenize, validate_path

STEP_KEYWORDS = ("Given", "When", "Then", "And", "But")
SCENARIO = "scenario"
SCENARIO_OUTLINE = "scenario_outline"

_PLACEHOLDER_RE = re.compile(r"<([A-Za-z_][A-Za-z0-9_]*)>")
_REQ_RE = re.compile(r"Req_[A-Za-z0-9_.]*[A-Za-z0-9_]")
_TRAILING_BRACKETS_RE = re.compile(r"(?:\s*\[[^\[\]]*\])+\s*$")
_TAG_RE = re.compile(r"^@[^\s@]+$")
_UNSUPPORTED = ("Background:", "Rule:", "Scenario Template:", '"""', "```")


@dataclass(frozen=True)
class Step:
    keyword: str
    text: str

    @property
    def req_refs(self) -> list[str]:
        m = _TRAILING_BRACKETS_RE.search(self.text)
        return _REQ_RE.findall(m.group(0)) if m else []

    @property
    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.text)

    @property
    def body(self) -> str:
        """Step text without its trailing requirement annotations."""
        return _TRAILING_BRACKETS_RE.sub("", self.text).strip()


@dataclass(frozen=True)
class Examples:
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str = SCENARIO
    tags: tuple[str, ...] = ()
    steps: tuple[Step, ...] = ()
    examples: Examples | None = None
    line: int = field(default=0, compare=False)

    @property
    def req_refs(self) -> list[str]:
        refs = []
        for step in self.steps:
            for r in step.req_refs:
                if r not in refs:
                    refs.append(r)
        return refs


@dataclass(frozen=True)
class Feature:
    title: str
    description: str = ""
    tags: tuple[str, ...] = ()
    scenarios: tuple[Scenario, ...] = ()

    def scenario(self, name: str) -> Scenario:
        for sc in self.scenarios:
            if sc.name == name:
                return sc
        raise KeyError(name)


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str

    def render(self, filename: str = "<feature>") -> str:
        return f"{filename}:{self.line}: {self.message}"


@dataclass
class ValidityReport:
    level: str  # "valid_spec" | "parse_error"
    diagnostics: list[Diagnostic] = field(default_factory=list)
    feature: Feature | None = None

    @property
    def ok(self) -> bool:
        return self.level == "valid_spec"

    def render(self, filename: str = "<feature>") -> str:
        return "\n".join(d.render(filename) for d in self.diagnostics)


class GherkinSyntaxError(ValueError):
    def __init__(self, diagnostics: Sequence[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(f"line {d.line}: {d.message}" for d in self.diagnostics))


class OutlineError(ValueError):
    pass


class EnrichmentError(ValueError):
    pass


def _indent(line: str) -> int:
    return len(line) - len(line.lstrip(" \t"))


def _split_row(text: str) -> list[str] | None:
    s = text.strip()
    if not (s.startswith("|") and s.endswith("|") and len(s) >= 2):
        return None
    cells, buf, i = [], [], 1
    while i < len(s) - 1:
        ch = s[i]
        if ch == "\\" and i + 1 < len(s) - 1:
            nxt = s[i + 1]
            buf.append({"|": "|", "n": "\n", "\\": "\\"}.get(nxt, "\\" + nxt))
            i += 2
            continue
        if ch == "|":
            cells.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        i += 1
    cells.append("".join(buf).strip())
    return cells


class _ScenarioBuilder:
    def __init__(self, name, kind, tags, line):
        self.name = name
        self.kind = kind
        self.tags = tags
        self.line = line
        self.steps: list[list] = []  # [keyword, text, line, indent]
        self.header: list[str] | None = None
        self.rows: list[tuple[str, ...]] = []
        self.examples_line: int | None = None


def _check_scenario(b: _ScenarioBuilder, diags: list[Diagnostic]) -> Scenario:
    steps = tuple(Step(k, t) for k, t, _, _ in b.steps)
    if steps and steps[0].keyword not in ("Given", "When"):
        diags.append(Diagnostic(b.steps[0][2], f"scenario {b.name!r} must start with Given or When, not {steps[0].keyword}"))
    for k, t, ln, _ in b.steps:
        if not t:
            diags.append(Diagnostic(ln, f"empty {k} step"))
    examples = None
    if b.kind == SCENARIO_OUTLINE:
        if b.header is None:
            diags.append(Diagnostic(b.line, f"scenario outline {b.name!r} has no Examples table"))
        else:
            examples = Examples(tuple(b.header), tuple(b.rows))
            columns = set(b.header)
            for k, t, ln, _ in b.steps:
                for ph in _PLACEHOLDER_RE.findall(t):
                    if ph not in columns:
                        diags.append(Diagnostic(ln, f"placeholder <{ph}> is not an Examples column"))
    elif b.header is not None:
        diags.append(Diagnostic(b.examples_line, "Examples are only allowed in a Scenario Outline"))
    return Scenario(b.name, b.kind, tuple(b.tags), steps, examples, b.line)


def _parse(source: str) -> tuple[Feature | None, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    lines = source.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if lines and lines[0].startswith("\ufeff"):
        lines[0] = lines[0][1:]

    title = None
    feature_tags: list[str] = []
    description: list[str] = []
    pending_tags: list[str] = []
    scenarios: list[_ScenarioBuilder] = []
    current: _ScenarioBuilder | None = None
    in_examples = False
    last_step = None

    for no, raw in enumerate(lines, 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indent = _indent(raw)

        # continuation of the previous step
        if last_step is not None and indent > last_step[3] and not stripped.startswith(("|", "@")):
            last_step[1] = f"{last_step[1]} {stripped}".strip()
            continue

        if stripped.startswith("@"):
            tags = stripped.split()
            bad = [t for t in tags if not _TAG_RE.match(t)]
            if bad:
                diags.append(Diagnostic(no, f"malformed tag {bad[0]!r}"))
            pending_tags.extend(t for t in tags if _TAG_RE.match(t))
            last_step = None
            continue

        if stripped.startswith(_UNSUPPORTED):
            diags.append(Diagnostic(no, f"unsupported construct {stripped.split()[0]!r}"))
            last_step = None
            continue

        if stripped.startswith("Feature:"):
            if title is not None:
                diags.append(Diagnostic(no, "only one Feature per file"))
                continue
            title = stripped[len("Feature:"):].strip()
            if not title:
                diags.append(Diagnostic(no, "Feature title must not be empty"))
            feature_tags, pending_tags = pending_tags, []
            continue

        if title is None:
            diags.append(Diagnostic(no, f"expected 'Feature:', found {stripped!r}"))
            continue

        head = None
        for kw, kind in (("Scenario Outline:", SCENARIO_OUTLINE), ("Scenario:", SCENARIO)):
            if stripped.startswith(kw):
                head = (stripped[len(kw):].strip(), kind)
                break
        if head:
            current = _ScenarioBuilder(head[0], head[1], pending_tags, no)
            if not head[0]:
                diags.append(Diagnostic(no, "scenario name must not be empty"))
            pending_tags = []
            scenarios.append(current)
            in_examples = False
            last_step = None
            continue

        if stripped.startswith("Examples:"):
            last_step = None
            if current is None:
                diags.append(Diagnostic(no, "Examples outside a scenario"))
            elif current.examples_line is not None:
                diags.append(Diagnostic(no, "only one Examples table per outline"))
            else:
                current.examples_line = no
                in_examples = True
            continue

        if stripped.startswith("|"):
            last_step = None
            cells = _split_row(stripped)
            if not in_examples or current is None:
                diags.append(Diagnostic(no, "data tables are only supported under Examples"))
            elif cells is None:
                diags.append(Diagnostic(no, "malformed table row"))
            elif current.header is None:
                if len(set(cells)) != len(cells) or not all(cells):
                    diags.append(Diagnostic(no, "Examples header cells must be unique and non-empty"))
                current.header = cells
            elif len(cells) != len(current.header):
                diags.append(Diagnostic(no, f"row has {len(cells)} cells, header has {len(current.header)}"))
            else:
                current.rows.append(tuple(cells))
            continue

        keyword = next((k for k in STEP_KEYWORDS if stripped == k or stripped.startswith(k + " ")), None)
        if keyword is not None:
            if current is None:
                diags.append(Diagnostic(no, "step outside a scenario"))
                continue
            if in_examples:
                diags.append(Diagnostic(no, "step after Examples"))
                continue
            last_step = [keyword, stripped[len(keyword):].strip(), no, indent]
            current.steps.append(last_step)
            continue

        if current is None and not pending_tags:
            description.append(stripped)
            continue
        diags.append(Diagnostic(no, f"unknown keyword in {stripped!r}"))

    if title is None:
        if not diags:
            diags.append(Diagnostic(1, "missing 'Feature:' line"))
        return None, diags
    if pending_tags:
        diags.append(Diagnostic(len(lines), "tags not followed by a scenario"))

    built = [_check_scenario(b, diags) for b in scenarios]
    seen = set()
    for sc in built:
        if sc.name in seen:
            diags.append(Diagnostic(sc.line, f"duplicate scenario name {sc.name!r}"))
        seen.add(sc.name)
    diags.sort(key=lambda d: d.line)
    feature = Feature(title, "\n".join(description), tuple(feature_tags), tuple(built))
    return feature, diags


def parse_feature(source: str) -> Feature:
    """Parse feature text, raising :class:`GherkinSyntaxError` on any diagnostic."""
    feature, diags = _parse(source)
    if diags:
        raise GherkinSyntaxError(diags)
    return feature


def check_feature(source: str) -> ValidityReport:
    feature, diags = _parse(source)
    if diags:
        return ValidityReport("parse_error", diags)
    return ValidityReport("valid_spec", [], feature)


def _escape_cell(cell: str) -> str:
    return cell.replace("\\", "\\\\").replace("|", "\\|").replace("\n", "\\n")


def serialize_feature(feature: Feature) -> str:
    out: list[str] = []
    if feature.tags:
        out.append(" ".join(feature.tags))
    out.append(f"Feature: {feature.title}")
    for line in feature.description.splitlines():
        out.append(f"  {line}")
    for sc in feature.scenarios:
        out.append("")
        if sc.tags:
            out.append("  " + " ".join(sc.tags))
        head = "Scenario Outline" if sc.kind == SCENARIO_OUTLINE else "Scenario"
        out.append(f"  {head}: {sc.name}")
        for step in sc.steps:
            out.append(f"    {step.keyword} {step.text}")
        if sc.examples is not None:
            out.append("")
            out.append("    Examples:")
            table = [list(map(_escape_cell, sc.examples.header))]
            table += [list(map(_escape_cell, row)) for row in sc.examples.rows]
            widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
            for r in table:
                out.append("      | " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |")
    return "\n".join(out) + "\n"


def expand_outline(scenario: Scenario) -> list[Scenario]:
    """Concrete scenarios, one per Examples row, named ``<name>_<row>``."""
    if scenario.kind != SCENARIO_OUTLINE or scenario.examples is None:
        raise OutlineError(f"{scenario.name!r} is not a scenario outline with Examples")
    header = scenario.examples.header
    result = []
    for i, row in enumerate(scenario.examples.rows, 1):
        if len(row) != len(header):
            raise OutlineError(f"Examples row {i} of {scenario.name!r} has {len(row)} cells, expected {len(header)}")
        values = dict(zip(header, row))

        def sub(text: str) -> str:
            return _PLACEHOLDER_RE.sub(lambda m: values.get(m.group(1), m.group(0)), text)

        steps = tuple(Step(s.keyword, sub(s.text)) for s in scenario.steps)
        result.append(Scenario(f"{sub(scenario.name)}_{i}", SCENARIO, scenario.tags, steps, None, scenario.line))
    return result


def concrete_scenarios(feature: Feature) -> list[Scenario]:
    out = []
    for sc in feature.scenarios:
        out.extend(expand_outline(sc) if sc.kind == SCENARIO_OUTLINE else [sc])
    return out


def effective_keywords(steps: Sequence[Step]) -> list[str]:
    """Resolve And/But to the Given/When/Then they continue."""
    out, last = [], "Given"
    for s in steps:
        if s.keyword in ("And", "But"):
            out.append(last)
        else:
            last = s.keyword
            out.append(s.keyword)
    return out


def hallucinated_paths(feature: Feature, catalog: Catalog) -> list[str]:
    bad = []
    for path in find_paths(serialize_feature(feature)):
        if path not in catalog and path not in bad:
            bad.append(path)
    return bad


def _best_entry(step: Step, entries: Sequence[SignalEntry]) -> SignalEntry | None:
    words = set(tokenize(step.body))
    best, best_score = None, 0
    for e in entries:
        if not signal_phrase(e) <= words:
            continue
        score = len(path_tokens(e) & words)
        if score > best_score:
            best, best_score = e, score
    return best


def _annotate(step: Step, path: str) -> Step:
    m = _TRAILING_BRACKETS_RE.search(step.text)
    if m:
        text = f"{step.text[:m.start()].rstrip()} ({path}) {step.text[m.start():].strip()}"
    else:
        text = f"{step.text} ({path})"
    return Step(step.keyword, text)


def enrich_with_vss(feature: Feature, mapping: Mapping[str, Sequence[SignalEntry]], catalog: Catalog) -> Feature:
    """Attach explicit VSS paths to steps that name a mapped signal.

    A step that already mentions a ``Vehicle.*`` path is left alone. Otherwise
    the mapped entry whose signal phrase is fully contained in the step text
    (ties broken by path-token overlap, then mapping order) is inserted in
    parentheses before the requirement annotation.

    Raises :class:`UnknownSignal` when a mapped path, or any path in the
    result, is not in ``catalog``; the input feature is never modified.
    """
    names = {sc.name for sc in feature.scenarios}
    for name, entries in mapping.items():
        if name not in names:
            raise EnrichmentError(f"mapping refers to unknown scenario {name!r}")
        for e in entries:
            validate_path(catalog, e.path)

    scenarios = []
    for sc in feature.scenarios:
        entries = mapping.get(sc.name, ())
        if not entries:
            scenarios.append(sc)
            continue
        steps = []
        for step in sc.steps:
            entry = None if find_paths(step.text) else _best_entry(step, entries)
            steps.append(_annotate(step, entry.path) if entry else step)
        scenarios.append(replace(sc, steps=tuple(steps)))
    enriched = replace(feature, scenarios=tuple(scenarios))

    bad = hallucinated_paths(enriched, catalog)
    if bad:
        validate_path(catalog, bad[0])
    return enriched
