"""Step-binding artifacts: parsing model answers and the deterministic mock generator."""
from __future__ import annotations

import json
import re
from dataclasses import asdict

from . import prompts
from .catalog import Catalog, SignalEntry, find_paths
from .cpds import CpdsConfig, STATES
from .gherkin import Step, concrete_scenarios, effective_keywords, parse_feature
from .runner import StepBinding, StepsFormatError, binding_from_record, dump_steps, load_steps


class CodegenError(ValueError):
    def __init__(self, message: str, steps=()):
        super().__init__(message + "".join(f"\n  - {s}" for s in steps))
        self.steps = list(steps)


def _strip_fence(text: str) -> str:
    lines = [l for l in text.strip("\n").splitlines() if not l.strip().startswith("```")]
    return "\n".join(lines).strip("\n")


def parse_response(text: str) -> tuple[dict, list[StepBinding]]:
    """Split a code-generation answer into its environment object and step bindings."""
    if prompts.ENVIRONMENT_SECTION not in text or prompts.STEPS_SECTION not in text:
        raise StepsFormatError("answer must contain '### environment' and '### steps' sections")
    env_text = _strip_fence(prompts.section(text, prompts.ENVIRONMENT_SECTION, [prompts.STEPS_SECTION]))
    steps_text = _strip_fence(prompts.section(text, prompts.STEPS_SECTION, [prompts.ENVIRONMENT_SECTION]))
    try:
        env = json.loads(env_text) if env_text.strip() else {}
    except ValueError as exc:
        raise StepsFormatError(f"environment section is not JSON: {exc}") from None
    if not isinstance(env, dict):
        raise StepsFormatError("environment section must be a JSON object")
    return env, load_steps(steps_text)


def render_response(env: dict, bindings) -> str:
    return "\n".join([
        prompts.ENVIRONMENT_SECTION,
        json.dumps(env, indent=2, sort_keys=True),
        prompts.STEPS_SECTION,
        dump_steps(bindings).rstrip("\n"),
    ]) + "\n"


_NUM = r"-?\d+(?:\.\d+)?"
_TIMER_RE = re.compile(r"\b(T_ACK_[123]|T_EVAL|T_CARERS)\b")
_ELAPSE_RE = re.compile(r"\b(elapse[sd]?|expire[sd]?|pass(?:es)?|run[s]? out)\b", re.I)
_DURATION_RE = re.compile(rf"\b({_NUM})\s*(seconds?|minutes?)\b", re.I)
_STATE_RE = re.compile(r"\bS([0-7])\b")
_LOG_RE = re.compile(r'\blog (?:reports|contains|shows) "([^"]+)"')
_BETWEEN_RE = re.compile(rf"\b(?:between|from)\s+({_NUM})\s+(?:and|to)\s+({_NUM})\b")
_CMP = [
    (re.compile(rf"\b(?:at most|no more than)\s+({_NUM})"), "le"),
    (re.compile(rf"\b(?:at least|no less than)\s+({_NUM})"), "ge"),
    (re.compile(rf"\b(?:below|less than|under)\s+({_NUM})"), "lt"),
    (re.compile(rf"\b(?:above|greater than|over)\s+({_NUM})"), "gt"),
]
_LITERAL_RE = re.compile(
    rf"\b(?:is|are|equals|becomes|to|reports|=)\s+(?:set to\s+|reset to\s+)?"
    rf"(true|false|{_NUM}|[A-Z][A-Z_]+\b|\"[^\"]*\")")
_NEGATIONS = frozenset({"not", "no", "false", "inactive", "cleared", "off", "never", "stopped"})

TIMER_FIELDS = {"T_ACK_1": "t_ack_1", "T_ACK_2": "t_ack_2", "T_ACK_3": "t_ack_3",
                "T_EVAL": "eval_window", "T_CARERS": "t_carers"}


def _typed(entry: SignalEntry, literal: str | None, negated: bool):
    dt = entry.datatype
    if dt == "boolean":
        if literal in ("true", "false"):
            return literal == "true"
        return None if literal is not None else not negated
    if literal is None:
        return None
    if literal.startswith('"'):
        return literal[1:-1] if dt == "string" else None
    if dt == "string":
        return literal if not re.fullmatch(_NUM, literal) else None
    if re.fullmatch(_NUM, literal) is None:
        return None
    if dt in ("float", "double"):
        return float(literal)
    v = float(literal)
    return int(v) if v.is_integer() else None


def _num(s: str, entry: SignalEntry):
    v = float(s)
    return v if entry.datatype in ("float", "double") or not v.is_integer() else int(v)


def bind_step(step: Step, keyword: str, catalog: Catalog, config: CpdsConfig) -> StepBinding | None:
    """Map one step onto the action language, or ``None`` when no rule applies."""
    body = step.body
    timers = list(dict.fromkeys(_TIMER_RE.findall(body)))
    if _ELAPSE_RE.search(body) and (timers or _DURATION_RE.search(body)):
        if timers:
            seconds = sum(getattr(config, TIMER_FIELDS[t]) for t in timers)
        else:
            n, unit = _DURATION_RE.search(body).groups()
            seconds = float(n) * (60 if unit.lower().startswith("minute") else 1)
        return StepBinding.make(step.text, "advance_time", seconds=float(seconds))

    m = _LOG_RE.search(body)
    if m:
        return StepBinding.make(step.text, "expect_log", text=m.group(1))

    paths = [p for p in find_paths(body) if p in catalog]
    if not paths:
        m = _STATE_RE.search(body)
        if m and "state" in body.lower():
            return StepBinding.make(step.text, "expect_state", state=STATES[int(m.group(1))])
        return None

    path = paths[-1]
    entry = catalog.index[path]
    rest = re.sub(r"\(?\bVehicle(?:\.[A-Za-z0-9_]+)+\)?", " ", body)
    words = set(rest.lower().split())
    negated = bool(words & _NEGATIONS)

    op, value = "eq", None
    m = _BETWEEN_RE.search(rest)
    if m and entry.datatype not in ("boolean", "string"):
        op, value = "between", (_num(m.group(1), entry), _num(m.group(2), entry))
    else:
        for rx, name in _CMP:
            m = rx.search(rest)
            if m and entry.datatype not in ("boolean", "string"):
                op, value = name, _num(m.group(1), entry)
                break
        else:
            lits = _LITERAL_RE.findall(rest)
            value = _typed(entry, lits[-1] if lits else None, negated)
            if value is None:
                return None

    if keyword == "Then":
        return StepBinding.make(step.text, "expect_signal", path=path, op=op, value=value)
    if op != "eq":
        return None
    return StepBinding.make(step.text, "set_signal", path=path, value=value)


class MockCodegen:
    """Rule-based stand-in for the code-generation model.

    ``table`` holds hand-written binding records for step texts the rules
    do not cover; it is consulted first.
    """

    def __init__(self, catalog: Catalog, config: CpdsConfig | None = None, table=None,
                 environment: dict | None = None):
        self.catalog = catalog
        self.config = config or CpdsConfig()
        self.table = {r["step"]: binding_from_record(r) for r in (table or [])}
        self.environment = environment or {}

    def bindings(self, gherkin: str) -> list[StepBinding]:
        feature = parse_feature(gherkin)
        out: dict[str, StepBinding] = {}
        for sc in concrete_scenarios(feature):
            for kw, st in zip(effective_keywords(sc.steps), sc.steps):
                if st.text in out:
                    continue
                b = self.table.get(st.text) or bind_step(st, kw, self.catalog, self.config)
                if b is not None:
                    out[st.text] = b
        return list(out.values())

    def __call__(self, gherkin: str) -> str:
        env = {"time_scale": 1000.0, "strict": True, "sut": asdict(self.config), **self.environment}
        return render_response(env, self.bindings(gherkin))
