"""Execute Gherkin features against a broker with a closed step-action language.

Steps artifact format (one JSON object per line)::

    {"step": "<exact step text>", "action": "set_signal", "path": "...", "value": <json>}
    {"step": "...", "action": "expect_signal", "path": "...", "op": "eq", "value": <json>, "timeout": 2.0}
    {"step": "...", "action": "advance_time", "seconds": 600}
    {"step": "...", "action": "expect_state", "state": "S5_HvacIntervention", "timeout": 2.0}
    {"step": "...", "action": "expect_log", "text": "moving to standby", "timeout": 2.0}

``op`` is one of eq, ne, lt, le, gt, ge, between (``value`` is then ``[lo, hi]``).
Timeouts are virtual seconds.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .broker.core import check_value
from .catalog import Catalog, UnknownSignal, validate_path
from .gherkin import Feature, Scenario, Step, concrete_scenarios

ACTIONS = ("set_signal", "expect_signal", "advance_time", "expect_state", "expect_log")
OPS = ("eq", "ne", "lt", "le", "gt", "ge", "between")
DEFAULT_TIMEOUT = 2.0
POLL_STEP = 0.1

PASSED, FAILED, SKIPPED, UNDEFINED = "passed", "failed", "skipped", "undefined"


class BindError(ValueError):
    pass


class StepsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class StepBinding:
    step_text: str
    action: str
    args: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise StepsFormatError(f"unknown action {self.action!r}")

    @property
    def params(self) -> dict:
        return dict(self.args)

    @property
    def path(self) -> str | None:
        return self.params.get("path")

    @classmethod
    def make(cls, step_text: str, action: str, **args) -> "StepBinding":
        return cls(step_text, action, tuple(sorted(args.items())))

    def to_record(self) -> dict:
        return {"step": self.step_text, "action": self.action, **self.params}


_REQUIRED = {
    "set_signal": ("path", "value"),
    "expect_signal": ("path", "op", "value"),
    "advance_time": ("seconds",),
    "expect_state": ("state",),
    "expect_log": ("text",),
}


def _freeze(v):
    return tuple(v) if isinstance(v, list) else v


def binding_from_record(rec: dict, where: str = "") -> StepBinding:
    if not isinstance(rec, dict) or "step" not in rec or "action" not in rec:
        raise StepsFormatError(f"{where}record needs 'step' and 'action'")
    action = rec["action"]
    if action not in ACTIONS:
        raise StepsFormatError(f"{where}unknown action {action!r}")
    args = {k: _freeze(v) for k, v in rec.items() if k not in ("step", "action")}
    missing = [k for k in _REQUIRED[action] if k not in args]
    if missing:
        raise StepsFormatError(f"{where}{action} needs {', '.join(missing)}")
    if action == "expect_signal":
        if args["op"] not in OPS:
            raise StepsFormatError(f"{where}unknown op {args['op']!r}")
        if args["op"] == "between" and not (isinstance(args["value"], tuple) and len(args["value"]) == 2):
            raise StepsFormatError(f"{where}between needs a [lo, hi] pair")
    return StepBinding.make(rec["step"], action, **args)


def load_steps(text: str) -> list[StepBinding]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except ValueError as exc:
            raise StepsFormatError(f"line {n}: {exc}") from None
        out.append(binding_from_record(rec, f"line {n}: "))
    return out


def dump_steps(bindings) -> str:
    def plain(v):
        return list(v) if isinstance(v, tuple) else v
    lines = [json.dumps({k: plain(v) for k, v in b.to_record().items()}, ensure_ascii=False) for b in bindings]
    return "\n".join(lines) + ("\n" if lines else "")


def load_steps_file(path: str | Path) -> list[StepBinding]:
    return load_steps(Path(path).read_text(encoding="utf-8"))


def validate_bindings(bindings, catalog: Catalog) -> None:
    """Every path must be in the catalog and every set/compare value must fit its type."""
    for b in bindings:
        p = b.params
        if "path" not in p:
            continue
        entry = validate_path(catalog, p["path"])
        if b.action == "set_signal" or (b.action == "expect_signal" and p["op"] in ("eq", "ne")):
            check_value(entry, p["value"])


@dataclass
class Plan:
    feature: Feature
    scenarios: list[tuple[Scenario, list[tuple[Step, StepBinding | None]]]]
    strict: bool = True

    @property
    def undefined(self) -> list[Step]:
        return [s for _, steps in self.scenarios for s, b in steps if b is None]


def bind(feature: Feature, bindings, strict: bool = True) -> Plan:
    table: dict[str, StepBinding] = {}
    for b in bindings:
        if b.step_text in table:
            raise BindError(f"duplicate binding for step {b.step_text!r}")
        table[b.step_text] = b
    scenarios = [(sc, [(st, table.get(st.text)) for st in sc.steps]) for sc in concrete_scenarios(feature)]
    return Plan(feature, scenarios, strict)


@dataclass
class Counts:
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    undefined: int = 0

    def add(self, status: str):
        setattr(self, status, getattr(self, status) + 1)

    @property
    def total(self) -> int:
        return self.passed + self.failed + self.skipped + self.undefined


@dataclass
class StepOutcome:
    scenario: str
    keyword: str
    text: str
    status: str
    duration: float = 0.0
    message: str = ""


@dataclass
class FeatureResult:
    title: str
    status: str
    scenarios: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class RunReport:
    features: list[FeatureResult] = field(default_factory=list)
    outcomes: list[StepOutcome] = field(default_factory=list)
    log: list[str] = field(default_factory=list)
    echo: list[str] = field(default_factory=list)

    @property
    def feature_counts(self) -> Counts:
        c = Counts()
        for f in self.features:
            if f.scenarios:
                c.add(f.status)
        return c

    @property
    def scenario_counts(self) -> Counts:
        c = Counts()
        for f in self.features:
            for _, status in f.scenarios:
                c.add(status)
        return c

    @property
    def step_counts(self) -> Counts:
        c = Counts()
        for o in self.outcomes:
            c.add(o.status)
        return c

    @property
    def ok(self) -> bool:
        return self.feature_counts.failed == 0 and self.scenario_counts.failed == 0 \
            and self.step_counts.failed == 0 and self.step_counts.undefined == 0


def _plural(n: int, word: str) -> str:
    return f"{n} {word}" + ("" if n == 1 else "s")


def summary_lines(report: RunReport) -> list[str]:
    f, s, t = report.feature_counts, report.scenario_counts, report.step_counts
    return [
        f"{_plural(f.passed, 'feature')} passed, {f.failed} failed, {f.skipped} skipped",
        f"{_plural(s.passed, 'scenario')} passed, {s.failed} failed, {s.skipped} skipped",
        f"{_plural(t.passed, 'step')} passed, {t.failed} failed, {t.skipped} skipped, {t.undefined} undefined",
    ]


def render_report(report: RunReport) -> str:
    return "\n".join([*report.log, *report.echo, *summary_lines(report)]) + "\n"


class StepFailed(AssertionError):
    pass


def _compare(op: str, actual, expected) -> bool:
    if op == "between":
        lo, hi = expected
        return lo <= actual <= hi
    if op in ("eq", "ne"):
        if isinstance(actual, float) or isinstance(expected, float):
            same = (not isinstance(actual, (bool, str)) and not isinstance(expected, (bool, str))
                    and math.isclose(actual, expected, rel_tol=1e-9, abs_tol=1e-9))
        else:
            same = type(actual) is type(expected) and actual == expected
        return same if op == "eq" else not same
    try:
        return {"lt": actual < expected, "le": actual <= expected,
                "gt": actual > expected, "ge": actual >= expected}[op]
    except TypeError:
        return False


class _Driver:
    """Time and synchronisation: virtual when a SUT handle is attached, scaled wall time otherwise."""

    def __init__(self, broker, sut, time_scale: float):
        self.broker = broker
        self.sut = sut
        self.time_scale = time_scale

    def settle(self):
        if self.sut is not None:
            self.sut.settle()
        else:
            self.broker.sync()

    def advance(self, seconds: float):
        if self.sut is not None:
            self.sut.settle()
            self.sut.advance_clock(seconds)
            self.sut.settle()
        else:
            time.sleep(seconds / self.time_scale)

    def wait_until(self, check: Callable[[], bool], timeout: float) -> bool:
        if self.sut is not None:
            waited = 0.0
            while True:
                self.sut.settle()
                if check():
                    return True
                if waited >= timeout:
                    return False
                dt = min(POLL_STEP, timeout - waited)
                self.sut.advance_clock(dt)
                waited += dt
        # Free-running SUT elsewhere: give it at least a short real-time window.
        deadline = time.monotonic() + max(timeout / self.time_scale, 0.5)
        while True:
            self.broker.sync()
            if check():
                return True
            if time.monotonic() >= deadline:
                return False
            time.sleep(0.005)


def _run_action(b: StepBinding, driver: _Driver):
    p = b.params
    broker = driver.broker
    timeout = float(p.get("timeout", DEFAULT_TIMEOUT))
    if b.action == "set_signal":
        broker.set_current(p["path"], p["value"])
        driver.settle()
    elif b.action == "advance_time":
        driver.advance(float(p["seconds"]))
    elif b.action == "expect_signal":
        seen = []

        def check():
            dp = broker.get_current(p["path"])
            seen[:] = [None if dp is None else dp.value]
            return dp is not None and _compare(p["op"], dp.value, p["value"])
        if not driver.wait_until(check, timeout):
            raise StepFailed(f"{p['path']}: expected {p['op']} {p['value']!r}, last value {seen[0]!r}")
    elif b.action == "expect_state":
        if driver.sut is None:
            raise StepFailed("expect_state needs an attached SUT")
        if not driver.wait_until(lambda: driver.sut.current == p["state"], timeout):
            raise StepFailed(f"expected state {p['state']}, SUT is in {driver.sut.current}")
    elif b.action == "expect_log":
        if driver.sut is None:
            raise StepFailed("expect_log needs an attached SUT")
        if not driver.wait_until(lambda: any(p["text"] in line for line in driver.sut.log), timeout):
            raise StepFailed(f"no SUT log line contains {p['text']!r}")


def execute(plan: Plan, broker, sut=None, time_scale: float = 1000.0,
            echo: Callable[[str], None] | None = None) -> RunReport:
    """Run every scenario in order; the first failing step skips the rest of its scenario."""
    report = RunReport()
    driver = _Driver(broker, sut, time_scale)
    log_start = len(sut.log) if sut is not None else 0
    refused = plan.strict and bool(plan.undefined)
    fres = FeatureResult(plan.feature.title, PASSED)

    def say(line):
        report.echo.append(line)
        if echo:
            echo(line)

    say(f"Feature: {plan.feature.title}")
    for sc, steps in plan.scenarios:
        say(f"  Scenario: {sc.name}")
        broken = refused
        for st, b in steps:
            if b is None:
                status, msg, dt = UNDEFINED, "no binding matches this step text", 0.0
                broken = True
            elif broken:
                status, msg, dt = SKIPPED, "", 0.0
            else:
                t0 = time.perf_counter()
                try:
                    _run_action(b, driver)
                    status, msg = PASSED, ""
                except StepFailed as exc:
                    status, msg = FAILED, str(exc)
                except (UnknownSignal, TypeError, ValueError, OSError, RuntimeError) as exc:
                    status, msg = FAILED, f"{type(exc).__name__}: {exc}"
                dt = time.perf_counter() - t0
                broken = status != PASSED
            report.outcomes.append(StepOutcome(sc.name, st.keyword, st.text, status, dt, msg))
            say(f"    {st.keyword} {st.text} ... {status}" + (f" ({msg})" if msg else ""))
        failed = any(o.status in (FAILED, UNDEFINED) for o in report.outcomes if o.scenario == sc.name)
        fres.scenarios.append((sc.name, FAILED if failed else PASSED))
    if any(s == FAILED for _, s in fres.scenarios):
        fres.status = FAILED
    report.features.append(fres)
    if sut is not None:
        report.log = list(sut.log[log_start:])
    return report
