"""Mapping scores, precision/recall and pass@k."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .catalog import Catalog, validate_path


@dataclass(frozen=True)
class GoldMapping:
    scenario_id: str
    gold_paths: frozenset[str]
    text: str = ""

    def check(self, catalog: Catalog) -> None:
        for p in self.gold_paths:
            validate_path(catalog, p)


@dataclass(frozen=True)
class MappingScore:
    correct: int
    expected: int
    false_positives: int

    def __post_init__(self):
        if min(self.correct, self.expected, self.false_positives) < 0 or self.correct > self.expected:
            raise ValueError(f"inconsistent counts {self}")

    def row(self) -> str:
        return f"{self.correct}/{self.expected}"


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float


def score_mapping(selected: Iterable[str], rejected: Iterable[str], gold: GoldMapping) -> MappingScore:
    """Exact, case-sensitive comparison; rejected (non-catalog) proposals count as false positives."""
    sel = list(dict.fromkeys(selected))
    rej = list(dict.fromkeys(rejected))
    correct = sum(1 for p in sel if p in gold.gold_paths)
    fp = sum(1 for p in sel if p not in gold.gold_paths) + len(rej)
    return MappingScore(correct, len(gold.gold_paths), fp)


def score_result(result, gold: GoldMapping) -> MappingScore:
    return score_mapping(result.selected, result.rejected, gold)


def precision_recall(predicted: Iterable, gold: Iterable) -> PrecisionRecall:
    """Set-based precision and recall.

    Conventions: an empty prediction has precision 0; an empty gold set has
    recall 1.
    """
    pred, ref = set(predicted), set(gold)
    hits = len(pred & ref)
    precision = hits / len(pred) if pred else 0.0
    recall = hits / len(ref) if ref else 1.0
    return PrecisionRecall(precision, recall)


@dataclass(frozen=True)
class PassAtKInput:
    n: int
    c: int
    k: int

    def __post_init__(self):
        if not (0 <= self.c <= self.n) or not (1 <= self.k <= self.n):
            raise ValueError(f"need 0 <= c <= n and 1 <= k <= n, got {self}")


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k estimate ``1 - C(n-c, k) / C(n, k)``.

    Uses the product form ``1 - prod_{i=n-c+1}^{n} (1 - k/i)`` so no binomial
    coefficient is ever materialised.
    """
    PassAtKInput(n, c, k)
    if n - c < k:
        return 1.0
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


@dataclass
class Verdict:
    correct: bool
    reasons: list[str] = field(default_factory=list)


class JudgeError(ValueError):
    pass


def load_overrides(path: str | Path | None) -> dict[str, dict]:
    """Eval manifest: ``{bundle_id: {"verdict": ..., "note": ...}}``."""
    if path is None or not Path(path).exists():
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def judge_run(bundle, report, overrides: Mapping[str, Mapping] | None = None,
              bundle_id: str | None = None) -> Verdict:
    """Execution check plus optional human override from the eval manifest."""
    titles = {f.title for f in report.features}
    if bundle.feature.title not in titles:
        raise JudgeError(f"report does not cover feature {bundle.feature.title!r}")
    reasons = []
    steps = report.step_counts
    if steps.failed or steps.undefined:
        reasons.append(f"{steps.failed} failed, {steps.undefined} undefined steps")
    if report.scenario_counts.failed:
        reasons.append(f"{report.scenario_counts.failed} failed scenarios")
    override = (overrides or {}).get(bundle_id or bundle.feature.title)
    if override and override.get("verdict", "correct") != "correct":
        reasons.append(f"human override: {override.get('verdict')} {override.get('note', '')}".rstrip())
    return Verdict(not reasons, reasons)


def load_gold(path: str | Path) -> dict[str, GoldMapping]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        sid: GoldMapping(sid, frozenset(item["gold"]), item.get("text", ""))
        for sid, item in raw.items()
    }


def format_table(rows: list[dict], columns: list[str]) -> str:
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) if rows else len(c) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in columns))
    return "\n".join(line.rstrip() for line in lines)
