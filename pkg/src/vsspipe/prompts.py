"""Prompt templates for the three generation tasks and helpers to read them back."""
from __future__ import annotations

import re

GHERKIN_SYSTEM = (
    "You write acceptance tests for an in-vehicle Child Presence Detection System (CPDS), "
    "which watches for children left alone in a parked car and escalates through timed "
    "interventions. Produce Cucumber Gherkin with Given/When/Then steps.\n"
    "Rules:\n"
    "- One scenario per requirement, tagged with the requirement id.\n"
    "- Tie each scenario to a state or transition of the escalation flowchart.\n"
    "- State timing constraints explicitly in the step text.\n"
    "- End every step with the requirement id it covers in square brackets.\n"
    "Ask for clarification instead of guessing when an input is ambiguous."
)

REQUIREMENTS_HEADER = "--- Requirements ---"
FLOWCHART_HEADER = "--- Escalation flowchart ---"
GHERKIN_REF_HEADER = "--- Gherkin syntax reference ---"

MAPPING_SYSTEM = (
    "You pick Vehicle Signal Specification (VSS) signal paths for automotive test scenarios. "
    "Never answer with a path that is not in the candidate list."
)
MAPPING_INTRO = "Driving scenario:"
MAPPING_EXTRACT = "Which of the VSS signals below describe this scenario?"
MAPPING_LIST = "Candidate VSS signals:"
MAPPING_INSTRUCTION = (
    "Return only the subset of the listed signals that are relevant, "
    "as a comma-separated list of paths with no explanations."
)
MAPPING_MARKER = "Return only the subset"

CODEGEN_SYSTEM = (
    "You turn Gherkin scenarios into step bindings for a signal-broker test runner. "
    "Bind every step, keep the step text byte-identical including the bracketed requirement "
    "ids, and answer with an environment section and a steps section in the format of the "
    "runner example."
)
CODEGEN_GHERKIN_HEADER = "--- Gherkin scenario ---"
CODEGEN_BROKER_HEADER = "--- Broker client example ---"
CODEGEN_RUNNER_HEADER = "--- Runner example ---"

ENVIRONMENT_SECTION = "### environment"
STEPS_SECTION = "### steps"


def gherkin_user_message(requirements_block: str, flowchart_block: str, gherkin_example: str) -> str:
    return "\n".join([
        REQUIREMENTS_HEADER, requirements_block,
        FLOWCHART_HEADER, flowchart_block,
        GHERKIN_REF_HEADER, gherkin_example,
    ])


def mapping_user_message(scenario_text: str, candidate_lines: list[str]) -> str:
    return "\n".join([
        MAPPING_INTRO, "", scenario_text, "",
        MAPPING_EXTRACT, "",
        MAPPING_LIST, *candidate_lines, "",
        MAPPING_INSTRUCTION,
    ])


def codegen_user_message(gherkin: str, broker_example: str, runner_example: str) -> str:
    return "\n".join([
        CODEGEN_GHERKIN_HEADER, gherkin,
        CODEGEN_BROKER_HEADER, broker_example,
        CODEGEN_RUNNER_HEADER, runner_example,
    ])


def section(message: str, header: str, next_headers: list[str]) -> str:
    """Text between ``header`` and the first of ``next_headers`` (or the end)."""
    start = message.index(header) + len(header)
    end = len(message)
    for h in next_headers:
        i = message.find(h, start)
        if i != -1:
            end = min(end, i)
    return message[start:end].strip("\n")


def split_mapping_message(message: str) -> tuple[str, list[str]]:
    scenario = section(message, MAPPING_INTRO, [MAPPING_EXTRACT]).strip()
    listing = section(message, MAPPING_LIST, [MAPPING_INSTRUCTION])
    paths = []
    for line in listing.splitlines():
        line = line.strip()
        if line:
            paths.append(line.split(":", 1)[0].strip())
    return scenario, paths


_REQ_LINE_RE = re.compile(r"^(Req_[A-Za-z0-9_.]*[A-Za-z0-9_])\s*:", re.M)


def requirement_ids(message: str) -> list[str]:
    block = section(message, REQUIREMENTS_HEADER, [FLOWCHART_HEADER])
    return _REQ_LINE_RE.findall(block)
