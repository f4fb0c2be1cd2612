import json

import pytest

from vsspipe import fixtures as fx
from vsspipe.broker import Broker
from vsspipe.catalog import load_catalog
from vsspipe.clock import VirtualClock

TINY = {
    "Vehicle": {
        "type": "branch",
        "children": {
            "Cabin": {
                "type": "branch",
                "children": {
                    "ChildPresenceDetection": {
                        "type": "branch",
                        "children": {
                            "IsChildDetected": {
                                "type": "sensor", "datatype": "boolean",
                                "description": "True when a child is present.",
                            },
                        },
                    },
                },
            },
        },
    },
}


@pytest.fixture
def tiny_catalog():
    return load_catalog(json.dumps(TINY))


@pytest.fixture(scope="session")
def catalog():
    return fx.catalog()


@pytest.fixture
def broker(catalog):
    return Broker(catalog, VirtualClock())


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
