"""Hypothesis strategies shared by the unit and acceptance suites."""
from hypothesis import strategies as st

from vsspipe.gherkin import SCENARIO, SCENARIO_OUTLINE, Examples, Feature, Scenario, Step

WORD = st.from_regex(r"[A-Za-z][A-Za-z0-9_.\-]{0,10}", fullmatch=True)
CELL = st.from_regex(r"[A-Za-z0-9 .|\\_-]{0,8}", fullmatch=True)
REF = st.from_regex(r"Req_CPDS_0[1-9]\.[1-9]", fullmatch=True)
TAG = st.from_regex(r"@[A-Za-z0-9_.]{1,10}", fullmatch=True)


def _sentence(draw, placeholders=()):
    words = draw(st.lists(WORD, min_size=1, max_size=6))
    for name in placeholders:
        words.insert(draw(st.integers(0, len(words))), f"<{name}>")
    text = " ".join(words)
    refs = draw(st.lists(REF, max_size=2))
    if refs:
        text += " [" + ", ".join(refs) + "]"
    return text


@st.composite
def steps(draw, placeholders=()):
    n = draw(st.integers(1, 6))
    out = [Step(draw(st.sampled_from(["Given", "When"])), _sentence(draw, placeholders))]
    for _ in range(n - 1):
        kw = draw(st.sampled_from(["Given", "When", "Then", "And", "But"]))
        out.append(Step(kw, _sentence(draw)))
    return tuple(out)


@st.composite
def scenarios(draw, name):
    tags = tuple(draw(st.lists(TAG, max_size=3, unique=True)))
    if draw(st.booleans()):
        header = tuple(draw(st.lists(st.from_regex(r"[A-Z][A-Z_]{0,5}", fullmatch=True),
                                     min_size=1, max_size=3, unique=True)))
        used = tuple(draw(st.lists(st.sampled_from(header), max_size=len(header), unique=True)))
        rows = tuple(tuple(draw(CELL).strip() for _ in header) for _ in range(draw(st.integers(0, 3))))
        return Scenario(name, SCENARIO_OUTLINE, tags, draw(steps(used)), Examples(header, rows))
    return Scenario(name, SCENARIO, tags, draw(steps()))


@st.composite
def features(draw):
    title = " ".join(draw(st.lists(WORD, min_size=1, max_size=4)))
    desc = "\n".join(" ".join(draw(st.lists(WORD, min_size=1, max_size=5)))
                     for _ in range(draw(st.integers(0, 2))))
    n = draw(st.integers(0, 3))
    scs = tuple(draw(scenarios(f"scenario {i} " + draw(WORD))) for i in range(n))
    tags = tuple(draw(st.lists(TAG, max_size=2, unique=True)))
    return Feature(title, desc, tags, scs)
