import pytest
from hypothesis import given, settings

from strategies import features
from vsspipe import fixtures as fx
from vsspipe.catalog import UnknownSignal
from vsspipe.gherkin import (
    SCENARIO_OUTLINE, EnrichmentError, Examples, GherkinSyntaxError, OutlineError, Scenario, Step,
    check_feature, effective_keywords, enrich_with_vss, expand_outline, hallucinated_paths,
    parse_feature, serialize_feature,
)

NOTIFIED = "Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified"


def test_outline_fixture_shape():
    f = parse_feature(fx.hvac_outline())
    assert f.title == "CPDS HVAC adjustment intervention (Req_CPDS_04)"
    (sc,) = f.scenarios
    assert sc.kind == SCENARIO_OUTLINE
    assert set(sc.tags) == {"@Req_CPDS_04_1", "@Req_CPDS_04_2"}
    assert len(sc.steps) >= 10


def test_outline_trace_refs():
    sc = parse_feature(fx.hvac_outline()).scenarios[0]
    refs = set(sc.req_refs)
    assert {"Req_CPDS_04.1", "Req_CPDS_04.2", "Req_CPDS_04.3", "Req_CPDS_02.2", "Req_CPDS_03.1"} <= refs


def test_minimal_feature():
    f = parse_feature("Feature: X\n")
    assert f.title == "X"
    assert f.scenarios == ()
    assert serialize_feature(f) == "Feature: X\n"


def test_annotation_kept_in_text():
    f = parse_feature("Feature: A\n  Scenario: s\n    Given x is true [Req_CPDS_04.1]\n")
    st = f.scenarios[0].steps[0]
    assert st.text == "x is true [Req_CPDS_04.1]"
    assert st.req_refs == ["Req_CPDS_04.1"]
    assert st.body == "x is true"


def test_comments_dropped_and_crlf_accepted():
    src = "# top\r\nFeature: A\r\n  Scenario: s\r\n    # narration\r\n    Given x\r\n"
    f = parse_feature(src)
    assert [s.text for s in f.scenarios[0].steps] == ["x"]
    assert "#" not in serialize_feature(f)


def test_conditional_step_is_plain_and():
    src = "Feature: A\n  Scenario: s\n    Given x\n    And if (SOC < SOC_CRIT) Then skip hold [Req_CPDS_04.4]\n"
    st = parse_feature(src).scenarios[0].steps[1]
    assert st.keyword == "And"
    assert st.text.startswith("if (SOC < SOC_CRIT)")


@pytest.mark.parametrize("src, fragment", [
    ("Feature: A\n  Scenario: s\n    And x\n", "And"),
    ("Feature: A\n  Scenario: s\n    Then x\n", "Given or When"),
    ("Feature: A\n  Scenario Outline: s\n    Given <v>\n", "Examples"),
    ("Feature: A\n  Scenario Outline: s\n    Given <v>\n\n    Examples:\n      | w |\n      | 1 |\n", "<v>"),
    ("Feature: A\n  Background:\n    Given x\n", "Background"),
    ("Feature: A\n  Scenario: s\n    Or x\n", "Or"),
    ("Feature: A\n  Scenario: s\n    Given x\n  Scenario: s\n    Given y\n", "duplicate"),
    ("  Given x\n", "Feature"),
])
def test_diagnostics(src, fragment):
    rep = check_feature(src)
    assert not rep.ok
    assert rep.level == "parse_error"
    assert any(fragment in d.message for d in rep.diagnostics), rep.render()
    assert all(d.line >= 1 for d in rep.diagnostics)
    with pytest.raises(GherkinSyntaxError):
        parse_feature(src)


def test_diagnostic_render_format():
    rep = check_feature("Feature: A\n  Scenario: s\n    And x\n")
    assert rep.render("a.feature").startswith("a.feature:3: ")


def test_outline_with_three_rows_expands_to_three():
    src = ("Feature: A\n  Scenario Outline: o\n    Given soc is <SOC> and guard <G>\n\n"
           "    Examples:\n      | SOC | G |\n      | 1 | 2 |\n      | 3 | 4 |\n      | 5 | 6 |\n")
    sc = parse_feature(src).scenarios[0]
    assert len(expand_outline(sc)) == 3


def _outline(rows, header=("SOC",)):
    return Scenario("o", SCENARIO_OUTLINE, (), (Step("Given", "soc is <SOC> [Req_CPDS_04.2]"), Step("Then", "done")),
                    Examples(header, rows))


def test_expand_single_row():
    (one,) = expand_outline(_outline((("80",),)))
    assert one.name == "o_1"
    assert all(not s.placeholders for s in one.steps)


def test_expand_substitutes_cells_only():
    a, b = expand_outline(_outline((("80",), ("10",))))
    assert a.steps[0].text == "soc is 80 [Req_CPDS_04.2]"
    assert b.steps[0].text == "soc is 10 [Req_CPDS_04.2]"
    assert a.steps[1:] == b.steps[1:]
    assert (a.name, b.name) == ("o_1", "o_2")


def test_expand_header_only_is_empty():
    assert expand_outline(_outline(())) == []


def test_expand_arity_error_names_row():
    with pytest.raises(OutlineError, match="row 2"):
        expand_outline(_outline((("1",), ("2", "3"))))


def test_serialized_examples_are_aligned():
    text = serialize_feature(parse_feature(fx.hvac_outline()))
    rows = [l for l in text.splitlines() if l.strip().startswith("|")]
    assert len({len(r) for r in rows}) == 1
    assert len({r.index("|", 8) for r in rows}) == 1


def test_listing_fixture_round_trips():
    for src in (fx.hvac_outline(), fx.hvac_feature(), fx.gherkin_example()):
        f = parse_feature(src)
        assert parse_feature(serialize_feature(f)) == f


def test_effective_keywords():
    steps = [Step("Given", "a"), Step("And", "b"), Step("When", "c"), Step("Then", "d"), Step("But", "e")]
    assert effective_keywords(steps) == ["Given", "Given", "When", "Then", "Then"]


def test_enrich_identity_for_empty_mapping(catalog):
    f = parse_feature(fx.hvac_feature())
    assert enrich_with_vss(f, {}, catalog) == f


def test_enrich_rejects_non_catalog_path(catalog):
    f = parse_feature("Feature: A\n  Scenario: s\n    Given driver is notified\n")
    bogus = catalog.index[NOTIFIED].__class__("Vehicle.Cabin.Made.Up", "sensor", "boolean")
    with pytest.raises(UnknownSignal):
        enrich_with_vss(f, {"s": [bogus]}, catalog)


def test_enrich_rejects_unknown_scenario(catalog):
    f = parse_feature("Feature: A\n  Scenario: s\n    Given x\n")
    with pytest.raises(EnrichmentError):
        enrich_with_vss(f, {"nope": [catalog.index[NOTIFIED]]}, catalog)


def test_enrich_inserts_exact_path(catalog):
    f = parse_feature("Feature: A\n  Scenario: s\n    Given the driver is notified [Req_CPDS_04.1]\n")
    out = enrich_with_vss(f, {"s": [catalog.index[NOTIFIED]]}, catalog)
    st = out.scenarios[0].steps[0]
    assert NOTIFIED in st.text
    assert st.req_refs == ["Req_CPDS_04.1"]
    assert hallucinated_paths(out, catalog) == []


def test_enrich_refuses_feature_with_stray_path(catalog):
    f = parse_feature("Feature: A\n  Scenario: s\n    Given Vehicle.Cabin.Nope is true\n    And driver is notified\n")
    with pytest.raises(UnknownSignal):
        enrich_with_vss(f, {"s": [catalog.index[NOTIFIED]]}, catalog)


@settings(max_examples=100, deadline=None)
@given(features())
def test_round_trip_property(f):
    text = serialize_feature(f)
    assert parse_feature(text) == f
    assert serialize_feature(parse_feature(text)) == text
