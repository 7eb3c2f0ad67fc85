import json
import xml.etree.ElementTree as ET
from fractions import Fraction

import pytest

import sanjeh.report as report_module
from sanjeh.errors import ReportError
from sanjeh.metrics import CategoryStats, DomainSkew, DomainSummary, GroupStats
from sanjeh.report import (
    CATEGORY_HEADER,
    GAP_HEADER,
    GROUP_HEADER,
    SKEW_HEADER,
    GroupedBarSpec,
    HeatmapSpec,
    emit_tables,
    fmt2,
    fmt6,
    render_bar_panels,
    render_grouped_bars,
    render_heatmap,
)


def svg_ids(path):
    root = ET.parse(path).getroot()
    return {el.get("id"): el for el in root.iter() if el.get("id")}


def text_of(el):
    return "".join(el.itertext()).strip()


# ── formatting ───────────────────────────────────────────────────────────

@pytest.mark.parametrize("value, six, two", [
    (Fraction(1, 3), "0.333333", "0.33"),
    (Fraction(2, 3), "0.666667", "0.67"),
    (Fraction(1, 8), "0.125000", "0.12"),
    (Fraction(3, 8), "0.375000", "0.38"),
    (Fraction(1, 2_000_000), "0.000000", "0.00"),
    (Fraction(3, 2_000_000), "0.000002", "0.00"),
    (0.1, "0.100000", "0.10"),
    (1, "1.000000", "1.00"),
])
def test_fixed_point_formats(value, six, two):
    assert fmt6(value) == six
    assert fmt2(value) == two


def test_undefined_formats_empty():
    assert fmt6(None) == "" and fmt2(None) == ""


def test_figure_value_follows_table_value():
    # 0.004999996 → 0.005000 in the table → 0.00 under half-even
    x = Fraction(4_999_996, 1_000_000_000)
    assert fmt6(x) == "0.005000"
    assert fmt2(x) == "0.00"


# ── tables ───────────────────────────────────────────────────────────────

def small_summary():
    stats = [
        CategoryStats("m0", "en", "color", "red", 2, 1, 0, 1),
        CategoryStats("m0", "en", "color", "blue", 0, 0, 3, 1),
    ]
    skews = [DomainSkew("color", "m0", "en", 1, Fraction(1, 3), (Fraction(2, 3),))]
    return DomainSummary(stats=stats, skews=skews,
                         dropped=[("m0", "en", "color", "blue")])


def test_emit_tables(tmp_path):
    groups = [GroupStats("m0", "en", "humanities", 1, 3)]
    paths = emit_tables(small_summary(), tmp_path, groups=groups,
                        meta={"config_hash": "abc", "rate": Fraction(25, 190)})
    assert [p.name for p in paths] == ["category_stats.csv", "domain_skew.csv",
                                       "group_stats.csv", "language_gap.csv", "summary.json"]

    lines = (tmp_path / "category_stats.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CATEGORY_HEADER)
    assert lines[1] == "m0,en,color,red,2,1,0,1,0.666667"
    assert lines[2] == "m0,en,color,blue,0,0,3,1,"
    assert (tmp_path / "domain_skew.csv").read_text(encoding="utf-8").splitlines()[1] \
        == "m0,en,color,1,0.333333"
    assert (tmp_path / "group_stats.csv").read_text(encoding="utf-8").splitlines()[1] \
        == "m0,en,humanities,1,3,0.250000"
    assert (tmp_path / "language_gap.csv").read_text(encoding="utf-8") \
        == "model_id,domain,ds_gsi_base,ds_gsi_other,delta\n"

    doc = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert doc["config_hash"] == "abc"
    assert doc["rate"] == "0.131579"
    assert doc["domain_skew"][0]["ds_gsi"] == "0.333333"
    assert doc["dropped_categories"] == [["m0", "en", "color", "blue"]]


def test_tables_are_byte_stable(tmp_path):
    emit_tables(small_summary(), tmp_path / "a")
    emit_tables(small_summary(), tmp_path / "b")
    for name in ("category_stats.csv", "domain_skew.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_summary_writes_header_only_tables(tmp_path):
    emit_tables(DomainSummary(), tmp_path)
    for name, header in [("category_stats.csv", CATEGORY_HEADER),
                         ("domain_skew.csv", SKEW_HEADER),
                         ("group_stats.csv", GROUP_HEADER),
                         ("language_gap.csv", GAP_HEADER)]:
        assert (tmp_path / name).read_text(encoding="utf-8") == ",".join(header) + "\n"
    doc = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert doc["category_stats"] == [] and doc["domain_skew"] == []


# ── figures ──────────────────────────────────────────────────────────────

HEATMAP = HeatmapSpec(
    rows=["red", "blue", "green"],
    columns=["alpha", "beta"],
    cells=[[Fraction(2, 3), Fraction(0)], [None, Fraction(1, 2)], [Fraction(1), 0.125]],
    language="en",
)


def test_heatmap_cells_and_values(tmp_path):
    ids = svg_ids(render_heatmap(HEATMAP, tmp_path / "h.svg"))
    assert "cell-1-0-missing" in ids
    assert "cell-1-0" not in ids and "value-1-0" not in ids
    for r, c in [(0, 0), (0, 1), (1, 1), (2, 0), (2, 1)]:
        assert f"cell-{r}-{c}" in ids
        assert text_of(ids[f"value-{r}-{c}"]) == fmt2(HEATMAP.cells[r][c])
    assert text_of(ids["value-0-0"]) == "0.67"
    assert text_of(ids["value-2-1"]) == "0.12"


def test_heatmap_is_byte_deterministic(tmp_path):
    a = render_heatmap(HEATMAP, tmp_path / "a.svg").read_bytes()
    b = render_heatmap(HEATMAP, tmp_path / "b.svg").read_bytes()
    assert a == b


def test_heatmap_rejects_out_of_range(tmp_path):
    bad = HeatmapSpec(rows=["x"], columns=["m"], cells=[[1.01]], language="en")
    with pytest.raises(ReportError, match="outside"):
        render_heatmap(bad, tmp_path / "bad.svg")
    assert not (tmp_path / "bad.svg").exists()


def test_heatmap_rejects_ragged_cells(tmp_path):
    bad = HeatmapSpec(rows=["x", "y"], columns=["m"], cells=[[0.5]], language="en")
    with pytest.raises(ReportError):
        render_heatmap(bad, tmp_path / "bad.svg")


def test_heatmap_rejects_empty_rows(tmp_path):
    bad = HeatmapSpec(rows=[], columns=["m"], cells=[], language="en")
    with pytest.raises(ReportError, match="at least one row"):
        render_heatmap(bad, tmp_path / "bad.svg")
    assert not (tmp_path / "bad.svg").exists()


def test_grouped_bars(tmp_path):
    values = [[Fraction(i + s, 8) for s in range(4)] for i in range(4)]
    values[2][3] = None
    spec = GroupedBarSpec(groups=["Academic", "Profession", "Color", "Sport"],
                          series=["m0", "m1", "m2", "m3"], values=values)
    ids = svg_ids(render_grouped_bars(spec, tmp_path / "bars.svg"))

    bars = [i for i in ids if i.startswith("bar-")]
    assert len(bars) == 16
    assert "bar-2-3-missing" in ids and "barvalue-2-3" not in ids
    assert text_of(ids["barvalue-1-2"]) == fmt2(Fraction(3, 8)) == "0.38"


def test_grouped_bars_reject_out_of_range(tmp_path):
    spec = GroupedBarSpec(groups=["Color"], series=["m0"], values=[[-0.1]])
    with pytest.raises(ReportError):
        render_grouped_bars(spec, tmp_path / "bars.svg")


def test_all_zero_bars_keep_the_unit_axis(tmp_path, monkeypatch):
    limits = []
    save = report_module._save_svg

    def capture(fig, out_path):
        limits.extend(ax.get_ylim() for ax in fig.axes)
        return save(fig, out_path)

    monkeypatch.setattr(report_module, "_save_svg", capture)
    spec = GroupedBarSpec(groups=["Color", "Sport"], series=["m0", "m1"],
                          values=[[0, Fraction(0)], [0.0, 0]])
    ids = svg_ids(render_grouped_bars(spec, tmp_path / "zero.svg"))
    assert limits == [(0.0, 1.0)]
    assert text_of(ids["barvalue-1-1"]) == "0.00"


def test_language_panels_share_one_figure(tmp_path):
    def spec(offset):
        return GroupedBarSpec(groups=["Academic", "Profession", "Color", "Sport"],
                              series=["m0", "m1", "m2", "m3"],
                              values=[[Fraction(g + s + offset, 10) for s in range(4)]
                                      for g in range(4)])

    ids = svg_ids(render_bar_panels([("fa", spec(1)), ("en", spec(0))],
                                    tmp_path / "panels.svg"))
    for lang in ("fa", "en"):
        assert len([i for i in ids if i.startswith(f"{lang}-bar-")]) == 16
    assert text_of(ids["fa-barvalue-0-0"]) == "0.10"
    assert text_of(ids["en-barvalue-3-3"]) == "0.60"


def test_panel_figure_needs_a_panel(tmp_path):
    with pytest.raises(ReportError):
        render_bar_panels([], tmp_path / "none.svg")
