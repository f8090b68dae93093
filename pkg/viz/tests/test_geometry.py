import pytest

from chainviz.geometry import (GeometryError, alluvial_geometry,
                               confusion_geometry, trends_geometry)
from chainviz.io import load_alluvial, load_metrics, load_trends
from chainviz.palette import PALETTE, PaletteError, color_for


class TestPalette:
    def test_fourteen_categories(self):
        assert len(PALETTE) == 14
        assert "other" in PALETTE

    def test_unknown_category_is_fatal(self):
        with pytest.raises(PaletteError, match="no palette entry"):
            color_for("vulnerability")

    def test_colors_unique(self):
        assert len(set(PALETTE.values())) == 14


class TestAlluvialGeometry:
    def test_ribbon_widths_equal_weights(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        geometry = alluvial_geometry(payload)
        assert len(geometry.ribbons) == len(payload["flows"])
        for ribbon, flow in zip(geometry.ribbons, payload["flows"]):
            assert ribbon.width == pytest.approx(flow["weight"], abs=1e-12)
            assert ribbon.src_y1 - ribbon.src_y0 == pytest.approx(
                flow["weight"], abs=1e-12)
            assert ribbon.dst_y1 - ribbon.dst_y0 == pytest.approx(
                flow["weight"], abs=1e-12)

    def test_one_column_per_level_left_to_right(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        geometry = alluvial_geometry(payload)
        assert geometry.levels == sorted(geometry.levels, reverse=True)
        xs = {box.level: box.x for box in geometry.nodes}
        for left, right in zip(geometry.levels, geometry.levels[1:]):
            assert xs[left] < xs[right]

    def test_ribbons_attach_inside_their_nodes(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        geometry = alluvial_geometry(payload)
        for ribbon in geometry.ribbons:
            src = geometry.node(ribbon.src_category, ribbon.src_level)
            dst = geometry.node(ribbon.dst_category, ribbon.dst_level)
            assert src.y0 - 1e-9 <= ribbon.src_y0 <= ribbon.src_y1 <= src.y1 + 1e-9
            assert dst.y0 - 1e-9 <= ribbon.dst_y0 <= ribbon.dst_y1 <= dst.y1 + 1e-9

    def test_ribbons_of_one_node_do_not_overlap(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        geometry = alluvial_geometry(payload)
        spans: dict = {}
        for ribbon in geometry.ribbons:
            spans.setdefault(("out", ribbon.src_category, ribbon.src_level),
                             []).append((ribbon.src_y0, ribbon.src_y1))
            spans.setdefault(("in", ribbon.dst_category, ribbon.dst_level),
                             []).append((ribbon.dst_y0, ribbon.dst_y1))
        for intervals in spans.values():
            intervals.sort()
            for (_, end), (start, _) in zip(intervals, intervals[1:]):
                assert start >= end - 1e-9

    def test_colors_keyed_by_source_category(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        geometry = alluvial_geometry(payload)
        for ribbon in geometry.ribbons:
            assert ribbon.color == PALETTE[ribbon.src_category]

    def test_node_labels_carry_originating_counts(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        geometry = alluvial_geometry(payload)
        origin = next(n for n in payload["nodes"]
                      if n["originating_chains"] > 0)
        box = geometry.node(origin["category"], origin["level"])
        assert f"({origin['originating_chains']:g})" in box.label

    def test_empty_export(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial_empty.json")
        geometry = alluvial_geometry(payload)
        assert geometry.nodes == [] and geometry.ribbons == []

    def test_unknown_category_fatal(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        payload["nodes"][0]["category"] = "mystery"
        with pytest.raises(PaletteError):
            alluvial_geometry(payload)

    def test_flow_to_unknown_node_fatal(self, fixtures):
        payload = load_alluvial(fixtures / "alluvial.json")
        payload["flows"][0]["src_level"] = 99
        with pytest.raises(GeometryError, match="unknown node"):
            alluvial_geometry(payload)


class TestTrendsGeometry:
    def test_stack_heights_equal_csv_percentages(self, fixtures):
        categories, rows = load_trends(fixtures / "trends.csv")
        geometry = trends_geometry(categories, rows)
        for i, row in enumerate(rows):
            assert geometry.months[i] == row["month"]
            for category in categories:
                assert geometry.stack_height(category, i) == pytest.approx(
                    row["pct"][category], abs=1e-12)

    def test_stack_is_cumulative_and_reaches_100(self, fixtures):
        categories, rows = load_trends(fixtures / "trends.csv")
        geometry = trends_geometry(categories, rows)
        for i, row in enumerate(rows):
            if row["volume"]:
                assert geometry.tops[categories[-1]][i] == pytest.approx(
                    100.0, abs=0.1)
            previous_top = 0.0
            for category in categories:
                assert geometry.bottoms[category][i] == pytest.approx(
                    previous_top, abs=1e-9)
                previous_top = geometry.tops[category][i]

    def test_missing_months_filled_with_warning(self):
        rows = [
            {"month": "2010-01", "volume": 2,
             "pct": {"account": 100.0, "other": 0.0}},
            {"month": "2010-04", "volume": 1,
             "pct": {"account": 0.0, "other": 100.0}},
        ]
        geometry = trends_geometry(["account", "other"], rows)
        assert geometry.months == ["2010-01", "2010-02", "2010-03", "2010-04"]
        assert geometry.volume == [2, 0, 0, 1]
        assert sum("missing month" in w for w in geometry.warnings) == 2

    def test_bad_percentage_sum_warns(self):
        rows = [{"month": "2010-01", "volume": 3,
                 "pct": {"account": 60.0, "other": 20.0}}]
        geometry = trends_geometry(["account", "other"], rows)
        assert any("not 100" in w for w in geometry.warnings)

    def test_single_month(self):
        rows = [{"month": "2011-06", "volume": 5,
                 "pct": {"account": 40.0, "other": 60.0}}]
        geometry = trends_geometry(["account", "other"], rows)
        assert geometry.months == ["2011-06"]
        assert geometry.warnings == []


class TestConfusionGeometry:
    def test_fixture_matrix_annotations_equal_counts(self):
        report = {"class_names": ["A", "B"], "confusion": [[8, 2], [3, 7]]}
        geometry = confusion_geometry(report)
        assert geometry.matrix == [[8, 2], [3, 7]]
        assert geometry.row_sums == [10, 10]
        assert geometry.normalized[0][0] == pytest.approx(0.8)

    def test_identity_matrix_is_diagonal_only(self):
        report = {"class_names": ["a", "b", "c"],
                  "confusion": [[5, 0, 0], [0, 4, 0], [0, 0, 9]]}
        geometry = confusion_geometry(report)
        for r in range(3):
            for c in range(3):
                expected = 1.0 if r == c else 0.0
                assert geometry.normalized[r][c] == pytest.approx(expected)

    def test_empty_matrix_fatal(self):
        with pytest.raises(GeometryError, match="empty"):
            confusion_geometry({"class_names": [], "confusion": []})

    def test_non_square_fatal(self):
        with pytest.raises(GeometryError, match="square"):
            confusion_geometry({"class_names": ["a", "b"],
                                "confusion": [[1, 2, 3], [4, 5, 6]]})

    def test_zero_row_normalizes_to_zero(self):
        report = {"class_names": ["a", "b"], "confusion": [[0, 0], [1, 1]]}
        geometry = confusion_geometry(report)
        assert geometry.normalized[0] == [0.0, 0.0]

    def test_loads_real_metrics_fixture(self, fixtures):
        report = load_metrics(fixtures / "metrics.json", task="product")
        geometry = confusion_geometry(report)
        assert len(geometry.class_names) == 14
        for row, total in zip(geometry.matrix, geometry.row_sums):
            assert sum(row) == total
