import math

import pytest

plotkit = pytest.importorskip("plotkit")

from plotkit import SchemaError, load_table
from plotkit.tables import check_highlight


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadTable:
    def test_parses_harness_identify_schema(self, fixtures):
        table = load_table(fixtures / "identify.csv", "importance_box")
        assert table.header[:3] == ("run", "adjustment", "variable")
        assert isinstance(table.column("permutation_importance")[0], float)
        assert table.distinct("adjustment") == ["covariate", "iptw"]

    def test_distinct_preserves_column_order(self, fixtures):
        table = load_table(fixtures / "identify.csv", "importance_box")
        names = table.distinct("variable")
        assert names[0] == "X1" and names[-1] == "X10"

    def test_missing_column_named_in_error(self, tmp_path):
        path = write(tmp_path / "bad.csv",
                     "run,adjustment,bias,variance\n0,none,0.1,0.2\n")
        with pytest.raises(SchemaError, match="missing required column 'mse'"):
            load_table(path, "accuracy_panel")

    def test_empty_file(self, tmp_path):
        with pytest.raises(SchemaError, match="empty file"):
            load_table(write(tmp_path / "e.csv", ""), "pdp_curve")

    def test_header_only(self, tmp_path):
        path = write(tmp_path / "h.csv", "variable,value,mean_ite\n")
        with pytest.raises(SchemaError, match="no data rows"):
            load_table(path, "pdp_curve")

    def test_ragged_row(self, tmp_path):
        path = write(tmp_path / "r.csv",
                     "variable,value,mean_ite\nX1,0.0,1.0\nX1,0.5\n")
        with pytest.raises(SchemaError, match="line 3"):
            load_table(path, "pdp_curve")

    def test_non_numeric_cell(self, tmp_path):
        path = write(tmp_path / "n.csv",
                     "variable,value,mean_ite\nX1,zero,1.0\n")
        with pytest.raises(SchemaError, match="column 'value'"):
            load_table(path, "pdp_curve")

    def test_blank_numeric_cell_becomes_nan(self, tmp_path):
        path = write(tmp_path / "b.csv",
                     "variable,raw_std_diff,weighted_std_diff\nX1,,0.05\n")
        table = load_table(path, "balance_dots")
        assert math.isnan(table.column("raw_std_diff")[0])
        assert table.column("weighted_std_diff")[0] == 0.05


class TestHighlight:
    def test_unknown_label_rejected(self, fixtures):
        table = load_table(fixtures / "identify.csv", "importance_box")
        with pytest.raises(SchemaError, match="highlight label 'X99'"):
            check_highlight(table, {"X99": "predictive"}, "variable")

    def test_known_labels_pass(self, fixtures):
        table = load_table(fixtures / "identify.csv", "importance_box")
        check_highlight(table, {"X10": "predictive"}, "variable")
