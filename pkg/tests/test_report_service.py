import pandas as pd
import pytest
from openpyxl import load_workbook

from services.report_service import report_service


@pytest.fixture
def density_frame():
    rows = [{"t": 0.0, "z": 0.3, "exact": 10.0, "predicted": 9.5, "residual": 0.5},
            {"t": 1.0, "z": 0.4, "exact": 11.0}]
    return report_service.frame("density", rows)


def test_frame_column_order(density_frame):
    assert list(density_frame.columns) == ["t", "z", "exact", "predicted", "residual"]
    assert pd.isna(density_frame.loc[1, "predicted"])


def test_frame_adds_absent_columns():
    df = report_service.frame("cgf", [{"t": 0.5, "product": 0.1}])
    assert list(df.columns) == ["t", "product", "ward", "predicted"]
    assert df["ward"].isna().all()


def test_csv_keeps_full_precision(tmp_path):
    target = tmp_path / "out" / "cgf.csv"
    value = 0.1 + 0.2
    report_service.write_csv(report_service.frame("cgf", [{"t": 1.0, "product": value}]), target)
    back = pd.read_csv(target, float_precision="round_trip")
    assert back.loc[0, "product"] == value
    assert list(back.columns) == ["t", "product", "ward", "predicted"]


def test_workbook(tmp_path, density_frame):
    target = tmp_path / "density.xlsx"
    report_service.write_workbook({"Density": density_frame}, target, {"n": 100})
    wb = load_workbook(target)
    assert wb.sheetnames == ["Density", "Summary"]
    header = wb["Density"].cell(row=1, column=1)
    assert header.value == "t"
    assert header.font.bold
    summary = {row[0]: row[1] for row in wb["Summary"].iter_rows(min_row=2, values_only=True)}
    assert "Generated At" in summary
    assert summary["n"] == 100


def test_svg(tmp_path, density_frame):
    target = tmp_path / "density.svg"
    report_service.write_svg(density_frame, "z", ["exact", "predicted"], target, title="density")
    assert "<svg" in target.read_text()


def test_workbook_marks_failed_checks(tmp_path):
    rows = [{"check": "identities.mass", "n": 50, "residual": 1.2e-13, "bound": 1e-10, "pass": True},
            {"check": "peaks.alpha", "n": 50, "residual": 0.3, "bound": 0.05, "pass": False}]
    target = tmp_path / "verify.xlsx"
    report_service.write_workbook({"Verify": report_service.frame("verify", rows)}, target)
    ws = load_workbook(target)["Verify"]
    assert ws.cell(row=2, column=1).fill.fill_type is None
    assert ws.cell(row=3, column=1).fill.start_color.rgb.endswith("F4CCCC")
    assert ws.cell(row=3, column=5).fill.start_color.rgb.endswith("F4CCCC")
    assert ws.cell(row=2, column=3).number_format == "0.000000E+00"
    assert ws.freeze_panes == "A2"
