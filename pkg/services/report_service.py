"""
Report Generation Service.

Writes result tables as CSV (17 significant digits, atomic rename), as
styled Excel workbooks with a Summary sheet, and as SVG line plots rendered
from the same DataFrame.
"""
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from cache import TableCache
from errors import ConfigError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


class ReportService:
    """
    Service for emitting command output files.
    """

    # Column orders per command; documented in the CLI help
    COLUMNS = {
        "analyze": ["quantity", "value"],
        "density": ["t", "z", "exact", "predicted", "residual"],
        "kernel2pt": ["n", "t", "s", "theta1", "theta2", "exact_re", "exact_im",
                      "predicted_re", "predicted_im"],
        "cgf": ["t", "product", "ward", "predicted"],
        "sample": ["sample", "fluct"],
        "verify": ["check", "n", "residual", "bound", "pass"],
        "oscillation": ["n", "normalized_raw", "post_prediction"],
    }

    # Header row of every result sheet
    HEADER_FONT = Font(bold=True)
    HEADER_FILL = PatternFill(start_color="D9E1F2", end_color="D9E1F2", fill_type="solid")
    HEADER_ALIGNMENT = Alignment(horizontal="center")
    HEADER_BORDER = Border(bottom=Side(style="medium"))
    # Residuals and predictions span many decades
    NUMBER_FORMAT = "0.000000E+00"
    FAILED_FILL = PatternFill(start_color="F4CCCC", end_color="F4CCCC", fill_type="solid")

    def _style_sheet(self, ws, df: pd.DataFrame) -> None:
        """Header style, scientific floats, and failing verify rows shaded"""
        for col_idx, column in enumerate(df.columns, start=1):
            header = ws.cell(row=1, column=col_idx)
            header.font = self.HEADER_FONT
            header.fill = self.HEADER_FILL
            header.alignment = self.HEADER_ALIGNMENT
            header.border = self.HEADER_BORDER
            ws.column_dimensions[get_column_letter(col_idx)].width = max(12, len(str(column)) + 4)
            if pd.api.types.is_float_dtype(df[column]):
                for (cell,) in ws.iter_rows(min_row=2, min_col=col_idx, max_col=col_idx):
                    cell.number_format = self.NUMBER_FORMAT
        if "pass" in df.columns:
            for row_idx, passed in enumerate(df["pass"], start=2):
                if not passed:
                    for (cell,) in ws.iter_cols(min_row=row_idx, max_row=row_idx, max_col=len(df.columns)):
                        cell.fill = self.FAILED_FILL
        ws.freeze_panes = ws.cell(row=2, column=1)

    def frame(self, kind: str, rows: List[dict], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """DataFrame with the fixed column order of a command"""
        columns = list(columns or self.COLUMNS[kind])
        df = pd.DataFrame(rows)
        missing = [c for c in columns if c not in df.columns]
        for col in missing:
            df[col] = pd.Series(dtype=float)
        return df[columns]

    _atomic = staticmethod(TableCache.atomic_path)

    def write_csv(self, df: pd.DataFrame, target: Path) -> Path:
        try:
            with self._atomic(target) as tmp:
                df.to_csv(tmp, index=False, float_format=FLOAT_FORMAT)
        except OSError as e:
            raise ConfigError(f"cannot write {target}: {e}")
        logger.info("Wrote %s (%d rows)", target, len(df))
        return target

    def write_workbook(self, sheets: Dict[str, pd.DataFrame], target: Path,
                       summary: Optional[Dict[str, object]] = None) -> Path:
        """
        One sheet per DataFrame with a styled header row, plus a Summary sheet.
        """
        try:
            with self._atomic(target) as tmp:
                with pd.ExcelWriter(tmp, engine="openpyxl") as writer:
                    for name, df in sheets.items():
                        df.to_excel(writer, sheet_name=name, index=False)
                        self._style_sheet(writer.sheets[name], df)

                    summary_data = {"Metric": ["Generated At"],
                                    "Value": [datetime.now().strftime("%Y-%m-%d %H:%M:%S")]}
                    for key, value in (summary or {}).items():
                        summary_data["Metric"].append(key)
                        summary_data["Value"].append(value)
                    pd.DataFrame(summary_data).to_excel(writer, sheet_name="Summary", index=False)
                    writer.sheets["Summary"].column_dimensions["A"].width = 24
                    writer.sheets["Summary"].column_dimensions["B"].width = 24
        except OSError as e:
            raise ConfigError(f"cannot write {target}: {e}")
        logger.info("Wrote workbook %s", target)
        return target

    def write_svg(self, df: pd.DataFrame, x: str, ys: Sequence[str], target: Path,
                  title: str = "", ylabel: str = "") -> Path:
        """Line plot of columns ys against x, drawn straight from the DataFrame"""
        fig, ax = plt.subplots(figsize=(8, 4.5))
        try:
            for col in ys:
                ax.plot(df[x], df[col], marker=".", label=col)
            ax.set_xlabel(x)
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.axhline(0.0, color="grey", linewidth=0.5)
            ax.legend()
            fig.tight_layout()
            with self._atomic(target) as tmp:
                fig.savefig(tmp, format="svg")
        except OSError as e:
            raise ConfigError(f"cannot write {target}: {e}")
        finally:
            plt.close(fig)
        logger.info("Wrote plot %s", target)
        return target


# Global service instance
report_service = ReportService()
