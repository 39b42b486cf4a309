"""
Excel workbook for the `tables` run.

One sheet per result table (integrated sensitivity errors, valuation cost,
EE error versus node count) plus a summary sheet with the run settings.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter
from openpyxl.worksheet.table import Table, TableStyleInfo

HEADER_FILL = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
SECTION_FILL = PatternFill(start_color="D9D9D9", end_color="D9D9D9", fill_type="solid")
FLAG_FILL = PatternFill(start_color="FFEEEE", end_color="FFEEEE", fill_type="solid")


def create_tables_workbook(kappa: pd.DataFrame, cost: pd.DataFrame, ee_errors: pd.DataFrame,
                           output_dir, settings: Optional[Dict[str, Any]] = None,
                           kappa_limit: float = 1e-2) -> str:
    """
    Write report.xlsx and return its path.

    Args:
        kappa: rows d, columns per shocked tenor (normalised integrated error)
        cost: exact valuations per date by method
        ee_errors: eps_EE per node count
        output_dir: directory the workbook goes to
        settings: run settings listed on the summary sheet
        kappa_limit: kappa entries at or above this are highlighted
    """
    wb = Workbook()
    if wb.active:
        wb.remove(wb.active)

    _create_summary_sheet(wb.create_sheet("Summary", 0), kappa, cost, ee_errors, settings or {}, kappa_limit)
    _create_table_sheet(wb.create_sheet("Kappa", 1), kappa, "KappaTable", "TableStyleMedium9",
                        flag=lambda col, v: col != "d" and isinstance(v, float) and v >= kappa_limit)
    _create_table_sheet(wb.create_sheet("Cost", 2), cost, "CostTable", "TableStyleMedium12")
    _create_table_sheet(wb.create_sheet("EE Errors", 3), ee_errors, "EeErrorTable", "TableStyleMedium9")

    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    filepath = path / "report.xlsx"
    wb.save(filepath)
    return str(filepath)


def _create_summary_sheet(sheet, kappa, cost, ee_errors, settings, kappa_limit):
    sheet["A1"] = "Collocated EE Sensitivities"
    sheet["A1"].font = Font(bold=True, size=16)
    sheet.merge_cells("A1:C1")

    sheet["A3"] = f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}"
    sheet["A3"].font = Font(italic=True)

    row = 5
    for name, value in settings.items():
        sheet[f"A{row}"] = str(name)
        sheet[f"B{row}"] = _cell_value(value)
        sheet[f"A{row}"].font = Font(bold=True)
        row += 1

    row += 1
    sheet[f"A{row}"] = "Headline results"
    sheet[f"A{row}"].font = Font(bold=True, size=12)
    sheet[f"A{row}"].fill = SECTION_FILL
    row += 1

    below = _lowest_order_below(kappa, kappa_limit)
    stats = [
        (f"Lowest d with every kappa < {kappa_limit:g}", below if below is not None else "none"),
        ("Node counts swept", len(ee_errors)),
        ("Smallest eps_EE", float(ee_errors["eps_ee"].min()) if len(ee_errors) else "n/a"),
        ("Methods costed", len(cost)),
    ]
    for name, value in stats:
        sheet[f"A{row}"] = name
        sheet[f"B{row}"] = value
        sheet[f"A{row}"].font = Font(bold=True)
        row += 1

    _fit_columns(sheet, cap=60)


def _create_table_sheet(sheet, frame: pd.DataFrame, name: str, style: str, flag=None):
    headers = [str(c) for c in frame.columns]
    for col, header in enumerate(headers, 1):
        cell = sheet.cell(row=1, column=col, value=header)
        cell.font = Font(bold=True, color="FFFFFF")
        cell.fill = HEADER_FILL
        cell.alignment = Alignment(horizontal="center")

    for row, record in enumerate(frame.itertuples(index=False), 2):
        for col, value in enumerate(record, 1):
            cell = sheet.cell(row=row, column=col, value=_cell_value(value))
            if flag is not None and flag(headers[col - 1], cell.value):
                cell.fill = FLAG_FILL

    if len(frame) > 0:
        table = Table(displayName=name, ref=f"A1:{get_column_letter(len(headers))}{len(frame) + 1}")
        table.tableStyleInfo = TableStyleInfo(
            name=style, showFirstColumn=False,
            showLastColumn=False, showRowStripes=True, showColumnStripes=False
        )
        sheet.add_table(table)

    _fit_columns(sheet, cap=30)


def _cell_value(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value)
    return value


def _lowest_order_below(kappa: pd.DataFrame, limit: float):
    values = kappa.drop(columns=["d"])
    for d, row in zip(kappa["d"], values.itertuples(index=False)):
        if all(np.isfinite(v) and v < limit for v in row):
            return int(d)
    return None


def _fit_columns(sheet, cap: int):
    for column in sheet.columns:
        width = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
        sheet.column_dimensions[get_column_letter(column[0].column)].width = min(width + 2, cap)
