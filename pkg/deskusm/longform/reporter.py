from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Set

import numpy as np
import pandas as pd
from openpyxl import load_workbook
from openpyxl.formatting.rule import FormulaRule
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter
from openpyxl.worksheet.table import Table, TableStyleInfo

from .models import LongFormExperimentSpec, LongFormReport

log = logging.getLogger(__name__)

SHEET_SUMMARY = "Summary"
SHEET_RUNS = "Runs"
SHEET_PLOT = "Plot data"
SHEET_SPEC = "Spec"

PLOT_FILE = "plot_data.tsv"
RUNS_FILE = "runs.tsv"
SUMMARY_FILE = "summary.tsv"
WORKBOOK_FILE = "longform_report.xlsx"

_RATE_WORDS = ("wer", "cer", "share", "tolerance")


def _clean_df_for_excel(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    out.columns = [str(c).strip() or "col" for c in out.columns]
    out = out.replace([np.inf, -np.inf], np.nan)
    for c in out.columns:
        if out[c].dtype == object:
            out[c] = out[c].replace({"nan": "", "NaN": "", "None": ""})
    return out


def _make_table_name(ws_title: str, idx: int) -> str:
    base = re.sub(r"[^A-Za-z0-9_]", "_", ws_title).strip("_")[:25] or "Sheet"
    h = hashlib.md5(ws_title.encode("utf-8")).hexdigest()[:6]
    return f"T_{base}_{idx}_{h}"


def _tsv(df: pd.DataFrame, path: Path) -> Path:
    df.to_csv(path, sep="\t", index=False, float_format="%.6f", lineterminator="\n")
    return path


def write_plot_data(plot: pd.DataFrame, out_dir: Path) -> Path:
    """step, pattern, seed, longform_wer; one row per evaluated checkpoint."""
    return _tsv(plot, Path(out_dir) / PLOT_FILE)


def _spec_frame(spec: LongFormExperimentSpec) -> pd.DataFrame:
    raw = asdict(spec)
    rows: List[Dict[str, str]] = []
    for key, value in raw.items():
        if key == "arms":
            for arm in value:
                rows.append({"key": f"arm.{arm['label']}", "value": f"{arm['pattern']} x {arm['num_layers']} layers"})
        else:
            rows.append({"key": key, "value": ", ".join(map(str, value)) if isinstance(value, tuple) else str(value)})
    rows.append({"key": "eval_seconds", "value": f"{spec.eval_seconds:.2f}"})
    return pd.DataFrame(rows)


def write_report(report: LongFormReport, spec: LongFormExperimentSpec, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_plot_data(report.plot, out_dir)
    _tsv(report.runs, out_dir / RUNS_FILE)
    _tsv(report.summary, out_dir / SUMMARY_FILE)

    path = out_dir / WORKBOOK_FILE
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        _clean_df_for_excel(report.summary).to_excel(writer, sheet_name=SHEET_SUMMARY, index=False)
        _clean_df_for_excel(report.runs).to_excel(writer, sheet_name=SHEET_RUNS, index=False)
        _clean_df_for_excel(report.plot).to_excel(writer, sheet_name=SHEET_PLOT, index=False)
        _clean_df_for_excel(_spec_frame(spec)).to_excel(writer, sheet_name=SHEET_SPEC, index=False)
    _style_workbook(path)
    log.info("Long-form report written to %s", path)
    return path


def _style_workbook(path: Path) -> None:
    wb = load_workbook(path)
    used: Set[str] = set()
    for i, ws in enumerate(wb.worksheets, start=1):
        if ws.max_row < 1 or ws.max_column < 1:
            continue
        ws.freeze_panes = "A2" if ws.max_row >= 2 else "A1"
        _apply_header_style(ws)
        _apply_excel_table(ws, used, i)
        _apply_column_formats(ws)
        _apply_conditional_styles(ws)
        _autosize_columns(ws)
    wb.save(path)


def _apply_header_style(ws) -> None:
    fill = PatternFill("solid", fgColor="F2F2F2")
    align = Alignment(horizontal="center", vertical="center", wrap_text=True)
    for col in range(1, ws.max_column + 1):
        cell = ws.cell(row=1, column=col)
        cell.fill = fill
        cell.font = Font(bold=True)
        cell.alignment = align
    ws.row_dimensions[1].height = 22


def _apply_excel_table(ws, used: Set[str], idx: int) -> None:
    if ws.max_row < 2:
        return
    name = _make_table_name(ws.title, idx)
    while name in used:
        name = name + "x"
    used.add(name)
    table = Table(displayName=name, ref=ws.dimensions)
    table.tableStyleInfo = TableStyleInfo(name="TableStyleLight9", showRowStripes=True)
    ws.add_table(table)


def _find_col_by_header(ws, header: str):
    for col in range(1, ws.max_column + 1):
        v = ws.cell(row=1, column=col).value
        if isinstance(v, str) and v.strip() == header:
            return col
    return None


def _apply_column_formats(ws) -> None:
    for col in range(1, ws.max_column + 1):
        header = ws.cell(row=1, column=col).value
        if isinstance(header, str) and any(w in header for w in _RATE_WORDS):
            for r in range(2, ws.max_row + 1):
                ws.cell(row=r, column=col).number_format = "0.0000"


def _apply_conditional_styles(ws) -> None:
    if ws.max_row < 2:
        return
    full_range = f"A2:{get_column_letter(ws.max_column)}{ws.max_row}"
    status = _find_col_by_header(ws, "status")
    if status:
        letter = get_column_letter(status)
        ws.conditional_formatting.add(
            full_range, FormulaRule(formula=[f'${letter}2="excluded"'], fill=PatternFill("solid", fgColor="FFEBEE"))
        )
    within = _find_col_by_header(ws, "within_tolerance")
    if within:
        letter = get_column_letter(within)
        ws.conditional_formatting.add(
            full_range, FormulaRule(formula=[f"${letter}2=TRUE"], fill=PatternFill("solid", fgColor="E8F5E9"))
        )


def _autosize_columns(ws, sample_rows: int = 2000) -> None:
    for col in range(1, ws.max_column + 1):
        best = 8
        for row in range(1, min(ws.max_row, sample_rows) + 1):
            v = ws.cell(row=row, column=col).value
            if v is not None:
                best = max(best, len(str(v)))
        ws.column_dimensions[get_column_letter(col)].width = min(max(best + 2, 10), 60)
