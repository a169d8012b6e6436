# Report Service
# Merges simulation reports from several output directories into one table

import logging
from pathlib import Path
from typing import List, Sequence, Union

import pandas as pd

from core.errors import ReportMergeError
from core.simulation import REPORT_COLUMNS

logger = logging.getLogger(__name__)

REPORT_NAME = "report.csv"
CELL_KEY = ["truth", "model", "knot_range"]


def _report_path(source: Union[str, Path]) -> Path:
    path = Path(source)
    return path / REPORT_NAME if path.is_dir() else path


def read_report(source: Union[str, Path]) -> pd.DataFrame:
    path = _report_path(source)
    if not path.exists():
        raise ReportMergeError(f"report not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"truth": str, "model": str, "knot_range": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ReportMergeError(f"cannot read report {path}: {e}")
    if list(frame.columns) != REPORT_COLUMNS:
        raise ReportMergeError(
            f"{path} does not have the report columns (expected {', '.join(REPORT_COLUMNS)})"
        )
    return frame


def merge_reports(sources: Sequence[Union[str, Path]]) -> pd.DataFrame:
    """
    Concatenate reports in the given order, keep the last row of every
    (truth, model, knot range) cell and sort by that key.
    """
    if not sources:
        raise ReportMergeError("no reports to merge")
    frames: List[pd.DataFrame] = [read_report(s) for s in sources]
    merged = pd.concat(frames, ignore_index=True)
    duplicated = merged.duplicated(subset=CELL_KEY, keep="last")
    for _, row in merged[duplicated].iterrows():
        logger.warning(f"Duplicate report cell ({row['truth']}, {row['model']}, {row['knot_range']}); later run wins")
    merged = merged[~duplicated]
    return merged.sort_values(CELL_KEY, kind="stable").reset_index(drop=True)
