"""
Outcome Parser
Parses per-patient treatment outcomes (patient_id,<drug_1>,<drug_2>,...)
"""
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import DataError

logger = logging.getLogger(__name__)

ID_COLUMN = "patient_id"


@dataclass(frozen=True)
class OutcomeTable:
    """Relative heart-rate change per patient and drug; NaN marks a missing value"""

    drugs: List[str] = field(default_factory=list)
    values: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not self.drugs or not self.values

    def outcome(self, drug: str, patients: List[str]) -> np.ndarray:
        """Outcome vector aligned with patients (NaN where unknown)"""
        return np.array(
            [self.values.get(p, {}).get(drug, float("nan")) for p in patients],
            dtype=float,
        )


def _read_grid(text: str, path: str) -> Tuple[pd.DataFrame, List[int]]:
    """Non-blank lines as a string grid, plus the file line number of each grid row"""
    lines = text.splitlines()
    source_lines = [n for n, line in enumerate(lines, start=1) if line.strip()]
    body = "\n".join(lines[n - 1] for n in source_lines)
    try:
        grid = pd.read_csv(io.StringIO(body), header=None, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        # pandas reports the offending row as 'line N' of the grid
        found = re.search(r"line (\d+)", str(e))
        row = int(found.group(1)) if found else 0
        line = source_lines[row - 1] if 0 < row <= len(source_lines) else None
        raise DataError(f"Inconsistent number of columns ({e})", path=path, line=line) from e
    return grid, source_lines


def parse_outcomes(csv_path: Optional[str]) -> OutcomeTable:
    """
    Parse an outcomes CSV file

    Empty cells are missing outcomes. A file with no content yields an empty
    table; the caller decides whether to skip correlation.

    Args:
        csv_path: Path to CSV file, or None

    Returns:
        OutcomeTable
    """
    if csv_path is None:
        return OutcomeTable()
    path = str(csv_path)
    try:
        text = Path(csv_path).read_text()
    except OSError as e:
        raise DataError(f"Cannot read outcomes file: {e}", path=path) from e
    if not text.strip():
        logger.info(f"Outcomes file {path} is empty")
        return OutcomeTable()

    grid, source_lines = _read_grid(text, path)
    header_line = source_lines[0]
    header = [str(c).strip() for c in grid.iloc[0]]
    if not header or header[0] != ID_COLUMN:
        raise DataError(f"First column must be '{ID_COLUMN}'", path=path, line=header_line)
    drugs = header[1:]
    if not drugs or any(not d for d in drugs):
        raise DataError("Outcome header needs named drug columns", path=path, line=header_line)

    rows = grid.iloc[1:]
    if rows.empty:
        logger.info(f"Outcomes file {path} lists no patients")
        return OutcomeTable(drugs=drugs)
    short = rows.isna().any(axis=1).to_numpy()
    cells = rows.fillna("").apply(lambda col: col.str.strip())
    numbers = cells.iloc[:, 1:].apply(pd.to_numeric, errors="coerce")

    values: Dict[str, Dict[str, float]] = {}
    for offset in range(len(rows)):
        line_no = source_lines[offset + 1]
        row = cells.iloc[offset]
        if not (row != "").any():
            continue
        if short[offset]:
            raise DataError(f"Expected {len(header)} columns, got fewer", path=path, line=line_no)
        patient = row.iloc[0]
        if not patient:
            raise DataError("Missing patient_id", path=path, line=line_no)
        if patient in values:
            raise DataError(f"Duplicate patient '{patient}'", path=path, line=line_no)
        parsed = numbers.iloc[offset]
        for drug, cell, value in zip(drugs, row.iloc[1:], parsed):
            if cell and np.isnan(value):
                raise DataError(f"Malformed outcome {cell!r} for {drug}", path=path, line=line_no)
        values[patient] = {drug: float(value) for drug, value in zip(drugs, parsed)}

    logger.info(f"Parsed outcomes for {len(values)} patients, drugs: {drugs}")
    return OutcomeTable(drugs=drugs, values=values)
