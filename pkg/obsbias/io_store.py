"""Data ingestion, analysis configuration and result persistence.

CSV files are split into rows by the stdlib ``csv`` reader (so errors carry
row and column coordinates) and typed into a pandas DataFrame. Text columns
are expanded into 0/1 indicator columns named ``col=level``; the
alphabetically first level is the reference and gets no column.
"""

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from obsbias.document import JsonDocument, canonicalize, format_float
from obsbias.exceptions import ConfigValidationError, ParseError, SchemaError
from obsbias.pipeline import (
    AnalysisConfig,
    AnalysisResult,
    BalanceRecord,
    CoefficientRecord,
    ObservedBiasRecord,
)

logger = logging.getLogger(__name__)

MISSING_TOKENS = ("", "NA")
RECORD_COLUMNS = ("label", "kind", "estimate", "lcl", "ucl", "oce")
MAX_CONFIG_SIZE = 1024 * 1024
SOFTWARE_NAME = "obsbias"

PathLike = Union[str, Path]


@dataclass
class Dataset:
    """Rectangular numeric data ready for analysis.

    Attributes:
        frame: One float column per variable, NaN for missing cells
        sources: Text column name -> indicator columns it was expanded into
        digest: SHA-256 of the ingested bytes, lowercase hex
    """

    frame: pd.DataFrame
    sources: Dict[str, List[str]] = field(default_factory=dict)
    digest: Optional[str] = None

    def __post_init__(self) -> None:
        columns = [str(c) for c in self.frame.columns]
        if len(set(columns)) != len(columns):
            raise SchemaError(f"Dataset column names must be unique, got {columns}")

    @property
    def columns(self) -> List[str]:
        return [str(c) for c in self.frame.columns]

    @property
    def n_rows(self) -> int:
        return int(self.frame.shape[0])

    def column(self, name: str) -> np.ndarray:
        """Values of a numeric column as a float array."""
        if name not in self.frame.columns:
            raise SchemaError(f"Unknown column '{name}'; available: {self.columns}")
        return self.frame[name].to_numpy(dtype=float)

    def resolve(self, name: str) -> List[str]:
        """Columns standing for ``name``: itself, or its indicator columns.

        Raises:
            SchemaError: If ``name`` is neither a column nor an expanded text column
        """
        if name in self.frame.columns:
            return [name]
        if name in self.sources:
            if not self.sources[name]:
                raise SchemaError(
                    f"Text column '{name}' has a single level and no indicator columns"
                )
            return list(self.sources[name])
        raise SchemaError(f"Unknown column '{name}'; available: {self.columns}")


@dataclass
class RunArtifact:
    """Everything written for one analysis run."""

    config: AnalysisConfig
    full: ObservedBiasRecord
    records: List[ObservedBiasRecord]
    balance: List[BalanceRecord]
    version: str
    input_digest: Optional[str] = None
    input_name: Optional[str] = None
    n_rows: Optional[int] = None
    wall_time: Optional[float] = None
    coefficients: List[CoefficientRecord] = field(default_factory=list)

    @classmethod
    def from_result(
        cls,
        result: AnalysisResult,
        dataset: Dataset,
        input_name: Optional[str] = None,
        wall_time: Optional[float] = None,
    ) -> "RunArtifact":
        from obsbias import __version__

        return cls(
            config=result.config,
            full=result.full,
            records=list(result.records),
            balance=list(result.balance),
            version=__version__,
            input_digest=dataset.digest,
            input_name=input_name,
            n_rows=result.analysis.n_rows,
            wall_time=wall_time,
            coefficients=list(result.coefficients),
        )

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = {
            "software": {"name": SOFTWARE_NAME, "version": self.version},
            "input": {
                "name": self.input_name,
                "sha256": self.input_digest,
                "n_rows": self.n_rows,
            },
            "config": self.config.to_dict(),
            "full": self.full.as_dict(),
            "records": [record.as_dict() for record in self.records],
            "balance": [row.as_dict() for row in self.balance],
            "coefficients": [row.as_dict() for row in self.coefficients],
        }
        if include_timing and self.wall_time is not None:
            data["wall_time_seconds"] = self.wall_time
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunArtifact":
        doc = JsonDocument(data)
        try:
            return cls(
                config=AnalysisConfig.from_mapping(doc["config"]),
                full=ObservedBiasRecord.from_dict(doc["full"]),
                records=[ObservedBiasRecord.from_dict(r) for r in doc["records"]],
                balance=[BalanceRecord.from_dict(b) for b in doc["balance"]],
                version=doc.get("software.version", "unknown"),
                input_digest=doc.get("input.sha256"),
                input_name=doc.get("input.name"),
                n_rows=doc.get("input.n_rows"),
                wall_time=doc.get("wall_time_seconds"),
                coefficients=[
                    CoefficientRecord.from_dict(c) for c in doc.get("coefficients", [])
                ],
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"Malformed results document: missing {exc}") from None


def file_digest(path: PathLike) -> str:
    """SHA-256 of a file's bytes as lowercase hex."""
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def _parse_number(text: str) -> Optional[float]:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _type_column(name: str, cells: List[Optional[str]]) -> Optional[List[float]]:
    """Parse a column as numbers, or return None when it is a text column.

    A column is numeric when its first non-missing cell parses as a finite
    number; every later non-missing cell must then parse too.
    """
    present = [(i, cell) for i, cell in enumerate(cells) if cell is not None]
    if not present or _parse_number(present[0][1]) is None:
        return None if present else [math.nan] * len(cells)
    values = [math.nan] * len(cells)
    for i, cell in present:
        value = _parse_number(cell)
        if value is None:
            raise ParseError(
                f"Non-numeric value {cell!r} in numeric column", row=i + 1, column=name
            )
        values[i] = value
    return values


def _expand(name: str, cells: List[Optional[str]]) -> Dict[str, List[float]]:
    levels = sorted({cell for cell in cells if cell is not None})
    indicators = {}
    for level in levels[1:]:
        indicators[f"{name}={level}"] = [
            math.nan if cell is None else float(cell == level) for cell in cells
        ]
    if len(levels) < 2:
        logger.warning(
            "Text column '%s' has %d level(s); no indicator columns created",
            name,
            len(levels),
        )
    return indicators


def _rhc_preset(frame: pd.DataFrame) -> pd.DataFrame:
    """Recode the right heart catheterization study file.

    swang1 == "RHC" becomes ``exposure``, dth30 == "Yes" becomes ``event``
    and t3d30 becomes ``time``. The recoded source columns are removed.
    """
    for column in ("swang1", "dth30", "t3d30"):
        if column not in frame.columns:
            raise SchemaError(f"Preset 'rhc' needs column '{column}'")
    frame = frame.copy()
    frame["exposure"] = [
        None if v is None else str(int(v == "RHC")) for v in frame["swang1"]
    ]
    frame["event"] = [None if v is None else str(int(v == "Yes")) for v in frame["dth30"]]
    frame["time"] = frame["t3d30"]
    return frame.drop(columns=["swang1", "dth30", "t3d30"])


PRESETS: Dict[str, Callable[[pd.DataFrame], pd.DataFrame]] = {"rhc": _rhc_preset}


def read_csv(
    path: PathLike, preset: Optional[str] = None, max_size: Optional[int] = None
) -> Dataset:
    """Read a UTF-8 CSV file with a header row into a Dataset.

    Cells that are empty or "NA" are missing. Columns with a blank header
    (row-name columns written by R) are skipped. Row order is preserved.

    Args:
        path: CSV file
        preset: Optional named recoding applied before typing ("rhc")
        max_size: Optional maximum file size in bytes

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: On a missing header, duplicate headers, ragged rows or a
                    non-numeric cell in a numeric column
        SchemaError: If the preset needs a column the file lacks
    """
    path = Path(path)
    if preset is not None and preset not in PRESETS:
        raise SchemaError(f"Unknown preset '{preset}'; available: {sorted(PRESETS)}")
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    if max_size is not None and path.stat().st_size > max_size:
        raise ParseError(
            f"File size ({path.stat().st_size} bytes) exceeds maximum allowed "
            f"size ({max_size} bytes): {path}"
        )

    raw = path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not valid UTF-8: {exc.reason}") from None

    try:
        rows = list(csv.reader(io.StringIO(text, newline="")))
    except csv.Error as exc:
        raise ParseError(f"Malformed CSV in {path}: {exc}") from None
    if not rows or not rows[0]:
        raise ParseError(f"{path} has no header row", row=0)

    header = [name.strip() for name in rows[0]]
    seen = set()
    for j, name in enumerate(header):
        if name and name in seen:
            raise ParseError("Duplicate column header", row=0, column=name)
        seen.add(name)
    for i, row in enumerate(rows[1:], start=1):
        if not row:
            # in a single-column file a blank line is one missing cell
            if len(header) != 1:
                raise ParseError("Blank row", row=i)
            rows[i] = row = [""]
        if len(row) != len(header):
            raise ParseError(
                f"Expected {len(header)} fields, found {len(row)}", row=i
            )

    keep = [j for j, name in enumerate(header) if name]
    if len(keep) < len(header):
        logger.info("Skipping %d column(s) with a blank header", len(header) - len(keep))
    cells = pd.DataFrame(
        [[None if row[j] in MISSING_TOKENS else row[j] for j in keep] for row in rows[1:]],
        columns=[header[j] for j in keep],
        dtype=object,
    )
    if preset is not None:
        cells = PRESETS[preset](cells)

    columns: Dict[str, List[float]] = {}
    sources: Dict[str, List[str]] = {}
    for name in cells.columns:
        values = list(cells[name])
        numbers = _type_column(name, values)
        if numbers is not None:
            columns[name] = numbers
            continue
        indicators = _expand(name, values)
        for indicator in indicators:
            if indicator in cells.columns:
                raise ParseError(
                    "Indicator column collides with an existing header",
                    column=indicator,
                )
        columns.update(indicators)
        sources[name] = list(indicators)

    frame = pd.DataFrame(columns, index=pd.RangeIndex(len(cells)), dtype=float)
    logger.info("Read %d rows and %d columns from %s", len(frame), frame.shape[1], path)
    return Dataset(frame=frame, sources=sources, digest=digest)


def _format_cell(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def write_csv(dataset: Dataset, path: PathLike) -> None:
    """Write a dataset in canonical form.

    Integral values are written without a decimal point, other values with
    the shortest round-tripping representation, missing values as empty cells.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = pd.DataFrame(
        {name: [_format_cell(v) for v in dataset.frame[name]] for name in dataset.columns},
        columns=dataset.columns,
        dtype=object,
    )
    text.to_csv(path, index=False, lineterminator="\n")
    logger.info("Wrote %d rows to %s", dataset.n_rows, path)


def read_config(path: PathLike) -> AnalysisConfig:
    """Read and validate an analysis configuration JSON file.

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigValidationError: If the JSON is invalid or fails validation
    """
    try:
        doc = JsonDocument.from_file(path, max_size=MAX_CONFIG_SIZE)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(f"Invalid JSON in {path}: {exc}") from None
    return AnalysisConfig.from_mapping(doc.to_dict())


def records_path(path: PathLike) -> Path:
    """Sibling CSV path used for the records of a results JSON file."""
    path = Path(path)
    return path.with_name(f"{path.stem}.records.csv")


def _format_record_value(value: Optional[float]) -> str:
    if value is None:
        return ""
    rounded = format_float(value)
    return "" if rounded is None else repr(rounded)


def write_results(
    artifact: RunArtifact, path: PathLike, include_timing: bool = False
) -> Path:
    """Write canonical results JSON plus the sibling records CSV.

    The CSV holds the full record first, then every record in order.
    Wall time is written only when ``include_timing`` is set, so repeated
    runs on identical input produce identical bytes.

    Returns:
        Path of the records CSV

    Raises:
        OSError: If either file cannot be written; the message names the path
    """
    path = Path(path)
    csv_path = records_path(path)
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for record in [artifact.full] + artifact.records:
        writer.writerow(
            [record.label, record.kind]
            + [
                _format_record_value(getattr(record, name))
                for name in RECORD_COLUMNS[2:]
            ]
        )

    try:
        JsonDocument(artifact.to_dict(include_timing=include_timing)).save(path)
        csv_path.write_text(buffer.getvalue(), encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(
            exc.errno, f"Cannot write results: {exc.strerror}", str(exc.filename or path)
        ) from exc
    logger.info("Wrote results to %s and %s", path, csv_path)
    return csv_path


def read_results(path: PathLike) -> RunArtifact:
    """Read a results JSON file written by write_results."""
    doc = JsonDocument.from_file(path)
    return RunArtifact.from_dict(doc.to_dict())


def read_records(path: PathLike) -> List[ObservedBiasRecord]:
    """Read a records CSV written by write_results.

    Rows with empty numbers come back as flagged records.

    Raises:
        ParseError: If the header differs from label,kind,estimate,lcl,ucl,oce
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != RECORD_COLUMNS:
        raise ParseError(
            f"Expected header {','.join(RECORD_COLUMNS)} in {path}", row=0
        )
    records = []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(RECORD_COLUMNS):
            raise ParseError(
                f"Expected {len(RECORD_COLUMNS)} fields, found {len(row)}", row=i
            )
        label, kind, estimate, lcl, ucl, oce = row
        if estimate == "":
            records.append(
                ObservedBiasRecord.failed(label, kind, "refit failed (see results JSON)")
            )
            continue
        records.append(
            ObservedBiasRecord(
                label=label,
                kind=kind,
                estimate=float(estimate),
                lcl=float(lcl),
                ucl=float(ucl),
                oce=float(oce) if oce != "" else None,
            )
        )
    return records


def dumps_json(data: Any) -> str:
    """Canonical single-object JSON text for stdout."""
    return json.dumps(canonicalize(data), sort_keys=True, allow_nan=False)
