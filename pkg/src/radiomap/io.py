"""CSV and JSON readers/writers. Floats are written with ``repr`` so files round-trip exactly."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .kernels import Measurement, Position

MEASUREMENT_HEADER = ("time_index", "x", "y", "path_loss_db")
APSM_DIAG_HEADER = ("step", "residual_before", "residual_after", "dict_size")
MK_DIAG_HEADER = APSM_DIAG_HEADER + ("zero_row_count", "zero_col_count")
GRID_HEADER = ("x", "y", "truth_db", "estimate_db", "abs_err_db")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def measurements_csv(stream: Sequence[Measurement]) -> str:
    return write_table(
        MEASUREMENT_HEADER,
        ((m.time_index, m.position.x, m.position.y, m.path_loss) for m in stream),
    )


def parse_measurements_csv(text: str) -> list[Measurement]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != MEASUREMENT_HEADER:
        raise InvalidInputError(f"measurement CSV must start with header {','.join(MEASUREMENT_HEADER)}")
    out = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise InvalidInputError(f"line {line}: expected 4 fields, got {len(row)}")
        try:
            t, x, y, v = int(row[0]), float(row[1]), float(row[2]), float(row[3])
            out.append(Measurement(Position(x, y), v, t))
        except (ValueError, InvalidInputError) as exc:
            raise InvalidInputError(f"line {line}: {exc}") from None
    return out


def read_measurements(path: str | Path) -> list[Measurement]:
    return parse_measurements_csv(Path(path).read_text())


def diagnostics_csv(diags: Sequence) -> str:
    """APSM or multi-kernel diagnostics; the header follows the record type."""
    if diags and hasattr(diags[0], "zero_row_count"):
        header = MK_DIAG_HEADER
    else:
        header = APSM_DIAG_HEADER
    return write_table(header, ([getattr(d, h) for h in header] for d in diags))


def grid_csv(rows: Iterable[Sequence[float]]) -> str:
    return write_table(GRID_HEADER, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as ``null``."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
