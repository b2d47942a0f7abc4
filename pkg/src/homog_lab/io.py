"""File formats: coefficient fields as JSON, lattice functions as CSV."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import InvalidParameterError
from .lattice import CoefficientField, LatticeFunction, NeighborSet, to_indices


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def field_to_dict(field: CoefficientField) -> dict:
    return {
        "dim": field.dim,
        "period": field.period,
        "vectors": field.neighbors.vectors.tolist(),
        "values": field.values.reshape(-1).tolist(),
        "c_min": field.c_min,
        "c_max": field.c_max,
        "nondegenerate": field.nondegenerate,
    }


def field_from_dict(data: dict) -> CoefficientField:
    """Parse and validate a coefficient-field document.

    ``values`` is the row-major flattening of the array of shape
    ``(period,)*dim + (len(vectors),)``; a nested array of that shape is
    accepted as well.
    """
    try:
        dim = int(data["dim"])
        period = int(data["period"])
        vectors = data["vectors"]
        values = data["values"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParameterError(f"malformed field document: {exc}") from exc
    nb = NeighborSet(vectors, dim)
    arr = np.asarray(values, dtype=float)
    shape = (period,) * dim + (len(nb),)
    if arr.size != int(np.prod(shape)):
        raise InvalidParameterError(f"expected {int(np.prod(shape))} values for shape {shape}, "
                                    f"got {arr.size}")
    return CoefficientField(nb, arr.reshape(shape), c_min=data.get("c_min"),
                            c_max=data.get("c_max"),
                            nondegenerate=bool(data.get("nondegenerate", False)))


def _reject_constant(token):
    raise InvalidParameterError(f"non-finite number {token!r} in field file")


def read_field(path) -> CoefficientField:
    text = Path(path).read_text()
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{path}: invalid JSON ({exc})") from exc
    return field_from_dict(data)


def write_field(field: CoefficientField, path) -> None:
    Path(path).write_text(json.dumps(field_to_dict(field), indent=2) + "\n")


def function_to_csv(u: LatticeFunction) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(u.dim)] + ["value"])
    for site, val in zip(u.sites, u.values):
        w.writerow([fmt(x) for x in site] + [fmt(val)])
    return buf.getvalue()


def write_function(u: LatticeFunction, path) -> None:
    Path(path).write_text(function_to_csv(u))


def function_from_csv(text: str, eps: float | None = None) -> LatticeFunction:
    """Parse ``x1,...,xd,value`` rows.

    ``eps`` defaults to the smallest coordinate gap, rounded to 12 significant
    digits to strip the noise of differencing printed coordinates.
    """
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise InvalidParameterError("empty CSV")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header != [f"x{j + 1}" for j in range(d)] + ["value"]:
        raise InvalidParameterError(f"bad header {header}; expected x1,...,xd,value")
    try:
        data = np.array([[float(t) for t in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InvalidParameterError(f"malformed number in CSV: {exc}") from exc
    if data.size == 0:
        raise InvalidParameterError("CSV has no data rows")
    if data.shape[1] != d + 1:
        raise InvalidParameterError("ragged CSV rows")
    pts, vals = data[:, :d], data[:, d]
    if eps is None:
        gaps = [np.diff(np.unique(pts[:, j])) for j in range(d)]
        gaps = np.concatenate([gp[gp > 0] for gp in gaps])
        eps = float(format(gaps.min(), ".12g")) if gaps.size else 1.0
    return LatticeFunction(eps, to_indices(pts, eps), vals)


def read_function(path, eps: float | None = None) -> LatticeFunction:
    return function_from_csv(Path(path).read_text(), eps)


def write_rows(path, header, rows) -> str:
    """Write a CSV table (floats at 17 significant digits) and return its text."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) if isinstance(x, float) else x for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def dumps_json(obj) -> str:
    def default(o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"not serializable: {type(o).__name__}")

    def clean(o):
        if isinstance(o, float) and not math.isfinite(o):
            return None
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return o

    return json.dumps(clean(obj), default=default, indent=2, sort_keys=True) + "\n"
