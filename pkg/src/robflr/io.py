"""Curve CSV files and the JSON model document."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .curve_core import BSplineBasis, CurveSet, TimeGrid, gram_factor
from .errors import IncompatibleModel, InputError, RobflrError
from .fpca import FpcaModel
from .model_select import CriterionScore, FlrModel

SCHEMA_VERSION = "1.0"


def fmt_float(x) -> str:
    """Shortest decimal literal that reads back to the same double."""
    return repr(float(x))


# Curve CSV: header "id,t_1,...,t_T", one sample per row.


def write_curves(path, curves: CurveSet) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"] + [fmt_float(t) for t in curves.grid.points])
        for ident, row in zip(curves.ids, curves.samples):
            writer.writerow([ident] + [fmt_float(v) for v in row])


def _parse_float(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"row {row}, column {col}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise InputError(f"row {row}, column {col}: non-finite value {text!r}")
    return value


def read_curves(path) -> CurveSet:
    """Parse a curve CSV; rows and columns in messages are 1-based file positions."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 3 or header[0].strip() != "id":
        raise InputError(f"{path}: header must be 'id,<t_1>,...,<t_T>' with T >= 2")
    times = np.array([_parse_float(h, 1, j + 2) for j, h in enumerate(header[1:])])
    if np.any(np.diff(times) <= 0):
        bad = int(np.argmax(np.diff(times) <= 0)) + 3
        raise InputError(f"{path}: header times are not increasing at column {bad}")
    try:
        grid = TimeGrid(times)
    except RobflrError as exc:
        raise InputError(f"{path}: {exc}") from None
    ids, values = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        ids.append(row[0])
        values.append([_parse_float(v, i, j + 2) for j, v in enumerate(row[1:])])
    if not values:
        raise InputError(f"{path}: no data rows")
    return CurveSet(grid, np.array(values), tuple(ids))


def read_long_series(path) -> dict:
    """Long-format ``id,time,value`` rows grouped per id, sorted by time."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:3]] != ["id", "time", "value"]:
                raise InputError(f"{path}: header must start with 'id,time,value'")
            series: dict = {}
            for i, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) < 3:
                    raise InputError(f"{path}: row {i} has {len(row)} fields, expected 3")
                t = _parse_float(row[1], i, 2)
                v = _parse_float(row[2], i, 3)
                series.setdefault(row[0], []).append((t, v))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    out = {}
    for ident, pairs in series.items():
        arr = np.array(sorted(pairs))
        if np.any(np.diff(arr[:, 0]) <= 0):
            raise InputError(f"{path}: series {ident!r} has repeated time stamps")
        out[ident] = arr
    return out


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# Model document.


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def _matrix(a) -> dict:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return {"rows": a.shape[0], "cols": a.shape[1], "data": _floats(a)}


def _unmatrix(d) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["rows"], d["cols"])


def _fpca_doc(m: FpcaModel) -> dict:
    return {
        "basis": {
            "degree": m.basis.degree,
            "num_basis": m.basis.num_basis,
            "knots": _floats(m.basis.knots),
            "domain": _floats(m.basis.domain),
        },
        "mean_coefs": _floats(m.mean_coefs),
        "eigen_coefs": _matrix(m.eigen_coefs),
        "eigenvalues": _floats(m.eigenvalues),
        "method": m.method,
    }


def _fpca_from(d) -> FpcaModel:
    b = d["basis"]
    basis = BSplineBasis(
        int(b["degree"]), int(b["num_basis"]), np.array(b["knots"], dtype=float), tuple(b["domain"])
    )
    return FpcaModel(
        basis,
        gram_factor(basis),
        np.array(d["mean_coefs"], dtype=float),
        _unmatrix(d["eigen_coefs"]),
        np.array(d["eigenvalues"], dtype=float),
        d["method"],
    )


def _score_doc(s: Optional[CriterionScore]):
    if s is None:
        return None
    return {
        "M": s.m,
        "K": s.k,
        "deviance": s.deviance,
        "penalty": s.penalty,
        "total": s.total,
        "v": s.v,
    }


def model_to_doc(model: FlrModel, provenance: Optional[dict] = None) -> dict:
    table = [
        {"cell": [m, k], "score": _score_doc(model.criterion_table[(m, k)])}
        for m, k in sorted(model.criterion_table)
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "fpca_x": _fpca_doc(model.fpca_x),
        "fpca_y": _fpca_doc(model.fpca_y),
        "grid_x": _floats(model.grid_x.points),
        "grid_y": _floats(model.grid_y.points),
        "M": model.M,
        "K": model.K,
        "B": _matrix(model.B),
        "v": float(model.v),
        "alpha": float(model.alpha),
        "method": model.method,
        "criterion": model.criterion,
        "criterion_table": table,
        "subset": None if model.subset is None else [int(i) for i in model.subset],
        "provenance": provenance or {},
    }


def check_schema(doc: dict) -> None:
    version = str(doc.get("schema_version", ""))
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise IncompatibleModel(f"unsupported model schema version {version!r}")


def doc_to_model(doc: dict) -> FlrModel:
    check_schema(doc)
    try:
        table = {}
        for entry in doc["criterion_table"]:
            m, k = entry["cell"]
            s = entry["score"]
            table[(m, k)] = (
                None
                if s is None
                else CriterionScore(s["M"], s["K"], s["deviance"], s["penalty"], s["total"], s["v"])
            )
        return FlrModel(
            _fpca_from(doc["fpca_x"]),
            _fpca_from(doc["fpca_y"]),
            TimeGrid(np.array(doc["grid_x"], dtype=float)),
            TimeGrid(np.array(doc["grid_y"], dtype=float)),
            int(doc["M"]),
            int(doc["K"]),
            _unmatrix(doc["B"]),
            float(doc["v"]),
            float(doc["alpha"]),
            doc["method"],
            doc["criterion"],
            table,
            None if doc["subset"] is None else np.array(doc["subset"], dtype=int),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed model document: {exc!r}") from None


def dumps_doc(doc: dict) -> str:
    # NaN/inf are not JSON; criterion cells that failed are stored as null.
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_doc(path, doc: dict) -> None:
    Path(path).write_text(dumps_doc(doc))


def load_doc(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: model document must be a JSON object")
    check_schema(doc)
    return doc
