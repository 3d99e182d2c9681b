"""Canonical JSON and CSV emission for reports.

Floats use the shortest round-trip representation; non-finite floats become
the strings "inf", "-inf" and "nan" so the output stays standard JSON.
Wall-clock data goes to a ``.run.json`` sidecar so the main report is a pure
function of its configuration.
"""
import csv
import dataclasses
from fractions import Fraction
import io
import json
import math
import os
import time

import numpy as np

SCHEMA_VERSION = 1


def plain(obj):
    """Convert a report tree into JSON-native values."""
    if hasattr(obj, "to_dict"):
        return plain(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(report):
    body = plain(report)
    if isinstance(body, dict):
        body.setdefault("schema_version", SCHEMA_VERSION)
    return json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc


def emit_report(report, path, csv_rows=None, run_info=None):
    """Write ``path`` (JSON), an optional CSV next to it and a timing sidecar.

    Returns the list of files written.
    """
    path = os.fspath(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    _write(path, dumps(report))
    written = [path]
    stem = path[:-5] if path.endswith(".json") else path
    if csv_rows:
        _write(stem + ".csv", csv_text(csv_rows))
        written.append(stem + ".csv")
    info = {"written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    info.update(run_info or {})
    _write(stem + ".run.json", json.dumps(plain(info), sort_keys=True, indent=2) + "\n")
    written.append(stem + ".run.json")
    return written
