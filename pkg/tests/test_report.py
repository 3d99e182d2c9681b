from fractions import Fraction
import json
import math

import numpy as np
import pytest

from heatpot.report import SCHEMA_VERSION, csv_text, dumps, emit_report, plain


def test_plain_converts_numeric_types():
    out = plain({"a": np.float64(0.1), "b": np.arange(3), "c": Fraction(1, 4), "d": np.bool_(True),
                 1: (np.int64(2),)})
    assert out == {"a": 0.1, "b": [0, 1, 2], "c": 0.25, "d": True, "1": [2]}
    with pytest.raises(TypeError):
        plain({"x": object()})


def test_non_finite_become_strings():
    text = dumps({"x": math.inf, "y": -math.inf, "z": math.nan})
    assert json.loads(text) == {"x": "inf", "y": "-inf", "z": "nan", "schema_version": SCHEMA_VERSION}


def test_dumps_is_canonical():
    a = dumps({"b": 1, "a": [0.1, 1 / 3]})
    b = dumps({"a": [0.1, 1 / 3], "b": 1})
    assert a == b and "0.3333333333333333" in a and a.endswith("\n")


def test_csv_floats_round_trip():
    text = csv_text([("t", "v"), (0.1, 1 / 3)])
    assert text.splitlines() == ["t,v", "0.1,0.3333333333333333"]


def test_emit_writes_sidecar(tmp_path):
    path = tmp_path / "sub" / "r.json"
    files = emit_report({"pass": True}, path, [("a",), (1.0,)], {"seconds": 0.5})
    assert [f.rsplit("/", 1)[-1] for f in files] == ["r.json", "r.csv", "r.run.json"]
    assert json.loads(path.read_text())["pass"] is True
    side = json.loads((tmp_path / "sub" / "r.run.json").read_text())
    assert side["seconds"] == 0.5 and "written_at" in side
