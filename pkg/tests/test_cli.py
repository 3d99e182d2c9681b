import json

import pytest

from heatpot import cli


def run(tmp_path, *argv):
    return cli.main(list(argv) + ["--out", str(tmp_path)])


def read(tmp_path, stem):
    return json.loads((tmp_path / f"{stem}.json").read_text())


def test_classify_exact_curve(tmp_path, capsys):
    assert run(tmp_path, "classify", "--lambda", "4", "--sigma", "11/4") == 0
    rep = read(tmp_path, "classify")
    assert rep["result"]["region"] == "D"
    assert json.loads(capsys.readouterr().out) == rep


def test_bounds_region_b(tmp_path):
    assert run(tmp_path, "bounds", "--lambda", "4", "--sigma", "1") == 0
    assert read(tmp_path, "bounds")["pass"] is True


@pytest.mark.parametrize("argv", [
    ["classify", "--lambda", "4"],
    ["classify", "--lambda", "x", "--sigma", "1"],
    ["frobnicate"],
    ["check", "sobolev", "--p", "3"],
    ["blowup", "--region", "C", "--lambda", "4", "--sigma", "1", "--phi", "log"],
])
def test_usage_errors_exit_1(tmp_path, argv):
    assert run(tmp_path, *argv) == 1


def test_config_then_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda": 4, "sigma": 1}))
    assert run(tmp_path, "classify", "--config", str(cfg)) == 0
    assert read(tmp_path, "classify")["result"]["region"] == "B"
    assert run(tmp_path, "classify", "--config", str(cfg), "--sigma", "3") == 0
    assert read(tmp_path, "classify")["result"]["region"] == "C"
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert run(tmp_path, "classify", "--config", str(bad)) == 1


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HEATPOT_OUTPUT_DIR", str(tmp_path / "env"))
    assert cli.main(["classify", "--lambda", "2", "--sigma", "1"]) == 0
    assert (tmp_path / "env" / "classify.json").exists()


@pytest.mark.parametrize("argv,stem", [
    (["check", "layer-cake", "--trials", "20", "--seed", "7"], "check-layer-cake"),
    (["rates"], "rates"),
    (["constants"], "constants"),
    (["potential", "--member", "1"], "potential"),
])
def test_reruns_are_byte_identical(tmp_path, argv, stem):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(argv + ["--out", str(a)]) == 0
    assert cli.main(argv + ["--out", str(b)]) == 0
    assert (a / f"{stem}.json").read_bytes() == (b / f"{stem}.json").read_bytes()


def test_rates_expectation_failure_exits_2(tmp_path):
    assert run(tmp_path, "rates", "--expect", "3") == 2


def test_blowup_b_writes_trace(tmp_path):
    assert run(tmp_path, "blowup", "--region", "B", "--lambda", "4", "--sigma", "1",
               "--samples", "500") == 0
    rep = read(tmp_path, "blowup-B")
    assert rep["result"]["pass"] is True
    header = (tmp_path / "blowup-B.csv").read_text().splitlines()[0]
    assert header == ",".join(cli.TRACE_HEADER)
