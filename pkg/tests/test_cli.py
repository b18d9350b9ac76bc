import csv
import hashlib
import json

import pytest

from mincusum import checks, cli, studies
from mincusum.config import ConfigError, parse_config, threshold_grid
from mincusum.results import COLUMNS, ResultRow, fmt, render_csv
from mincusum.scenarios import build_single_fault, gaussian_channels


def base_config(**experiment):
    exp = {"true_hyp": "1", "nu": [0, 5], "thresholds": [2.0, 3.0], "n_paths": 200, "seed": 3,
           "horizon": 5000, "outputs": ["misid"]}
    exp.update(experiment)
    return {"scenario": build_single_fault(gaussian_channels(3)).to_record(), "experiment": exp,
            "output": {"scenario_id": "demo"}}


def write_config(tmp_path, raw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config parsing -------------------------------------------------------------------------


def test_threshold_grid_includes_stop():
    assert threshold_grid({"start": 2, "stop": 9, "step": 0.25})[-1] == 9.0
    assert len(threshold_grid({"start": 2, "stop": 9, "step": 0.25})) == 29
    assert threshold_grid([1, 2.5]) == [1.0, 2.5]
    assert threshold_grid({"start": 3, "stop": 2, "step": 1}) == []


@pytest.mark.parametrize("change,field", [
    ({"thresholds": []}, "experiment.thresholds"),
    ({"thresholds": [3.0, 2.0]}, "experiment.thresholds"),
    ({"true_hyp": "7"}, "experiment.true_hyp"),
    ({"nu": [-1]}, "experiment.nu"),
    ({"n_paths": 0}, "experiment.n_paths"),
    ({"outputs": ["misid", "power"]}, "experiment.outputs"),
    ({"outputs": ["L"]}, "experiment.L.i"),
    ({"outputs": ["condition34"], "condition34": {"x_grid": [1.0]}, "nu": [0]}, "experiment.nu"),
])
def test_config_errors_name_the_field(change, field):
    with pytest.raises(ConfigError) as info:
        parse_config(base_config(**change))
    assert info.value.field == field


def test_empty_grid_message():
    with pytest.raises(ConfigError, match="threshold grid is empty"):
        parse_config(base_config(thresholds={"start": 5, "stop": 4, "step": 0.5}))


def test_overrides_win():
    cfg = parse_config(base_config(), {"seed": 99, "n_paths": None})
    assert cfg.seed == 99 and cfg.n_paths == 200


# --- result rows ----------------------------------------------------------------------------


def test_float_formatting_round_trips():
    for x in (0.1, 1 / 3, 2.0, 1e-17):
        assert float(fmt(x)) == x
    assert fmt(None) == ""
    assert fmt(float("nan")) == "nan"


def test_render_csv_header():
    row = ResultRow("s", "none", None, 2.0, "arl", 7.5, 0.1, 10, 10, 0, 7.389, 0)
    lines = render_csv([row]).decode().splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert lines[1].startswith("s,none,,2.0,arl,7.5,")


# --- commands -------------------------------------------------------------------------------


def test_reproduce_is_byte_identical(tmp_path):
    args = ["reproduce", "fig2", "--paths", "150", "--horizon", "3000", "--seed", "4", "--workers", "1"]
    assert cli.main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / "a" / "fig2.csv").read_bytes(), (tmp_path / "b" / "fig2.csv").read_bytes()
    assert a == b
    rows = read_rows(tmp_path / "a" / "fig2.csv")
    assert {r["nu"] for r in rows} == {"0", "20", "100"}
    assert all(r["metric"] == "misid" for r in rows)


def test_manifest_checksums_match(tmp_path):
    assert cli.main(["run", "--config", str(write_config(tmp_path, base_config())),
                     "--out-dir", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "demo.manifest.json").read_text())
    assert manifest["seed"] == 3
    (entry,) = manifest["outputs"]
    data = (tmp_path / "demo.csv").read_bytes()
    assert entry["sha256"] == hashlib.sha256(data).hexdigest()
    assert manifest["config"]["experiment"]["n_paths"] == 200


def test_run_with_every_output(tmp_path):
    raw = base_config(outputs=["misid", "partial", "arl", "delay", "L", "condition34"],
                      L={"i": "2", "x_grid": [0.0, 1.0]}, condition34={"x_grid": [0.0, 1.0]},
                      partial_k=["2"], thresholds=[2.0])
    assert cli.main(["run", "--config", str(write_config(tmp_path, raw)), "--out-dir", str(tmp_path),
                     "--paths", "100"]) == 0
    metrics = {r["metric"] for r in read_rows(tmp_path / "demo.csv")}
    assert {"misid", "partial[2]", "arl", "delay"} <= metrics
    assert any(m.startswith("L[") for m in metrics)
    assert any(m.startswith("tail[") for m in metrics)


def test_config_error_exits_1_and_names_field(tmp_path, capsys):
    path = write_config(tmp_path, base_config(thresholds=[]))
    assert cli.main(["run", "--config", str(path), "--out-dir", str(tmp_path)]) == 1
    assert "experiment.thresholds" in capsys.readouterr().err
    assert not list(tmp_path.glob("*.csv"))


def test_missing_file_and_bad_flags_exit_1(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 1
    assert cli.main(["reproduce", "fig9"]) == 1
    assert cli.main(["reproduce", "fig2", "--paths", "0"]) == 1
    assert cli.main(["verify", "--scale", "0"]) == 1
    assert cli.main(["bounds"]) == 1


def test_verify_failure_exits_2(monkeypatch, capsys):
    fake = [checks.CheckResult("x.ok", True, 1, 1, 0), checks.CheckResult("x.bad", False, 2, 1, 0)]
    monkeypatch.setattr(checks, "run_suite", lambda *a, **k: fake)
    assert cli.main(["verify", "engine"]) == 2
    out = capsys.readouterr().out
    assert "PASS x.ok" in out and "FAIL x.bad" in out


def test_runtime_fault_exits_3(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(studies, "reproduce", boom)
    assert cli.main(["reproduce", "fig2", "--out-dir", str(tmp_path)]) == 3


def test_partial_output_removed_on_failure(monkeypatch, tmp_path):
    def broken_manifest(*a, **k):
        raise OSError("no space left")

    monkeypatch.setattr(cli, "write_manifest", broken_manifest)
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(path), "--out-dir", str(out)]) == 3
    assert not (out / "demo.csv").exists()


def test_out_dir_precedence(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.resolve_out_dir("flag", "cfg").name == "flag"
    assert cli.resolve_out_dir(None, "cfg") == tmp_path / "env"
    monkeypatch.delenv(cli.OUT_DIR_ENV)
    assert str(cli.resolve_out_dir(None, "cfg")) == "cfg"
    assert str(cli.resolve_out_dir(None)) == cli.DEFAULT_OUT_DIR


def test_env_var_directs_output(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--config", str(write_config(tmp_path, base_config()))]) == 0
    assert (tmp_path / "env" / "demo.csv").exists()


def test_bounds_preset(tmp_path, capsys):
    assert cli.main(["bounds", "--preset", "fig2", "--alpha", "0.01", "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "fig2.bounds.csv")
    consts = [r for r in rows if r["quantity"] == "C"]
    assert consts and float(consts[0]["value"]) == pytest.approx(6.0)
    alpha_rows = [r for r in rows if r["quantity"] == "b_alpha"]
    assert float(alpha_rows[0]["value"]) == pytest.approx(5.7038, abs=1e-4)
    assert "wrote" in capsys.readouterr().out


def test_bounds_reports_missing_bound(tmp_path):
    assert cli.main(["bounds", "--preset", "fig3", "--out-dir", str(tmp_path)]) == 0
    notes = {r["note"] for r in read_rows(tmp_path / "fig3.bounds.csv")}
    assert any("no bound available" in n for n in notes)


def test_trace(tmp_path, capsys):
    assert cli.main(["trace", "--preset", "fig2", "--true-hyp", "2", "--nu", "3", "--b", "4",
                     "--seed", "1", "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "fig2.trace.csv")))
    assert rows[0] == ["n", "Y_1", "Y_2", "Y_3"]
    assert max(float(v) for v in rows[-1][1:]) >= 4
    assert "stopped at" in capsys.readouterr().out
    assert cli.main(["trace", "--preset", "fig2", "--true-hyp", "9", "--out-dir", str(tmp_path)]) == 1
