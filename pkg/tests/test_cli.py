import json
import shutil

import pytest

from gammamap import cli
from gammamap.localization import OK, read_report
from gammamap.physics import read_events
from gammamap.reconstruction import read_grid
from gammamap.scenarios import bundled_paths
from gammamap.simulator import read_truth, save_scenario

from conftest import small_scenario


@pytest.fixture
def scenario_file(tmp_path):
    scn = small_scenario(seed=5, dwell=8.0)
    scn.settings = {"reconstruction": {"resolution": "0.2"}}
    path = tmp_path / "small.cfg"
    save_scenario(scn, path)
    return path


def run(*args):
    return cli.main([str(a) for a in args])


def test_full_run_writes_artifacts(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert run("run", "--scenario", scenario_file, "--out", out, "--seed", 7) == 0
    for name in ("events.txt", "truth.txt", "poses.txt", "spectrum.txt", "grid_Na-22.gvx", "grid_Na-22.txt",
                 "localization.txt", "report.txt", "manifest.json", "reconstruction.json"):
        assert (out / name).exists(), name
    rows = read_report(out / "report.txt")
    assert [(r.window, r.status) for r in rows] == [("Na-22", OK)]
    assert "Na-22" in capsys.readouterr().out
    events = read_events(out / "events.txt")
    assert set(read_truth(out / "truth.txt")) == {e.event_id for e in events}
    grid = read_grid(out / "grid_Na-22.gvx")
    assert grid.resolution == 0.2
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 7 and set(man["stages"]) == set(cli.STAGES)


def test_rerun_is_byte_identical(scenario_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("run", "--scenario", scenario_file, "--out", a, "--seed", 3) == 0
    assert run("run", "--scenario", scenario_file, "--out", b, "--seed", 3) == 0
    for name in ("events.txt", "truth.txt", "grid_Na-22.gvx", "report.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_later_stages_reuse_events(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "simulate") == 0
    events = (out / "events.txt").read_bytes()
    assert not (out / "report.txt").exists()
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "localize,reconstruct") == 0
    assert (out / "events.txt").read_bytes() == events
    assert (out / "localization.txt").exists() and not (out / "report.txt").exists()
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "report", "--iterations", 3) == 2
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "report") == 0


def test_mismatched_reuse_refused(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "simulate", "--seed", 1) == 0
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "reconstruct", "--seed", 2) == 2
    err = capsys.readouterr().err
    assert err.startswith("ERROR stage=input type=InvalidInput message=")
    assert run("run", "--scenario", scenario_file, "--out", tmp_path / "empty", "--stages", "localize") == 2


def test_invalid_inputs(scenario_file, tmp_path, capsys):
    assert run("run", "--scenario", tmp_path / "nope.cfg", "--out", tmp_path / "o") == 2
    assert run("run", "--scenario", scenario_file, "--out", tmp_path / "o", "--stages", "fly") == 2
    assert run("run", "--scenario", scenario_file, "--out", tmp_path / "o", "--perturb-pose", "0.1") == 2
    assert run("run", "--scenario", scenario_file, "--out", tmp_path / "o", "--window-width", "200") == 2
    assert run("run", "--scenario", scenario_file, "--out", tmp_path / "o", "--resolution", "-1") == 2
    lines = [l for l in capsys.readouterr().err.splitlines() if l.startswith("ERROR")]
    assert len(lines) == 5


def test_stage_failure_reported(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "simulate") == 0
    (out / "events.txt").write_text("garbage\n")
    assert run("run", "--scenario", scenario_file, "--out", out, "--stages", "reconstruct") == 1
    assert "ERROR stage=reconstruct type=EventFormatError" in capsys.readouterr().err


def test_perturb_and_window_flags(scenario_file, tmp_path):
    out = tmp_path / "out"
    args = ("run", "--scenario", scenario_file, "--out", out, "--perturb-pose", "0.05,0.01", "--window-width", "30")
    assert run(*args) == 0
    assert (out / "poses_reconstruction.txt").exists()
    assert json.loads((out / "manifest.json").read_text())["perturb_pose"] == [0.05, 0.01]


def test_table1_with_missing_files(tmp_path, capsys):
    src = bundled_paths()[1]
    scen = tmp_path / "scen"
    scen.mkdir()
    shutil.copy(src, scen / src.name)
    shutil.copy(src.with_name("test2_trajectory.txt"), scen / "test2_trajectory.txt")
    status = run("table1", "--scenario-dir", scen, "--out", tmp_path / "runs", "--resolution", 0.25)
    assert status == 1
    captured = capsys.readouterr()
    table = (tmp_path / "runs" / "table1.txt").read_text()
    assert captured.out == table
    assert "failed: InvalidInput" in table
    assert "mean error over ok rows" in table
    assert captured.err.count("ERROR stage=input") == 8


def test_generate_scenarios(tmp_path):
    assert run("scenarios", "--out", tmp_path) == 0
    assert sorted(p.name for p in tmp_path.glob("*.cfg")) == sorted(p.name for p in bundled_paths())
