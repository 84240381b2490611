import json
import subprocess
import sys

import pytest

from violmap.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK, EXIT_STAGE, main

SMALL = "synth.rows = 3\nsynth.cols = 3\nsynth.n_trajectories = 40\nsynth.n_turn_signs = 4\nsynth.n_parking_signs = 4\n"


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    conf = root / "synth.conf"
    conf.write_text(SMALL)
    assert main(["synth", "--config", str(conf), "--seed", "42", "--out", str(root / "city")]) == EXIT_OK
    return root / "city"


def test_synth_writes_inputs_and_config(city):
    for name in ("network.txt", "trajectories.csv", "signs.jsonl", "limits.csv", "truth.csv", "pipeline.conf"):
        assert (city / name).is_file()
    assert json.loads((city / "planted.json").read_text())["seed"] == 42


def test_synth_same_seed_same_files(city, tmp_path):
    conf = tmp_path / "s.conf"
    conf.write_text(SMALL)
    assert main(["synth", "--config", str(conf), "--seed", "42", "--out", str(tmp_path / "again")]) == EXIT_OK
    for name in ("network.txt", "trajectories.csv", "signs.jsonl", "limits.csv", "truth.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (city / name).read_bytes()


def test_run_then_single_stage(city, capsys):
    assert main(["run", "--config", str(city / "pipeline.conf")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "match:" in out and "export:" in out
    assert (city / "out" / "prone.geojson").is_file()
    assert main(["export", "--config", str(city / "pipeline.conf"), "--hour", "8"]) == EXIT_OK
    assert (city / "out" / "prone_h08.geojson").is_file()
    assert main(["run", "--config", str(city / "pipeline.conf"), "--stage", "infer"]) == EXIT_OK


def test_out_flag_redirects(city, tmp_path):
    assert main(["run", "--config", str(city / "pipeline.conf"), "--out", str(tmp_path / "o"), "--workers", "2"]) \
        == EXIT_OK
    assert (tmp_path / "o" / "report.json").is_file()


def test_missing_input_exits_3(city, tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text((city / "pipeline.conf").read_text().replace("trajectories.csv", "missing.csv")
                    .replace("network = ", f"network = {city}/").replace("signs = ", f"signs = {city}/")
                    .replace("limits = ", f"limits = {city}/"))
    assert main(["run", "--config", str(conf)]) == EXIT_INPUT
    assert "missing.csv" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["zeta = 0\n", "nonsense = 1\n", "synth.colour = 3\n"])
def test_config_errors_exit_2(tmp_path, text):
    conf = tmp_path / "c.conf"
    conf.write_text(text)
    cmd = "synth" if text.startswith("synth.") else "run"
    assert main([cmd, "--config", str(conf), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_missing_config_and_bad_hour_exit_2(tmp_path, city):
    assert main(["run", "--config", str(tmp_path / "absent.conf")]) == EXIT_CONFIG
    assert main(["export", "--config", str(city / "pipeline.conf"), "--hour", "24"]) == EXIT_CONFIG


def test_stage_failure_exits_4(city, tmp_path):
    import shutil
    shutil.copytree(city, tmp_path / "c")
    (tmp_path / "c" / "out" / "bunches.jsonl").write_text('{"bunch_id": "X", "members": "oops"}\n')
    assert main(["violations", "--config", str(tmp_path / "c" / "pipeline.conf")]) == EXIT_STAGE


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "violmap", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "synth" in done.stdout
