import json
import subprocess
import sys

import pytest

from gbe_transfer._io import read_csv
from gbe_transfer.cli import run


def capture(capsys, argv):
    code = run(argv + ["--out", "-"])
    return code, capsys.readouterr().out


def test_coupling_output_is_deterministic(capsys):
    argv = ["coupling", "--N", "60", "--replicas", "40", "--seed", "7"]
    _, a = capture(capsys, argv)
    _, b = capture(capsys, argv)
    assert a == b


def test_thread_count_does_not_change_results(capsys):
    argv = ["coupling", "--N", "60", "--replicas", "600", "--seed", "7"]
    _, a = capture(capsys, argv + ["--threads", "1"])
    _, b = capture(capsys, argv + ["--threads", "3"])
    assert read_csv(a)[2] == read_csv(b)[2]


def test_output_is_self_describing(capsys):
    _, text = capture(capsys, ["sample", "--N", "4", "--seed", "3", "--beta", "4"])
    meta, header, rows = read_csv(text)
    assert meta["library"] == "gbe_transfer"
    assert meta["spec"]["command"] == "sample"
    assert meta["spec"]["beta"] == 4.0 and meta["spec"]["seed"] == 3
    assert header == ["index", "b", "a"] and len(rows) == 4


def test_clt_summary(capsys):
    _, text = capture(capsys, ["clt", "--N", "40", "--replicas", "30", "--format", "json"])
    out = json.loads(text)
    assert out["predicted_var"] == 0.5
    assert out["predicted_mean_abs"] == 0.0
    assert out["meta"]["spec"]["f"] == "T2"


def test_psi_check_passes(capsys):
    _, text = capture(capsys, ["psi-check", "--max-span", "8", "--max-order", "3", "--families", "5",
                               "--format", "json"])
    out = json.loads(text)
    assert out["passed"] and out["parity_violations"] == 0


def test_charpoly_grid(capsys):
    _, text = capture(capsys, ["charpoly", "--N", "20", "--grid", "2,1.5+0.5j"])
    out = json.loads(text)
    assert len(out["grid"]) == 2 and out["grid"][1]["z_im"] == 0.5


def test_field_cov_closed(capsys):
    _, text = capture(capsys, ["field-cov", "--z", "2"])
    _, _, rows = read_csv(text)
    assert abs(float(rows[0][4]) - 0.0745046) < 1e-7


def test_asymptotics_summary(capsys):
    _, text = capture(capsys, ["asymptotics", "--N", "100,200"])
    out = json.loads(text)
    assert len(out["plancherel_rotach"]) == 2


def test_domain_error_exit_code(capsys):
    code = run(["coupling", "--N", "50", "--z", "0.5", "--replicas", "2", "--out", "-"])
    assert code == 3
    assert "data error" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["clt", "--N", "20", "--f", "nonsense"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run(["sample", "--N", "-4"])
    assert exc.value.code == 2


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GBE_TRANSFER_OUT", str(tmp_path))
    assert run(["sample", "--N", "5"]) == 0
    path = tmp_path / "sample.csv"
    assert path.exists()
    assert capsys.readouterr().out.strip() == str(path)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gbe_transfer", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
