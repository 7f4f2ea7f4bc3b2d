import math
import subprocess
import sys

import pytest

from nlpotlab.cli import main


def test_cones_pgamma(capsys):
    assert main(["cones", "pgamma", "--n", "4", "--k", "2"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["n,k,p_gamma,exact", "4,2,4.0,4"]


def test_cones_pgamma_rejects_large_k(capsys):
    assert main(["cones", "pgamma", "--n", "4", "--k", "3"]) == 3


def test_wolff_eval(tmp_path, capsys):
    (tmp_path / "mu.txt").write_text(f"atom 0 0 0 {4 * math.pi!r}\n")
    (tmp_path / "pts.txt").write_text("0.001 0 0\n0 0.01 0\n")
    assert main(["wolff", "eval", "--measure", str(tmp_path / "mu.txt"), "--p", "2",
                 "--points", str(tmp_path / "pts.txt")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x1,x2,x3,W,singular_ratio"
    assert len(lines) == 3


def test_capacity_solve(tmp_path):
    out = tmp_path / "cap.csv"
    assert main(["capacity", "solve", "--domain", "ball:2", "--inner", "ball:1", "--p", "2",
                 "--cells", "12", "--octant", "--out", str(out)]) == 0
    header, row = out.read_text().splitlines()
    value = float(row.split(",")[0])
    assert abs(value - 8 * math.pi) / (8 * math.pi) < 0.25


def test_plaplace_then_cones_check(tmp_path):
    (tmp_path / "mu.txt").write_text(f"atom 0 0 0 {4 * math.pi!r}\n")
    field = tmp_path / "u.txt"
    assert main(["plaplace", "solve", "--measure", str(tmp_path / "mu.txt"), "--p", "2",
                 "--domain", "cube:1", "--cells", "8", "--octant", "--out", str(field)]) == 0
    assert field.read_text().startswith("dim 3\n")
    out = tmp_path / "mask.csv"
    assert main(["cones", "check", "--field", str(field), "--k", "1", "--exclude-radius", "0.3",
                 "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "x1,x2,x3,in_cone"


def test_asymptotics_fit(tmp_path, capsys):
    (tmp_path / "mu.txt").write_text(f"atom 0 0 0 {4 * math.pi!r}\n")
    assert main(["asymptotics", "fit", "--measure", str(tmp_path / "mu.txt"), "--p", "2"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header.startswith("m_liminf,")
    assert abs(float(row.split(",")[0]) - 1.0) < 1e-9


def test_thinness_classify(capsys):
    assert main(["thinness", "classify", "--family", "empty", "--p", "2", "--depth", "6"]) == 0
    captured = capsys.readouterr()
    assert "thin" in captured.err
    assert captured.out.splitlines()[0] == "i,term,partial_sum,verdict,beta"


def test_thinness_blowup_rejects_nonthin(tmp_path):
    code = main(["thinness", "blowup", "--family", "full_annuli", "--p", "2", "--depth", "5",
                 "--out", str(tmp_path / "b.txt")])
    assert code == 3
    assert not (tmp_path / "b.txt").exists()


def test_missing_measure_file(tmp_path):
    assert main(["wolff", "eval", "--measure", str(tmp_path / "x.txt"), "--p", "2",
                 "--points", str(tmp_path / "y.txt")]) == 3


def test_experiment_run(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nkind = cones\noutput = out\n[parameters]\nn = 4 6\nk = 2\n")
    assert main(["experiment", "run", str(cfg)]) == 0
    assert (tmp_path / "out" / "cones.csv").read_text().splitlines()[2] == "6,2,3.5"


def test_console_script_module():
    res = subprocess.run([sys.executable, "-m", "nlpotlab.cli", "cones", "pgamma", "--n", "6", "--k", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.splitlines()[1] == "6,2,3.5,7/2"


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["cones"])
    assert exc.value.code == 2
