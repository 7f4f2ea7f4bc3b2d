import csv
import io

import pytest

from nlpotlab.experiment import EXIT_CONFIG, EXIT_OK, ConfigError, load_config, run


def write_cfg(tmp_path, kind, params="", name="cfg.ini", extra=""):
    path = tmp_path / name
    path.write_text(f"[experiment]\nkind = {kind}\noutput = out_{name}\nseed = 7\n{extra}\n[parameters]\n{params}\n")
    return path


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_wolff_asymptotics_final_ratio(tmp_path):
    cfg = write_cfg(tmp_path, "wolff-asymptotics", "n = 3\np = 2\natom_mass = 1\n")
    assert run(cfg, io.StringIO()) == EXIT_OK
    table = rows(tmp_path / "out_cfg.ini" / "wolff_ladder.csv")
    assert table[0][-1] == "singular_ratio"
    assert abs(float(table[-1][-1]) - 1.0) < 1e-2
    assert (tmp_path / "out_cfg.ini" / "singular_ratio.svg").is_file()


def test_cones_row(tmp_path):
    cfg = write_cfg(tmp_path, "cones", "n = 4\nk = 2\n")
    assert run(cfg, io.StringIO()) == EXIT_OK
    lines = (tmp_path / "out_cfg.ini" / "cones.csv").read_text().splitlines()
    assert lines == ["n,k,p_gamma", "4,2,4.0"]


def test_byte_identical_reruns(tmp_path):
    a = write_cfg(tmp_path, "plaplace-asymptotics", "atom_mass = 12.566370614359172\ndensity = 1\ndepth = 6\n", "a.ini")
    b = write_cfg(tmp_path, "plaplace-asymptotics", "atom_mass = 12.566370614359172\ndensity = 1\ndepth = 6\n", "b.ini")
    assert run(a, io.StringIO()) == EXIT_OK and run(b, io.StringIO()) == EXIT_OK
    for name in ("m_ladder.csv", "m_fit.csv", "m_ladder.svg"):
        assert (tmp_path / "out_a.ini" / name).read_bytes() == (tmp_path / "out_b.ini" / name).read_bytes()
    fit = rows(tmp_path / "out_a.ini" / "m_fit.csv")
    assert fit[0][0] == "m_liminf" and abs(float(fit[1][0]) - 1.0) < 0.05


def test_full_precision_cells(tmp_path):
    cfg = write_cfg(tmp_path, "wolff-asymptotics", "atom_mass = 0.3\ndepth = 4\n")
    run(cfg, io.StringIO())
    vals = [float(r[3]) for r in rows(tmp_path / "out_cfg.ini" / "wolff_ladder.csv")[1:]]
    text = (tmp_path / "out_cfg.ini" / "wolff_ladder.csv").read_text()
    assert all(repr(v) in text for v in vals)


def test_capacity_study(tmp_path):
    cfg = write_cfg(tmp_path, "capacity-study", "cells = 8 12\n")
    assert run(cfg, io.StringIO()) == EXIT_OK
    table = rows(tmp_path / "out_cfg.ini" / "capacity.csv")
    assert len(table) == 3


def test_thinness_study(tmp_path):
    cfg = write_cfg(tmp_path, "thinness-study",
                    "families = empty full_annuli\ncriterion = singular\ni_max = 5\nball_cells = 12\nannulus_cells = 12\n")
    assert run(cfg, io.StringIO()) == EXIT_OK
    summary = rows(tmp_path / "out_cfg.ini" / "thinness_summary.csv")
    verdicts = {r[0]: r for r in summary[1:]}
    assert any("thin" in r for r in verdicts.values())
    assert (tmp_path / "out_cfg.ini" / "thinness.svg").is_file()


def test_blowup_study(tmp_path):
    cfg = write_cfg(tmp_path, "blowup", "family = power:4\ni_max = 5\nball_cells = 12\n")
    assert run(cfg, io.StringIO()) == EXIT_OK
    assert (tmp_path / "out_cfg.ini" / "blowup_measure.txt").is_file()
    assert rows(tmp_path / "out_cfg.ini" / "blowup.csv")[0][0] == "i"


@pytest.mark.parametrize("text", [
    "not an ini file",
    "[experiment]\nkind = nonsense\noutput = out\n",
    "[experiment]\nkind = cones\n",
    "[experiment]\nkind = cones\noutput = out\n[parameters]\nn = 3\nk = 3\n",
    "[experiment]\nkind = cones\noutput = out\n[parameters]\nbogus = 1\n",
    "[experiment]\nkind = wolff-asymptotics\noutput = out\n[parameters]\nmeasure = nowhere.txt\n",
    "[experiment]\nkind = wolff-asymptotics\noutput = out\n[parameters]\np = 5\n",
    "[experiment]\nkind = thinness-study\noutput = out\n[parameters]\nfamilies = spiral\n",
    "[experiment]\nkind = cones\noutput = out\n[extra]\n",
])
def test_bad_config_exit_3_without_outputs(tmp_path, text):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    err = io.StringIO()
    assert run(path, err) == EXIT_CONFIG
    assert "error" in err.getvalue()
    assert not (tmp_path / "out").exists()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
    assert run(tmp_path / "nope.ini", io.StringIO()) == EXIT_CONFIG


def test_measure_file_reference(tmp_path):
    (tmp_path / "mu.txt").write_text("atom 0 0 0 1\n")
    cfg = write_cfg(tmp_path, "wolff-asymptotics", "measure = mu.txt\ndepth = 5\n")
    loaded = load_config(cfg)
    assert loaded.params["measure"] == tmp_path / "mu.txt"
    assert run(cfg, io.StringIO()) == EXIT_OK
