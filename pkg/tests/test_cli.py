import json
import subprocess
import sys

import pytest

from sdg.cli import build_parser, main
from sdg.mesh import read_poly2d


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_mesh_command(tmp_path, capsys):
    out = tmp_path / "m.poly2d"
    rc = main(["mesh", "--kind", "distorted", "--nx", "3", "--distortion", "0.3", "--out", str(out)])
    assert rc == 0
    assert read_poly2d(out).validate().n_cells == 9
    assert "min edge ratio" in capsys.readouterr().out
    # a regularity threshold the mesh cannot meet
    assert main(["mesh", "--kind", "rectangular", "--rho", "0.9", "--out", str(out)]) == 1


def test_mesh_command_bad_input(tmp_path, capsys):
    rc = main(["mesh", "--kind", "rectangular", "--distortion", "0.7", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "sdg: error" in capsys.readouterr().err


def test_run_command(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nlevels = 2 3 4\n[picard]\nmax_iters = 100\n[output]\ndirectory = res\n"
                   "[windows]\ne_uS_L2 = 1.0, 3.0\n")
    assert main(["run", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "PASS e_uS_L2" in out
    assert (tmp_path / "res" / "convergence.csv").exists()
    # an impossible window makes the run fail
    cfg.write_text("[run]\nlevels = 2 3 4\n[picard]\nmax_iters = 100\n[windows]\ne_uS_L2 = 5, 6\n")
    assert main(["run", "--config", str(cfg)]) == 1


def test_run_command_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nlevels = 4 2\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert main(["run", "--config", str(tmp_path / "none.ini")]) == 2


def test_verify_command(capsys):
    assert main(["verify", "--suite", "monotone"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["suite"] == "monotone" and rep["passed"]


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "sdg.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout
