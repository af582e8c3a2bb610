import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from stokes_tresca.cli import main
from stokes_tresca.mesh import FRICTION, generate_rectangle, save_msh

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_config(tmp_path, extra=""):
    path = tmp_path / "run.cfg"
    path.write_text(
        "mesh.nx = 2\nmesh.ny = 2\nbc.friction_sides = bottom\nforce.preset = shear(1)\n"
        "epsilon = 0.5\nepsilon_schedule = on\nmax_outer = 500\noutput.dir = out\n" + extra
    )
    return path


def test_solve_writes_outputs(tmp_path, capsys):
    assert main(["solve", str(small_config(tmp_path))]) == 0
    out = capsys.readouterr().out
    assert (tmp_path / "out" / "solution.vtk").is_file()
    assert (tmp_path / "out" / "convergence.csv").is_file()
    assert "outer iterations" in out


def test_output_dir_override_and_quiet(tmp_path, capsys):
    target = tmp_path / "elsewhere"
    assert main(["solve", str(small_config(tmp_path)), "--output-dir", str(target), "--quiet"]) == 0
    assert capsys.readouterr().out == ""
    assert (target / "solution.vtk").is_file() and not (tmp_path / "out").exists()


def test_only_requested_formats(tmp_path):
    assert main(["solve", str(small_config(tmp_path, "output.formats = csv\n"))]) == 0
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["convergence.csv"]


def test_non_convergence_exits_one_and_still_writes(tmp_path, capsys):
    cfg = tmp_path / "slow.cfg"
    cfg.write_text(small_config(tmp_path).read_text().replace("max_outer = 500", "max_outer = 1"))
    assert main(["solve", str(cfg)]) == 1
    assert "outer iteration" in capsys.readouterr().err
    rows = (tmp_path / "out" / "convergence.csv").read_text().splitlines()
    assert len(rows) == 2
    assert (tmp_path / "out" / "solution.vtk").is_file()


def test_missing_config_exits_two(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.cfg")]) == 2
    assert "missing.cfg" in capsys.readouterr().err


def test_bad_config_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("mesh.nx = 2\nmesh.ny = 2\nrho = -1\n")
    assert main(["solve", str(path)]) == 2
    assert "bad.cfg:3: rho must be > 0" in capsys.readouterr().err


def test_unknown_command_exits_two(capsys):
    assert main(["frobnicate"]) == 2


def test_mesh_info(tmp_path, capsys):
    path = tmp_path / "m.msh"
    save_msh(generate_rectangle(3, 2, tag_rule={"bottom": FRICTION}), path)
    assert main(["mesh-info", str(path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["vertices"] == 12 and info["triangles"] == 12
    assert info["friction_facets"] == 3


def test_mesh_info_bad_file(tmp_path, capsys):
    path = tmp_path / "bad.msh"
    path.write_text("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n")
    assert main(["mesh-info", str(path)]) == 2
    assert "bad.msh" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["cavity.cfg", "channel.cfg"])
def test_shipped_configs_parse(name):
    from stokes_tresca.fileio import parse_config

    run = parse_config(CONFIGS / name)
    mesh = run.build_mesh()
    assert mesh.n_triangles > 0
    run.build_force(mesh)


def test_shipped_cavity_config_solves(tmp_path):
    shutil.copy(CONFIGS / "cavity.cfg", tmp_path / "cavity.cfg")
    assert main(["solve", str(tmp_path / "cavity.cfg"), "--quiet"]) == 0
    assert (tmp_path / "out" / "cavity" / "solution.vtk").is_file()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stokes_tresca.cli", "solve", str(small_config(tmp_path)),
                           "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
