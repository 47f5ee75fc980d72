import csv
import json
import subprocess

import pytest

from elastweak.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_MESH, EXIT_OK, RunConfig, main
from elastweak.mesh import build_box_mesh, write_mesh_file
from elastweak.verify import CSV_HEADER


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_solve_smoke(tmp_path):
    code = main(["solve", "--mesh", "box:2", "--degree", "0", "--case", "trig",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "summary.csv")
    assert rows[0][0] == "h" and float(rows[1][rows[0].index("err_sigma")]) > 0
    vtk = (tmp_path / "solution.vtk").read_text()
    assert "CELL_DATA 48" in vtk and "VECTORS displacement double" in vtk


def test_solve_outputs_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert main(["solve", "--mesh", "box:1", "--case", "poly-quadratic",
                     "--out", str(tmp_path / sub)]) == EXIT_OK
    for name in ("summary.csv", "solution.vtk"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("argv,needle", [
    (["solve", "--mu", "0"], "mu > 0"),
    (["solve", "--lambda", "-1"], "lambda >= 0"),
    (["solve", "--simplified", "--degree", "1"], "simplified"),
    (["solve", "--degree", "2"], "degree"),
    (["solve", "--mesh", "box:0"], "n >= 1"),
    (["solve", "--mesh", "sphere:3"], "box:N"),
    (["solve", "--case", "bogus"], "case"),
    (["convergence", "--mesh", "box:1,2", "--assert-rates", "0.9"], "at least 3"),
])
def test_config_errors(argv, needle, capsys):
    assert main(argv) == EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_mesh_errors(tmp_path, capsys):
    assert main(["solve", "--mesh", f"file:{tmp_path / 'none.msh'}"]) == EXIT_MESH
    bad = tmp_path / "flat.msh"
    bad.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n"
                   "3 0 1 0\n4 1 1 0\n$EndNodes\n$Elements\n1\n1 4 2 0 1 1 2 3 4\n$EndElements\n")
    assert main(["solve", "--mesh", f"file:{bad}"]) == EXIT_MESH
    assert "mesh error" in capsys.readouterr().err


def test_solve_on_mesh_file(tmp_path):
    path = tmp_path / "box.msh"
    write_mesh_file(path, build_box_mesh(1))
    assert main(["solve", "--mesh", f"file:{path}", "--case", "poly-linear",
                 "--out", str(tmp_path)]) == EXIT_OK
    row = dict(zip(*read_csv(tmp_path / "summary.csv")))
    assert float(row["err_sigma"]) < 1e-9


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nmesh = box:3\ndegree = 1\nlambda = 5\ncase = divfree\n"
                   "simplified = false\n")
    from elastweak.cli import build_parser, make_config
    conf = make_config(build_parser().parse_args(["solve", "--config", str(cfg), "--degree", "0"]))
    assert (conf.mesh, conf.degree, conf.lam, conf.case) == ("box:3", 0, 5.0, "divfree")
    cfg.write_text("colour = blue\n")
    assert main(["solve", "--config", str(cfg)]) == EXIT_CONFIG


def test_run_config_levels():
    assert RunConfig("convergence", mesh="box:2,4,8").mesh_levels() == ("box", [2, 4, 8])
    assert RunConfig("solve", mesh="file:a.msh").mesh_levels() == ("file", ["a.msh"])


def test_convergence_assert_rates(tmp_path):
    code = main(["convergence", "--mesh", "box:2,4,8", "--degree", "0", "--assert-rates", "0.9",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "convergence.csv")
    assert rows[0] == CSV_HEADER and len(rows) == 4


def test_convergence_rate_assertion_fails_when_unmet(tmp_path):
    code = main(["convergence", "--mesh", "box:1,2,3", "--case", "poly-quadratic",
                 "--assert-rates", "5"])
    assert code == EXIT_FAIL


def test_check_default_all_pass(tmp_path, capsys):
    assert main(["check", "--mesh", "box:1", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert lines and all(ln.startswith("PASS") for ln in lines)
    summary = json.loads(out.splitlines()[-1].removeprefix("SUMMARY "))
    assert summary["failed"] == 0 and summary["passed"] == len(lines)
    assert len(read_csv(tmp_path / "checks.csv")) == len(lines) + 1


def test_check_suite_filter(capsys):
    assert main(["check", "--suite", "exactness", "--degree", "0"]) == EXIT_OK
    names = [ln.split()[1] for ln in capsys.readouterr().out.splitlines()
             if ln.startswith(("PASS", "FAIL"))]
    assert names and all(n.startswith("exactness.") for n in names)


def test_check_mutation_names_cross_skew(capsys):
    code = main(["check", "--suite", "identity", "--trials", "5", "--inject-fault", "vect-sign"])
    assert code == EXIT_FAIL
    out = capsys.readouterr().out
    assert "FAIL identity.cross_skew" in out
    assert "identity.cross_skew" in json.loads(out.splitlines()[-1][8:])["failures"]


def test_infsup_three_levels(tmp_path):
    assert main(["infsup", "--mesh", "box:1,2,3", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "infsup.csv")
    assert rows[0] == ["level", "h", "beta"]
    assert len(rows) == 4 and all(float(r[2]) > 0 for r in rows[1:])


def test_infsup_variation_assertion():
    assert main(["infsup", "--mesh", "box:1,2,3", "--assert-variation", "0.2"]) == EXIT_OK


def test_infsup_negative_control_fails_assertion(capsys):
    code = main(["infsup", "--mesh", "box:1,2", "--negative-control", "q-high",
                 "--assert-variation", "0.2"])
    assert code == EXIT_FAIL
    rows = [ln.split(",") for ln in capsys.readouterr().out.splitlines()[1:]]
    assert float(rows[1][2]) < float(rows[0][2]) / 2


def test_console_script_help():
    res = subprocess.run(["elastweak", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for flag in ("--mesh", "--degree", "--lambda", "--mu", "--case", "--simplified", "--out",
                 "--seed", "--threads", "--assert-rates", "--config"):
        assert flag in res.stdout
