import math
import time

import numpy as np
import pytest

from kansa.cli import load_config, main
from kansa.errors import ConfigError
from kansa.geometry import Rectangle, equispaced_grid, fill_distance
from kansa.interpolation import Interpolant


def _report(path):
    return dict(line.split(": ", 1) for line in path.read_text().splitlines())


def test_interpolate_single_site(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("0.3,0.2,2\n")
    assert main(["interpolate", str(data), "--out", str(tmp_path)]) == 0
    f = Interpolant.load(tmp_path / "interpolant.txt")
    np.testing.assert_array_equal(f.xi, [2.0])
    assert _report(tmp_path / "report.txt")["native_seminorm"] == "2"


def test_interpolate_grid_reports_fill(tmp_path):
    dom = Rectangle.cube(-math.pi / 2, math.pi / 2, 2)
    sites = equispaced_grid(dom, 3)
    vals = np.cos(sites.points).prod(1)
    data = tmp_path / "grid.csv"
    data.write_text("".join(f"{float(x)!r},{float(y)!r},{float(v)!r}\n" for (x, y), v in zip(sites.points, vals)))
    assert main(["interpolate", str(data), "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "report.txt")
    assert float(rep["fill"]) == pytest.approx(fill_distance(sites, dom, 200), rel=1e-11)
    assert float(rep["fill"]) == pytest.approx(math.pi / 4 * math.sqrt(2), rel=1e-2)
    assert int(rep["N"]) == 9


def test_interpolate_duplicate_rows(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("0,0,1\n1,0.5,2\n1,0.5,3\n")
    assert main(["interpolate", str(data), "--out", str(tmp_path)]) == 1
    assert "(1.0, 0.5)" in capsys.readouterr().err


def test_interpolate_malformed_row(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("# header comment\n0,0,1\n\n1,oops,2\n")
    assert main(["interpolate", str(data), "--out", str(tmp_path)]) == 1
    assert "d.csv:4" in capsys.readouterr().err


def test_interpolate_non_unisolvent(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("0,0,1\n0,1,2\n0,2,3\n")
    assert main(["interpolate", str(data), "--out", str(tmp_path), "--interp.m", "2"]) == 1
    assert "unisolvent" in capsys.readouterr().err


def test_solve_heat_slices(tmp_path):
    assert main(["solve", "--problem.name", "heat", "--grid", "3", "--steps", "10", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "solution.csv").read_text().splitlines()
    assert len({r.split(",")[0] for r in rows[1:]}) == 11
    diag = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert diag[0] == "N,h,q_X,fill,L_N,K_2,stability_product,apriori_bound,max_site_value"
    assert diag[1].startswith("9,0.1,")


def test_solve_nonconvergence(tmp_path, capsys):
    argv = ["solve", "--problem.name", "heat", "--grid", "3", "--steps", "10", "--theta", "0.5",
            "--scheme.fp_max_iter", "1", "--out", str(tmp_path)]
    assert main(argv) == 2
    assert "step k=9" in capsys.readouterr().err


def test_solve_kpz_reference_soft_check(tmp_path):
    assert main(["solve", "--grid", "5", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "report.txt")
    assert math.isfinite(float(rep["max_site_value"]))
    assert float(rep["max_site_value"]) <= float(rep["apriori_bound"])
    assert rep["apriori_check"] == "pass"


def test_solve_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert main(["solve", "--grid", "4", "--steps", "20", "--theta", "0.5", "--out", str(tmp_path / sub)]) == 0
    for name in ("solution.csv", "report.txt", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_diagnose_single_site(tmp_path):
    assert main(["diagnose", "--grid", "1", "--out", str(tmp_path)]) == 0
    assert _report(tmp_path / "report.txt")["L_N"] == "1"
    assert (tmp_path / "diagnostics.csv").read_text().splitlines()[1].split(",")[4] == "1"


def test_diagnose_two_sites(tmp_path):
    sites = tmp_path / "s.csv"
    sites.write_text("0,0\n1,0\n")
    assert main(["diagnose", "--sites.file", str(sites), "--kernel.alpha", "1", "--out", str(tmp_path)]) == 0
    assert float(_report(tmp_path / "report.txt")["L_N"]) == pytest.approx(1 / (1 - math.exp(-1)), rel=1e-10)


def test_diagnose_reference_grid_fast(tmp_path):
    start = time.perf_counter()
    assert main(["diagnose", "--grid", "5", "--out", str(tmp_path)]) == 0
    assert time.perf_counter() - start < 10
    rep = _report(tmp_path / "report.txt")
    assert rep["N"] == "25" and rep["ln_bound_check"] in ("pass", "flag")


def test_bench_default_rows(tmp_path):
    assert main(["bench", "kpz", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bench_kpz.csv").read_text().splitlines()
    assert lines[0] == "benchmark,N,h,rms_error,max_error,oracle"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["9", "16", "25"]
    assert 0.00137 <= float(lines[3].split(",")[3]) <= 0.00548


def test_bench_mc_deterministic(tmp_path):
    # fewer samples than the default keeps this quick; the contract does not depend on the count
    for sub, workers in (("a", "1"), ("b", "3")):
        argv = ["bench", "kpz", "--oracle", "mc", "--mc-seed", "7", "--bench.mc_samples", "1e5",
                "--bench.mc_workers", workers, "--out", str(tmp_path / sub)]
        assert main(argv) == 0
    assert (tmp_path / "a" / "bench_kpz.csv").read_bytes() == (tmp_path / "b" / "bench_kpz.csv").read_bytes()
    assert ",mc" in (tmp_path / "a" / "bench_kpz.csv").read_text()


def test_bench_failure_exit_code(tmp_path):
    # alpha so small the 5x5 system is numerically singular
    assert main(["bench", "heat", "--grid", "3,5", "--kernel.alpha", "1e-6", "--out", str(tmp_path)]) == 2
    assert "error,error" in (tmp_path / "bench_heat.csv").read_text()


def test_bench_grid_dump(tmp_path):
    argv = ["bench", "heat", "--grid", "3", "--steps", "10", "--bench.dump_grid", "true", "--out", str(tmp_path)]
    assert main(argv) == 0
    assert (tmp_path / "grid_heat_N9.csv").read_text().startswith("x1,x2,v_numeric,v_oracle\n")


def test_unknown_key(tmp_path, capsys):
    assert main(["solve", "--kernel.shape", "1", "--out", str(tmp_path)]) == 1
    assert "kernel.shape" in capsys.readouterr().err


def test_unknown_key_in_file(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[scheme]\nn = 5\nstep = 3\n")
    assert main(["diagnose", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "scheme.step" in capsys.readouterr().err


def test_config_file_and_override_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[kernel]\nalpha = 0.5\n\n[scheme]\nn = 5\ntheta = 0.5\n\n[bench]\ngrids = 3, 4\n")
    rc = load_config(cfg, [("scheme.n", "7")])
    assert rc["kernel.alpha"] == 0.5 and rc["scheme.n"] == 7 and rc["scheme.theta"] == 0.5
    assert rc["bench.grids"] == [3, 4]
    with pytest.raises(ConfigError):
        load_config(None, [("scheme.n", "many")])


def test_usage_errors_exit_one(capsys):
    assert main([]) == 1
    assert main(["bench", "wave"]) == 1
    assert main(["solve", "stray"]) == 1


def test_plugin_problem(tmp_path, monkeypatch):
    mod = tmp_path / "myprob.py"
    mod.write_text(
        "import numpy as np\n"
        "from kansa.solver import ParabolicProblem\n"
        "def make(T):\n"
        "    return ParabolicProblem(2, T, lambda t, x, z, p, G: -0.5 * np.trace(G, axis1=-2, axis2=-1),\n"
        "                            lambda x: np.cos(x).prod(-1), vectorized=True, name='mine')\n"
    )
    monkeypatch.syspath_prepend(str(tmp_path))
    assert main(["solve", "--problem.name", "myprob:make", "--grid", "3", "--steps", "5", "--out", str(tmp_path)]) == 0
    assert _report(tmp_path / "report.txt")["problem"] == "mine"
    assert main(["solve", "--problem.name", "nosuch:thing", "--out", str(tmp_path)]) == 1
