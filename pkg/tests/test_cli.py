"""Command line layer: domain grammar, config files, artifacts, exit codes."""

import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import plaplace
from plaplace.calculus import ScalarField, read_field_binary, read_field_csv, write_field_csv
from plaplace.cli import _jsonify, load_config, main, parse_domain
from plaplace.errors import ConfigError, FormatError
from plaplace.mesh import Circle, PeriodicGrid, WeightedGraph
from plaplace.solve import poisson_solve
from plaplace.sources import builtin_source
from plaplace.verify import EstimateReport

from schema_check import validate

SCHEMA_DIR = Path(plaplace.__file__).parent / "schema"


def load_schema(name):
    return json.loads((SCHEMA_DIR / name).read_text())


def run(argv, **env):
    return main([str(a) for a in argv])


# ---------------------------------------------------------------- domains

def test_parse_domain_torus():
    dom = parse_domain("torus(2, 8, 1)")
    assert isinstance(dom, PeriodicGrid)
    assert dom.d == 2 and dom.n == 8 and dom.L == 1.0
    assert dom.K == 0.0 and dom.N == 2.0

    dom = parse_domain("torus(3,4,2.5,-0.5,inf)")
    assert dom.d == 3 and dom.K == -0.5 and dom.N == math.inf


def test_parse_domain_circle():
    dom = parse_domain(" circle( 16 , 6.28 ) ")
    assert isinstance(dom, Circle)
    assert dom.n == 16 and dom.L == 6.28
    dom = parse_domain("circle(16, 6.28, 0.25, 4)")
    assert dom.K == 0.25 and dom.N == 4.0


def test_parse_domain_graph_file(tmp_path):
    path = tmp_path / "tri.graph"
    path.write_text(
        "vertex 0 1.0\nvertex 1 2.0\nvertex 2 0.5\n"
        "edge 0 1 1.0\nedge 1 2 2.0\nedge 0 2 1.0\n"
    )
    dom = parse_domain(str(path))
    assert isinstance(dom, WeightedGraph)
    assert dom.nv == 3 and dom.ne == 3


def test_parse_domain_errors(tmp_path):
    cases = [
        "klein(2, 8, 1)",            # unknown kind, not a file either
        "torus(2, 8)",               # wrong arity
        "torus(2, 8, 1, 0, 2, 9)",   # wrong arity
        "circle(16)",                # wrong arity
        "torus(two, 8, 1)",          # bad number
        "torus(2, 8, 1",             # unbalanced parens
        "circle(2, 6.28)",           # n < 4: ParameterError wrapped
        str(tmp_path / "nope.graph"),
    ]
    for text in cases:
        with pytest.raises(ConfigError):
            parse_domain(text)
    bad = tmp_path / "bad.graph"
    bad.write_text("vertex 0 1.0\nwidget\n")
    # an existing-but-malformed file surfaces the loader's own error
    with pytest.raises(FormatError):
        parse_domain(str(bad))


# ---------------------------------------------------------------- config

def test_load_config_defaults():
    cfg = load_config(None, 2.5)
    assert cfg.rp.p == 2.5
    assert cfg.inner_tol > 0 and cfg.max_outer >= 1


def test_load_config_overrides(tmp_path):
    path = tmp_path / "s.ini"
    path.write_text(
        "[solver]\n"
        "inner_tol = 1e-9\n"
        "outer_tol = 1e-7\n"
        "max_inner = 17\n"
        "max_outer = 33\n"
        "damping = 0.5\n"
        "[schedule]\n"
        "eps = 1e-2, 1e-4\n"
        "m = 4, inf\n"
    )
    cfg = load_config(str(path), 3.0)
    assert cfg.inner_tol == 1e-9
    assert cfg.outer_tol == 1e-7
    assert cfg.max_inner == 17
    assert cfg.max_outer == 33
    assert cfg.damping == 0.5
    assert cfg.eps_schedule == (1e-2, 1e-4)
    assert cfg.M_schedule == (4.0, math.inf)


def test_load_config_errors(tmp_path):
    cases = [
        "[solver]\nwarp = 9\n",          # unknown key
        "[rocket]\nfuel = 1\n",          # unknown section
        "[solver]\nmax_inner = soon\n",  # bad cast
        "[solver]\ndamping = 2.0\n",     # SolverConfig rejects
        "[schedule]\neps = \n",          # empty list
        "[solver\nbroken",               # INI syntax
    ]
    for i, text in enumerate(cases):
        path = tmp_path / f"c{i}.ini"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_config(str(path), 2.0)
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"), 2.0)


def test_jsonify_folds_special_values():
    out = _jsonify({"a": -0.0, "b": math.nan, "c": math.inf, "d": [np.float64(1.5), -math.inf]})
    assert repr(out["a"]) == "0.0"
    assert out["b"] is None
    assert out["c"] is None
    assert out["d"] == [1.5, None]
    assert isinstance(out["d"][0], float)


# ---------------------------------------------------------------- interval

def test_interval_command(tmp_path, capsys):
    rc = run(["interval", "--p", "2.5", "--domain", "circle(64, 6.283185307179586)",
              "--out", tmp_path])
    assert rc == 0
    doc = json.loads((tmp_path / "interval.json").read_text())
    validate(doc, load_schema("interval.v1.json"))
    assert doc["schema"] == "plaplace/interval/v1"
    assert doc["p_lo"] == 1.0
    assert doc["p_hi"] is None  # flat circle: the whole ray past 1
    assert doc["K_minus"] == 0.0
    assert doc["delta_X"] == 0.0
    # stdout carries the same document
    printed = json.loads(capsys.readouterr().out)
    printed.pop("timestamp")
    doc.pop("timestamp")
    assert printed == doc


def test_interval_curved(tmp_path):
    rc = run(["interval", "--p", "2", "--domain", "circle(64, 6.283185307179586, -0.5, inf)",
              "--out", tmp_path])
    assert rc == 0
    doc = json.loads((tmp_path / "interval.json").read_text())
    assert doc["p_hi"] is not None
    assert 1.0 < doc["p_lo"] < 2.0 < doc["p_hi"] < 3.0


# ---------------------------------------------------------------- solve

def test_solve_p2_matches_library(tmp_path):
    rc = run(["solve", "--p", "2", "--domain", "torus(2, 8, 1)", "--rhs", "smooth",
              "--out", tmp_path])
    assert rc == 0
    doc = json.loads((tmp_path / "solve.json").read_text())
    validate(doc, load_schema("solve.v1.json"))
    assert doc["method"] == "poisson"
    assert doc["iterations"] == {"outer": 1, "inner": 0}
    assert doc["eps_final"] == 0.0
    assert doc["M_final"] is None  # inf folds to null

    dom = PeriodicGrid(2, 8, 1.0)
    expected = poisson_solve(builtin_source("smooth", dom))
    u = read_field_csv(dom, tmp_path / "solution.csv")
    assert isinstance(u, ScalarField)
    assert np.array_equal(u.values, expected.values)


def test_solve_continuation_with_config(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text("[schedule]\neps = 1e-2, 1e-4, 1e-6\n")
    rc = run(["solve", "--p", "2.5", "--domain", "circle(16, 6.283185307179586)",
              "--rhs", "cosine", "--config", ini, "--out", tmp_path])
    assert rc == 0
    doc = json.loads((tmp_path / "solve.json").read_text())
    validate(doc, load_schema("solve.v1.json"))
    assert doc["method"] == "continuation"
    assert doc["eps_final"] == 1e-6
    assert len(doc["stage_drifts"]) == 2
    assert doc["residual"] < 1e-5


def test_solve_rhs_from_file_binary_out(tmp_path):
    dom = Circle(16, 6.283185307179586)
    f = builtin_source("cosine", dom)
    rhs_path = tmp_path / "f.csv"
    write_field_csv(f, rhs_path)
    rc = run(["solve", "--p", "2", "--domain", "circle(16, 6.283185307179586)",
              "--rhs", rhs_path, "--format", "binary", "--out", tmp_path])
    assert rc == 0
    u = read_field_binary(dom, tmp_path / "solution.bin")
    assert np.array_equal(u.values, poisson_solve(f).values)


def test_solve_graph_uses_variational(tmp_path):
    path = tmp_path / "tri.graph"
    path.write_text(
        "vertex 0 1.0\nvertex 1 1.0\nvertex 2 1.0\n"
        "edge 0 1 1.0\nedge 1 2 1.0\nedge 0 2 1.0\n"
    )
    f_path = tmp_path / "f.csv"
    g = WeightedGraph([(0, 1), (1, 2), (0, 2)], [1.0] * 3, [1.0] * 3, [1.0] * 3)
    write_field_csv(ScalarField(g, [1.0, -0.5, -0.5]), f_path)
    rc = run(["solve", "--p", "3", "--domain", path, "--rhs", f_path, "--out", tmp_path])
    assert rc == 0
    doc = json.loads((tmp_path / "solve.json").read_text())
    assert doc["method"] == "variational"
    assert doc["residual"] < 1e-5


def strip_timestamp(path):
    lines = Path(path).read_text().splitlines()
    return "\n".join(ln for ln in lines if '"timestamp"' not in ln)


def test_solve_deterministic_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["solve", "--p", "2.5", "--domain", "torus(2, 8, 1)", "--rhs", "smooth"]
    assert run(argv + ["--out", a]) == 0
    assert run(argv + ["--out", b]) == 0
    assert strip_timestamp(a / "solve.json") == strip_timestamp(b / "solve.json")
    assert (a / "solution.csv").read_bytes() == (b / "solution.csv").read_bytes()


# ---------------------------------------------------------------- eigen

def test_eigen_command(tmp_path):
    n, L = 16, 6.283185307179586
    rc = run(["eigen", "--p", "2", "--domain", f"circle({n}, {L})", "--out", tmp_path])
    assert rc == 0
    doc = json.loads((tmp_path / "eigen.json").read_text())
    validate(doc, load_schema("eigen.v1.json"))
    h = L / n
    closed = 4.0 * math.sin(math.pi / n) ** 2 / h**2
    assert abs(doc["lam"] - closed) <= 1e-9 * closed
    assert doc["residual"] < 1e-8
    u = read_field_csv(Circle(n, L), tmp_path / "eigenfunction.csv")
    assert abs(np.sum(np.abs(u.values) ** 2 * (L / n)) - 1.0) < 1e-10


# ---------------------------------------------------------------- verify

def test_verify_algebra_command(tmp_path, capsys):
    rc = run(["verify", "--suite", "algebra", "--samples", "2000", "--out", tmp_path])
    assert rc == 0
    out = capsys.readouterr().out
    assert "9/9 checks passed" in out
    assert out.count("PASS") == 9 and "FAIL" not in out
    doc = json.loads((tmp_path / "reports.json").read_text())
    validate(doc, load_schema("reports.v1.json"))
    assert len(doc["reports"]) == 9
    assert all(r["passed"] for r in doc["reports"])
    csv_text = (tmp_path / "reports.csv").read_text()
    assert csv_text.splitlines()[0] == "name,passed,lhs,rhs,fitted_constant,p,n"
    assert len(csv_text.splitlines()) == 10


def test_verify_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["verify", "--suite", "algebra", "--samples", "1000"]
    assert run(argv + ["--out", a]) == 0
    assert run(argv + ["--out", b]) == 0
    assert strip_timestamp(a / "reports.json") == strip_timestamp(b / "reports.json")
    assert (a / "reports.csv").read_bytes() == (b / "reports.csv").read_bytes()


def test_verify_failure_exit_code(tmp_path, capsys, monkeypatch):
    bad = EstimateReport("rigged", 2.0, 1.0, 2.0, False, {"p": 2.0})
    monkeypatch.setattr("plaplace.cli.algebra_suite", lambda **kw: [bad])
    rc = run(["verify", "--suite", "algebra", "--out", tmp_path])
    assert rc == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "0/1 checks passed" in out
    doc = json.loads((tmp_path / "reports.json").read_text())
    assert doc["reports"][0]["passed"] is False


# ---------------------------------------------------------------- study

def test_study_command(tmp_path, capsys):
    rc = run(["study", "--p", "2", "--domain", "circle(8, 6.283185307179586)",
              "--out", tmp_path])
    assert rc == 0
    doc = json.loads((tmp_path / "study.json").read_text())
    validate(doc, load_schema("study.v1.json"))
    assert doc["resolutions"] == [8, 16, 32]
    assert all(r["passed"] for r in doc["reports"])
    assert "drift" in capsys.readouterr().out
    assert (tmp_path / "study.csv").exists()


def test_study_rejects_graphs(tmp_path, capsys):
    path = tmp_path / "tri.graph"
    path.write_text(
        "vertex 0 1.0\nvertex 1 1.0\nvertex 2 1.0\n"
        "edge 0 1 1.0\nedge 1 2 1.0\nedge 0 2 1.0\n"
    )
    rc = run(["study", "--p", "2", "--domain", path, "--out", tmp_path])
    assert rc == 3
    assert "config error" in capsys.readouterr().err


# ---------------------------------------------------------------- exit codes

def test_exit_code_3_config_errors(tmp_path, capsys):
    argvs = [
        ["interval", "--p", "2", "--domain", "klein(2, 8)"],
        ["solve", "--p", "1", "--domain", "circle(16, 6.28)", "--rhs", "cosine"],
        ["solve", "--p", "2", "--domain", "circle(16, 6.28)", "--rhs", "nope"],
        ["frobnicate"],
        ["solve", "--p", "2"],  # missing required --domain
        ["verify", "--suite", "algebra", "--p", "2,zero"],
    ]
    for argv in argvs:
        rc = run(argv + ["--out", tmp_path])
        assert rc == 3, argv
        assert "plaplace: config error:" in capsys.readouterr().err


def test_exit_code_2_solver_failure(tmp_path, capsys):
    ini = tmp_path / "tight.ini"
    ini.write_text("[solver]\nmax_outer = 1\nouter_tol = 1e-18\n")
    rc = run(["solve", "--p", "3", "--domain", "circle(16, 6.283185307179586)",
              "--rhs", "cosine", "--config", ini, "--out", tmp_path])
    assert rc == 2
    assert "plaplace: solver failure:" in capsys.readouterr().err


def test_out_dir_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("PLAPLACE_OUT", str(tmp_path / "envdir"))
    rc = run(["interval", "--p", "2", "--domain", "circle(16, 6.28)"])
    assert rc == 0
    assert (tmp_path / "envdir" / "interval.json").exists()
