import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gapcurve.cli import main
from gapcurve.geometry import arclength_curve, read_curve_csv, write_curve_csv
from gapcurve.potential import Potential
from gapcurve.inverse import SolverConfig

from conftest import decaying_potential, torus_knot


@pytest.fixture
def work(tmp_path):
    def path(name):
        return str(tmp_path / name)
    return path


def write_circle(path, n=128):
    p = 2 * np.pi * np.arange(n) / n
    with open(path, "w") as fh:
        fh.write("t,x,y,z\n")
        for j, a in enumerate(p):
            fh.write(f"{float(a)!r},{float(np.cos(a))!r},{float(np.sin(a))!r},0\n")


def run(*args):
    return main([str(a) for a in args])


def test_ingest_circle(work):
    write_circle(work("c.csv"))
    assert run("ingest", "--input", work("c.csv"), "--output", work("q.json")) == 0
    q = Potential.load(work("q.json"))
    assert np.allclose(q.samples, 1.0, atol=1e-10) and abs(q.theta) < 1e-12
    assert run("ingest", "--input", work("c.csv"), "--output", work("q64.json"), "--grid", 64) == 0
    assert Potential.load(work("q64.json")).n == 64


def test_ingest_errors(work, capsys):
    t = np.arange(16) / 16
    with open(work("open.csv"), "w") as fh:
        fh.write("t,x,y,z\n" + "".join(f"{a},{a},0,0\n" for a in t))
    assert run("ingest", "--input", work("open.csv"), "--output", work("q.json")) == 1
    assert "not closed" in capsys.readouterr().err
    assert not os.path.exists(work("q.json"))
    with open(work("bad.csv"), "w") as fh:
        fh.write("t,x,y,z\n0,1,0,0\n1,0,x,0\n")
    assert run("ingest", "--input", work("bad.csv"), "--output", work("q.json")) == 2
    assert "line 3" in capsys.readouterr().err
    assert not os.path.exists(work("q.json"))


def test_spectrum_and_determinism(work):
    Potential.from_function(lambda t: 1.0, 128, 2 * np.pi).save(work("q.json"))
    for name in ("a", "b"):
        assert run("spectrum", "--input", work("q.json"), "--output", work(f"{name}.json"),
                   "--modes", 10, "--diagnostics", work(f"{name}.csv")) == 0
    with open(work("a.json"), "rb") as fa, open(work("b.json"), "rb") as fb:
        assert fa.read() == fb.read()
    with open(work("a.csv"), "rb") as fa, open(work("b.csv"), "rb") as fb:
        assert fa.read() == fb.read()
    doc = json.load(open(work("a.json")))
    assert doc["finite_gap"]["verdict"] is True
    assert len(doc["entries"]) == 21
    rows = open(work("a.csv")).read().splitlines()
    assert rows[0].startswith("k,lambda_re") and len(rows) == 22


def test_spectrum_default_diagnostics_path(work):
    decaying_potential(n=128).save(work("q.json"))
    assert run("spectrum", "--input", work("q.json"), "--output", work("s.json")) == 0
    assert os.path.exists(work("diagnostics.csv"))


def test_resolution_error_exit_code(work):
    Potential.from_function(lambda t: 40 * np.exp(6j * np.pi * t), 16, 1.0).save(work("q.json"))
    assert run("spectrum", "--input", work("q.json"), "--output", work("s.json"), "--modes", 5) == 3
    assert not os.path.exists(work("s.json"))


def test_parse_error_exit_code(work):
    with open(work("q.json"), "w") as fh:
        fh.write('{"n": 8}')
    assert run("spectrum", "--input", work("q.json"), "--output", work("s.json")) == 2
    decaying_potential(n=128).save(work("q.json"))
    assert run("approximate", "--input", work("q.json"), "--output", work("o.json")) == 2
    assert run("spectrum", "--input", work("q.json"), "--output", work("s.json"), "--grid", 7) == 2
    with pytest.raises(SystemExit) as err:
        run("spectrum", "--input", work("q.json"))
    assert err.value.code == 2


def test_approximate(work):
    decaying_potential().save(work("q.json"))
    SolverConfig(N=2).save(work("cfg.json"))
    assert run("approximate", "--input", work("q.json"), "--output", work("fg.json"),
               "--trunc", 6, "--config", work("cfg.json"), "--space", "r3") == 0
    rep = json.load(open(work("report.json")))
    for key in ("iterations", "residual_history", "l2_distance", "theta", "N"):
        assert key in rep
    assert rep["residual"] < 1e-8
    assert "skipped" in rep["closing"]
    assert Potential.load(work("fg.json")).n == 256


def test_approximate_divergence_exit_code(work, capsys):
    decaying_potential().save(work("q.json"))
    SolverConfig(N=2, max_iter=0).save(work("cfg.json"))
    code = run("approximate", "--input", work("q.json"), "--output", work("fg.json"),
               "--trunc", 6, "--config", work("cfg.json"))
    assert code == 4
    assert "last residual" in capsys.readouterr().err
    assert not os.path.exists(work("fg.json")) and not os.path.exists(work("report.json"))


def test_reconstruct_and_compare(work):
    Potential.from_function(lambda t: 1.0, 128, 2 * np.pi).save(work("q.json"))
    assert run("reconstruct", "--input", work("q.json"), "--output", work("c.csv"),
               "--report", work("r.json")) == 0
    first = open(work("c.csv")).readline()
    assert first.startswith("# endpoint_gap=")
    assert float(first.split()[1].split("=")[1]) < 1e-8
    assert json.load(open(work("r.json")))["endpoint_gap"] < 1e-8
    write_circle(work("ref.csv"))
    assert run("compare", "--input", work("c.csv"), "--input", work("ref.csv"),
               "--output", work("d.json"), "--align") == 0
    d = json.load(open(work("d.json")))
    assert d["aligned"] is True and d["W2,2"] < 1e-8
    assert run("compare", "--input", work("c.csv"), "--output", work("d2.json")) == 2


def test_reconstruct_vacuum_line(work):
    Potential.zero(16, 1.0).save(work("q.json"))
    assert run("reconstruct", "--input", work("q.json"), "--output", work("c.csv")) == 0
    c = read_curve_csv(work("c.csv"))
    assert np.allclose(c.points[:, 1:], 0) and np.allclose(np.diff(c.points[:, 0]), 1 / 16)


def test_diagnose(work):
    write_curve_csv(arclength_curve(torus_knot, 256, "r3"), work("k.csv"))
    assert run("ingest", "--input", work("k.csv"), "--output", work("q.json")) == 0
    assert run("diagnose", "--input", work("q.json"), "--output", work("d.json"), "--modes", 8,
               "--tol", 1e-5) == 0
    d = json.load(open(work("d.json")))
    assert d["closing_r3"]["closed"] is True
    assert "closing_s3" in d and len(d["d_k"]) == 17


def test_thread_env(work, monkeypatch):
    Potential.zero(16, 1.0).save(work("q.json"))
    monkeypatch.setenv("GAPCURVE_THREADS", "zero")
    assert run("diagnose", "--input", work("q.json"), "--output", work("d.json")) == 2
    monkeypatch.setenv("GAPCURVE_THREADS", "1")
    assert run("diagnose", "--input", work("q.json"), "--output", work("d.json")) == 0


def test_entry_point(work):
    Potential.zero(16, 1.0).save(work("q.json"))
    proc = subprocess.run([sys.executable, "-m", "gapcurve.cli", "reconstruct", "--input", work("q.json"),
                           "--output", work("c.csv"), "--space", "s3"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert read_curve_csv(work("c.csv")).space == "s3"
