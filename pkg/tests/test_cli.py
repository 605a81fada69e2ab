import json

import numpy as np
import pytest

from flowbalance import cli
from flowbalance import pipeline as pl
from flowbalance.bistochastic import bistochastic_deviation
from flowbalance.flowmatrix import correlation, load_matrix, matrix_stats
from flowbalance.graphcluster import strong_components, unit_entry_digraph, weak_components

TOY = """origin,dest,flow
"01001","01003",120
"01003","01001",80
"01003","02010",15
"02010","01001",40
"01001","02010",5
"02010","01003",9
"""


@pytest.fixture
def toy(tmp_path):
    flows = tmp_path / "flows.csv"
    flows.write_text(TOY)
    labels = tmp_path / "labels.txt"
    labels.write_text("01001\n01003\n02010\n")
    return flows, labels


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_ingest_balance_report(toy, tmp_path):
    flows, labels = toy
    m = tmp_path / "raw.bstm"
    assert run("ingest", "--flows", flows, "--labels", labels, "--out", m) == 0
    raw = load_matrix(m)
    assert raw.codes == ["01001", "01003", "02010"]
    assert raw.entries[0, 1] == 120

    out, rep = tmp_path / "sk.bstm", tmp_path / "sk.json"
    assert run("balance", "--matrix", m, "--out", out, "--method", "sk", "--report", rep) == 0
    report = json.loads(rep.read_text())
    assert set(report) == {"iterations", "last_step_delta", "max_sum_deviation", "converged", "method"}
    assert report["method"] == "KL_Sinkhorn" and report["converged"]
    assert bistochastic_deviation(load_matrix(out)) <= 1e-12

    sq = tmp_path / "sq.csv"
    assert run("balance", "--matrix", m, "--out", sq, "--method", "sqnorm", "--variant", "plain",
               "--tol", "1e-25") == 0
    assert bistochastic_deviation(load_matrix(sq)) <= 1e-9

    stats = tmp_path / "stats.json"
    assert run("report", "--matrix", out, "--compare", m, "--out", stats) == 0
    doc = json.loads(stats.read_text())
    assert doc["hollow"] is True
    assert doc["correlations"][str(m)] == pytest.approx(correlation(load_matrix(out), raw))


def test_balance_strict_nonconvergence(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("a,b\n1.0,1.0\n0.0,1.0\n")
    assert run("balance", "--matrix", m, "--out", tmp_path / "o.bstm", "--max-iter", "20", "--strict") == 3
    assert run("balance", "--matrix", m, "--out", tmp_path / "o.bstm", "--max-iter", "20") == 0


def test_balance_invalid_input(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("a,b\n1.0,1.0\n0.0,0.0\n")
    assert run("balance", "--matrix", m, "--out", tmp_path / "o.bstm") == 2
    assert run("balance", "--matrix", tmp_path / "missing.bstm", "--out", tmp_path / "o.bstm") == 2


def test_cluster_and_census(toy, tmp_path):
    flows, labels = toy
    m = tmp_path / "raw.bstm"
    run("ingest", "--flows", flows, "--out", m)
    sk = tmp_path / "sk.bstm"
    run("balance", "--matrix", m, "--out", sk)
    dj, nwk, cen = tmp_path / "d.json", tmp_path / "d.nwk", tmp_path / "c.json"
    assert run("cluster", "--matrix", sk, "--mode", "hierarchy", "--out-dendrogram", dj, "--cut", "0.3",
               "--out-census", cen) == 0
    assert run("cluster", "--matrix", sk, "--out-dendrogram", nwk) == 0
    assert json.loads(dj.read_text())["leaves"] == ["01001", "01003", "02010"]
    assert nwk.read_text().strip().endswith(";")
    census = json.loads(cen.read_text())
    assert sum(int(k) * v for k, v in census["size_histogram"].items()) == 3

    perm = tmp_path / "p.csv"
    perm.write_text("01001,01003,02010\n0.0,1.0,0.0\n1.0,0.0,0.0\n0.0,0.0,1.0\n")
    ucen = tmp_path / "u.json"
    assert run("cluster", "--matrix", perm, "--mode", "unit-digraph", "--out-census", ucen) == 0
    doc = json.loads(ucen.read_text())
    assert doc["size_histogram"] == {"1": 1, "2": 1}
    assert doc["isolated_classification"]["UnitInRowAndColumn"] == 1

    both = tmp_path / "both.json"
    assert run("census", "--matrix", perm, "--out", both) == 0
    doc = json.loads(both.read_text())
    assert set(doc) == {"strong", "weak"}
    csv_out = tmp_path / "both.csv"
    assert run("--format", "csv", "census", "--matrix", perm, "--out", csv_out) == 0
    assert csv_out.read_text().splitlines()[0] == "kind,component,size,interstate,members"


def test_spectrum_command(tmp_path):
    m = tmp_path / "cyc.csv"
    m.write_text("a,b,c,d\n0,1,0,0\n0,0,1,0\n0,0,0,1\n1,0,0,0\n")
    out = tmp_path / "s.json"
    assert run("--threads", "1", "spectrum", "--matrix", m, "-k", "4", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["k"] == 4
    vals = [complex(e["re"], e["im"]) for e in doc["eigenvalues"]]
    assert np.allclose(vals, [1, 1j, -1j, -1], atol=1e-12)
    assert all(e["residual"] <= 1e-8 for e in doc["eigenvalues"])
    assert run("spectrum", "--matrix", m, "-k", "9") == 2


def test_validate_command(toy, tmp_path, capsys):
    flows, labels = toy
    assert run("validate", "--flows", flows, "--labels", labels) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text(TOY + '"01001","02010",-4\n')
    assert run("validate", "--flows", bad) == 2
    assert "line 8" in capsys.readouterr().out
    dup = tmp_path / "dup.txt"
    dup.write_text("01001\n01003\n01001\n")
    assert run("validate", "--flows", flows, "--labels", dup) == 2
    assert "01001" in capsys.readouterr().out


def test_validate_inputs_report(toy, tmp_path):
    flows, labels = toy
    ok = pl.validate_inputs(pl.PipelineConfig(flows=flows, labels=labels, out_dir=tmp_path))
    assert ok.ok and ok.n == 3
    bad = pl.validate_inputs(pl.PipelineConfig(flows=tmp_path / "nope.csv", out_dir=tmp_path, sk_tol=-1))
    assert not bad.ok
    assert any("sk_tol" in e for e in bad.errors)
    assert any("not found" in e for e in bad.errors)
    assert not (tmp_path / "summary.json").exists()


@pytest.mark.parametrize("method", ["sk", "sqnorm", "both"])
def test_pipeline_artifacts(toy, tmp_path, method):
    flows, labels = toy
    out = tmp_path / "run"
    assert run("--format", "csv", "pipeline", "--flows", flows, "--labels", labels, "--out-dir", out,
               "--method", method, "--cut", "0.2") == 0
    summary = json.loads((out / "summary.json").read_text())
    methods = ["sk", "sqnorm"] if method == "both" else [method]
    assert list(summary["methods"]) == methods
    assert not (out / "FAILED").exists()
    for m in methods:
        for name in ("balanced.bstm", "balanced.csv", "convergence.json", "dendrogram.json", "dendrogram.nwk",
                     "unit_digraph.json", "census_strong.json", "census_weak.json", "spectrum.json", "cuts.json"):
            assert (out / m / name).is_file(), name
        entry = summary["methods"][m]
        hist = entry["strong_components"]["size_histogram"]
        assert sum(int(k) * v for k, v in hist.items()) == 3
        b = load_matrix(out / m / "balanced.bstm")
        assert bistochastic_deviation(b) <= (1e-12 if m == "sk" else 1e-9)
    if method == "both":
        assert set(summary["correlations"]) == {"raw~sk", "raw~sqnorm", "sk~sqnorm"}


def test_pipeline_summary_matches_recomputation(toy, tmp_path):
    flows, labels = toy
    cfg = pl.PipelineConfig(flows=flows, labels=labels, out_dir=tmp_path / "r", methods=("sk", "sqnorm"))
    summary = pl.run_pipeline(cfg)
    raw = load_matrix(tmp_path / "r" / "raw.bstm")
    assert summary["raw"]["nonzero_count"] == matrix_stats(raw).nonzero_count
    for m in ("sk", "sqnorm"):
        b = load_matrix(tmp_path / "r" / m / "balanced.bstm")
        entry = summary["methods"][m]
        assert entry["stats"] == json.loads(json.dumps(matrix_stats(b).to_dict()))
        assert summary["correlations"][f"raw~{m}"] == correlation(raw, b)
        g = unit_entry_digraph(b)
        assert entry["unit_digraph_arcs"] == g.n_arcs
        assert entry["strong_components"]["count"] == len(strong_components(g))
        assert entry["weak_components"]["count"] == len(weak_components(g))
        assert entry["convergence"] == json.loads((tmp_path / "r" / m / "convergence.json").read_text())


def test_pipeline_is_deterministic(toy, tmp_path):
    flows, labels = toy
    for d in ("a", "b"):
        assert run("pipeline", "--flows", flows, "--labels", labels, "--out-dir", tmp_path / d, "--method", "both") == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) > 10
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_pipeline_failure_marker(tmp_path):
    flows = tmp_path / "f.csv"
    # origin 01001 has no outgoing flow: Sinkhorn-Knopp cannot balance it
    flows.write_text('origin,dest,flow\n"01003","01001",3\n"01001","01001",0\n"01003","01003",1\n')
    out = tmp_path / "run"
    assert run("pipeline", "--flows", flows, "--out-dir", out) == 2
    marker = (out / "FAILED").read_text()
    assert "balance:sk" in marker
    assert (out / "raw.bstm").is_file()


def test_pipeline_strict_convergence_failure(tmp_path):
    flows = tmp_path / "f.csv"
    flows.write_text('origin,dest,flow\n"a","a",1\n"a","b",1\n"b","b",1\n')
    out = tmp_path / "run"
    assert run("pipeline", "--flows", flows, "--out-dir", out, "--max-iter", "10", "--strict") == 3
    assert "balance:sk" in (out / "FAILED").read_text()
    assert (out / "sk" / "convergence.json").is_file()


def test_pipeline_invalid_input_exit_code(tmp_path):
    assert run("pipeline", "--flows", tmp_path / "missing.csv", "--out-dir", tmp_path / "o") == 2
    assert (tmp_path / "o" / "FAILED").is_file()


def test_module_entry_point(toy):
    import subprocess
    import sys
    flows, labels = toy
    res = subprocess.run([sys.executable, "-m", "flowbalance", "validate", "--flows", str(flows)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["ok"] is True
