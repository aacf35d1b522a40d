import csv
import hashlib
import json
import subprocess
import sys

import pytest

from benchcert.cli import main
from benchcert.geometry import RADIUS_FACTORS
from benchcert.io import write_candidates
from benchcert.synth import planted_fiber_table


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out else None), err


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def five(tmp_path):
    return write(tmp_path / "five.csv", "id,e_tok,d_label\nc0,a,1\nc1,a,1\nc2,b,1\nc3,b,0\nc4,b,0\n")


@pytest.fixture
def planted(tmp_path):
    return str(write_candidates(planted_fiber_table(400, 8, seed=3), tmp_path / "planted.csv"))


@pytest.fixture
def scalar(tmp_path):
    lines = ["id,e_pred,d_label,y_star"] + [f"s{i},{i / 10},{int(i >= 5)},{i / 10}" for i in range(10)]
    return write(tmp_path / "scalar.csv", "\n".join(lines) + "\n")


def test_audit_five_rows(capsys, five, tmp_path):
    code, rep, _ = run(capsys, "audit", "--candidates", five, "--out", str(tmp_path / "o"))
    assert code == 0
    row = rep["payload"]["rows"][0]
    assert (row["cert_fraction"], row["decision_risk"], row["rho"]) == (0.4, 0.2, 0.5)
    assert (tmp_path / "o" / "audit.csv").exists() and (tmp_path / "o" / "fibers.csv").exists()
    assert json.loads((tmp_path / "o" / "report.json").read_text()) == rep


def test_audit_quantile_sweep(capsys, scalar):
    code, rep, _ = run(capsys, "audit", "--candidates", scalar, "--rule", "quantile", "--sweep")
    assert code == 0 and len(rep["payload"]["rows"]) == 6
    code, _, err = run(capsys, "audit", "--candidates", scalar, "--sweep")
    assert code == 1 and "usage" in err


def test_audit_knn_warns_and_rejects_large_k(capsys, scalar):
    code, rep, _ = run(capsys, "audit", "--candidates", scalar, "--rule", "knn", "--k", "3")
    assert code == 0 and any("overlapping" in w for w in rep["warnings"])
    code, _, err = run(capsys, "audit", "--candidates", scalar, "--rule", "knn", "--k", "10")
    assert code == 2 and "invalid input" in err


def test_audit_threshold_only(capsys, tmp_path):
    path = write(tmp_path / "y.csv", "id,e_tok,y_star\na,p,0.9\nb,p,0.8\nc,q,0.1\nd,q,0.7\n")
    code, rep, _ = run(capsys, "audit", "--candidates", path, "--tau", "0.5")
    assert code == 0
    assert rep["payload"]["threshold_classes"] == {"p": "certified-positive", "q": "ambiguous"}
    code, _, err = run(capsys, "audit", "--candidates", path)
    assert code == 2 and "d_label" in err


def test_certify_with_declared_g(capsys, tmp_path):
    path = write(tmp_path / "b.csv", "id,y_hat,delta,radius\na,1,0,0\nb,0.5,0.1,0.2\nc,-1,0,1\n")
    code, rep, _ = run(capsys, "certify", "--candidates", path, "--g", "0.5", "--tau", "0.3", "--radius-sweep")
    assert code == 0
    p = rep["payload"]
    assert (p["certified_positive"], p["certified_negative"], p["ambiguous"]) == (1, 1, 1)
    assert [r["factor"] for r in p["radius_sensitivity"]] == list(RADIUS_FACTORS)


def test_certify_from_probe_files(capsys, tmp_path):
    bounds = write(tmp_path / "b.csv", "id,y_hat,delta\na,1,0\nb,-1,0\n")
    probes = write(tmp_path / "p.csv", "x0,x1,x2\n1,0,0\n0,1,0\n")
    deploy = write(tmp_path / "d.csv", "x0,x1,x2\n1,0,1\n")
    code, rep, _ = run(capsys, "certify", "--candidates", bounds, "--probes", probes, "--deploy", deploy,
                       "--tau", "0", "--radius", "0.5")
    assert code == 0
    assert rep["payload"]["g"] == 1.0 and rep["payload"]["rank"] == 2
    assert rep["payload"]["certified_fraction"] == 1.0
    code, _, _ = run(capsys, "certify", "--candidates", bounds, "--tau", "0")
    assert code == 1


def test_complete_curve(capsys, tmp_path):
    bounds = write(tmp_path / "b.csv", "id,y_hat,delta,radius\na,1,0,1\nb,-1,0,1\nc,0.2,0,1\n")
    probes = write(tmp_path / "p.csv", "x0,x1,x2\n1,0,0\n")
    deploy = write(tmp_path / "d.csv", "x0,x1,x2\n0.6,0.8,0\n")
    pool = write(tmp_path / "q.csv", "id,cost,x0,x1,x2\nq1,1,0,0,1\nq2,1,0,1,0\n")
    code, rep, _ = run(capsys, "complete", "--probes", probes, "--deploy", deploy, "--pool", pool,
                       "--candidates", bounds, "--tau", "0", "--policy", "residual-greedy", "random")
    assert code == 0
    greedy = rep["payload"]["policies"][0]
    assert greedy["order"][0] == "q2"
    assert greedy["final_certified_fraction"] == 1.0
    assert rep["payload"]["start_certified_fraction"] == pytest.approx(2 / 3)


def test_replay_lock_and_verify(capsys, planted, tmp_path):
    lock = str(tmp_path / "lock.json")
    code, rep, _ = run(capsys, "replay", "--candidates", planted, "--splits", "5", "--min-support", "5",
                       "--lock", lock, "--sweep", "--out", str(tmp_path / "o"))
    assert code == 0
    p = rep["payload"]
    assert p["lock"]["digest"]
    assert p["summary"]["after_below_before"] == 5
    rows = rep["payload"]["cost_sweep"]
    assert len(rows) == 9
    costs = [r["break_even_c_acq"] for r in rows]
    assert costs == sorted(costs) or costs == sorted(costs, reverse=True)
    code, rep, _ = run(capsys, "verify", lock)
    assert code == 0 and rep["payload"]["valid"] is True
    data = bytearray((tmp_path / "lock.json").read_bytes())
    data[10] ^= 1
    (tmp_path / "lock.json").write_bytes(bytes(data))
    code, _, _ = run(capsys, "verify", lock)
    assert code == 2


def test_replay_break_even_closed_form(capsys, planted, tmp_path):
    code, rep, _ = run(capsys, "replay", "--candidates", planted, "--splits", "3", "--min-support", "5",
                       "--out", str(tmp_path / "o"))
    assert code == 0
    with open(tmp_path / "o" / "splits.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    for r in rows:
        expected = (int(r["false_before"]) - int(r["false_after"])) / int(r["acquired"])
        assert float(r["break_even"]) == expected
    fb = sum(int(r["false_before"]) for r in rows)
    fa = sum(int(r["false_after"]) for r in rows)
    acq = sum(int(r["acquired"]) for r in rows)
    assert rep["payload"]["break_even_pooled"] == (fb - fa) / acq


def test_replay_explicit_split(capsys, tmp_path):
    cal = write(tmp_path / "c.csv", "id,e_t,d_label\n" + "".join(f"c{i},a,1\n" for i in range(5)))
    ho = write(tmp_path / "h.csv", "id,e_t,d_label\nh0,a,1\nh1,b,0\n")
    code, rep, _ = run(capsys, "replay", "--calibration", cal, "--heldout", ho, "--min-support", "5")
    assert code == 0
    counts = rep["payload"]["counts"]
    assert counts["n_defer"] == 1.0
    code, _, _ = run(capsys, "replay", "--calibration", cal)
    assert code == 1


def test_synth_outputs(capsys, tmp_path):
    out = tmp_path / "s"
    code, rep, _ = run(capsys, "synth", "--experiment", "zero-error", "--n-seeds", "2", "--n-candidates", "100",
                       "--out", str(out))
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["per_seed.csv", "per_seed_g.csv", "report.json",
                                                      "zero_error_control.csv"]
    assert rep["payload"]["aggregate"]["certified_g0"]["mean"] == 1.0


def test_exit_codes(capsys, tmp_path, five):
    assert run(capsys, "audit")[0] == 1
    assert run(capsys, "--bogus")[0] == 1
    assert run(capsys)[0] == 1
    assert run(capsys, "audit", "--candidates", str(tmp_path / "none.csv"))[0] == 2
    assert run(capsys, "certify", "--candidates", five, "--g", "-1", "--tau", "0")[0] == 1
    bounds = write(tmp_path / "b.csv", "id,y_hat,delta,radius\na,1,0,1\n")
    probes = write(tmp_path / "p.csv", "x0,x1,x2\n1e200,1e200,0\n")
    deploy = write(tmp_path / "d.csv", "x0,x1,x2\n0,1e200,1e200\n")
    assert run(capsys, "certify", "--candidates", bounds, "--probes", probes, "--deploy", deploy, "--tau", "0")[0] == 3
    assert main(["--version"]) == 0
    capsys.readouterr()


def test_input_digests(capsys, five):
    _, rep, _ = run(capsys, "audit", "--candidates", five)
    with open(five, "rb") as fh:
        assert rep["inputs"]["candidates"]["sha256"] == hashlib.sha256(fh.read()).hexdigest()


def test_argv_round_trip(capsys, scalar):
    _, first, _ = run(capsys, "audit", "--candidates", scalar, "--rule", "quantile", "--bins", "2", "5")
    _, second, _ = run(capsys, *first["argv"])
    assert first == second


def test_reruns_are_byte_identical(capsys, planted, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    out = tmp_path / "o"
    argv = ["replay", "--candidates", planted, "--splits", "4", "--min-support", "5", "--sweep",
            "--lock", str(out / "lock.json"), "--out", str(out)]
    assert run(capsys, *argv)[0] == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert run(capsys, *argv)[0] == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first
    assert json.loads(first["report.json"])["timestamp"] == "2023-11-14T22:13:20+00:00"


def test_module_entry_point(five):
    proc = subprocess.run([sys.executable, "-m", "benchcert", "audit", "--candidates", five],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "audit"
