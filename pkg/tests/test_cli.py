import json
import subprocess
import sys

import pytest

from mfcbo.cli import main

MEANFIELD = {
    "objective": {"name": "quadratic"}, "dim": 2, "seed": 0,
    "cbo": {"lambda": 1.0, "beta": 10.0, "T": 1.0, "dt": 0.01, "n": 64},
    "diffusion": {"kind": "isotropic", "theta": 0.25},
    "init": {"kind": "uniform", "low": -2.0, "high": 2.0},
    "truncation": {"R": "auto", "p": 2.0},
    "picard": {"m_samples": 500, "max_iters": 30, "tol": 0.01},
    "curve_stride": 10,
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def csv_bytes(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*.csv"))}


def test_optimize_default(tmp_path):
    out = tmp_path / "o"
    assert main(["optimize", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["best_f"] < 0.1
    assert {"consensus", "wall_time"} <= set(summary)
    assert (out / "trajectory.csv").exists() and (out / "final_ensemble.csv").exists()


def test_optimize_bad_configs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["optimize", "--config", str(bad), "--out", str(tmp_path / "a")]) == 2
    assert main(["optimize", "--set", 'cbo={"T": 1, "dt": 5}', "--out", str(tmp_path / "b")]) == 2
    assert main(["optimize", "--set", "nonsense", "--out", str(tmp_path / "c")]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert not any((tmp_path / d).exists() for d in "abc")


def test_numeric_failures_exit_3(tmp_path, capsys):
    cfg = {"diffusion": {"kind": "custom", "callable": "tests.helpers:exploding_diffusion",
                         "L_S": 1.0}}
    assert main(["optimize", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert "particle 0 at step 1" in capsys.readouterr().err
    cfg = {"objective": {"callable": "tests.helpers:nan_outside_unit_box", "vectorized": True,
                         "params": {"s": 0, "ell": 0, "L_f": 1}}}
    assert main(["optimize", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "p")]) == 3


def test_meanfield_outputs(tmp_path):
    out = tmp_path / "m"
    assert main(["meanfield", "--config", write(tmp_path, MEANFIELD), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] and summary["exit_index"] is None
    constants = json.loads((out / "constants.json").read_text())
    assert constants["c_p"] == 4.0 and "K_0" in constants
    head = (out / "consensus.csv").read_text().splitlines()[0]
    assert head == "t,m_0,m_1,phi_R,moment_p"
    hist = (out / "picard_history.csv").read_text().splitlines()
    assert hist[0] == "iter,path_dist" and len(hist) - 1 == summary["iterations"]
    manifest = json.loads((out / "curve" / "manifest.json").read_text())
    assert manifest["grid_indices"][-1] == 100


def test_meanfield_non_convergence(tmp_path):
    out = tmp_path / "m"
    cfg = dict(MEANFIELD, picard={"m_samples": 500, "max_iters": 1, "tol": 0.01})
    assert main(["meanfield", "--config", write(tmp_path, cfg), "--out", str(out)]) == 4
    assert len((out / "picard_history.csv").read_text().splitlines()) == 2


def test_meanfield_small_radius(tmp_path):
    out = tmp_path / "m"
    cfg = dict(MEANFIELD, truncation={"R": 0.1, "p": 2.0})
    assert main(["meanfield", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["exit_index"] == 0


def test_meanfield_needs_sections(tmp_path):
    out = tmp_path / "m"
    assert main(["meanfield", "--out", str(out)]) == 2
    assert not out.exists()


def test_chaos(tmp_path):
    out = tmp_path / "c"
    rc = main(["chaos", "--config", write(tmp_path, MEANFIELD), "--out", str(out),
               "--n-list", "16,64", "--reps", "3"])
    assert rc == 0
    rows = (out / "chaos.csv").read_text().splitlines()
    assert rows[0] == "N,rep,w_p" and len(rows) == 7
    summary = json.loads((out / "chaos_summary.json").read_text())
    assert set(summary["medians"]) == {"16", "64"}


def test_chaos_single_n(tmp_path):
    out = tmp_path / "c"
    assert main(["chaos", "--config", write(tmp_path, MEANFIELD), "--out", str(out),
                 "--n-list", "32", "--reps", "2"]) == 0
    summary = json.loads((out / "chaos_summary.json").read_text())
    assert len(summary["medians"]) == 1 and summary["trend_holds"]


def test_chaos_cap(tmp_path):
    out = tmp_path / "c"
    assert main(["chaos", "--out", str(out), "--n-list", "64,513"]) == 2
    assert main(["chaos", "--out", str(out), "--n-list", "64,x"]) == 2
    assert not out.exists()


def test_verify_pass_and_fault(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path / "v")]) == 0
    report = json.loads((tmp_path / "v" / "verify_report.json").read_text())
    names = {c["name"]: c for c in report["checks"]}
    assert names["bdg_c2_equals_4"]["passed"]
    assert names["bdg_c2_equals_4"]["details"]["c_2"] == 4.0
    assert main(["verify", "--out", str(tmp_path / "f"),
                 "--inject-fault", "cutoff-monotonicity"]) == 1
    report = json.loads((tmp_path / "f" / "verify_report.json").read_text())
    assert [c["name"] for c in report["checks"] if not c["passed"]] == ["cutoff_monotone"]


def test_fault_flag_is_hidden(capsys):
    with pytest.raises(SystemExit):
        main(["verify", "--help"])
    assert "inject" not in capsys.readouterr().out


def test_repeat_runs_are_byte_identical(tmp_path, monkeypatch):
    cfg = write(tmp_path, MEANFIELD)
    for threads, name in ((1, "a"), (8, "b")):
        monkeypatch.setenv("CBO_THREADS", str(threads))
        assert main(["optimize", "--config", cfg, "--out", str(tmp_path / f"o{name}")]) == 0
        assert main(["meanfield", "--config", cfg, "--out", str(tmp_path / f"m{name}")]) == 0
    assert csv_bytes(tmp_path / "oa") == csv_bytes(tmp_path / "ob")
    assert csv_bytes(tmp_path / "ma") == csv_bytes(tmp_path / "mb")


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mfcbo.cli", "optimize", "--out",
                           str(tmp_path / "o"), "--set", 'cbo={"T": 0.1, "dt": 0.01, "n": 8}'],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
