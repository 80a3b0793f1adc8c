"""End-to-end tests for the command-line interface.

Most tests drive ``cli.main`` in-process and inspect captured stdout; a few
use subprocesses to pin down exit codes and byte-level determinism.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from cltcert import cli
from cltcert.bootstrap import bootstrap_ball_quantile, chi2_quantile
from cltcert.engine import bound_ball_normal, summarize_gaussian
from cltcert.tensors import Sample, SpdMatrix


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def gaussian_csvs(tmp_path):
    rng = np.random.default_rng(42)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    Sample(rng.standard_normal((400, 2)), label="a").to_csv(str(a))
    Sample(rng.standard_normal((400, 2)) + [3.0, 0.0], label="b").to_csv(str(b))
    return str(a), str(b)


@pytest.fixture
def score_csv(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "scores.csv"
    Sample(rng.standard_normal((300, 3)), label="s").to_csv(str(path))
    return str(path)


# ---------------------------------------------------------------------------
# verify-constants
# ---------------------------------------------------------------------------

def test_verify_constants_reports_all_tuples(capsys):
    code, out, _ = run_cli(["verify-constants"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["all_ok"] is True
    assert len(payload["rows"]) == 3
    lhs = {row["K"]: row["lhs"] for row in payload["rows"]}
    assert lhs[3] == pytest.approx(0.9998568, abs=5e-7)
    assert lhs[4] == pytest.approx(0.9568009, abs=5e-7)
    assert lhs[6] == pytest.approx(0.9329811, abs=5e-7)
    assert all(row["ok"] for row in payload["rows"])


# ---------------------------------------------------------------------------
# bound
# ---------------------------------------------------------------------------

def test_bound_from_moments_matches_library(tmp_path, capsys):
    ms = summarize_gaussian(SpdMatrix(np.diag([1.0, 4.0])), n=10_000)
    path = tmp_path / "m.json"
    path.write_text(ms.to_json())
    code, out, err = run_cli(
        ["bound", "--theorem", "ball-normal", "--moments", str(path)], capsys)
    assert code == 0
    payload = json.loads(out)
    direct = bound_ball_normal(ms)
    assert payload["total"] == pytest.approx(direct.total, rel=1e-12)
    assert payload["theorem"] == "ball_normal"
    assert "total" in err  # human note goes to stderr


def test_bound_beta_optimize_not_worse_than_default(tmp_path, capsys):
    ms = summarize_gaussian(SpdMatrix(np.eye(3)), n=500)
    path = tmp_path / "m.json"
    path.write_text(ms.to_json())
    _, out_def, _ = run_cli(
        ["bound", "--theorem", "ball-normal", "--moments", str(path)], capsys)
    _, out_opt, _ = run_cli(
        ["bound", "--theorem", "ball-normal", "--moments", str(path),
         "--beta", "optimize"], capsys)
    assert json.loads(out_opt)["total"] <= json.loads(out_def)["total"] + 1e-9


def test_bound_from_sample_pair(tmp_path, gaussian_csvs, capsys):
    a, b = gaussian_csvs
    code, out, _ = run_cli(
        ["bound", "--theorem", "ball-diff-cov", "--from-sample", a,
         "--second-sample", b], capsys)
    assert code == 0
    payload = json.loads(out)
    names = [t["name"] for t in payload["terms"]]
    assert "covariance_gap" in names
    assert payload["total"] > 0


def test_bound_pair_theorem_needs_second_sample(gaussian_csvs, capsys):
    a, _ = gaussian_csvs
    code, _, err = run_cli(
        ["bound", "--theorem", "ball-diff-cov", "--from-sample", a], capsys)
    assert code == 2
    assert "second-sample" in err


def test_bound_symmetric_requires_moments(gaussian_csvs, capsys):
    a, _ = gaussian_csvs
    code, _, err = run_cli(
        ["bound", "--theorem", "symmetric", "--from-sample", a], capsys)
    assert code == 2
    assert "--moments" in err


def test_bound_needs_some_input(capsys):
    code, _, err = run_cli(["bound", "--theorem", "ball-normal"], capsys)
    assert code == 2
    assert "moments" in err


def test_bound_infeasible_certificate_exits_3(tmp_path, capsys):
    rng = np.random.default_rng(1)
    path = tmp_path / "x.csv"
    Sample(rng.standard_normal((200, 3)), label="x").to_csv(str(path))
    code, _, err = run_cli(
        ["bound", "--theorem", "bootstrap-ball", "--from-sample", str(path),
         "--sigma2", "1.0"], capsys)
    assert code == 3
    assert "infeasible" in err


def test_bound_ledger_overrides_change_total(tmp_path, capsys):
    ms = summarize_gaussian(SpdMatrix(np.eye(2)), n=1000)
    path = tmp_path / "m.json"
    path.write_text(ms.to_json())
    base = ["bound", "--theorem", "ball-normal", "--moments", str(path)]
    _, out1, _ = run_cli(base, capsys)
    _, out2, _ = run_cli(base + ["--ledger-overrides", '{"m4": 12.0}'], capsys)
    assert json.loads(out2)["total"] > json.loads(out1)["total"]


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------

def test_distance_ball_detects_shift(gaussian_csvs, capsys):
    a, b = gaussian_csvs
    code, out, _ = run_cli(
        ["distance", "--kind", "ball", "--sample-a", a, "--sample-b", b,
         "--seed", "5", "--centers", "64", "--boot", "30"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["value"] > 0.8
    assert payload["flags"] == ["lower_estimate"]
    assert payload["stderr"] > 0


def test_distance_ks_and_levy_one_dimensional(tmp_path, capsys):
    x = tmp_path / "x.csv"
    y = tmp_path / "y.csv"
    Sample(np.zeros((5, 1)), label="x").to_csv(str(x))
    Sample(np.full((5, 1), 0.25), label="y").to_csv(str(y))
    code, out, _ = run_cli(
        ["distance", "--kind", "ks", "--sample-a", str(x), "--sample-b",
         str(y), "--seed", "0"], capsys)
    assert code == 0 and json.loads(out)["value"] == 1.0
    code, out, _ = run_cli(
        ["distance", "--kind", "levy", "--sample-a", str(x), "--sample-b",
         str(y), "--seed", "0"], capsys)
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(0.25, abs=1e-9)


def test_distance_ks_rejects_multivariate(gaussian_csvs, capsys):
    a, b = gaussian_csvs
    code, _, err = run_cli(
        ["distance", "--kind", "ks", "--sample-a", a, "--sample-b", b,
         "--seed", "0"], capsys)
    assert code == 2
    assert "one-dimensional" in err


def test_distance_requires_seed(gaussian_csvs):
    a, b = gaussian_csvs
    with pytest.raises(SystemExit) as exc:
        cli.main(["distance", "--kind", "ball", "--sample-a", a,
                  "--sample-b", b])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# bootstrap / score-test
# ---------------------------------------------------------------------------

def test_bootstrap_ball_matches_library(score_csv, capsys):
    code, out, _ = run_cli(
        ["bootstrap", "--test", "ball", "--data", score_csv, "--alpha", "0.1",
         "--B", "500", "--seed", "3"], capsys)
    assert code == 0
    payload = json.loads(out)
    direct = bootstrap_ball_quantile(Sample.from_csv(score_csv), np.eye(3),
                                     alpha=0.1, B=500, seed=3)
    assert payload["quantile"] == direct.quantile
    assert payload["test"] == "ball-quantile"
    assert payload["certificate"] is None


def test_bootstrap_score_payload_contract(score_csv, capsys):
    code, out, _ = run_cli(
        ["bootstrap", "--test", "score", "--data", score_csv, "--alpha",
         "0.1", "--B", "500", "--seed", "3", "--sigma2", "0.05"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["test"] == "bootstrap-score"
    assert payload["decision"] in ("accept", "reject")
    assert payload["statistic"] >= 0
    assert payload["quantile"] > 0
    assert payload["certificate"]["theorem"] == "bootstrap_score_level"
    assert payload["certificate_error"] is None


def test_score_test_rao_uses_chi2_threshold(score_csv, tmp_path, capsys):
    info = tmp_path / "info.csv"
    np.savetxt(str(info), 300 * np.eye(3), delimiter=",")
    code, out, _ = run_cli(
        ["score-test", "--data", score_csv, "--alpha", "0.05", "--info",
         str(info)], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["test"] == "rao"
    assert payload["quantile"] == pytest.approx(chi2_quantile(0.05, 3),
                                                rel=1e-12)
    assert payload["decision"] == "accept"  # standard-normal scores, H0 true


def test_score_test_rao_requires_info(score_csv, capsys):
    code, _, err = run_cli(
        ["score-test", "--data", score_csv, "--alpha", "0.05"], capsys)
    assert code == 2
    assert "--info" in err


def test_score_test_bootstrap_requires_seed(score_csv, capsys):
    code, _, err = run_cli(
        ["score-test", "--method", "bootstrap", "--data", score_csv,
         "--alpha", "0.05"], capsys)
    assert code == 2
    assert "--seed" in err


# ---------------------------------------------------------------------------
# experiment sweeps
# ---------------------------------------------------------------------------

def test_experiment_anticoncentration_csv(capsys):
    code, out, _ = run_cli(
        ["experiment", "--name", "anticoncentration", "--seed", "1",
         "--d-list", "2,8", "--eps", "0.001"], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "d,n,family,estimate,stderr,bound_total,seed"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "2" and first[2] == "gaussian_shell"
    assert float(first[3]) == pytest.approx(0.606531, abs=2e-3)


def test_experiment_portnoy_has_slope_sentinel_row(capsys):
    code, out, err = run_cli(
        ["experiment", "--name", "portnoy", "--seed", "2", "--d-list", "4,8",
         "--n", "256", "--reps", "40"], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "d,n,family,estimate,stderr,bound_total,seed"
    last = lines[-1].split(",")
    assert last[0] == "0" and last[2] == "portnoy_slope_fit"
    assert "slope" in err


def test_experiment_score_level_smoke(capsys):
    code, out, _ = run_cli(
        ["experiment", "--name", "score-level", "--seed", "2", "--d", "2",
         "--n", "100", "--B", "200", "--trials", "60", "--alpha", "0.1"],
        capsys)
    assert code == 0
    row = out.strip().split("\n")[1].split(",")
    level = float(row[3])
    assert 0.0 <= level <= 0.35


def test_experiment_same_law_ball_below_threshold(capsys):
    code, out, err = run_cli(
        ["experiment", "--name", "same-law-ball", "--seed", "2", "--d", "2",
         "--n", "2000", "--centers", "16", "--null-runs", "40",
         "--calibration-n", "1024", "--boot", "20"], capsys)
    assert code == 0
    row = out.strip().split("\n")[1].split(",")
    estimate, threshold = float(row[3]), float(row[5])
    assert estimate < threshold
    assert "below" in err


def test_experiment_normal_sweep_columns(capsys):
    code, out, _ = run_cli(
        ["experiment", "--name", "normal-sweep", "--seed", "2", "--d", "2",
         "--n-list", "64,256", "--blocks", "512", "--centers", "16",
         "--boot", "20", "--family", "symmetric_L"], capsys)
    assert code == 0
    lines = out.strip().split("\n")
    assert len(lines) == 3
    for line, n in zip(lines[1:], (64, 256)):
        cells = line.split(",")
        assert cells[1] == str(n) and cells[2] == "symmetric_L"
        assert float(cells[3]) < float(cells[5])  # estimate below certificate


def test_experiment_unknown_family_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["experiment", "--name", "score-level", "--seed", "1",
                  "--family", "cauchy"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# config file handling
# ---------------------------------------------------------------------------

def test_config_supplies_defaults_and_flags_win(tmp_path, score_csv, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alpha": 0.2, "B": 300, "seed": 9,
                               "data": score_csv}))
    code, out, _ = run_cli(
        ["--config", str(cfg), "bootstrap", "--test", "ball", "--B", "500"],
        capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["alpha"] == 0.2  # from config
    assert payload["B"] == 500      # flag overrides config
    assert payload["seed"] == 9


def test_config_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"alphaz": 0.2}))
    code, _, err = run_cli(
        ["--config", str(cfg), "verify-constants"], capsys)
    assert code == 2
    assert "alphaz" in err


def test_config_missing_file_exits_2(capsys):
    code, _, err = run_cli(
        ["--config", "/nonexistent/cfg.json", "verify-constants"], capsys)
    assert code == 2
    assert "configuration error" in err


# ---------------------------------------------------------------------------
# output plumbing and determinism
# ---------------------------------------------------------------------------

def test_out_flag_duplicates_stdout(tmp_path, capsys):
    out_path = tmp_path / "result.json"
    code, out, _ = run_cli(["verify-constants", "--out", str(out_path)],
                           capsys)
    assert code == 0
    assert out_path.read_text() == out


def test_repeated_runs_byte_identical(gaussian_csvs, capsys):
    a, b = gaussian_csvs
    argv = ["distance", "--kind", "halfspace", "--sample-a", a,
            "--sample-b", b, "--seed", "11", "--centers", "32", "--boot",
            "25"]
    _, out1, _ = run_cli(argv, capsys)
    _, out2, _ = run_cli(argv, capsys)
    assert out1 == out2


def test_subprocess_exit_codes_and_determinism(tmp_path):
    env_runs = []
    for _ in range(2):
        proc = subprocess.run(
            [sys.executable, "-m", "cltcert.cli", "verify-constants"],
            capture_output=True)
        assert proc.returncode == 0
        env_runs.append(proc.stdout)
    assert env_runs[0] == env_runs[1]
    proc = subprocess.run(
        [sys.executable, "-m", "cltcert.cli", "bound", "--theorem",
         "no-such-theorem"], capture_output=True)
    assert proc.returncode == 2
