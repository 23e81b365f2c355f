import csv
import json
import subprocess
import sys

import pytest

from lcdf import cli
from lcdf import efron_stein as es


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(tmp_path, command, cfg=None, *extra):
    out = tmp_path / "out"
    args = [command]
    if cfg is not None:
        args.append(write_config(tmp_path, cfg))
    code = cli.main([*args, "--out", str(out), "-q", *extra])
    result = out / "result.json"
    payload = json.loads(result.read_text()) if code == 0 and result.exists() else None
    return code, payload


GAUSS_CHANNEL = {"kind": "additive", "density": {"name": "gaussian"}}


def test_fisher_gaussian(tmp_path):
    code, payload = run_cli(tmp_path, "fisher", {"channel": GAUSS_CHANNEL})
    assert code == 0
    assert payload["result"]["F"] == pytest.approx(1.0, abs=1e-10)
    assert payload["result"]["estimator"] == "F"
    assert payload["result"]["F_fd"] == pytest.approx(1.0, abs=1e-6)


def test_overlap_command(tmp_path):
    code, payload = run_cli(tmp_path, "overlap", {"channel": {"kind": "bernoulli"}, "x1": [0.1, 0.2], "x2": [0.3, -0.1]})
    assert code == 0
    assert payload["result"]["overlap"] == pytest.approx([0.12, -0.08], abs=1e-15)


def test_exact_with_bundled_model(tmp_path):
    code, payload = run_cli(tmp_path, "exact", {})
    assert code == 0
    rows = payload["result"]["degrees"]
    assert [r["D"] for r in rows] == [0, 1, 2, 3]
    for r in rows:
        assert abs(r["cadv_exact"] - r["cadv_formula_exact"]) <= 1e-10 * r["cadv_formula_exact"]


def test_exact_with_model_file(tmp_path):
    model_path = write_config(tmp_path, es.load_bundled_model().to_json(), "model.json")
    code, payload = run_cli(tmp_path, "exact", {"model": model_path, "D": 2})
    assert code == 0
    assert payload["result"]["degrees"][0]["D"] == 2


def test_exact_disagreement_is_numerical_failure(tmp_path, monkeypatch):
    monkeypatch.setattr(es, "cadv_formula_exact", lambda m, D: 2.0)
    code, _ = run_cli(tmp_path, "exact", {})
    assert code == 3


def test_selftest(tmp_path):
    code, payload = run_cli(tmp_path, "selftest")
    assert code == 0
    assert payload["result"]["all_passed"]
    assert "timing" in payload["meta"]


ADV_CFG = {
    "prior": {"kind": "spiked_matrix", "n": 10, "lambda": 0.8, "pi": {"kind": "rademacher"}},
    "channel": GAUSS_CHANNEL,
    "D": 4,
    "trials": 3000,
    "seed": 17,
}


def test_advantage_reproducible_and_thread_invariant(tmp_path, monkeypatch):
    code, first = run_cli(tmp_path, "advantage", ADV_CFG)
    assert code == 0
    res = first["result"]
    assert set(res) == {"subset_formula", "exp_bound", "univ"}
    for est in res.values():
        assert est["std_error"] >= 0 and est["estimator"] in ("subset_formula", "exp_bound", "univ")
    monkeypatch.setenv("LCDF_THREADS", "3")
    code, second = run_cli(tmp_path, "advantage", ADV_CFG)
    assert code == 0 and second["meta"]["threads"] == 3
    strip = lambda p: json.dumps({k: v for k, v in p.items() if k != "meta"}, sort_keys=True)
    assert strip(first) == strip(second)


def test_seed_flag_overrides_config(tmp_path):
    code, payload = run_cli(tmp_path, "advantage", ADV_CFG, "--seed", "5")
    assert code == 0 and payload["seed"] == 5


def test_universality_command(tmp_path):
    cfg = {**ADV_CFG, "channel": {"kind": "additive", "density": {"name": "logistic"}}}
    code, payload = run_cli(tmp_path, "universality", cfg)
    assert code == 0
    assert {"ratio_cadv_univ_D", "margin_univ_D_minus_univ_D_minus_2", "audit_passed"} <= set(payload["result"])


def test_phase_diagram_writes_csv(tmp_path):
    cfg = {"spectral": {"n": 60, "lambda_grid": [0.5, 2.0], "eta": [0.0, 0.5], "corruption": "censor", "trials": 3}, "seed": 1}
    code, payload = run_cli(tmp_path, "phase-diagram", cfg)
    assert code == 0
    assert payload["result"]["conjecture_probe"]
    with open(tmp_path / "out" / "scan.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert list(rows[0]) == ["lambda", "eta", "n", "trials", "mean_lmax", "stderr_lmax", "bulk_edge_estimate"]


def test_spectral_single_point(tmp_path):
    code, payload = run_cli(tmp_path, "spectral", {"n": 80, "lambda": 1.5, "trials": 2, "seed": 4})
    assert code == 0 and len(payload["result"]["rows"]) == 1
    code, _ = run_cli(tmp_path, "spectral", {"n": 80, "lambda_grid": [1.0, 2.0], "trials": 2, "seed": 4})
    assert code == 2


def test_run_takes_command_from_file(tmp_path):
    code, payload = run_cli(tmp_path, "run", {"command": "fisher", "channel": {"kind": "bernoulli"}})
    assert code == 0 and payload["result"]["F"] == 4.0


@pytest.mark.parametrize(
    "command, cfg",
    [
        ("run", {"command": "teleport"}),
        ("run", {}),
        ("fisher", {"channel": {"kind": "additive"}}),
        ("fisher", {}),
        ("advantage", {k: v for k, v in ADV_CFG.items() if k != "seed"}),
        ("advantage", {**ADV_CFG, "seed": -3}),
        ("overlap", {"channel": {"kind": "bernoulli"}, "x1": [0.9], "x2": [0.1]}),
    ],
)
def test_invalid_input_exit_code(tmp_path, command, cfg):
    assert run_cli(tmp_path, command, cfg)[0] == 2


def test_bad_json_and_unwritable_output(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["fisher", str(bad), "-q"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write_config(tmp_path, {"channel": GAUSS_CHANNEL})
    assert cli.main(["fisher", cfg, "--out", str(blocker / "sub"), "-q"]) == 2


def test_bad_thread_count(tmp_path, monkeypatch):
    monkeypatch.setenv("LCDF_THREADS", "many")
    assert run_cli(tmp_path, "advantage", ADV_CFG)[0] == 2


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"channel": {"kind": "bernoulli"}})
    proc = subprocess.run([sys.executable, "-m", "lcdf", "fisher", cfg, "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "F = E_0" in proc.stderr
    assert json.loads((tmp_path / "o" / "result.json").read_text())["result"]["F"] == 4.0
