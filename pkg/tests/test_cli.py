import json

import numpy as np
import pytest

from ionreservoir import cli

FAST = ["--override", "dim=24", "--override", "t_max=4", "--override", "n_points=41"]


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out), *FAST])
    return code, out


def read_csv(path):
    lines = path.read_text(encoding="ascii").splitlines()
    return lines[0].split(","), np.array([[float(x) for x in row.split(",")] for row in lines[1:]])


def test_analytic_run_writes_csv_report_and_figure(tmp_path):
    code, out = run(tmp_path, "run")
    assert code == cli.EXIT_OK
    header, data = read_csv(out / "analytic-sweep.csv")
    assert header[:2] == ["t", "R"]
    assert {"gg_re", "ee_im", "suppression"} <= set(header)
    assert data.shape == (41, len(header))
    assert (out / "analytic-sweep.png").stat().st_size > 0
    report = json.loads((out / "analytic-sweep.report.json").read_text())
    assert report["status"] == 0 and report["passed"]
    assert report["conventions"]["dissipator_preset"] == "custom"
    assert report["conventions"]["g_convention"] == "g_coupling"
    assert report["seed"] == 0
    assert "leakage_max" in report["diagnostics"]
    assert report["provenance"]["package"] == "ionreservoir"


def test_csv_uses_seventeen_digits(tmp_path):
    path = cli.write_csv(tmp_path / "x.csv", {"t": [0.1, 1 / 3], "R": [np.pi, 2.0]})
    text = path.read_text(encoding="ascii")
    assert text == "t,R\n0.10000000000000001,3.1415926535897931\n0.33333333333333331,2\n"


def test_run_is_byte_identical(tmp_path):
    args = ["run", "--override", "experiment=ensemble-sweep", "--override", "n_traj=20", "--seed", "7", "--no-plot"]
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    assert (a / "ensemble-sweep.csv").read_bytes() == (b / "ensemble-sweep.csv").read_bytes()
    assert not (a / "ensemble-sweep.png").exists()
    assert json.loads((a / "ensemble-sweep.report.json").read_text())["seed"] == 7


def test_seed_changes_ensemble(tmp_path):
    args = ["run", "--override", "experiment=ensemble-sweep", "--override", "n_traj=20", "--no-plot"]
    _, a = run(tmp_path, *args, "--seed", "1", name="a")
    _, b = run(tmp_path, *args, "--seed", "2", name="b")
    assert (a / "ensemble-sweep.csv").read_bytes() != (b / "ensemble-sweep.csv").read_bytes()


def test_compare_noiseless_passes(tmp_path):
    code, out = run(tmp_path, "compare", "--override", "kappa_custom=0", "--no-plot")
    assert code == cli.EXIT_OK
    report = json.loads((out / "compare.report.json").read_text())
    assert report["diagnostics"]["pairs"]["analytic-master"]["max_abs"] < 1e-6


def test_compare_analytic_with_ensemble_at_zero_noise(tmp_path):
    over = ["--override", "kappa_custom=0", "--override", "engines=analytic,master,ensemble", "--override", "n_traj=3"]
    code, out = run(tmp_path, "compare", *over, "--no-plot")
    assert code == cli.EXIT_OK
    pairs = json.loads((out / "compare.report.json").read_text())["diagnostics"]["pairs"]
    assert abs(pairs["analytic-ensemble"]["max_abs"] - pairs["analytic-master"]["max_abs"]) < 1e-6


def test_compare_analytic_needs_zero_noise(tmp_path, capsys):
    code, _ = run(tmp_path, "compare")
    assert code == cli.EXIT_CONFIG
    assert "analytic" in capsys.readouterr().err


def test_rates_table_and_quiet_branch(tmp_path):
    code, out = run(tmp_path, "rates", "--no-plot")
    assert code == cli.EXIT_OK
    header, data = read_csv(out / "rates.csv")
    assert header == ["n", "fitted_rate", "model_rate", "ratio_to_n0", "expected_ratio", "rel_error"]
    np.testing.assert_array_equal(data[:, 4], [1, 3, 7, 13])
    assert np.all(data[:, 5] < 0.03)
    code, out = run(tmp_path, "rates", "--override", "kappa_custom=0", name="quiet")
    assert code == cli.EXIT_OK
    report = json.loads((out / "rates.report.json").read_text())
    assert "no decoherence" in report["flags"]
    _, data = read_csv(out / "rates.csv")
    assert np.all(np.abs(data[:, 1]) < 1e-9)
    assert (out / "rates.png").exists()


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[params]\nunknown_key = 1\n")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "unknown key" in capsys.readouterr().err


def test_leakage_exit(tmp_path):
    code, _ = run(tmp_path, "run", "--override", "alpha_g=4", "--override", "dim=12")
    assert code == cli.EXIT_LEAKAGE


def test_instability_exit(tmp_path):
    over = ["experiment=master-sweep", "dim=24", "courant=8", "n_points=5"]
    code = cli.main(["run", "--out", str(tmp_path), *[x for o in over for x in ("--override", o)]])
    assert code == cli.EXIT_UNSTABLE


def test_failed_check_exit(tmp_path):
    code, out = run(tmp_path, "compare", "--override", "kappa_custom=0", "--override", "deviation_tol=1e-30", "--no-plot")
    assert code == cli.EXIT_CHECK
    assert json.loads((out / "compare.report.json").read_text())["passed"] is False


def test_bad_seed_rejected():
    with pytest.raises(SystemExit):
        cli.main(["run", "--seed", str(2**64)])


def test_template_subcommand(tmp_path):
    path = tmp_path / "t.ini"
    assert cli.main(["template", str(path)]) == cli.EXIT_OK
    assert "[run]" in path.read_text()
