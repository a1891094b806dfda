import json
import os

import numpy as np
import pytest

from oscille import cli

SINE_CFG = {
    "field": {"preset_id": "Sine1D", "params": [2, 1], "dim": 1},
    "domain": [[0.0, 1.0]],
    "bc": {"kind": "dirichlet"},
    "mu": 0.0,
    "p": 2.0,
    "s": 1.0,
    "s_plus": 1.0,
    "epsilons": [0.125, 0.0625, 0.03125],
    "points_per_period": 16,
    "interior_margin": 0.0,
}


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_scenario_from_dict_roundtrip():
    sc = cli.scenario_from_dict(SINE_CFG)
    assert sc.field.preset_id == "Sine1D"
    assert sc.points_per_period == 16


def test_unknown_keys_rejected():
    bad = dict(SINE_CFG)
    bad["extra"] = 1
    with pytest.raises(cli.ConfigError):
        cli.scenario_from_dict(bad)
    bad2 = dict(SINE_CFG)
    bad2["field"] = dict(SINE_CFG["field"], junk=2)
    with pytest.raises(cli.ConfigError):
        cli.scenario_from_dict(bad2)
    missing = dict(SINE_CFG)
    del missing["mu"]
    with pytest.raises(cli.ConfigError):
        cli.scenario_from_dict(missing)


def test_missing_config_exit_2(tmp_path, capsys):
    rc = cli.main(["study", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_invalid_scenario_exit_2(tmp_path, capsys):
    bad = dict(SINE_CFG, epsilons=[0.5, 0.25, 0.125])
    rc = cli.main(["study", "--config", _write_cfg(tmp_path, bad), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_usage_error_exit_2(capsys):
    assert cli.main(["study"]) == 2  # missing required flags
    assert cli.main(["not-a-command"]) == 2


def test_cell_command_prints_effective_value(capsys):
    rc = cli.main(["cell", "--preset", "Sine1D", "--params", "2,1", "--m", "256"])
    out = capsys.readouterr().out
    assert rc == 0
    val = float(out.strip().split("=")[1])
    assert abs(val - np.sqrt(3.0)) <= 1e-4


def test_cell_command_2d_laminate(capsys):
    rc = cli.main(["cell", "--preset", "Laminate2D", "--params", "2,1", "--m", "64"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "A0 =" in out


def test_audit_command(capsys):
    rc = cli.main(["audit", "--preset", "Sine1D", "--params", "2,1", "--samples", "2000", "--seed", "1"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "min_eig" in out and "VIOLATION" not in out


@pytest.fixture(scope="module")
def study_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("study")
    cfg = _write_cfg(tmp, SINE_CFG)
    out1 = tmp / "run1"
    out2 = tmp / "run2"
    rc1 = cli.main(["study", "--config", cfg, "--out", str(out1), "--plot", "--threads", "1"])
    rc2 = cli.main(["study", "--config", cfg, "--out", str(out2), "--threads", "2"])
    return rc1, rc2, out1, out2


def test_study_exit_zero_on_pass(study_run):
    rc1, rc2, *_ = study_run
    assert rc1 == 0 and rc2 == 0


def test_csv_layout_and_determinism(study_run):
    _, _, out1, out2 = study_run
    csv1 = (out1 / "rates.csv").read_bytes()
    csv2 = (out2 / "rates.csv").read_bytes()
    assert csv1 == csv2  # byte identical across runs and thread counts
    lines = csv1.decode().strip().splitlines()
    assert lines[0] == "target,eps,h,error,slope,verdict"
    # 3 targets x 3 eps = 9 data rows
    assert len(lines) == 1 + 9
    for ln in lines[1:]:
        cells = ln.split(",")
        assert len(cells) == 6
        float(cells[1]), float(cells[2]), float(cells[3])
        assert "," not in cells[3]
        # 12 significant digits, point decimal separator
        assert "e" in cells[3] or "." in cells[3]


def test_csv_sig_digits():
    assert cli._fmt(1 / 3) == "0.333333333333"
    assert cli._fmt(1.0) == "1"
    assert cli._fmt(0.125) == "0.125"


def test_summary_and_svg_written(study_run):
    _, _, out1, _ = study_run
    assert (out1 / "summary.txt").exists()
    svgs = sorted(p.name for p in out1.glob("*.svg"))
    assert svgs == ["rates_besov_half.svg", "rates_lp.svg", "rates_w1_corr.svg"]
    body = (out1 / "rates_lp.svg").read_text()
    assert body.startswith("<svg") and "circle" in body and "log10 eps" in body


def test_eps_and_ppp_overrides(tmp_path):
    cfg = _write_cfg(tmp_path, SINE_CFG)
    out = tmp_path / "o"
    rc = cli.main([
        "study", "--config", cfg, "--out", str(out),
        "--eps", "0.25,0.125,0.0625", "--ppp", "16",
    ])
    assert rc == 0
    body = (out / "rates.csv").read_text()
    assert "0.25," in body


def test_header_only_csv_for_no_targets(tmp_path):
    from oscille import study as study_mod

    rep = study_mod.ConvergenceReport(
        scenario=cli.scenario_from_dict(SINE_CFG), targets=[], rows=[], fits={}, verdicts={}
    )
    files = cli.write_report(rep, str(tmp_path / "empty"))
    body = open(files[0]).read()
    assert body == "target,eps,h,error,slope,verdict\n"
    assert os.path.exists(files[1])


def test_suite_smoothing_command(capsys):
    rc = cli.main(["suite-smoothing"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "steklov_tau_norm" in out and "isometry" in out and "FAIL" not in out


def test_shipped_configs_parse():
    base = os.path.join(os.path.dirname(__file__), "..", "configs")
    for name in ("sine1d.json", "laminate2d.json", "mixed1d.json"):
        sc = cli.load_scenario(os.path.join(base, name))
        assert len(sc.epsilons) >= 3
    mixed = cli.load_scenario(os.path.join(base, "mixed1d.json"))
    assert mixed.bc.kind == "mixed" and mixed.s == 0.5


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OSCILLE_NODE_CAP", "100")
    cfg = _write_cfg(tmp_path, SINE_CFG)
    rc = cli.main(["study", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 3
    assert "numerical failure" in capsys.readouterr().err
