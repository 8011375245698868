import json

import numpy as np
import pytest

from blemu.cli import RunConfig, main, parse_grid
from blemu.data import load_grid, write_grid
from blemu.diagnostics import DiagnosticReport, read_report_csv
from blemu.emulator import load_emulator, read_surface_csv
from blemu.errors import ConfigError


@pytest.fixture
def fitted(tmp_path, capsys):
    data = tmp_path / "synthetic.csv"
    assert main(["synth", "--out", str(data), "--noise-sd", "0.05", "--seed", "4"]) == 0
    out = tmp_path / "run"
    assert main(["fit", "--data", str(data), "--out-dir", str(out), "--seed", "1"]) == 0
    capsys.readouterr()
    return data, out


def test_parse_grid():
    assert parse_grid("13") == (13, 13)
    assert parse_grid("50x40") == (50, 40)
    assert parse_grid([7, 9]) == (7, 9)
    with pytest.raises(ConfigError):
        parse_grid("ax3")


def test_runconfig_defaults():
    cfg = RunConfig()
    assert cfg.theta == (0.015, 0.015)
    assert cfg.fraction == 0.8 and cfg.threshold == 3.0 and cfg.grid == (13, 13)
    assert cfg.basis == ["1", "N", "P"]


def test_synth_monotone_file(tmp_path):
    path = tmp_path / "m.csv"
    assert main(["synth", "--out", str(path)]) == 0
    assert len(load_grid(path)) == 169


def test_synth_constant(tmp_path):
    path = tmp_path / "c.csv"
    assert main(["synth", "--shape", "constant", "--param", "value=5", "--out", str(path)]) == 0
    assert np.all(load_grid(path).yields == 5.0)


def test_synth_repeatable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        main(["synth", "--shape", "kernel-draw", "--seed", "9", "--noise-sd", "0.1", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()


def test_synth_invalid_spec_names_fields(tmp_path, capsys):
    code = main(["synth", "--param", "a=-2", "--param", "bogus=1", "--out", str(tmp_path / "x.csv")])
    err = capsys.readouterr().err
    assert code == 1
    assert "params.bogus" in err and "params.a" in err


def test_fit_summary(fitted):
    _, out = fitted
    summary = (out / "fit_summary.txt").read_text()
    assert "135 train / 34 test" in summary
    em, meta = load_emulator(out / "emulator.json")
    assert meta["seed"] == 1 and meta["n_train"] == 135
    assert len(em.train) == 135
    assert len(load_grid(out / "test.csv")) == 34


def test_fit_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["fit", "--data", str(missing), "--out-dir", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_fit_bad_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"fraction": 1.5, "synthetic": {"shape": "monotone"}}))
    assert main(["fit", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1
    cfg.write_text("{not json")
    assert main(["fit", "--config", str(cfg)]) == 1
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["fit", "--config", str(cfg)]) == 1


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["fit", "--fraction", "lots"])
    assert info.value.code == 1


def test_fit_singular_design_is_data_error(tmp_path, capsys):
    d = tmp_path / "line.csv"
    d.write_text("n,p,yield\n" + "".join(f"{i},50,{i * 0.1}\n" for i in range(0, 100, 5)))
    assert main(["fit", "--data", str(d), "--out-dir", str(tmp_path)]) == 2
    assert "P" in capsys.readouterr().err


def test_fit_rerun_byte_identical(fitted, tmp_path):
    data, out = fitted
    again = tmp_path / "again"
    main(["fit", "--data", str(data), "--out-dir", str(again), "--seed", "1"])
    for name in ("emulator.json", "train.csv", "test.csv", "fit_summary.txt"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synthetic": {"shape": "monotone"}, "seed": 3, "fraction": 0.5, "out_dir": "o"}))
    assert main(["fit", "--config", str(cfg), "--fraction", "0.6"]) == 0
    _, meta = load_emulator(tmp_path / "o" / "emulator.json")
    assert meta["seed"] == 3 and meta["fraction"] == 0.6
    assert meta["n_train"] == 101


def test_predict_surface(fitted):
    _, out = fitted
    assert main(["predict", "--out-dir", str(out), "--grid", "50x50"]) == 0
    rows = read_surface_csv(out / "surface.csv")
    assert len(rows) == 2500
    assert all(r[3] >= 0 for r in rows)
    assert [(r[0], r[1]) for r in rows[:2]] == [(0.0, 0.0), (0.0, 100 / 49)]
    twin = json.loads((out / "surface.json").read_text())
    np.testing.assert_allclose(np.ravel(twin["mean"]), [r[2] for r in rows], rtol=1e-15)


def test_predict_at_training_levels(fitted):
    _, out = fitted
    main(["predict", "--out-dir", str(out)])
    train = load_grid(out / "train.csv")
    means = {(r[0], r[1]): r[2] for r in read_surface_csv(out / "surface.csv")}
    for (n, p), y in zip(train.points, train.yields):
        assert means[(n, p)] == pytest.approx(y, rel=1e-6)


def test_predict_missing_artifact(tmp_path, capsys):
    assert main(["predict", "--artifact", str(tmp_path / "none.json")]) == 2


def test_diagnose_consistent(fitted):
    _, out = fitted
    assert main(["diagnose", "--out-dir", str(out)]) == 0
    rep = DiagnosticReport.read_json(out / "report.json")
    assert rep.summary["n_conflicts"] == 0
    assert "fraction_resolution_gt_0.7" in rep.summary
    rows = read_report_csv(out / "report.csv")
    assert len(rows) == 34 + 169
    assert [r["spe"] for r in rows[:34]] == pytest.approx([d.spe for d in rep.per_point[:34]], rel=1e-15)


def test_diagnose_outlier_sets_exit_code(fitted, tmp_path):
    _, out = fitted
    test = load_grid(out / "test.csv")
    main(["diagnose", "--out-dir", str(out)])
    rep = DiagnosticReport.read_json(out / "report.json")
    first = rep.per_point[0]
    y = test.yields.copy()
    y[0] = first.mean + 4 * first.sd
    bad = tmp_path / "bad_test.csv"
    write_grid(type(test)(test.points, y), bad)
    code = main(["diagnose", "--out-dir", str(tmp_path / "diag"), "--artifact", str(out / "emulator.json"),
                 "--test", str(bad)])
    assert code == 4
    flagged = DiagnosticReport.read_json(tmp_path / "diag" / "report.json")
    assert flagged.summary["n_conflicts"] == 1
    assert flagged.conflicts[0].spe == pytest.approx(4.0)


def test_cv_singleton_and_feedback(fitted, tmp_path):
    data, out = fitted
    cvdir = tmp_path / "cv"
    assert main(["cv", "--data", str(data), "--out-dir", str(cvdir), "--candidates", "0.02"]) == 0
    chosen = json.loads((cvdir / "chosen_theta.json").read_text())
    assert chosen["theta"] == [0.02, 0.02]
    assert main(["fit", "--config", str(cvdir / "chosen_theta.json"), "--data", str(data),
                 "--out-dir", str(tmp_path / "refit")]) == 0
    em, _ = load_emulator(tmp_path / "refit" / "emulator.json")
    assert em.prior.theta == (0.02, 0.02)


def test_cv_deterministic(fitted, tmp_path):
    data, _ = fitted
    for name in ("a", "b"):
        main(["cv", "--data", str(data), "--out-dir", str(tmp_path / name), "--cv-range", "0.003,0.05,5"])
    assert (tmp_path / "a" / "cv_scores.csv").read_bytes() == (tmp_path / "b" / "cv_scores.csv").read_bytes()
    assert len((tmp_path / "a" / "cv_scores.csv").read_text().splitlines()) == 6
