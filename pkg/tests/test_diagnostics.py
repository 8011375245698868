import json

import numpy as np
import pytest

from blemu.data import SimulationGrid, cartesian, grid_levels, split
from blemu.diagnostics import (
    CvResult,
    DiagnosticReport,
    cross_validate_theta,
    fold_indices,
    log_spaced_candidates,
    read_report_csv,
    report,
    resolution,
    resolution_batch,
    spe,
    summarize,
)
from blemu.emulator import fit_emulator, predict_batch
from blemu.errors import ConfigError, DataError, InsufficientDataError
from blemu.regression import BasisSpec
from blemu.synthetic import ScenarioSpec, generate_grid

BASIS = BasisSpec()
LEVELS = (grid_levels(13), grid_levels(13))


@pytest.fixture(scope="module")
def smooth():
    parts = split(generate_grid(ScenarioSpec("monotone")), 0.8, seed=0)
    return parts, fit_emulator(parts.train)


def test_resolution_at_training_point(smooth):
    parts, em = smooth
    assert resolution(em, parts.train.points[0]) >= 0.999


def test_no_data_emulator_disallowed():
    with pytest.raises(DataError, match="no records"):
        SimulationGrid(np.empty((0, 2)), [])


def test_fraction_high_resolution(smooth):
    _, em = smooth
    res = resolution_batch(em, cartesian(*LEVELS))
    assert np.mean(res > 0.7) > 0.5
    assert np.all((res >= 0) & (res <= 1))


def test_resolution_training_vs_farthest(smooth):
    parts, em = smooth
    grid = cartesian(grid_levels(41), grid_levels(41))
    d = np.min(np.linalg.norm(grid[:, None, :] - parts.train.points[None], axis=-1), axis=1)
    far = resolution(em, grid[np.argmax(d)])
    assert np.min(resolution_batch(em, parts.train.points)) >= far


def _test_grid_at(em, points, shift_sd=0.0):
    mean, var, _, _ = predict_batch(em, points)
    return SimulationGrid(points, mean + shift_sd * np.sqrt(var))


def test_spe_zero_when_exact(smooth):
    _, em = smooth
    out = spe(em, _test_grid_at(em, np.array([[4.0, 4.0], [60.0, 20.0]])))
    assert [d.spe for d in out] == pytest.approx([0.0, 0.0], abs=1e-9)
    assert not any(d.conflict for d in out)


def test_spe_four_sd_conflict(smooth):
    _, em = smooth
    (d,) = spe(em, _test_grid_at(em, np.array([[4.0, 4.0]]), 4.0), threshold=3.0)
    assert d.spe == pytest.approx(4.0, rel=1e-9)
    assert d.conflict
    (d,) = spe(em, _test_grid_at(em, np.array([[4.0, 4.0]]), 4.0), threshold=5.0)
    assert not d.conflict


def test_smooth_test_set_within_two(smooth):
    parts, em = smooth
    assert max(abs(d.spe) for d in spe(em, parts.test)) <= 2.0


def test_spe_floor_gives_error_entry(smooth):
    parts, em = smooth
    pts = np.vstack([parts.train.points[:1], parts.test.points[:1]])
    test = SimulationGrid(pts, [parts.train.yields[0], parts.test.yields[0]])
    out = spe(em, test, var_floor=1e-6 * em.prior.sigma2)
    assert out[0].error is not None and out[0].spe is None and not out[0].conflict
    assert out[1].error is None and out[1].spe is not None


def test_spe_antisymmetric(smooth):
    parts, em = smooth
    mean, _, _, _ = predict_batch(em, parts.test.points)
    mirrored = SimulationGrid(parts.test.points, 2 * mean - parts.test.yields)
    a = np.array([d.spe for d in spe(em, parts.test)])
    b = np.array([d.spe for d in spe(em, mirrored)])
    sd = np.array([d.sd for d in spe(em, parts.test)])
    np.testing.assert_allclose(b, -a, rtol=0, atol=1e-12 * np.max(np.abs(mean)) / sd.min())


def test_report_consistent(smooth):
    parts, em = smooth
    rep = report(em, parts.test, LEVELS, threshold=3.0)
    s = rep.summary
    assert s["n_conflicts"] == 0 and s["n_test"] == 34 and s["n_grid"] == 169
    assert s == summarize(rep.per_point, 3.0)
    grid_res = [d.resolution for d in rep.per_point if d.role == "grid"]
    assert s["fraction_resolution_gt_0.7"] == sum(r > 0.7 for r in grid_res) / 169
    assert s["max_abs_spe"] == max(abs(d.spe) for d in rep.per_point if d.role == "test")
    assert rep.metadata["nugget_used"] == em.nugget
    assert rep.metadata["min_raw_variance"] > -1e-8


def test_report_json_round_trip(tmp_path, smooth):
    parts, em = smooth
    rep = report(em, parts.test, LEVELS)
    assert DiagnosticReport.from_dict(json.loads(json.dumps(rep.to_dict()))) == rep
    rep.write_json(tmp_path / "r.json")
    assert DiagnosticReport.read_json(tmp_path / "r.json") == rep


def test_report_csv(tmp_path, smooth):
    parts, em = smooth
    rep = report(em, parts.test, LEVELS)
    rep.write_csv(tmp_path / "r.csv")
    rows = read_report_csv(tmp_path / "r.csv")
    assert len(rows) == len(rep.per_point)
    for row, d in zip(rows, rep.per_point):
        assert (row["n"], row["p"], row["resolution"], row["spe"], row["conflict"]) == (
            d.point.n_level, d.point.p_level, d.resolution, d.spe, d.conflict)


def test_report_counts_conflicts(smooth):
    _, em = smooth
    pts = np.array([[4.0, 4.0], [40.0, 90.0]])
    test = _test_grid_at(em, pts, 4.0)
    rep = report(em, test, None, threshold=3.0)
    assert rep.summary["n_conflicts"] == 2 and len(rep.conflicts) == 2
    assert rep.summary["fraction_resolution_gt_0.7"] is None


@pytest.fixture(scope="module")
def kernel_grid():
    return generate_grid(ScenarioSpec("kernel-draw", seed=3))


def test_cv_singleton(kernel_grid):
    res = cross_validate_theta(kernel_grid, BASIS, [(0.2, 0.2)], k=4, seed=0)
    assert res.chosen == (0.2, 0.2) and len(res.scores) == 1


def test_cv_ties_go_to_smallest():
    grid = generate_grid(ScenarioSpec("constant", params={"value": 5.0}))
    cands = [(0.05, 0.05), (0.01, 0.02), (0.01, 0.01), (0.1, 0.1)]
    res = cross_validate_theta(grid, BASIS, cands, k=5, seed=3)
    assert res.chosen == (0.01, 0.01)
    assert max(res.scores) <= 1e-9


def test_cv_recovers_kernel_theta(kernel_grid):
    cands = log_spaced_candidates(0.0015, 0.15, 11)
    res = cross_validate_theta(kernel_grid, BASIS, cands, k=5, seed=1)
    assert abs(cands.index(res.chosen) - cands.index((0.015, 0.015))) <= 1


def test_cv_deterministic(kernel_grid):
    cands = log_spaced_candidates(0.005, 0.05, 4)
    a = cross_validate_theta(kernel_grid, BASIS, cands, k=3, seed=9)
    b = cross_validate_theta(kernel_grid, BASIS, cands, k=3, seed=9)
    assert a == b


def test_cv_nested_candidates(kernel_grid):
    sub = log_spaced_candidates(0.05, 0.15, 3)
    sup = sub + log_spaced_candidates(0.005, 0.03, 3)
    a = cross_validate_theta(kernel_grid, BASIS, sub, k=4, seed=2)
    b = cross_validate_theta(kernel_grid, BASIS, sup, k=4, seed=2)
    assert b.chosen_score <= a.chosen_score * (1 + 1e-9)
    assert b.scores[: len(sub)] == a.scores


def test_cv_errors(kernel_grid):
    with pytest.raises(ConfigError):
        cross_validate_theta(kernel_grid, BASIS, [0.01], k=1)
    with pytest.raises(ConfigError):
        cross_validate_theta(kernel_grid, BASIS, [], k=3)
    with pytest.raises(ConfigError):
        cross_validate_theta(kernel_grid.subset(range(5)), BASIS, [0.01], k=3)
    wide = BasisSpec(("1", "N", "P", "N^2", "N*P", "P^2"))
    with pytest.raises(InsufficientDataError):
        cross_validate_theta(kernel_grid.subset(range(10)), wide, [0.01], k=2)


def test_folds_partition():
    folds = fold_indices(23, 4, seed=1)
    assert sorted(np.concatenate(folds).tolist()) == list(range(23))
    assert [len(f) for f in folds] == [6, 6, 6, 5]


def test_cv_result_round_trip(kernel_grid):
    res = cross_validate_theta(kernel_grid, BASIS, log_spaced_candidates(0.01, 0.02, 2), k=3, seed=0)
    assert CvResult.from_dict(json.loads(json.dumps(res.to_dict()))) == res
