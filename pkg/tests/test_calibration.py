import json
import warnings

import numpy as np
import pytest

import oracles
from shapetest.calibration import (GRID_SIZE, NullCalibration, NullScoreMatrix, calibrate,
                                   calibrate_u_alpha, default_u_grid, empirical_quantile,
                                   estimate_quantile_table, exceedance_rates,
                                   simulate_null_scores)
from shapetest.cones import DesignGrid
from shapetest.directions import MONO_LG, MONO_LM, POSITIVITY, ShapeModel, TestConfig
from shapetest.exceptions import CalibrationError, ShapeTestError


@pytest.fixture(scope="module")
def lm_model():
    return ShapeModel.build(MONO_LM, 40, 8)


@pytest.fixture(scope="module")
def lm_cal(lm_model):
    return calibrate(lm_model, 0.05, n_sim=2000, seed=7)


def test_empirical_quantile_examples():
    assert empirical_quantile([1, 2, 3, 4], 0.75) == 3
    assert empirical_quantile([5], 0.01) == 5
    assert empirical_quantile([5], 0.99) == 5
    assert empirical_quantile(np.arange(1, 101), 0.95) == 95
    assert empirical_quantile(np.arange(100, 0, -1), 0.95) == 95
    with pytest.raises(ShapeTestError):
        empirical_quantile([], 0.5)
    with pytest.raises(ShapeTestError):
        empirical_quantile([1.0], 1.0)


def test_u_grid():
    g = default_u_grid(0.05, 25)
    assert g.size == GRID_SIZE
    assert g[0] == pytest.approx(0.05) and g[-1] == pytest.approx(0.002)
    assert np.all(np.diff(g) < 0)
    assert np.allclose(g[1:] / g[:-1], g[1] / g[0])
    assert default_u_grid(0.05, 1).tolist() == [0.05]


def test_null_scores_deterministic(lm_model):
    a = simulate_null_scores(lm_model, 1500, seed=3, threads=1)
    b = simulate_null_scores(lm_model, 1500, seed=3, threads=4)
    assert np.array_equal(a.scores, b.scores)
    c = simulate_null_scores(lm_model, 1500, seed=3, stream="search")
    assert not np.array_equal(a.scores, c.scores)
    # a row does not depend on how many rows are drawn
    d = simulate_null_scores(lm_model, 10, seed=3)
    assert np.array_equal(a.scores[:10], d.scores)
    assert a.scores.shape == (1500, len(lm_model.scales))
    assert not a.scores.flags.writeable


def test_quantile_table_monotone_and_finite(lm_cal):
    q = lm_cal.q_table
    assert q.shape == (len(lm_cal.scales), GRID_SIZE)
    assert np.all(np.isfinite(q))
    # u decreases along the grid, so quantiles must not decrease
    assert np.all(np.diff(q, axis=1) >= 0)


def test_u_alpha_properties(lm_cal):
    alpha = lm_cal.alpha
    grid = lm_cal.u_grid
    j = lm_cal.u_index
    assert lm_cal.u_alpha in grid.tolist()
    assert lm_cal.u_alpha >= alpha / lm_cal.ell_n - 1e-15
    assert lm_cal.p_hat[j] <= alpha
    if j > 0:
        assert lm_cal.p_hat[j - 1] > alpha
    assert lm_cal.streams == ("table", "search")


def test_exceedance_rates_by_hand():
    scores = NullScoreMatrix(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]]),
                             (1, 2), 0, "search")
    q = np.array([[1.0, 3.0], [1.0, 3.0]])
    np.testing.assert_allclose(exceedance_rates(q, scores), [0.75, 0.0])
    u, p = calibrate_u_alpha(q, [0.2, 0.1], 0.3, scores)
    assert u == 0.1
    with pytest.raises(CalibrationError):
        calibrate_u_alpha(q[:, :1], [0.2], 0.3, scores)


def test_single_scale_student_quantile():
    n = 20
    model = ShapeModel.build(POSITIVITY, n, 1)
    scores = simulate_null_scores(model, 100_000, seed=1)
    q = estimate_quantile_table(scores, [0.05])[0, 0]
    assert abs(q - oracles.student_upper(n - 1, 0.05)) < 0.03
    cal = calibrate(model, 0.05, n_sim=2000, seed=1)
    assert cal.u_alpha == 0.05


def test_too_few_draws_warns(lm_model):
    scores = simulate_null_scores(lm_model, 100, seed=0)
    with pytest.warns(UserWarning):
        estimate_quantile_table(scores, default_u_grid(0.05, 8))


def test_alpha_range(lm_model):
    for alpha in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(ShapeTestError):
            calibrate(lm_model, alpha, n_sim=1000)


def test_round_trip_is_bitwise(tmp_path, lm_cal):
    path = tmp_path / "cal.json"
    lm_cal.save(path)
    back = NullCalibration.load(path)
    assert np.array_equal(back.q_table, lm_cal.q_table)
    assert np.array_equal(back.u_grid, lm_cal.u_grid)
    assert np.array_equal(back.p_hat, lm_cal.p_hat)
    assert back.u_alpha == lm_cal.u_alpha
    assert back.critical_values == lm_cal.critical_values
    path2 = tmp_path / "again.json"
    back.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_document_layout(tmp_path, lm_cal):
    path = tmp_path / "cal.json"
    lm_cal.save(path)
    doc = json.loads(path.read_text())
    h = doc["header"]
    assert h["variant"] == "mono-lm" and h["n"] == 40 and h["ell_n"] == 8
    assert h["n_sim"] == {"table": 2000, "search": 2000}
    assert h["design_dependent"] is False
    assert len(doc["q_table"]) == len(doc["scales"]) * len(doc["u_grid"])
    # 17 significant digits for every float
    assert "0.050000000000000003" in path.read_text()


def test_tampering_detected(tmp_path, lm_cal):
    doc = lm_cal.to_dict()
    doc["header"]["n"] = 41
    with pytest.raises(CalibrationError):
        NullCalibration.from_dict(doc)
    doc = lm_cal.to_dict()
    doc["u_alpha"] = 0.0123
    with pytest.raises(CalibrationError):
        NullCalibration.from_dict(doc)
    doc = lm_cal.to_dict()
    del doc["scales"]
    with pytest.raises(CalibrationError):
        NullCalibration.from_dict(doc)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(CalibrationError):
        NullCalibration.load(bad)


def test_small_calibrations_are_not_persisted(tmp_path, lm_model):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cal = calibrate(lm_model, 0.05, n_sim=500, seed=0)
    with pytest.raises(CalibrationError):
        cal.save(tmp_path / "small.json")


def test_compatibility_checks(lm_cal):
    x = DesignGrid.regular(40)
    lm_cal.check_compatible(TestConfig(MONO_LM, 40, 8, x))
    # the local-mean null law does not depend on the design
    lm_cal.check_compatible(TestConfig(MONO_LM, 40, 8, x.x**2))
    for cfg in (TestConfig(MONO_LM, 40, 5, x), TestConfig(MONO_LG, 40, 8, x)):
        with pytest.raises(CalibrationError):
            lm_cal.check_compatible(cfg)


def test_design_dependent_calibration():
    x = DesignGrid.regular(40).x
    model = ShapeModel.build(MONO_LG, 40, 5, x)
    cal = calibrate(model, 0.05, n_sim=1000, seed=2)
    assert cal.design_dependent and cal.design is not None
    cal.check_compatible(TestConfig(MONO_LG, 40, 5, 0.1 + 0.8 * x))
    with pytest.raises(CalibrationError):
        cal.check_compatible(TestConfig(MONO_LG, 40, 5, x**2))
    assert np.allclose(cal.config().x.x, x)


def test_calibration_is_pure(lm_model, lm_cal):
    again = calibrate(lm_model, 0.05, n_sim=2000, seed=7, threads=3)
    assert again.to_dict() == lm_cal.to_dict()
    other = calibrate(lm_model, 0.05, n_sim=2000, seed=8)
    assert other.content_hash() != lm_cal.content_hash()
