import math

import numpy as np
import pytest

from robflr.benchmark import COLUMNS, BenchmarkConfig, read_csv, run_benchmark, summarize, write_csv
from robflr.curve_core import CurveSet, TimeGrid
from robflr.simgen import (
    ScenarioConfig,
    clean_dataset,
    contaminate_scenario1,
    fitting_error,
    gen_predictors,
    mu_x,
    mu_y,
    phi_x,
    phi_y,
    simulate,
)


def test_mean_functions():
    assert mu_x(0.5) == 2.0
    assert mu_y(1.0) == 60.0


def _gram(P, grid):
    return (P * grid.trapezoid_weights()) @ P.T


def test_predictor_eigenfunctions_orthonormal():
    grid = TimeGrid.uniform(0, 1, 500)
    assert np.max(np.abs(_gram(phi_x(grid.points), grid) - np.eye(3))) <= 1e-4


def test_response_eigenfunction_gram():
    # sqrt(2) sin(5 pi t) and sqrt(2) cos(2 pi t) are not orthogonal on [0, 1]
    grid = TimeGrid.uniform(0, 1, 500)
    off = 2 * (1 / (7 * math.pi) + 1 / (3 * math.pi))
    expected = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, off], [0.0, off, 1.0]])
    assert np.max(np.abs(_gram(phi_y(grid.points), grid) - expected)) <= 1e-4


def test_predictors_zero_scores_give_mean():
    X, _ = gen_predictors(ScenarioConfig(n=5, T=50, score_sds=(0.0, 0.0, 0.0)))
    np.testing.assert_array_equal(X.samples, np.tile(mu_x(X.grid.points), (5, 1)))


def test_first_score_variance():
    _, Z = gen_predictors(ScenarioConfig(n=4000, T=20, seed=1))
    assert abs(Z[:, 0].var(ddof=1) - 40) <= 3


def test_responses_zero_b_and_noise():
    d = clean_dataset(ScenarioConfig(n=4, T=30, b_range=(0.0, 0.0), noise_sd=0.0))
    np.testing.assert_array_equal(d.Y.samples, np.tile(mu_y(d.Y.grid.points), (4, 1)))


def test_score_space_identity():
    d = clean_dataset(ScenarioConfig(n=20, T=500, seed=2))
    grid = d.X.grid
    t = grid.points
    beta = d.true_beta(t, t)
    # integral over s of beta(s, t) (x_i(s) - mu_x(s)), by the trapezoid rule
    integral = ((d.X.samples - mu_x(t)) * grid.trapezoid_weights()) @ beta
    np.testing.assert_allclose(integral, d.scores @ d.true_B @ phi_y(t), rtol=0, atol=1e-3)
    np.testing.assert_allclose(d.Y.samples, mu_y(t) + integral + d.noise, rtol=0, atol=1e-3)


def test_outlier_count_rounding():
    assert ScenarioConfig(n=400, a=0.2).n_outliers == 80
    assert ScenarioConfig(n=400, a=0.1).n_outliers == 40
    assert ScenarioConfig(n=10, a=0.25).n_outliers == 3  # 2.5 rounds up
    d = simulate(ScenarioConfig(n=400, T=50, a=0.2, seed=3))
    assert d.outlier_flags.sum() == 80
    d = simulate(ScenarioConfig(n=400, T=50, a=0.1, scenario=2, seed=3))
    assert d.outlier_flags.sum() == 40


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(a=0.5)
    with pytest.raises(ValueError):
        ScenarioConfig(scenario=3)


def test_no_contamination_leaves_data_unchanged():
    cfg = ScenarioConfig(n=30, T=40, seed=4)
    a, b = simulate(cfg), clean_dataset(cfg)
    assert not a.outlier_flags.any()
    np.testing.assert_array_equal(a.Y.samples, b.Y.samples)


def test_null_scenario1_contamination():
    cfg = ScenarioConfig(n=30, T=40, a=0.2, seed=5)
    clean = clean_dataset(cfg)
    cont = contaminate_scenario1(clean, cfg, R=np.zeros((3, 3)))
    assert cont.outlier_flags.sum() == 6
    np.testing.assert_allclose(cont.Y.samples, clean.Y.samples, rtol=0, atol=1e-12)


def test_scenario1_outliers_follow_shifted_surface():
    cfg = ScenarioConfig(n=40, T=60, a=0.1, seed=6)
    d = simulate(cfg)
    R = d.contamination["R"]
    t = d.Y.grid.points
    f = d.outlier_flags
    expect = mu_y(t) + d.scores[f] @ (d.true_B + R) @ phi_y(t) + d.noise[f]
    np.testing.assert_allclose(d.Y.samples[f], expect, atol=1e-12)


def test_scenario2_bump_support_and_residual():
    cfg = ScenarioConfig(n=100, T=500, a=0.2, scenario=2, seed=7)
    d = simulate(cfg)
    p, start = d.contamination["p"], d.contamination["start"]
    t = d.Y.grid.points
    step = t[1] - t[0]
    support = t[p > 0]
    assert abs((support[-1] - support[0]) - 0.1) <= 2 * step
    assert start - step <= support[0] and support[-1] <= start + 0.1 + step
    w = d.Y.grid.trapezoid_weights()
    assert w @ p**2 == pytest.approx(1.0, rel=1e-12)
    assert d.contamination["l"].shape == (3,)
    resid = d.Y.samples - d.oracle_prediction()
    outside = p == 0
    # outside the bump an outlier differs from the true model by its noise only
    np.testing.assert_allclose(resid[:, outside], d.noise[:, outside], atol=1e-12)
    f = d.outlier_flags
    np.testing.assert_allclose(resid[f][:, ~outside] - d.noise[f][:, ~outside],
                               np.outer(d.scores[f] @ d.contamination["l"], p[~outside]), atol=1e-10)


def test_bspline_bump_scale_keeps_native_peak():
    d = simulate(ScenarioConfig(n=20, T=2001, a=0.2, scenario=2, bump_scale="bspline", seed=8))
    assert d.contamination["p"].max() == pytest.approx(2 / 3, abs=1e-3)


def test_fitting_error_examples():
    grid = TimeGrid.uniform(0, 1, 21)
    Y = CurveSet(grid, np.random.default_rng(9).standard_normal((4, 21)))
    assert fitting_error(Y, Y, np.zeros(4, dtype=bool)) == 0
    c = 0.7
    assert fitting_error(Y, Y.samples + c, np.zeros(4, dtype=bool)) == pytest.approx(c**2, rel=1e-12)


def test_fitting_error_hand_arithmetic():
    grid = TimeGrid.uniform(0, 1, 3)  # trapezoid weights 1/4, 1/2, 1/4
    Y = CurveSet(grid, np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0], [5.0, 5.0, 5.0]]))
    Yhat = np.array([[1.0, 1.0, 1.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
    flags = np.array([False, False, True])
    # sample 1: 0/4 + 1/2 + 4/4 = 1.5; sample 2: 4/2 = 2; sample 3 is flagged
    assert fitting_error(Y, Yhat, flags) == pytest.approx((1.5 + 2.0) / 2, rel=1e-15)


def test_oracle_fitting_error_matches_noise_energy():
    d = clean_dataset(ScenarioConfig(n=400, T=500, seed=10))
    fe = fitting_error(d.Y, d.oracle_prediction(), d.outlier_flags)
    # E||eps||^2 = 3 q-variances (orthonormal phi^y) + 1 offset variance
    assert fe == pytest.approx(4 * 0.1**2, rel=0.2)


def test_simulation_is_deterministic():
    cfg = ScenarioConfig(n=50, T=40, a=0.2, scenario=2, seed=11)
    a, b = simulate(cfg), simulate(cfg)
    np.testing.assert_array_equal(a.Y.samples, b.Y.samples)
    np.testing.assert_array_equal(a.outlier_flags, b.outlier_flags)
    c = simulate(ScenarioConfig(n=50, T=40, a=0.2, scenario=2, seed=12))
    assert not np.array_equal(a.Y.samples, c.Y.samples)


def test_true_beta_surface():
    d = clean_dataset(ScenarioConfig(n=5, T=20, seed=13))
    s = np.array([0.1, 0.4])
    t = np.array([0.2, 0.5, 0.9])
    ref = np.array([[phi_x(si)[:, 0] @ d.true_B @ phi_y(ti)[:, 0] for ti in t] for si in s])
    np.testing.assert_allclose(d.true_beta(s, t), ref, atol=1e-12)


DESK_BENCH = dict(n=200, T=100, num_basis=40, n_starts=200)


def test_benchmark_rerun_is_identical(tmp_path):
    cfg = BenchmarkConfig(scenarios=(1,), a_list=(0.1,), alpha_list=(0.8,), reps=1, **DESK_BENCH)
    a, b = run_benchmark(cfg), run_benchmark(cfg)
    write_csv(tmp_path / "a.csv", a, COLUMNS)
    write_csv(tmp_path / "b.csv", b, COLUMNS)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert {(r["method"], r["criterion"]) for r in a} == {
        ("classical", "bic"),
        ("robust", "bic"),
        ("robust", "rbic"),
    }
    back = read_csv(tmp_path / "a.csv")
    assert [float(r["FE"]) for r in back] == [r["FE"] for r in a]


def test_benchmark_parallel_matches_serial():
    base = dict(scenarios=(2,), a_list=(0.2,), alpha_list=(0.8,), reps=2, **DESK_BENCH)
    serial = run_benchmark(BenchmarkConfig(threads=1, **base))
    parallel = run_benchmark(BenchmarkConfig(threads=2, **base))
    np.testing.assert_equal(serial, parallel)


def test_benchmark_robust_auc_scenario1():
    cfg = BenchmarkConfig(scenarios=(1,), a_list=(0.1,), alpha_list=(0.8,), reps=20, **DESK_BENCH)
    summary = summarize(run_benchmark(cfg))
    rbic = next(s for s in summary if s["method"] == "robust" and s["criterion"] == "rbic")
    assert rbic["reps"] == 20
    assert rbic["mean_AUC_model"] >= 0.95


def test_benchmark_clean_classical_fits_better():
    cfg = BenchmarkConfig(scenarios=(1,), a_list=(0.0,), alpha_list=(0.8,), reps=10, **DESK_BENCH)
    summary = summarize(run_benchmark(cfg))
    cls = next(s for s in summary if s["method"] == "classical")
    rob = next(s for s in summary if s["method"] == "robust" and s["criterion"] == "rbic")
    assert cls["mean_FE"] < rob["mean_FE"]
    assert math.isnan(cls["mean_AUC_model"])
