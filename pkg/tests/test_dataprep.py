"""Preprocessing pipeline: transforms, selection, scaling, replay."""

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from icbayes.dataprep import (
    PreprocessRecord,
    apply_record,
    load_csv,
    preprocess,
    prior_target_moments,
    scale_target_to_prior,
    select_features,
    standardize,
    write_csv,
    yeo_johnson,
    yeo_johnson_llf,
    yeo_johnson_transform,
)
from icbayes.errors import DataError, DomainError
from icbayes.probmodels import get_scenario


# ---------------------------------------------------------------------------
# Yeo-Johnson


def test_yj_lambda_one_is_the_identity():
    y = np.array([-3.0, -0.25, 0.0, 1e-20, 0.6, 42.0])
    assert np.array_equal(yeo_johnson_transform(y, 1.0), y)


def test_yj_log_branch_value():
    assert yeo_johnson_transform(np.array([np.e - 1.0]), 0.0)[0] == 1.0


def test_yj_negative_branch_value():
    assert yeo_johnson_transform(np.array([-1.0]), 2.0)[0] == -np.log(2.0)


def test_yj_matches_reference_implementation():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(200) * 1.7 - 0.4
    for lam in (-4.2, -1.0, 0.0, 0.35, 2.0, 3.9):
        mine = yeo_johnson_transform(y, lam)
        ref = scipy.stats.yeojohnson(y, lmbda=lam)
        np.testing.assert_allclose(mine, ref, rtol=1e-12, atol=1e-15)


def test_yj_fitted_lambda_is_a_likelihood_maximum():
    rng = np.random.default_rng(1)
    y = np.abs(rng.standard_normal(500)) ** 1.8 * np.sign(rng.standard_normal(500)) + 2.0
    _, lam = yeo_johnson(y)
    _, lam_ref = scipy.stats.yeojohnson(y)
    assert abs(lam - lam_ref) < 1e-4
    # within search tolerance of the reference optimizer's value
    assert yeo_johnson_llf(y, lam) >= yeo_johnson_llf(y, lam_ref) - 1e-8


def test_yj_gaussianizes_a_skewed_target():
    rng = np.random.default_rng(2)
    y = np.exp(rng.standard_normal(2000))  # log-normal, heavily right-skewed
    t, lam = yeo_johnson(y)
    assert abs(scipy.stats.skew(t)) < abs(scipy.stats.skew(y)) / 5
    assert lam < 0.5  # contraction of the right tail


@given(
    st.integers(0, 2**32 - 1),
    st.floats(min_value=-5.0, max_value=5.0, allow_nan=False),
)
@settings(max_examples=40, deadline=None)
def test_yj_preserves_order(seed, lam):
    rng = np.random.default_rng(seed)
    y = np.sort(rng.standard_normal(200) * 5.0)
    out = yeo_johnson_transform(y, lam)
    assert np.all(np.diff(out) >= 0)


def test_yj_constant_input_passes_through():
    t, lam = yeo_johnson(np.full(10, 3.5))
    assert lam == 1.0
    assert np.array_equal(t, np.full(10, 3.5))


def test_yj_guards():
    with pytest.raises(DataError):
        yeo_johnson(np.array([1.0, np.inf]))
    with pytest.raises(DomainError):
        yeo_johnson_transform(np.ones(3), np.nan)
    with pytest.raises(DomainError):
        yeo_johnson(np.ones((2, 2)))


# ---------------------------------------------------------------------------
# standardize / select_features


def test_standardize_moments_and_round_trip():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((50, 4)) * np.array([0.2, 3.0, 1.0, 10.0]) + 5.0
    out, rec = standardize(m)
    assert np.abs(out.mean(axis=0)).max() < 1e-12
    assert np.abs(out.std(axis=0) - 1.0).max() < 1e-12
    np.testing.assert_allclose(rec.invert(out), m, rtol=0, atol=1e-12)


def test_standardize_is_idempotent_within_tolerance():
    rng = np.random.default_rng(1)
    m, _ = standardize(rng.standard_normal((40, 3)))
    again, _ = standardize(m)
    np.testing.assert_allclose(again, m, rtol=0, atol=1e-12)


def test_standardize_two_point_column():
    out, _ = standardize(np.array([[0.0], [2.0]]))
    assert np.array_equal(out, np.array([[-1.0], [1.0]]))


def test_standardize_drops_constant_columns():
    m = np.column_stack([np.ones(20), np.arange(20.0)])
    out, rec = standardize(m)
    assert out.shape == (20, 1)
    assert rec.kept.tolist() == [1]
    with pytest.raises(DataError):
        standardize(np.ones((10, 3)))
    with pytest.raises(DataError):
        standardize(np.ones((1, 3)))


def test_select_features_prefers_more_distinct_values():
    rng = np.random.default_rng(3)
    cont = rng.standard_normal(100)
    coarse = np.round(rng.standard_normal(100))
    binary = (rng.standard_normal(100) > 0).astype(float)
    m = np.column_stack([binary, cont, coarse])
    assert select_features(m, 1).tolist() == [1]
    assert select_features(m, 2).tolist() == [1, 2]


def test_select_features_tie_break_and_counts_match_set_oracle():
    rng = np.random.default_rng(4)
    m = rng.integers(0, 8, size=(60, 5)).astype(float)
    counts = [len(set(col.tolist())) for col in m.T]
    order = sorted(range(5), key=lambda j: (-counts[j], j))
    for p in (1, 2, 3, 5):
        assert select_features(m, p).tolist() == sorted(order[:p])
    # all columns distinct everywhere: tie broken by lower index
    n = np.arange(30.0)
    tie = np.column_stack([n, n + 1, n + 2])
    assert select_features(tie, 2).tolist() == [0, 1]
    with pytest.raises(DataError):
        select_features(tie, 4)


# ---------------------------------------------------------------------------
# prior-matched target scaling


def test_prior_moments_glm1_centered_and_seed_stable():
    cfg = get_scenario("glm-1")
    mean, sd = prior_target_moments(cfg)
    assert abs(mean) < 4 * sd / np.sqrt(100_000)
    _, sd_b = prior_target_moments(cfg, seed=1)
    assert abs(sd_b**2 - sd**2) / sd**2 < 0.02


def test_prior_moments_cache_hits():
    cfg = get_scenario("glm-1")
    assert prior_target_moments(cfg) is prior_target_moments(cfg)


def test_prior_moments_rejects_non_regression_scenarios():
    with pytest.raises(DataError):
        prior_target_moments(get_scenario("gmm-1"))


def test_scale_target_matches_implied_moments():
    rng = np.random.default_rng(5)
    cfg = get_scenario("glm-1")
    y = rng.standard_normal(400) * 7.0 + 100.0
    out, rec = scale_target_to_prior(y, cfg)
    mean, sd = prior_target_moments(cfg)
    assert out.mean() == pytest.approx(mean, abs=1e-9)
    assert out.std() == pytest.approx(sd, abs=1e-9)
    # already-matched input: near-identity map
    out2, rec2 = scale_target_to_prior(out, cfg)
    assert rec2.scale == pytest.approx(1.0, abs=1e-9)
    assert rec2.shift == pytest.approx(0.0, abs=1e-6)


def test_scale_target_zero_variance_errors():
    with pytest.raises(DataError):
        scale_target_to_prior(np.full(50, 2.0), get_scenario("glm-1"))


# ---------------------------------------------------------------------------
# full pipeline


@pytest.fixture(scope="module")
def raw_table():
    rng = np.random.default_rng(7)
    n, k = 300, 9
    X = rng.standard_normal((n, k)) * rng.uniform(0.5, 3, size=k) + rng.normal(size=k)
    X[:, 2] = np.round(X[:, 2])
    X[:, 5] = (X[:, 5] > 0).astype(float)
    y = np.exp(0.4 * X[:, 0] + rng.standard_normal(n) * 0.5)
    return X, y


def test_pipeline_replay_is_bitwise(raw_table):
    X, y = raw_table
    cfg = get_scenario("glm-1")
    Xp, yp, rec = preprocess(X, y, cfg, n_rows=120, seed=11)
    assert Xp.shape == (120, cfg.p)
    X2, y2 = apply_record(X, y, rec)
    assert np.array_equal(Xp, X2)
    assert np.array_equal(yp, y2)
    # and through the JSON record serialization
    X3, y3 = apply_record(X, y, PreprocessRecord.from_json(rec.to_json()))
    assert np.array_equal(Xp, X3)
    assert np.array_equal(yp, y3)


def test_pipeline_output_moments(raw_table):
    X, y = raw_table
    cfg = get_scenario("glm-1")
    Xp, yp, rec = preprocess(X, y, cfg)
    mean, sd = prior_target_moments(cfg)
    assert np.abs(Xp.mean(axis=0)).max() < 1e-12
    assert np.abs(Xp.std(axis=0) - 1.0).max() < 1e-12
    assert yp.mean() == pytest.approx(mean, abs=1e-9)
    assert yp.std() == pytest.approx(sd, abs=1e-9)
    assert rec.n_rows is None
    assert len(rec.feature_indices) == cfg.p


def test_pipeline_subsample_seed_changes_rows(raw_table):
    X, y = raw_table
    cfg = get_scenario("glm-1")
    _, y_a, _ = preprocess(X, y, cfg, n_rows=50, seed=0)
    _, y_b, _ = preprocess(X, y, cfg, n_rows=50, seed=1)
    assert not np.array_equal(y_a, y_b)


def test_pipeline_guards(raw_table):
    X, y = raw_table
    cfg = get_scenario("glm-1")
    with pytest.raises(DataError):
        preprocess(X, y, get_scenario("fa-1"))
    with pytest.raises(DataError):
        preprocess(X, y[:-1], cfg)
    with pytest.raises(DataError):
        preprocess(X, y, cfg, n_rows=10_000)
    with pytest.raises(DataError):
        preprocess(X[:, :3], y, cfg)  # fewer columns than the scenario needs


def test_record_invariants():
    with pytest.raises(DataError):
        PreprocessRecord((0,), (0.0,), (0.0,), 1.0, 1.0, 0.0, None, 0)
    with pytest.raises(DataError):
        PreprocessRecord((0,), (0.0,), (1.0,), np.inf, 1.0, 0.0, None, 0)
    with pytest.raises(DataError):
        PreprocessRecord((0, 1), (0.0,), (1.0,), None, 1.0, 0.0, None, 0)


def test_apply_record_guards(raw_table):
    X, y = raw_table
    rec = PreprocessRecord((50,), (0.0,), (1.0,), None, 1.0, 0.0, None, 0)
    with pytest.raises(DataError):
        apply_record(X, y, rec)
    small = PreprocessRecord((0,), (0.0,), (1.0,), None, 1.0, 0.0, 999, 0)
    with pytest.raises(DataError):
        apply_record(X[:5], y[:5], small)


# ---------------------------------------------------------------------------
# CSV loading


def test_load_csv_means_match_hand_computation(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text(
        "a,b\n"
        "1,0.5\n"
        "2,1.5\n"
        "3,2.0\n"
        "4,3.0\n"
        "5,3.0\n"
    )
    tab = load_csv(p)
    assert tab.columns == ("a", "b")
    # means worked out by hand: (1+2+3+4+5)/5 and (0.5+1.5+2+3+3)/5
    assert tab.column("a").mean() == 3.0
    assert tab.column("b").mean() == 2.0


def test_load_csv_drops_missing_rows(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b\n1,2\n,3\n4,NaN\n5,null\n6,7\n")
    tab = load_csv(p)
    assert tab.matrix.tolist() == [[1.0, 2.0], [6.0, 7.0]]
    assert tab.n_dropped == 3


def test_load_csv_parse_error_names_the_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(DataError, match=":3:"):
        load_csv(p)
    q = tmp_path / "short.csv"
    q.write_text("a,b\n1,2\n3\n")
    with pytest.raises(DataError, match=":3:"):
        load_csv(q)


def test_load_csv_column_hints(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("a,b,c\n1,2,3\n4,5,6\n")
    tab = load_csv(p, columns=["c", "a"])
    assert tab.columns == ("c", "a")
    assert tab.matrix.tolist() == [[3.0, 1.0], [6.0, 4.0]]
    with pytest.raises(DataError, match="not found"):
        load_csv(p, columns=["z"])


def test_load_csv_header_only_and_empty(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b\n")
    tab = load_csv(p)
    assert tab.matrix.shape == (0, 2)
    assert tab.n_rows == 0
    q = tmp_path / "e.csv"
    q.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_csv(q)


def test_csv_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(9)
    m = rng.standard_normal((20, 3)) * 1e3
    p = tmp_path / "rt.csv"
    write_csv(p, m, ["x", "y", "z"])
    tab = load_csv(p)
    assert np.array_equal(tab.matrix, m)
    assert tab.columns == ("x", "y", "z")
