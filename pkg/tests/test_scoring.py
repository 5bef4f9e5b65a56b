import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from firecast.errors import ConfigError, DataError
from firecast.scoring import (
    METRICS,
    ScoreConfig,
    ScoreReport,
    auc,
    crps_from_samples,
    exceedance_check,
    predictive_cdf,
    raw_weight_count,
    score_predictive,
    weighted_binned_score,
)


def pair_count_auc(labels, scores):
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_crps(samples, y):
    x = np.asarray(samples, float)
    pairs = np.mean([abs(a - b) for a, b in itertools.product(x, x)])
    return np.mean(np.abs(x - y)) - 0.5 * pairs


# ---------------------------------------------------------------- AUC


def test_auc_separated_and_tied():
    assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert auc([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == 0.0
    assert auc([0, 1, 0, 1, 1], [0.3] * 5) == 0.5


def test_auc_six_point_hand_example():
    labels = [1, 0, 1, 0, 0, 1]
    scores = [0.9, 0.4, 0.4, 0.2, 0.7, 0.6]
    # positives 0.9, 0.4, 0.6 against negatives 0.4, 0.2, 0.7: 3 + 1.5 + 2 = 6.5 of 9
    assert auc(labels, scores) == pytest.approx(6.5 / 9, abs=1e-15)
    assert auc(labels, scores) == pytest.approx(pair_count_auc(labels, scores), abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_auc_matches_pair_counting(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, 60)
    labels[:2] = [0, 1]
    scores = np.round(rng.normal(size=60), 1)  # rounding forces ties
    assert auc(labels, scores) == pytest.approx(pair_count_auc(labels, scores), abs=1e-12)


@given(st.lists(st.integers(-50, 50), min_size=4, max_size=30), st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_auc_monotone_invariance(scores, seed):
    labels = np.random.default_rng(seed).integers(0, 2, len(scores))
    labels[:2] = [0, 1]
    s = np.array(scores) / 10.0
    assert auc(labels, np.exp(s)) == pytest.approx(auc(labels, s), abs=1e-12)
    assert auc(labels, 3 * s**3 + s) == pytest.approx(auc(labels, s), abs=1e-12)


def test_auc_errors():
    with pytest.raises(DataError):
        auc([1, 1, 1], [0.1, 0.2, 0.3])
    with pytest.raises(DataError):
        auc([0, 2], [0.1, 0.2])
    with pytest.raises(DataError):
        auc([0, 1], [0.1])


# ---------------------------------------------------------------- CRPS


def test_crps_degenerate_correct_is_zero():
    assert crps_from_samples(np.full(50, 3.2), 3.2) == 0.0


def test_crps_uniform_matches_quadrature():
    y = 0.5
    truth = integrate.quad(lambda t: (t - (t >= y)) ** 2, 0, 1, points=[y])[0]
    x = np.random.default_rng(0).random(100_000)
    assert crps_from_samples(x, y) == pytest.approx(truth, abs=1e-3)
    assert truth == pytest.approx(1 / 12, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_crps_matches_all_pairs(seed):
    rng = np.random.default_rng(seed)
    x = rng.gamma(2.0, 1.0, 25)
    y = rng.gamma(2.0, 1.0)
    assert crps_from_samples(x, y) == pytest.approx(brute_crps(x, y), abs=1e-12)
    n = x.size
    fair = np.mean(np.abs(x - y)) - 0.5 * np.sum(np.abs(x[:, None] - x[None, :])) / (n * (n - 1))
    assert crps_from_samples(x, y, fair=True) == pytest.approx(fair, abs=1e-12)


def test_crps_vectorised_columns():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(40, 6))
    y = rng.normal(size=6)
    cols = crps_from_samples(x, y)
    for j in range(6):
        assert cols[j] == pytest.approx(crps_from_samples(x[:, j], y[j]), abs=1e-14)


@given(
    st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=40),
    st.floats(-100, 100, allow_nan=False),
    st.floats(-50, 50, allow_nan=False),
)
@settings(max_examples=100, deadline=None)
def test_crps_nonnegative_and_translation_equivariant(xs, y, c):
    x = np.array(xs)
    base = crps_from_samples(x, y)
    assert base >= -1e-9
    assert crps_from_samples(x + c, y + c) == pytest.approx(base, abs=1e-9 * (1 + abs(c) + np.abs(x).max()))


def test_crps_positive_unless_degenerate_correct():
    assert crps_from_samples([1.0, 1.0, 1.0], 1.5) > 0
    assert crps_from_samples([1.0, 2.0], 1.0) > 0


def test_crps_propriety_smoke():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        ys = rng.normal(size=400)
        true = rng.normal(size=(500, 400))
        off = 0.6 + 1.4 * rng.normal(size=(500, 400))
        wins += np.mean(crps_from_samples(true, ys)) <= np.mean(crps_from_samples(off, ys))
    assert wins >= 18


def test_crps_errors():
    with pytest.raises(DataError):
        crps_from_samples([], 1.0)
    with pytest.raises(DataError):
        crps_from_samples(np.zeros((5, 3)), np.zeros(2))
    with pytest.raises(DataError):
        crps_from_samples([1.0], 1.0, fair=True)
    with pytest.raises(DataError):
        crps_from_samples([np.nan, 1.0], 1.0)


# ---------------------------------------------------------------- threshold scores


def test_weight_normaliser():
    cfg = ScoreConfig()
    assert raw_weight_count(30) == pytest.approx(1 - 1.961**-0.25, abs=1e-15)
    assert cfg.weights("C")[-1] == 1.0
    assert cfg.weights("B")[-1] == 1.0
    for v in ("C", "B"):
        w = cfg.weights(v)
        assert np.all((w > 0) & (w <= 1)) and np.all(np.diff(w) > 0)


def test_perfect_degenerate_forecast_scores_zero():
    cfg = ScoreConfig()
    obs = np.array([0, 3, 12, 40])
    draws = np.tile(obs, (100, 1))
    for weighted in (True, False):
        assert weighted_binned_score(predictive_cdf(draws, cfg.thresholds("C")), obs, cfg, "C", weighted) == 0.0


def test_two_cell_manual_sum():
    cfg = ScoreConfig(count_thresholds=(0, 2, 5))
    cdf = np.array([[0.5, 0.75, 1.0], [0.25, 0.5, 0.625]])
    obs = np.array([1, 4])
    w = cfg.weights("C")
    # cell 1: indicators (0, 1, 1); cell 2: (0, 0, 1)
    manual = (
        w[0] * 0.25 + w[1] * 0.0625 + w[2] * 0.0
        + w[0] * 0.0625 + w[1] * 0.25 + w[2] * 0.140625
    )
    assert weighted_binned_score(cdf, obs, cfg, "C") == pytest.approx(manual, abs=1e-15)
    assert weighted_binned_score(cdf, obs, cfg, "C", weighted=False) == pytest.approx(0.25 + 0.0625 + 0.0625 + 0.25 + 0.140625, abs=1e-15)


@pytest.mark.parametrize("variant", ["C", "B"])
def test_weighted_not_above_unweighted(variant):
    rng = np.random.default_rng(7)
    cfg = ScoreConfig()
    scale = 3.0 if variant == "C" else 800.0
    draws = np.where(rng.random((200, 30)) < 0.5, 0.0, rng.gamma(1.0, scale, (200, 30)))
    obs = np.where(rng.random(30) < 0.5, 0.0, rng.gamma(1.0, scale, 30))
    cdf = predictive_cdf(draws, cfg.thresholds(variant))
    assert weighted_binned_score(cdf, obs, cfg, variant) <= weighted_binned_score(cdf, obs, cfg, variant, weighted=False)


def test_cdf_at_zero_is_zero_mass():
    draws = np.array([[0, 2], [0, 0], [3, 0], [1, 0]], float)
    cdf = predictive_cdf(draws, [0, 1])
    np.testing.assert_allclose(cdf[:, 0], [0.5, 0.75])
    np.testing.assert_allclose(cdf[:, 1], [0.75, 0.75])


def test_score_config_validation_and_errors():
    with pytest.raises(ConfigError):
        ScoreConfig(count_thresholds=(0, 2, 2))
    with pytest.raises(ConfigError):
        ScoreConfig().thresholds("Z")
    with pytest.raises(DataError):
        weighted_binned_score(np.zeros((2, 3)), [0, 1], ScoreConfig(), "C")
    cfg = ScoreConfig(count_thresholds=(0, 1))
    with pytest.raises(DataError):
        weighted_binned_score(np.zeros((2, 2)), [0, 1, 2], cfg, "C")
    assert ScoreConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- exceedance


def test_exceedance_threshold_below_everything():
    obs = np.array([1.0, 5.0, 2.0])
    res = exceedance_check(np.ones((10, 3)) * 4, obs, [0.5])
    assert res[0].empirical == 1.0
    assert res[0].percentile == 50.0  # every replicate rate ties with it


def test_exceedance_empty_index_set():
    with pytest.raises(DataError):
        exceedance_check(np.zeros((5, 0)), np.zeros(0), [0])


def test_exceedance_rank_uniform_under_true_model():
    ranks = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        lam = rng.gamma(2.0, 1.0, 50)
        obs = rng.poisson(lam)
        reps = rng.poisson(lam, size=(400, 50))
        ranks.append(exceedance_check(reps, obs, [2])[0].percentile / 100.0)
    assert stats.kstest(ranks, "uniform").pvalue > 0.05


# ---------------------------------------------------------------- report


def test_score_predictive_report():
    rng = np.random.default_rng(1)
    n_draws, n_cells = 300, 40
    p = rng.uniform(0.1, 0.9, n_cells)
    z = (rng.random((n_draws, n_cells)) < p).astype(int)
    root = rng.gamma(2.0, 3.0, (n_draws, n_cells))
    count = z * (1 + rng.poisson(1.0, (n_draws, n_cells)))
    area = z * root**2
    obs_z = rng.random(n_cells) < p
    obs_z[:2] = [True, False]
    obs_count = obs_z * 2
    obs_area = obs_z * rng.gamma(2.0, 3.0, n_cells) ** 2
    rep = score_predictive(z, count, area, root, obs_count, obs_area)
    assert [m for m, _ in rep.rows()] == list(METRICS)
    assert 0 <= rep.auc <= 1 and rep.crps > 0
    assert rep.r_count_weighted <= rep.r_count_unweighted
    assert rep.r_area_weighted <= rep.r_area_unweighted
    fire = obs_count > 0
    assert rep.crps == pytest.approx(np.mean([crps_from_samples(root[:, j], np.sqrt(obs_area[j])) for j in np.nonzero(fire)[0]]))
    assert rep.to_text().count("\n") == 6
    with pytest.raises(DataError):
        score_predictive(z, count, area, root, np.zeros(n_cells), np.zeros(n_cells))


def test_score_report_rejects_nonfinite():
    with pytest.raises(DataError):
        ScoreReport(0.5, np.nan, 0, 0, 0, 0)
