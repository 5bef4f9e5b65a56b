"""Forecast verification: AUC, sample CRPS, weighted threshold scores, exceedance checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError

COUNT_THRESHOLDS = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 25, 30)
AREA_THRESHOLDS = (0, 20, 40, 60, 80, 100, 200, 300, 400, 500, 1000, 2000, 5000, 10000, 20000, 50000)


def raw_weight_count(h):
    return 1.0 - (1.0 + (np.asarray(h, float) + 1.0) ** 2 / 1000.0) ** -0.25


def raw_weight_area(h):
    return 1.0 - (1.0 + (np.asarray(h, float) + 1.0) / 1000.0) ** -0.25


@dataclass(frozen=True)
class ScoreConfig:
    count_thresholds: tuple = COUNT_THRESHOLDS
    area_thresholds: tuple = AREA_THRESHOLDS

    def __post_init__(self):
        for name in ("count_thresholds", "area_thresholds"):
            h = np.asarray(getattr(self, name), float)
            if h.size == 0 or np.any(np.diff(h) <= 0):
                raise ConfigError(f"{name} must be non-empty and strictly increasing")
            if h[0] < 0:
                raise ConfigError(f"{name} must be non-negative")

    def thresholds(self, variant: str) -> np.ndarray:
        if variant == "C":
            return np.asarray(self.count_thresholds, float)
        if variant == "B":
            return np.asarray(self.area_thresholds, float)
        raise ConfigError("variant must be 'C' or 'B'")

    def weights(self, variant: str) -> np.ndarray:
        """Raw weights divided by the weight at the last threshold."""
        h = self.thresholds(variant)
        raw = raw_weight_count(h) if variant == "C" else raw_weight_area(h)
        return raw / raw[-1]

    def to_dict(self) -> dict:
        return {"count_thresholds": list(self.count_thresholds), "area_thresholds": list(self.area_thresholds)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreConfig":
        return cls(tuple(d.get("count_thresholds", COUNT_THRESHOLDS)), tuple(d.get("area_thresholds", AREA_THRESHOLDS)))


def auc(labels, scores) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise DataError("labels and scores must be 1-d arrays of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("labels must be 0 or 1")
    pos = labels == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise DataError("AUC needs both classes")
    ranks = stats.rankdata(scores)  # average ranks implement the tie convention
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def _mean_abs_pair_diff(sorted_x, fair: bool):
    """Mean |X - X'| over ordered pairs of the sorted sample (axis 0).

    The gap between order statistics k and k+1 separates k(n-k) unordered
    pairs, so the sum has non-negative terms and vanishes for equal samples.
    """
    n = sorted_x.shape[0]
    k = np.arange(1, n, dtype=float)
    total = 2.0 * np.tensordot(k * (n - k), np.diff(sorted_x, axis=0), axes=(0, 0))
    if fair:
        if n < 2:
            raise DataError("the fair estimator needs at least two samples")
        return total / (n * (n - 1.0))
    return total / n**2


def crps_from_samples(samples, y, fair: bool = False):
    """CRPS of the sample distribution against ``y``.

    ``mean|X - y| - mean|X - X'| / 2``.  By default the pair mean runs over
    all n^2 ordered pairs, which is the exact CRPS of the empirical
    distribution (non-negative, zero only when every sample equals ``y``).
    ``fair=True`` excludes the n self-pairs and is unbiased for the CRPS
    of the sampled law.  ``samples`` may be (n,) with scalar ``y`` or
    (n, m) with ``y`` of shape (m,); pairs are summed in O(n log n) after
    sorting.
    """
    x = np.asarray(samples, float)
    if x.shape[0] == 0:
        raise DataError("no samples")
    y = np.asarray(y, float)
    if x.ndim == 2 and y.shape != (x.shape[1],):
        raise DataError("one observation per sample column is required")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("samples and observations must be finite")
    term1 = np.mean(np.abs(x - y), axis=0)
    term2 = _mean_abs_pair_diff(np.sort(x, axis=0), fair)
    out = term1 - 0.5 * term2
    return float(out) if np.ndim(out) == 0 else out


def predictive_cdf(samples, thresholds):
    """P(Y <= h) per cell from draws (rows) by cells (columns): shape (cells, thresholds)."""
    x = np.asarray(samples, float)
    h = np.asarray(thresholds, float)
    return np.stack([np.mean(x <= hk, axis=0) for hk in h], axis=1)


def weighted_binned_score(cdf, observations, cfg: ScoreConfig = ScoreConfig(), variant: str = "C", weighted: bool = True) -> float:
    """Sum over cells and thresholds of w(h) [P(Y <= h) - 1(y <= h)]^2."""
    h = cfg.thresholds(variant)
    cdf = np.atleast_2d(np.asarray(cdf, float))
    obs = np.atleast_1d(np.asarray(observations, float))
    if cdf.shape[1] != h.size:
        raise DataError(f"expected {h.size} CDF values per cell, got {cdf.shape[1]}")
    if cdf.shape[0] != obs.size:
        raise DataError("one observation per cell is required")
    w = cfg.weights(variant) if weighted else np.ones(h.size)
    ind = (obs[:, None] <= h[None, :]).astype(float)
    return float(np.sum(w * (cdf - ind) ** 2))


@dataclass
class Exceedance:
    threshold: float
    empirical: float
    predictive: np.ndarray
    percentile: float

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "empirical": self.empirical,
            "predictive_mean": float(np.mean(self.predictive)),
            "predictive_q05": float(np.quantile(self.predictive, 0.05)),
            "predictive_q95": float(np.quantile(self.predictive, 0.95)),
            "percentile": self.percentile,
        }


def exceedance_check(samples, observations, thresholds) -> list:
    """Empirical exceedance rate per threshold and its rank among the replicate rates.

    Each predictive replicate (row of ``samples``) yields the rate of cells
    above the threshold.  ``percentile`` is 100 times the fraction of
    replicate rates below the empirical rate, ties counting one half.
    """
    x = np.asarray(samples, float)
    obs = np.asarray(observations, float)
    if obs.size == 0:
        raise DataError("empty index set")
    if x.ndim != 2 or x.shape[1] != obs.size:
        raise DataError("samples must be (replicates, cells) matching the observations")
    out = []
    for h in np.asarray(thresholds, float):
        emp = float(np.mean(obs > h))
        rates = np.mean(x > h, axis=1)
        pct = 100.0 * (np.mean(rates < emp) + 0.5 * np.mean(rates == emp))
        out.append(Exceedance(float(h), emp, rates, float(pct)))
    return out


METRICS = ("auc", "crps", "r_count_weighted", "r_count_unweighted", "r_area_weighted", "r_area_unweighted")


@dataclass
class ScoreReport:
    auc: float
    crps: float
    r_count_weighted: float
    r_count_unweighted: float
    r_area_weighted: float
    r_area_unweighted: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for m in METRICS:
            if not np.isfinite(getattr(self, m)):
                raise DataError(f"metric {m} is not finite")

    def rows(self) -> list:
        return [(m, float(getattr(self, m))) for m in METRICS]

    def to_text(self) -> str:
        return "".join(f"{m}\t{v:.10g}\n" for m, v in self.rows())

    def to_dict(self) -> dict:
        d = dict(self.rows())
        d.update(self.extra)
        return d


def score_predictive(z_samples, count_samples, area_samples, root_given_fire, obs_count, obs_area, cfg: ScoreConfig = ScoreConfig()) -> ScoreReport:
    """The six summary metrics for hurdle draws (rows) over test cells (columns).

    AUC scores observed presence by the predictive fire probability.  CRPS
    compares conditional square-root area draws with the observed square
    root area, averaged over cells with an observed fire.  Threshold scores
    use unconditional draws (zeros included) on the count and hectare scales.
    """
    obs_count = np.asarray(obs_count, float)
    obs_area = np.asarray(obs_area, float)
    fire = obs_count > 0
    if not fire.any():
        raise DataError("no observed fire in the scored cells")
    p_fire = np.mean(np.asarray(z_samples), axis=0)
    a = auc(fire.astype(int), p_fire)
    crps = float(np.mean(crps_from_samples(np.asarray(root_given_fire)[:, fire], np.sqrt(obs_area[fire]))))
    cdf_c = predictive_cdf(count_samples, cfg.thresholds("C"))
    cdf_b = predictive_cdf(area_samples, cfg.thresholds("B"))
    return ScoreReport(
        a,
        crps,
        weighted_binned_score(cdf_c, obs_count, cfg, "C", True),
        weighted_binned_score(cdf_c, obs_count, cfg, "C", False),
        weighted_binned_score(cdf_b, obs_area, cfg, "B", True),
        weighted_binned_score(cdf_b, obs_area, cfg, "B", False),
    )
