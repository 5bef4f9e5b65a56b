"""Synthetic end-to-end study: simulate, run both stages, compare against the truth.

One replicate draws a lattice panel, fits the full hurdle model (with the
stage-one forecast effects) and the variant without them on the same
forecasts, and records

* whether the full model's 90% credible interval covers each true intercept,
* AUC and mean CRPS on the test span for both variants,
* the percentile of the observed fire-occurrence rate among the
  predictive replicate rates of the full model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureConfig
from .latent.grid import GridConfig, credible_interval, point_approx
from .latent.hurdle import HurdleConfig
from .pipeline import Split, Stage1Config, Stage2Config, observed_test_cells, stage1, stage2
from .scoring import exceedance_check, score_predictive
from .synthetic import SyntheticSpec, simulate

INTERCEPTS = ("b0_Z", "b0_C", "b0_B")


def _study_features():
    return FeatureConfig(window=12, lags=(1, 2, 3), ma_spans=(3, 6, 12), hist_spans=(), levels=("conc", "dist"))


def _study_stage1():
    tree = {"n_trees": 60, "max_depth": 3, "learning_rate": 0.1}
    return Stage1Config(5, [dict(tree, loss="poisson")], [dict(tree, loss="tweedie")])


@dataclass
class StudyConfig:
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)
    features: FeatureConfig = field(default_factory=_study_features)
    stage1: Stage1Config = field(default_factory=_study_stage1)
    train_end: int = 39
    test_start: int = 40
    test_end: int = 47
    strategy: str = "ccd"
    n_samples: int = 1000
    level: float = 0.9
    full_variant: str = "M1"
    reduced_variant: str = "M4"


@dataclass
class Replicate:
    seed: int
    covered: dict
    intervals: dict
    auc: dict
    crps: dict
    exceedance_percentile: float
    seconds: float

    @property
    def full_beats_reduced(self) -> bool:
        return self.crps["full"] < self.crps["reduced"] and self.auc["full"] > self.auc["reduced"]


def replicate(seed: int, cfg: StudyConfig = StudyConfig()) -> Replicate:
    t0 = time.perf_counter()
    sim = simulate(cfg.spec, seed)
    panel = sim.panel
    split = Split(cfg.train_end, cfg.test_start, cfg.test_end)
    s1 = stage1(panel, sim.covariates, cfg.features, split, cfg.stage1, seed)
    obs_c, obs_a = observed_test_cells(panel, s1.forecasts)
    truth = {f"b0_{p}": v for p, v in cfg.spec.intercepts.items()}
    covered, intervals, auc, crps = {}, {}, {}, {}
    pct = float("nan")
    for role, variant in (("full", cfg.full_variant), ("reduced", cfg.reduced_variant)):
        s2cfg = Stage2Config(HurdleConfig(variant=variant), GridConfig(strategy=cfg.strategy), cfg.n_samples)
        res = stage2(panel, s1.forecasts, s2cfg, seed)
        pp = res.predictive
        rep = score_predictive(pp.z, pp.count, pp.area, pp.root_given_fire, obs_c, obs_a)
        auc[role], crps[role] = rep.auc, rep.crps
        if role == "full":
            model = res.hurdle.model
            approxes = [point_approx(model, p) for p in res.fit.points]
            for name in INTERCEPTS:
                lo, hi = credible_interval(model, res.fit, model.offsets[name], cfg.level, approxes)
                intervals[name] = (lo, hi)
                covered[name] = bool(lo <= truth[name] <= hi)
            pct = exceedance_check(pp.count, obs_c, [0])[0].percentile
    return Replicate(seed, covered, intervals, auc, crps, pct, time.perf_counter() - t0)


@dataclass
class StudySummary:
    replicates: list

    @property
    def n(self) -> int:
        return len(self.replicates)

    def coverage(self) -> dict:
        return {k: float(np.mean([r.covered[k] for r in self.replicates])) for k in INTERCEPTS}

    def n_full_better(self) -> int:
        return sum(r.full_beats_reduced for r in self.replicates)

    def n_exceedance_in_band(self, lo: float = 5.0, hi: float = 95.0) -> int:
        return sum(lo <= r.exceedance_percentile <= hi for r in self.replicates)

    def seconds(self) -> float:
        return float(sum(r.seconds for r in self.replicates))


def run_study(seeds, cfg: StudyConfig = StudyConfig(), progress=None) -> StudySummary:
    reps = []
    for s in seeds:
        reps.append(replicate(int(s), cfg))
        if progress is not None:
            progress(reps[-1])
    return StudySummary(reps)
