"""Two-stage forecasting pipeline: ingestion, boosting forecasts, hurdle fit, scoring.

Each stage has an in-memory function (``stage1``, ``stage2``, ``score_run``)
and the ``run_*`` wrappers persist its outputs as plain JSON/CSV under the
run directory.  All randomness derives from the single configured seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boosting import BoostConfig, TreeEnsemble, mean_abs_shap, superlearner_cv
from .errors import ConfigError, DataError
from .features import (
    CouncilMonthPanel,
    FeatureConfig,
    aggregate,
    build_windowed,
    read_covariates,
    read_edges,
    read_events,
    read_units,
)
from .latent.grid import FitResult, GridConfig, hyper_grid
from .latent.hurdle import Cells, Geography, HurdleConfig, HurdleModel, assemble
from .latent.predictive import PosteriorPredictive, posterior_predictive
from .scoring import ScoreConfig, ScoreReport, exceedance_check, score_predictive

# purposes for derived seeds
SEED_STAGE1 = {"C": 1, "B": 2}
SEED_PREDICTIVE = 3
PROVENANCE_TRAIN = "oof"
PROVENANCE_TEST = "final"
_MONTH = re.compile(r"^(\d{4})-(\d{2})$")


def derive_seed(seed: int, purpose: int) -> int:
    return int(np.random.SeedSequence([seed, purpose]).generate_state(1)[0])


def parse_month(text: str) -> tuple:
    m = _MONTH.match(str(text))
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise ConfigError(f"expected a YYYY-MM month, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _default_grid(loss):
    return [{"n_trees": 100, "max_depth": 4, "learning_rate": 0.1, "loss": loss}]


@dataclass
class Stage1Config:
    n_folds: int = 5
    grid_C: list = field(default_factory=lambda: _default_grid("poisson"))
    grid_B: list = field(default_factory=lambda: _default_grid("tweedie"))

    def grid(self, variant: str) -> list:
        raw = self.grid_C if variant == "C" else self.grid_B
        try:
            return [BoostConfig(**g) for g in raw]
        except TypeError as exc:
            raise ConfigError(f"bad boosting config: {exc}") from exc


@dataclass
class Stage2Config:
    hurdle: HurdleConfig = field(default_factory=HurdleConfig)
    grid: GridConfig = field(default_factory=lambda: GridConfig(strategy="eb"))
    n_samples: int = 1000

    def to_dict(self) -> dict:
        return {"hurdle": self.hurdle.to_dict(), "grid": self.grid.to_dict(), "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> "Stage2Config":
        try:
            grid = GridConfig(**d.get("grid", {"strategy": "eb"}))
        except TypeError as exc:
            raise ConfigError(f"bad grid config: {exc}") from exc
        out = cls(HurdleConfig.from_dict(d.get("hurdle", {})), grid, int(d.get("n_samples", 1000)))
        if out.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        return out


@dataclass
class PipelineConfig:
    """Declarative run description; relative data paths resolve against ``base_dir``."""

    seed: int
    run_dir: str
    data: dict
    split: dict
    features: FeatureConfig = field(default_factory=FeatureConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    exceedance_thresholds: tuple = (0,)
    shap_top: int = 10
    shap_max_rows: int = 200
    horizons: tuple = (1,)
    base_dir: str = "."

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("an integer seed is required")
        for k in ("events", "units", "council_edges", "district_edges", "start", "n_months"):
            if k not in self.data:
                raise ConfigError(f"data section needs {k!r}")
        for k in ("train_end", "test_start", "test_end"):
            if k not in self.split:
                raise ConfigError(f"split section needs {k!r}")
        te, ts, tz = (parse_month(self.split[k]) for k in ("train_end", "test_start", "test_end"))
        if not te < ts <= tz:
            raise ConfigError("the test range must start after the training end and be non-empty")
        parse_month(self.data["start"])
        if not self.horizons or any(int(h) < 1 for h in self.horizons):
            raise ConfigError("horizons must be positive integers")

    def path(self, key: str) -> str | None:
        p = self.data.get(key)
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    @property
    def run_path(self) -> str:
        return self.run_dir if os.path.isabs(self.run_dir) else os.path.join(self.base_dir, self.run_dir)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "run_dir": self.run_dir,
            "data": dict(self.data),
            "split": dict(self.split),
            "features": self.features.to_dict(),
            "stage1": {"n_folds": self.stage1.n_folds, "grid_C": self.stage1.grid_C, "grid_B": self.stage1.grid_B},
            "stage2": self.stage2.to_dict(),
            "score": self.score.to_dict(),
            "exceedance_thresholds": list(self.exceedance_thresholds),
            "shap": {"top": self.shap_top, "max_rows": self.shap_max_rows},
            "horizons": list(self.horizons),
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "PipelineConfig":
        if "seed" not in d:
            raise ConfigError("config needs a seed")
        try:
            s1 = d.get("stage1", {})
            shap = d.get("shap", {})
            return cls(
                seed=d["seed"],
                run_dir=d.get("run_dir", "run"),
                data=dict(d["data"]),
                split=dict(d["split"]),
                features=FeatureConfig.from_dict(d.get("features", {})),
                stage1=Stage1Config(
                    int(s1.get("n_folds", 5)),
                    list(s1.get("grid_C", _default_grid("poisson"))),
                    list(s1.get("grid_B", _default_grid("tweedie"))),
                ),
                stage2=Stage2Config.from_dict(d.get("stage2", {})),
                score=ScoreConfig.from_dict(d.get("score", {})),
                exceedance_thresholds=tuple(d.get("exceedance_thresholds", (0,))),
                shap_top=int(shap.get("top", 10)),
                shap_max_rows=int(shap.get("max_rows", 200)),
                horizons=tuple(int(h) for h in d.get("horizons", (1,))),
                base_dir=str(base_dir),
            )
        except KeyError as exc:
            raise ConfigError(f"config is missing section {exc}") from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(d, os.path.dirname(os.path.abspath(path)))

    def for_horizon(self, h: int) -> "PipelineConfig":
        """Copy with the feature horizon set to ``h`` and its own run subdirectory."""
        feats = FeatureConfig.from_dict({**self.features.to_dict(), "horizon": int(h)})
        sub = self.run_dir if len(self.horizons) == 1 else os.path.join(self.run_dir, f"h{int(h)}")
        d = self.to_dict()
        out = PipelineConfig.from_dict({**d, "run_dir": sub, "horizons": [int(h)]}, self.base_dir)
        out.features = feats
        return out


# ---------------------------------------------------------------- ingestion


def load_data(cfg: PipelineConfig):
    """Read the CSV inputs into a panel and (possibly empty) covariate table."""
    units = read_units(cfg.path("units"))
    ce = read_edges(cfg.path("council_edges"), units.ids)
    de = read_edges(cfg.path("district_edges"), units.district_ids)
    start = parse_month(cfg.data["start"])
    panel = aggregate(
        read_events(cfg.path("events")),
        units,
        start,
        int(cfg.data["n_months"]),
        float(cfg.data.get("min_area", 1.0)),
        float(cfg.data.get("min_duration", 3.0)),
        ce,
        de,
    )
    cov_path = cfg.path("covariates")
    cov = read_covariates(cov_path, panel) if cov_path else None
    return panel, cov


@dataclass(frozen=True)
class Split:
    train_end: int
    test_start: int
    test_end: int

    @classmethod
    def resolve(cls, panel: CouncilMonthPanel, split: dict) -> "Split":
        idx = [panel.index_of(*parse_month(split[k])) for k in ("train_end", "test_start", "test_end")]
        out = cls(*idx)
        if out.train_end < 0 or out.test_end >= panel.n_months:
            raise ConfigError("split months fall outside the panel")
        return out


# ---------------------------------------------------------------- stage 1


@dataclass
class ForecastTable:
    """One-step boosting forecasts per (unit, month) with their provenance."""

    unit: np.ndarray
    time: np.ndarray
    fc_hat: np.ndarray
    ba_hat: np.ndarray
    provenance: np.ndarray

    def select(self, provenance: str) -> "ForecastTable":
        m = self.provenance == provenance
        return ForecastTable(self.unit[m], self.time[m], self.fc_hat[m], self.ba_hat[m], self.provenance[m])

    def to_csv(self, panel: CouncilMonthPanel) -> str:
        years, months = panel.calendar(self.time)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["unit", "year", "month", "fc_hat", "ba_hat", "provenance"])
        for s, y, m, c, b, p in zip(self.unit, years, months, self.fc_hat, self.ba_hat, self.provenance):
            w.writerow([panel.units.ids[s], int(y), int(m), repr(float(c)), repr(float(b)), p])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, panel: CouncilMonthPanel) -> "ForecastTable":
        pos = panel.units.position()
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            np.array([pos[r["unit"]] for r in rows], int),
            np.array([panel.index_of(int(r["year"]), int(r["month"])) for r in rows], int),
            np.array([float(r["fc_hat"]) for r in rows]),
            np.array([float(r["ba_hat"]) for r in rows]),
            np.array([r["provenance"] for r in rows]),
        )


@dataclass
class Stage1Result:
    forecasts: ForecastTable
    models: dict
    grid_scores: dict
    test_features: dict


def stage1(panel, covariates, features: FeatureConfig, split: Split, cfg: Stage1Config, seed: int) -> Stage1Result:
    """Out-of-fold forecasts on the training span and final-model forecasts on the test span."""
    preds, models, scores, test_X = {}, {}, {}, {}
    for variant in ("C", "B"):
        ds = build_windowed(panel, covariates, features, variant)
        train = ds.select(ds.time <= split.train_end)
        test = ds.select((ds.time >= split.test_start) & (ds.time <= split.test_end))
        if len(train) == 0:
            raise DataError("no trainable rows before the training end; shorten the feature window")
        if len(test) == 0:
            raise DataError("no test rows in the test range")
        cv = superlearner_cv(train.X, train.y, cfg.grid(variant), cfg.n_folds, derive_seed(seed, SEED_STAGE1[variant]), ds.feature_names)
        preds[variant] = (train, cv.oof, test, cv.final_model.predict(test.X))
        models[variant] = cv.final_model
        scores[variant] = cv.grid_scores
        test_X[variant] = test.X
    train_c, oof_c, test_c, fin_c = preds["C"]
    train_b, oof_b, test_b, fin_b = preds["B"]
    unit = np.r_[train_c.unit, test_c.unit]
    time = np.r_[train_c.time, test_c.time]
    prov = np.array([PROVENANCE_TRAIN] * len(train_c) + [PROVENANCE_TEST] * len(test_c))
    table = ForecastTable(unit, time, np.r_[oof_c, fin_c], np.r_[oof_b, fin_b], prov)
    return Stage1Result(table, models, scores, test_X)


# ---------------------------------------------------------------- stage 2


def geography(panel: CouncilMonthPanel) -> Geography:
    return Geography(
        panel.n_units,
        panel.council_edges,
        panel.units.district_index,
        panel.district_edges,
        start_month=panel.start[1],
        start_year=panel.start[0],
    )


def hurdle_cells(panel: CouncilMonthPanel, forecasts: ForecastTable):
    """Training cells (OOF forecasts, observed) and prediction cells (final forecasts)."""
    tr = forecasts.select(PROVENANCE_TRAIN)
    te = forecasts.select(PROVENANCE_TEST)
    if len(tr.unit) == 0 or len(te.unit) == 0:
        raise DataError("stage two needs both training (oof) and test (final) forecasts")
    if te.time.min() <= tr.time.max():
        raise DataError("test forecasts overlap the training span")
    train = Cells(tr.unit, tr.time, tr.fc_hat, tr.ba_hat, panel.count[tr.unit, tr.time], panel.area[tr.unit, tr.time])
    test = Cells(te.unit, te.time, te.fc_hat, te.ba_hat)
    return train, test


@dataclass
class Stage2Result:
    hurdle: HurdleModel
    fit: FitResult
    predictive: PosteriorPredictive


def stage2(panel, forecasts: ForecastTable, cfg: Stage2Config, seed: int) -> Stage2Result:
    train, test = hurdle_cells(panel, forecasts)
    hm = assemble(train, geography(panel), cfg.hurdle, test)
    fit = hyper_grid(hm.model, cfg.grid)
    pp = posterior_predictive(hm, fit, cfg.n_samples, derive_seed(seed, SEED_PREDICTIVE))
    return Stage2Result(hm, fit, pp)


# ---------------------------------------------------------------- scoring


@dataclass
class RunReport:
    scores: ScoreReport | None
    exceedance: list
    shap: dict
    cells: str = ""

    def files(self) -> dict:
        """File name -> text of every report artefact."""
        out = {}
        if self.scores is not None:
            out["report.txt"] = self.scores.to_text()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "empirical", "predictive_mean", "predictive_q05", "predictive_q95", "percentile"])
        for e in self.exceedance:
            d = e.to_dict()
            w.writerow([f"{d[k]:.10g}" for k in ("threshold", "empirical", "predictive_mean", "predictive_q05", "predictive_q95", "percentile")])
        if self.exceedance:
            out["exceedance.csv"] = buf.getvalue()
        if self.cells:
            out["forecast_cells.csv"] = self.cells
        for variant, ranked in sorted(self.shap.items()):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["rank", "feature", "mean_abs_shap"])
            for k, (name, v) in enumerate(ranked, 1):
                w.writerow([k, name, f"{v:.10g}"])
            out[f"shap_{variant}.csv"] = buf.getvalue()
        return out


def observed_test_cells(panel: CouncilMonthPanel, forecasts: ForecastTable):
    te = forecasts.select(PROVENANCE_TEST)
    return panel.count[te.unit, te.time], panel.area[te.unit, te.time]


def shap_summary(models: dict, test_features: dict, top: int, max_rows: int) -> dict:
    return {v: mean_abs_shap(models[v], test_features[v][:max_rows], top) for v in sorted(models)}


def score_run(panel, forecasts, pp: PosteriorPredictive, cfg: PipelineConfig, shap: dict) -> RunReport:
    obs_c, obs_a = observed_test_cells(panel, forecasts)
    scores = score_predictive(pp.z, pp.count, pp.area, pp.root_given_fire, obs_c, obs_a, cfg.score)
    exc = exceedance_check(pp.count, obs_c, cfg.exceedance_thresholds)
    return RunReport(scores, exc, shap, cell_summary(panel, forecasts, pp))


def cell_summary(panel, forecasts: ForecastTable, pp: PosteriorPredictive) -> str:
    """Plot-ready CSV: per test cell, observations and predictive summaries."""
    te = forecasts.select(PROVENANCE_TEST)
    years, months = panel.calendar(te.time)
    p_fire = np.mean(pp.z, axis=0)
    mean_count = np.mean(pp.count, axis=0)
    med_root = np.median(pp.root_given_fire, axis=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit", "year", "month", "count", "area", "p_fire", "mean_count", "median_area_given_fire"])
    for k, s in enumerate(te.unit):
        w.writerow([
            panel.units.ids[s], int(years[k]), int(months[k]), int(panel.count[s, te.time[k]]),
            f"{panel.area[s, te.time[k]]:.10g}", f"{p_fire[k]:.10g}", f"{mean_count[k]:.10g}", f"{med_root[k] ** 2:.10g}",
        ])
    return buf.getvalue()


# ---------------------------------------------------------------- persistence

STAGE1_FILES = ("forecasts.csv", "ensemble_C.json", "ensemble_B.json")
STAGE2_FILES = ("hurdle_model.json", "fit.json", "predictive.json")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _require(path) -> str:
    if not os.path.exists(path):
        raise DataError(f"missing artefact {path}; run the earlier stage first")
    return Path(path).read_text()


def run_stage1(cfg: PipelineConfig) -> Stage1Result:
    """Stage one; also snapshots the resolved config into the run directory."""
    _write(os.path.join(cfg.run_path, "config.json"), _dump(cfg.to_dict()))
    panel, cov = load_data(cfg)
    res = stage1(panel, cov, cfg.features, Split.resolve(panel, cfg.split), cfg.stage1, cfg.seed)
    d = os.path.join(cfg.run_path, "stage1")
    _write(os.path.join(d, "forecasts.csv"), res.forecasts.to_csv(panel))
    for v, m in res.models.items():
        m.save(os.path.join(d, f"ensemble_{v}.json"))
    return res


def load_forecasts(cfg: PipelineConfig, panel) -> ForecastTable:
    return ForecastTable.from_csv(_require(os.path.join(cfg.run_path, "stage1", "forecasts.csv")), panel)


def run_stage2(cfg: PipelineConfig) -> Stage2Result:
    panel, _ = load_data(cfg)
    res = stage2(panel, load_forecasts(cfg, panel), cfg.stage2, cfg.seed)
    d = os.path.join(cfg.run_path, "stage2")
    _write(os.path.join(d, "hurdle_model.json"), _dump(res.hurdle.to_dict()))
    _write(os.path.join(d, "fit.json"), _dump(res.fit.to_dict()))
    _write(os.path.join(d, "predictive.json"), _dump(res.predictive.to_dict()))
    return res


def run_forecast(cfg: PipelineConfig, n_samples: int | None = None, seed: int | None = None) -> PosteriorPredictive:
    """Fresh predictive draws from the persisted model and fit."""
    d = os.path.join(cfg.run_path, "stage2")
    hm = HurdleModel.from_dict(json.loads(_require(os.path.join(d, "hurdle_model.json"))))
    fit = FitResult.from_dict(json.loads(_require(os.path.join(d, "fit.json"))))
    n = cfg.stage2.n_samples if n_samples is None else n_samples
    s = derive_seed(cfg.seed, SEED_PREDICTIVE) if seed is None else seed
    pp = posterior_predictive(hm, fit, n, s)
    _write(os.path.join(d, "predictive.json"), _dump(pp.to_dict()))
    return pp


def _shap_inputs(cfg: PipelineConfig):
    panel, cov = load_data(cfg)
    split = Split.resolve(panel, cfg.split)
    d = os.path.join(cfg.run_path, "stage1")
    models, feats = {}, {}
    for v in ("C", "B"):
        path = os.path.join(d, f"ensemble_{v}.json")
        _require(path)
        models[v] = TreeEnsemble.load(path)
        ds = build_windowed(panel, cov, cfg.features, v)
        feats[v] = ds.select((ds.time >= split.test_start) & (ds.time <= split.test_end)).X
    return models, feats


def _write_report(cfg: PipelineConfig, rep: RunReport) -> None:
    for name, text in rep.files().items():
        _write(os.path.join(cfg.run_path, "report", name), text)


def run_shap(cfg: PipelineConfig) -> dict:
    """Top mean-|SHAP| features of the persisted ensembles over the test rows."""
    models, feats = _shap_inputs(cfg)
    ranked = shap_summary(models, feats, cfg.shap_top, cfg.shap_max_rows)
    for name, text in RunReport(None, [], ranked).files().items():
        if name.startswith("shap_"):
            _write(os.path.join(cfg.run_path, "report", name), text)
    return ranked


def run_report(cfg: PipelineConfig, include_shap: bool = True) -> RunReport:
    """Score the persisted predictive draws against the observed test span."""
    panel, _ = load_data(cfg)
    forecasts = load_forecasts(cfg, panel)
    pp = PosteriorPredictive.from_dict(json.loads(_require(os.path.join(cfg.run_path, "stage2", "predictive.json"))))
    shap = {}
    if include_shap:
        models, feats = _shap_inputs(cfg)
        shap = shap_summary(models, feats, cfg.shap_top, cfg.shap_max_rows)
    rep = score_run(panel, forecasts, pp, cfg, shap)
    _write_report(cfg, rep)
    return rep


def write_manifest(cfg: PipelineConfig) -> dict:
    """sha256 of every artefact under the run directory (the manifest itself excluded)."""
    root = Path(cfg.run_path)
    files = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(root).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {"seed": cfg.seed, "config": cfg.to_dict(), "files": files}
    _write(root / "manifest.json", _dump(manifest))
    return manifest


def run_pipeline(cfg: PipelineConfig) -> dict:
    """All stages for every configured horizon; returns horizon -> RunReport."""
    out = {}
    for h in cfg.horizons:
        sub = cfg.for_horizon(h)
        run_stage1(sub)
        run_stage2(sub)
        out[int(h)] = run_report(sub)
        write_manifest(sub)
    return out
