"""Command line front end.

Every subcommand except ``simulate`` takes a JSON pipeline config.  On
failure a one-line JSON object ``{"error": <category>, "message": ...}``
goes to stderr and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .errors import ConfigError, FirecastError
from .features import build_windowed
from .pipeline import (
    PipelineConfig,
    _dump,
    _write,
    load_data,
    run_forecast,
    run_pipeline,
    run_report,
    run_shap,
    run_stage1,
    run_stage2,
    write_manifest,
)
from .synthetic import SyntheticSpec, simulate, write_simulation

EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(FirecastError):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    h = args.horizon if getattr(args, "horizon", None) is not None else cfg.horizons[0]
    if h not in cfg.horizons:
        raise ConfigError(f"horizon {h} is not among the configured horizons {list(cfg.horizons)}")
    return cfg.for_horizon(h)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def starter_config(spec: SyntheticSpec, test_months: int = 8) -> dict:
    """A runnable pipeline config for a simulated dataset written alongside it."""
    y0, m0 = spec.start
    def month(t):
        total = y0 * 12 + m0 - 1 + t
        return f"{total // 12:04d}-{total % 12 + 1:02d}"
    T = spec.n_months
    tree = {"n_trees": 60, "max_depth": 3, "learning_rate": 0.1}
    return {
        "seed": 0,
        "run_dir": "run",
        "data": {
            "events": "events.csv",
            "units": "units.csv",
            "council_edges": "council_edges.csv",
            "district_edges": "district_edges.csv",
            "covariates": "covariates.csv",
            "start": month(0),
            "n_months": T,
            "min_area": 0.0,
            "min_duration": 0.0,
        },
        "split": {"train_end": month(T - test_months - 1), "test_start": month(T - test_months), "test_end": month(T - 1)},
        "features": {"window": 12, "lags": [1, 2, 3], "ma_spans": [3, 6, 12], "hist_spans": [], "levels": ["conc", "dist"]},
        "stage1": {"n_folds": 5, "grid_C": [dict(tree, loss="poisson")], "grid_B": [dict(tree, loss="tweedie")]},
        "stage2": {"hurdle": {"variant": "M1"}, "grid": {"strategy": "eb"}, "n_samples": 1000},
        "exceedance_thresholds": [0, 2, 5],
        "shap": {"top": 10, "max_rows": 200},
    }


def cmd_simulate(args) -> None:
    spec = SyntheticSpec()
    if args.spec:
        with open(args.spec) as fh:
            spec = SyntheticSpec.from_dict(json.load(fh))
    sim = simulate(spec, args.seed)
    paths = write_simulation(sim, args.out)
    cfg_path = os.path.join(args.out, "config.json")
    _write(cfg_path, _dump(starter_config(spec)))
    _emit({"config": cfg_path, "n_events": len(sim.events), "fire_cells": int((sim.panel.count > 0).sum()), "files": paths})


def cmd_ingest(args) -> None:
    cfg = _config(args)
    panel, cov = load_data(cfg)
    path = os.path.join(cfg.run_path, "panel.csv")
    years, months = panel.calendar(np.arange(panel.n_months))
    os.makedirs(cfg.run_path, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "district", "year", "month", "count", "area"])
        for s, u in enumerate(panel.units.ids):
            for t in range(panel.n_months):
                w.writerow([u, panel.units.districts[s], int(years[t]), int(months[t]), int(panel.count[s, t]), repr(float(panel.area[s, t]))])
    _emit({
        "panel": path,
        "units": panel.n_units,
        "districts": len(panel.units.district_ids),
        "months": panel.n_months,
        "fire_cells": int((panel.count > 0).sum()),
        "covariates": [] if cov is None else cov.names,
    })


def cmd_features(args) -> None:
    cfg = _config(args)
    panel, cov = load_data(cfg)
    out = {}
    for variant in ("C", "B"):
        ds = build_windowed(panel, cov, cfg.features, variant)
        years, months = panel.calendar(ds.time)
        path = os.path.join(cfg.run_path, f"features_{variant}.csv")
        os.makedirs(cfg.run_path, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit", "year", "month", *ds.feature_names, "target"])
            for k in range(len(ds)):
                w.writerow([panel.units.ids[ds.unit[k]], int(years[k]), int(months[k]), *map(repr, ds.X[k].tolist()), repr(float(ds.y[k]))])
        out[variant] = {"path": path, "rows": len(ds), "features": len(ds.feature_names)}
    _emit(out)


def cmd_stage1(args) -> None:
    cfg = _config(args)
    res = run_stage1(cfg)
    _emit({
        "forecasts": int(res.forecasts.unit.size),
        "oof": int(np.sum(res.forecasts.provenance == "oof")),
        "grid_scores": res.grid_scores,
    })


def cmd_stage2(args) -> None:
    cfg = _config(args)
    res = run_stage2(cfg)
    _emit({
        "strategy": res.fit.strategy,
        "points": len(res.fit.points),
        "hyper_mean": res.fit.hyper_mean(),
        "samples": res.predictive.n_samples,
        "failures": res.predictive.failures,
    })


def cmd_forecast(args) -> None:
    cfg = _config(args)
    pp = run_forecast(cfg, args.n_samples, args.seed)
    _emit({"samples": pp.n_samples, "cells": int(pp.z.shape[1]), "failures": pp.failures})


def cmd_score(args) -> None:
    cfg = _config(args)
    rep = run_report(cfg, include_shap=False)
    sys.stdout.write(rep.scores.to_text())


def cmd_shap(args) -> None:
    cfg = _config(args)
    _emit({v: [[n, s] for n, s in ranked] for v, ranked in run_shap(cfg).items()})


def cmd_pipeline(args) -> None:
    cfg = PipelineConfig.load(args.config)
    reports = run_pipeline(cfg)
    for h, rep in reports.items():
        if len(reports) > 1:
            sys.stdout.write(f"# horizon {h}\n")
        sys.stdout.write(rep.scores.to_text())


def cmd_manifest(args) -> None:
    _emit(write_manifest(_config(args))["files"])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="firecast", description="Two-stage probabilistic wildfire forecasting.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write a synthetic lattice dataset and a starter config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--spec", help="JSON file with SyntheticSpec fields")
    s.set_defaults(func=cmd_simulate)

    for name, func, text in (
        ("ingest", cmd_ingest, "aggregate events into the council-month panel"),
        ("features", cmd_features, "write the windowed feature tables"),
        ("stage1", cmd_stage1, "boosting forecasts (out-of-fold and test span)"),
        ("stage2", cmd_stage2, "fit the hurdle model and draw the test-span predictive"),
        ("forecast", cmd_forecast, "redraw the predictive from the persisted fit"),
        ("score", cmd_score, "score the persisted predictive"),
        ("shap", cmd_shap, "rank features by mean absolute SHAP value"),
        ("manifest", cmd_manifest, "hash the run artefacts"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("config")
        s.add_argument("--horizon", type=int)
        if name == "forecast":
            s.add_argument("--n-samples", type=int)
            s.add_argument("--seed", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("pipeline", help="run every stage for every configured horizon")
    s.add_argument("config")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except FirecastError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
