"""Cross-validated out-of-fold forecasts with grid tuning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .ensemble import BoostConfig, TreeEnsemble, train
from .losses import unit_deviance


@dataclass
class CVResult:
    oof: np.ndarray
    folds: np.ndarray
    best_index: int
    best_config: BoostConfig
    grid_scores: list
    final_model: TreeEnsemble


def fold_assignment(n_rows: int, n_folds: int, seed: int) -> np.ndarray:
    """Random partition of rows into ``n_folds`` near-equal folds."""
    if n_folds < 2:
        raise ConfigError("n_folds must be at least 2")
    if n_folds > n_rows:
        raise ConfigError(f"n_folds={n_folds} exceeds the number of rows {n_rows}")
    perm = np.random.default_rng(seed).permutation(n_rows)
    folds = np.empty(n_rows, dtype=np.int64)
    folds[perm] = np.arange(n_rows) % n_folds
    return folds


def fold_seed(seed: int, config_index: int, fold: int) -> int:
    """Training seed for one (config, fold) cell; fold -1 is the final refit."""
    ss = np.random.SeedSequence([seed, config_index, fold + 1])
    return int(ss.generate_state(1)[0])


def superlearner_cv(X, y, grid, n_folds: int = 10, seed: int = 0, feature_names=None) -> CVResult:
    """Out-of-fold predictions for every row plus the grid-tuned final model.

    Each configuration in ``grid`` is scored by the mean unit deviance of its
    out-of-fold predictions; the best one (first on ties) supplies the
    returned predictions and is refitted on all rows.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    if isinstance(grid, BoostConfig):
        grid = [grid]
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    folds = fold_assignment(len(y), n_folds, seed)
    scores, oofs = [], []
    for ci, cfg in enumerate(grid):
        oof = np.empty(len(y))
        for k in range(n_folds):
            held = folds == k
            model = train(X[~held], y[~held], cfg, seed=fold_seed(seed, ci, k), feature_names=feature_names)
            oof[held] = model.predict(X[held])
        oofs.append(oof)
        scores.append(float(np.mean(unit_deviance(y, oof, cfg.loss, cfg.tweedie_power))))
    best = int(np.argmin(scores))
    final = train(X, y, grid[best], seed=fold_seed(seed, best, -1), feature_names=feature_names)
    return CVResult(oofs[best], folds, best, grid[best], scores, final)
