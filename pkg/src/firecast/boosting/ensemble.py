"""Boosted tree ensembles: configuration, training, prediction, persistence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from .losses import check_loss, check_targets, initial_score, inverse_link, loss_grad_hess, unit_deviance
from .tree import RegressionTree, grow_tree

FORMAT_VERSION = 1


@dataclass(frozen=True)
class BoostConfig:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 4
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    reg_gamma: float = 0.0
    loss: str = "poisson"
    tweedie_power: float = 1.5
    subsample: float = 1.0
    colsample: float = 1.0

    def __post_init__(self):
        check_loss(self.loss, self.tweedie_power)
        if self.n_trees < 0:
            raise ConfigError("n_trees must be non-negative")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be non-negative")
        if self.min_child_weight < 0 or self.reg_lambda < 0 or self.reg_gamma < 0:
            raise ConfigError("regularisation constants must be non-negative")
        if not (0.0 < self.subsample <= 1.0 and 0.0 < self.colsample <= 1.0):
            raise ConfigError("subsample fractions must lie in (0, 1]")

    def with_(self, **changes) -> "BoostConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TreeEnsemble:
    trees: list
    base_score: float
    config: BoostConfig
    feature_names: list
    deviance_trace: list = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_raw(self, X) -> np.ndarray:
        X = self._check(X)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return self.base_score + self.config.learning_rate * total

    def predict(self, X) -> np.ndarray:
        return inverse_link(self.predict_raw(X), self.config.loss)

    def to_dict(self) -> dict:
        return {
            "format": "firecast.tree_ensemble",
            "version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "deviance_trace": [float(v) for v in self.deviance_trace],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        if d.get("format") != "firecast.tree_ensemble":
            raise DataError("not a tree-ensemble document")
        return cls(
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            base_score=float(d["base_score"]),
            config=BoostConfig(**d["config"]),
            feature_names=list(d["feature_names"]),
            deviance_trace=list(d["deviance_trace"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _subset(rng, n, fraction):
    if fraction >= 1.0:
        return np.arange(n)
    k = max(1, int(round(fraction * n)))
    return np.sort(rng.choice(n, size=k, replace=False))


def train(X, y, cfg: BoostConfig, seed: int = 0, feature_names=None) -> TreeEnsemble:
    """Forward-stagewise boosting with second-order tree fits."""
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[0] == 0:
        raise DataError("empty training set")
    y = check_targets(y, cfg.loss)
    if len(y) != X.shape[0]:
        raise DataError("feature and target lengths differ")
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(X.shape[1])]
    if len(feature_names) != X.shape[1]:
        raise DataError("feature_names length does not match the feature matrix")
    rng = np.random.default_rng(seed)
    base = initial_score(y, cfg.loss)
    raw = np.full(len(y), base)
    trees, trace = [], []
    for _ in range(cfg.n_trees):
        g, h = loss_grad_hess(y, raw, cfg.loss, cfg.tweedie_power)
        rows = _subset(rng, len(y), cfg.subsample)
        cols = _subset(rng, X.shape[1], cfg.colsample)
        tree = grow_tree(
            X[rows],
            g[rows],
            h[rows],
            reg_lambda=cfg.reg_lambda,
            reg_gamma=cfg.reg_gamma,
            max_depth=cfg.max_depth,
            min_child_weight=cfg.min_child_weight,
            features=cols,
        )
        raw = raw + cfg.learning_rate * tree.predict(X)
        trees.append(tree)
        yhat = inverse_link(raw, cfg.loss)
        trace.append(float(np.mean(unit_deviance(y, yhat, cfg.loss, cfg.tweedie_power))))
    return TreeEnsemble(trees, base, cfg, list(feature_names), trace)


def predict(ensemble: TreeEnsemble, X) -> np.ndarray:
    return ensemble.predict(X)
