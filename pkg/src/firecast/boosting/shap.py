"""Shapley attributions for tree ensembles on the raw-score scale.

The value of a coalition S is the tree output with features outside S
integrated out by following every branch in proportion to its cover
(training Hessian mass, or the routing counts of a background sample).
``method="tree"`` evaluates the exact Shapley values of that game with the
polynomial path algorithm; ``method="brute"`` enumerates every coalition and
is limited to 15 features.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import factorial

import numpy as np

from ..errors import ConfigError, DataError
from .ensemble import TreeEnsemble
from .tree import RegressionTree

MAX_BRUTE_FEATURES = 15


@dataclass
class AttributionResult:
    phi: np.ndarray
    base_value: float

    def total(self) -> np.ndarray:
        return self.base_value + self.phi.sum(axis=-1)


def _covers(tree: RegressionTree, background):
    if background is None:
        return tree.sum_hess
    return tree.node_counts(background)


def expected_value(tree: RegressionTree, cover) -> float:
    leaves = tree.is_leaf
    return float(np.sum(tree.value[leaves] * cover[leaves]) / cover[0])


def coalition_value(tree: RegressionTree, x, coalition, cover, node: int = 0) -> float:
    """Tree output with features outside ``coalition`` averaged out by cover."""
    f = tree.feature[node]
    if f < 0:
        return float(tree.value[node])
    lo, hi = tree.left[node], tree.right[node]
    if f in coalition:
        nxt = lo if tree.go_left(node, x[f]) else hi
        return coalition_value(tree, x, coalition, cover, nxt)
    return (
        cover[lo] * coalition_value(tree, x, coalition, cover, lo)
        + cover[hi] * coalition_value(tree, x, coalition, cover, hi)
    ) / cover[node]


def _brute_tree(tree, x, cover, n_features):
    phi = np.zeros(n_features)
    everyone = list(range(n_features))
    weights = [factorial(k) * factorial(n_features - k - 1) / factorial(n_features) for k in range(n_features)]
    cache = {}

    def value(S):
        key = frozenset(S)
        if key not in cache:
            cache[key] = coalition_value(tree, x, key, cover)
        return cache[key]

    for j in everyone:
        others = [i for i in everyone if i != j]
        for k in range(n_features):
            for S in combinations(others, k):
                phi[j] += weights[k] * (value(S + (j,)) - value(S))
    return phi


class _Path:
    __slots__ = ("d", "z", "o", "w")

    def __init__(self, d, z, o, w):
        self.d, self.z, self.o, self.w = d, z, o, w


def _extend(m, pz, po, pi):
    m.append(_Path(pi, pz, po, 1.0 if not m else 0.0))
    depth = len(m) - 1
    for i in range(depth - 1, -1, -1):
        m[i + 1].w += po * m[i].w * (i + 1) / (depth + 1)
        m[i].w = pz * m[i].w * (depth - i) / (depth + 1)


def _unwind(m, idx):
    depth = len(m) - 1
    po, pz = m[idx].o, m[idx].z
    nxt = m[depth].w
    for i in range(depth - 1, -1, -1):
        if po != 0:
            tmp = m[i].w
            m[i].w = nxt * (depth + 1) / ((i + 1) * po)
            nxt = tmp - m[i].w * pz * (depth - i) / (depth + 1)
        else:
            m[i].w = m[i].w * (depth + 1) / (pz * (depth - i))
    for i in range(idx, depth):
        m[i].d, m[i].z, m[i].o = m[i + 1].d, m[i + 1].z, m[i + 1].o
    m.pop()


def _unwound_sum(m, idx):
    depth = len(m) - 1
    po, pz = m[idx].o, m[idx].z
    nxt = m[depth].w
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if po != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * po)
            total += tmp
            nxt = m[i].w - tmp * pz * (depth - i) / (depth + 1)
        elif pz != 0:
            total += (m[i].w / pz) / ((depth - i) / (depth + 1))
    return total


def _path_tree(tree, x, cover, n_features):
    phi = np.zeros(n_features)

    def recurse(node, m, pz, po, pi):
        m = [_Path(p.d, p.z, p.o, p.w) for p in m]
        _extend(m, pz, po, pi)
        f = tree.feature[node]
        if f < 0:
            for i in range(1, len(m)):
                w = _unwound_sum(m, i)
                phi[m[i].d] += w * (m[i].o - m[i].z) * tree.value[node]
            return
        lo, hi = tree.left[node], tree.right[node]
        hot, cold = (lo, hi) if tree.go_left(node, x[f]) else (hi, lo)
        iz = io = 1.0
        for k in range(1, len(m)):
            if m[k].d == f:
                iz, io = m[k].z, m[k].o
                _unwind(m, k)
                break
        recurse(hot, m, iz * cover[hot] / cover[node], io, f)
        recurse(cold, m, iz * cover[cold] / cover[node], 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)
    return phi


def shap_values(ensemble: TreeEnsemble, X, background=None, method: str = "tree") -> AttributionResult:
    """Attributions for one row (1-d ``X``) or many rows (2-d ``X``).

    ``base_value + phi.sum(-1)`` reproduces ``ensemble.predict_raw``.
    """
    X = np.asarray(X, float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    d = ensemble.n_features
    if X2.shape[1] != d:
        raise DataError(f"expected {d} features, got {X2.shape[1]}")
    if method == "brute" and d > MAX_BRUTE_FEATURES:
        raise ConfigError(f"brute-force attribution is limited to {MAX_BRUTE_FEATURES} features")
    if method not in ("tree", "brute"):
        raise ConfigError(f"unknown attribution method {method!r}")
    lr = ensemble.config.learning_rate
    phi = np.zeros(X2.shape)
    base = ensemble.base_score
    for tree in ensemble.trees:
        cover = _covers(tree, background)
        base += lr * expected_value(tree, cover)
        if tree.n_nodes == 1:
            continue
        for r in range(X2.shape[0]):
            if method == "tree":
                phi[r] += lr * _path_tree(tree, X2[r], cover, d)
            else:
                phi[r] += lr * _brute_tree(tree, X2[r], cover, d)
    return AttributionResult(phi[0] if single else phi, float(base))


def mean_abs_shap(ensemble: TreeEnsemble, X, top: int = 10) -> list:
    """Features ranked by mean |phi| over the rows of ``X`` (ties by name)."""
    res = shap_values(ensemble, np.atleast_2d(X))
    score = np.mean(np.abs(res.phi), axis=0)
    ranked = sorted(zip(ensemble.feature_names, score.tolist()), key=lambda t: (-t[1], t[0]))
    return ranked[:top]
