"""Regression trees grown on gradient/Hessian statistics (exact greedy splits)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RegressionTree:
    """Binary tree stored as parallel node arrays.

    Internal nodes send ``x[feature] < threshold`` left, larger values right
    and missing values along ``default_left``.  Leaves have ``feature == -1``
    and carry their weight in ``value``.  ``sum_grad``/``sum_hess``/``count``
    are the training statistics of the rows that reached each node;
    ``sum_hess`` doubles as the node cover used for attribution.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray
    sum_grad: np.ndarray
    sum_hess: np.ndarray
    count: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.is_leaf))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def go_left(self, node: int, value: float) -> bool:
        if np.isnan(value):
            return bool(self.default_left[node])
        return bool(value < self.threshold[node])

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.atleast_2d(np.asarray(X, float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.nonzero(active)[0]
            nd = node[idx]
            vals = X[idx, self.feature[nd]]
            left = np.where(np.isnan(vals), self.default_left[nd], vals < self.threshold[nd])
            node[idx] = np.where(left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def node_counts(self, X) -> np.ndarray:
        """Number of rows of ``X`` passing through each node."""
        X = np.atleast_2d(np.asarray(X, float))
        counts = np.zeros(self.n_nodes)
        node = np.zeros(X.shape[0], dtype=np.int64)
        alive = np.ones(X.shape[0], dtype=bool)
        while np.any(alive):
            np.add.at(counts, node[alive], 1.0)
            idx = np.nonzero(alive & (self.feature[node] >= 0))[0]
            alive[:] = False
            if idx.size == 0:
                break
            nd = node[idx]
            vals = X[idx, self.feature[nd]]
            left = np.where(np.isnan(vals), self.default_left[nd], vals < self.threshold[nd])
            node[idx] = np.where(left, self.left[nd], self.right[nd])
            alive[idx] = True
        return counts

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "default_left": self.default_left.tolist(),
            "value": self.value.tolist(),
            "sum_grad": self.sum_grad.tolist(),
            "sum_hess": self.sum_hess.tolist(),
            "count": self.count.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            default_left=np.asarray(d["default_left"], dtype=bool),
            value=np.asarray(d["value"], dtype=float),
            sum_grad=np.asarray(d["sum_grad"], dtype=float),
            sum_hess=np.asarray(d["sum_hess"], dtype=float),
            count=np.asarray(d["count"], dtype=np.int64),
            gain=np.asarray(d["gain"], dtype=float),
        )


@dataclass
class _Builder:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    default_left: list = field(default_factory=list)
    value: list = field(default_factory=list)
    sum_grad: list = field(default_factory=list)
    sum_hess: list = field(default_factory=list)
    count: list = field(default_factory=list)
    gain: list = field(default_factory=list)

    def add(self, G, H, n, lam):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.default_left.append(True)
        self.value.append(-G / (H + lam))
        self.sum_grad.append(G)
        self.sum_hess.append(H)
        self.count.append(n)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def build(self) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            default_left=np.asarray(self.default_left, dtype=bool),
            value=np.asarray(self.value, dtype=float),
            sum_grad=np.asarray(self.sum_grad, dtype=float),
            sum_hess=np.asarray(self.sum_hess, dtype=float),
            count=np.asarray(self.count, dtype=np.int64),
            gain=np.asarray(self.gain, dtype=float),
        )


GAIN_TIE_RTOL = 1e-12


def split_gain(GL, HL, GR, HR, lam, gamma):
    G, H = GL + GR, HL + HR
    return 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)) - gamma


def _midpoint(a, b):
    mid = 0.5 * (a + b)
    # rounding can land the midpoint on a; fall back to b so that a < thr <= b
    return np.where(mid > a, mid, b)


def best_split(X, g, h, features, lam, gamma, min_child_weight):
    """Best (gain, feature, threshold, default_left) over ``features``.

    Candidates are scanned feature by feature, thresholds ascending, missing
    values sent left before right.  Gains within ``GAIN_TIE_RTOL`` of the best
    count as ties and the first tied candidate wins, so the choice does not
    hinge on summation order.  Returns None when no candidate has positive gain.
    """
    n = X.shape[0]
    if n < 2 or len(features) == 0:
        return None
    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")  # NaN sorts last
    xs = np.take_along_axis(Xs, order, axis=0)
    gs = g[order]
    hs = h[order]
    missing = np.isnan(xs)
    n_present = n - missing.sum(axis=0)
    gs_present = np.where(missing, 0.0, gs)
    hs_present = np.where(missing, 0.0, hs)
    cg = np.cumsum(gs_present, axis=0)[:-1]
    ch = np.cumsum(hs_present, axis=0)[:-1]
    G, H = g.sum(), h.sum()
    Gm = (gs * missing).sum(axis=0)
    Hm = (hs * missing).sum(axis=0)
    pos = np.arange(n - 1)[:, None]
    with np.errstate(invalid="ignore"):
        valid = (pos < n_present[None, :] - 1) & (xs[1:] > xs[:-1])
    best = None
    gains = np.full((len(features), n - 1, 2), -np.inf)
    for k, miss_left in enumerate((True, False)):
        GL = cg + (Gm if miss_left else 0.0)
        HL = ch + (Hm if miss_left else 0.0)
        GR, HR = G - GL, H - HL
        ok = valid & (HL >= min_child_weight) & (HR >= min_child_weight)
        gk = split_gain(GL, HL, GR, HR, lam, gamma)
        gains[:, :, k] = np.where(ok, gk, -np.inf).T
    top = gains.max()
    if not top > 0:
        return best
    flat = int(np.argmax(gains >= top - GAIN_TIE_RTOL * max(1.0, top)))
    fi, p, k = np.unravel_index(flat, gains.shape)
    thr = float(_midpoint(xs[p, fi], xs[p + 1, fi]))
    return float(gains[fi, p, k]), int(features[fi]), thr, bool(k == 0)


def grow_tree(X, g, h, reg_lambda=1.0, reg_gamma=0.0, max_depth=6, min_child_weight=1.0, features=None):
    """Grow one tree by exact greedy splitting on second-order statistics.

    Leaf weights are ``-G / (H + reg_lambda)``; a node is split only when the
    best gain is strictly positive, both children keep Hessian mass of at
    least ``min_child_weight`` and the node depth is below ``max_depth``.
    """
    X = np.asarray(X, float)
    g = np.asarray(g, float)
    h = np.asarray(h, float)
    if features is None:
        features = np.arange(X.shape[1])
    features = np.asarray(features, dtype=np.int64)
    b = _Builder()
    root = b.add(float(g.sum()), float(h.sum()), len(g), reg_lambda)
    queue = deque([(root, np.arange(len(g)), 0)])
    while queue:
        node, rows, depth = queue.popleft()
        if depth >= max_depth:
            continue
        found = best_split(X[rows], g[rows], h[rows], features, reg_lambda, reg_gamma, min_child_weight)
        if found is None:
            continue
        gain, f, thr, dleft = found
        vals = X[rows, f]
        go_left = np.where(np.isnan(vals), dleft, vals < thr)
        lrows, rrows = rows[go_left], rows[~go_left]
        li = b.add(float(g[lrows].sum()), float(h[lrows].sum()), len(lrows), reg_lambda)
        ri = b.add(float(g[rrows].sum()), float(h[rrows].sum()), len(rrows), reg_lambda)
        b.feature[node] = f
        b.threshold[node] = thr
        b.default_left[node] = dleft
        b.left[node] = li
        b.right[node] = ri
        b.gain[node] = gain
        queue.append((li, lrows, depth + 1))
        queue.append((ri, rrows, depth + 1))
    return b.build()
