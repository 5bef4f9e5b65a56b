"""Independent reference implementations used as test oracles.

These are deliberately naive (explicit enumeration, direct sums) and share
no code with the package beyond plain numpy.
"""

from itertools import combinations
from math import factorial

import numpy as np


def brute_force_tree(X, g, h, lam, gamma, min_child_weight, max_depth):
    """Greedy tree by enumerating every (feature, threshold, missing side).

    Returns a nested dict.  Candidate order: feature ascending, threshold
    ascending, missing-left before missing-right.  Gains within 1e-12 of the
    best (relative, floored at 1) are ties and the first tied candidate wins.
    """

    def gain_of(GL, HL, GR, HR):
        G, H = GL + GR, HL + HR
        return 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)) - gamma

    def node(rows, depth):
        G, H = sum(g[i] for i in rows), sum(h[i] for i in rows)
        leaf = {"leaf": True, "w": -G / (H + lam), "rows": sorted(rows)}
        if depth >= max_depth or len(rows) < 2:
            return leaf
        candidates = []
        for f in range(X.shape[1]):
            present = sorted({X[i, f] for i in rows if not np.isnan(X[i, f])})
            for a, b in zip(present[:-1], present[1:]):
                thr = 0.5 * (a + b)
                if not thr > a:
                    thr = b
                for miss_left in (True, False):
                    left = [i for i in rows if (miss_left if np.isnan(X[i, f]) else X[i, f] < thr)]
                    right = [i for i in rows if i not in left]
                    GL, HL = sum(g[i] for i in left), sum(h[i] for i in left)
                    GR, HR = sum(g[i] for i in right), sum(h[i] for i in right)
                    if HL < min_child_weight or HR < min_child_weight:
                        continue
                    candidates.append((gain_of(GL, HL, GR, HR), f, thr, miss_left, left, right))
        top = max((c[0] for c in candidates), default=-np.inf)
        if not top > 0:
            return leaf
        val, f, thr, miss_left, left, right = next(c for c in candidates if c[0] >= top - 1e-12 * max(1.0, top))
        return {
            "leaf": False,
            "feature": f,
            "threshold": thr,
            "gain": val,
            "left": node(left, depth + 1),
            "right": node(right, depth + 1),
        }

    return node(list(range(X.shape[0])), 0)


def shapley_by_enumeration(value, n_features):
    """Exact Shapley values of a coalition game given as ``value(frozenset)``."""
    phi = np.zeros(n_features)
    for j in range(n_features):
        others = [i for i in range(n_features) if i != j]
        for k in range(n_features):
            weight = factorial(k) * factorial(n_features - k - 1) / factorial(n_features)
            for S in combinations(others, k):
                phi[j] += weight * (value(frozenset(S) | {j}) - value(frozenset(S)))
    return phi
