"""Numba kernels for growing and evaluating decision trees.

Trees are stored as flat arrays: ``feature[i] < 0`` marks a leaf, whose
prediction is ``value[i]`` (class-1 fraction for classifiers, target mean for
regressors). Internal nodes route ``x[feature] <= threshold`` to ``left``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def grow_tree(X, y, boot, feat_rand, k, min_leaf, max_depth, is_classifier):
    """Grow one CART tree on the bootstrap sample ``boot`` (row indices).

    ``feat_rand`` is a (capacity, k) table of random integers consumed by the
    per-node feature subsampling, indexed by node id, so the tree is a pure
    function of its inputs. ``max_depth < 0`` means unlimited. Returns the
    flat node arrays trimmed to the number of nodes actually created.
    """
    n = boot.shape[0]
    m = X.shape[1]
    cap = 2 * n + 1

    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap, dtype=np.float64)

    idx = boot.copy()
    pool = np.empty(m, dtype=np.int64)
    xbuf = np.empty(n, dtype=np.float64)
    ibuf = np.empty(n, dtype=np.int64)

    # stack of (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    top = 0
    stack[top, 0] = 0
    stack[top, 1] = 0
    stack[top, 2] = n
    stack[top, 3] = 0
    top += 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        size = end - start

        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(start, end):
            v = y[idx[i]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = total / size

        if size < 2 * min_leaf or ymin == ymax or (max_depth >= 0 and depth >= max_depth):
            continue

        for j in range(m):
            pool[j] = j
        kk = k if k < m else m

        best_feat = -1
        best_score = np.inf
        best_thr = 0.0
        for j in range(kk):
            r = feat_rand[node, j] % np.uint64(m - j)
            swap = j + np.int64(r)
            tmp = pool[j]
            pool[j] = pool[swap]
            pool[swap] = tmp
            f = pool[j]

            for i2 in range(size):
                xbuf[i2] = X[idx[start + i2], f]
            order = np.argsort(xbuf[:size], kind="mergesort")

            cum = 0.0
            for i2 in range(size - 1):
                o = order[i2]
                cum += y[idx[start + o]]
                nl = i2 + 1
                nr = size - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                xa = xbuf[o]
                xb = xbuf[order[i2 + 1]]
                if xa == xb:
                    continue
                cr = total - cum
                if is_classifier:
                    # weighted Gini impurity, up to a constant factor
                    score = cum * (nl - cum) / nl + cr * (nr - cr) / nr
                else:
                    # minimizing SSE == maximizing sum_L^2/nL + sum_R^2/nR
                    score = -(cum * cum / nl + cr * cr / nr)
                if score < best_score:
                    best_score = score
                    best_feat = f
                    thr = 0.5 * (xa + xb)
                    if thr >= xb:
                        thr = xa  # midpoint rounded up; fall back to the left value
                    best_thr = thr

        if best_feat < 0:
            continue  # all sampled features constant on this node

        # stable partition by x <= threshold
        nl2 = 0
        for i2 in range(size):
            if X[idx[start + i2], best_feat] <= best_thr:
                ibuf[nl2] = idx[start + i2]
                nl2 += 1
        nr2 = nl2
        for i2 in range(size):
            if not (X[idx[start + i2], best_feat] <= best_thr):
                ibuf[nr2] = idx[start + i2]
                nr2 += 1
        for i2 in range(size):
            idx[start + i2] = ibuf[i2]

        feature[node] = best_feat
        threshold[node] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack[top, 0] = rid
        stack[top, 1] = start + nl2
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = start + nl2
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def add_tree_predictions(X, feature, threshold, left, right, value, out):
    """Accumulate one tree's leaf values for every row of ``X`` into ``out``."""
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] += value[node]
