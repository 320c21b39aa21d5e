"""Numba kernels for exact-greedy split search and tree traversal."""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def _scan_features(X, sorted_rows, feat_offsets, g, h, node_of_row, is_active,
                   G_tot, H_tot, min_child_weight, lam,
                   gain_f, thr_f, miss_f):
    """Per-feature best split for every active node (parallel over features).

    Thresholds sweep in ascending value with strictly-greater gain
    comparison, so per-feature ties resolve to the lowest threshold. Rows
    with a missing value are routed via the gain-optimal default direction.
    """
    n, n_feat = X.shape
    m = G_tot.shape[0]
    for f in prange(n_feat):
        g_nm = np.zeros(m)
        h_nm = np.zeros(m)
        g_run = np.zeros(m)
        h_run = np.zeros(m)
        prev = np.zeros(m)
        seen = np.zeros(m, np.uint8)
        s = feat_offsets[f]
        e = feat_offsets[f + 1]
        # pass 1: per-node totals over non-missing rows
        for ii in range(s, e):
            r = sorted_rows[ii]
            nd = node_of_row[r]
            if nd >= 0 and is_active[nd] == 1:
                g_nm[nd] += g[r]
                h_nm[nd] += h[r]
        # pass 2: sweep candidate thresholds
        for ii in range(s, e):
            r = sorted_rows[ii]
            nd = node_of_row[r]
            if nd < 0 or is_active[nd] == 0:
                continue
            v = X[r, f]
            if seen[nd] == 1 and v > prev[nd]:
                g_miss = G_tot[nd] - g_nm[nd]
                h_miss = H_tot[nd] - h_nm[nd]
                parent = G_tot[nd] * G_tot[nd] / (H_tot[nd] + lam)
                thr = 0.5 * (prev[nd] + v)
                # option A: missing left
                gl = g_run[nd] + g_miss
                hl = h_run[nd] + h_miss
                gr = G_tot[nd] - gl
                hr = H_tot[nd] - hl
                if hl >= min_child_weight and hr >= min_child_weight:
                    gain = 0.5 * (gl * gl / (hl + lam)
                                  + gr * gr / (hr + lam) - parent)
                    if gain > gain_f[f, nd]:
                        gain_f[f, nd] = gain
                        thr_f[f, nd] = thr
                        miss_f[f, nd] = 1
                # option B: missing right
                gl = g_run[nd]
                hl = h_run[nd]
                gr = G_tot[nd] - gl
                hr = H_tot[nd] - hl
                if hl >= min_child_weight and hr >= min_child_weight:
                    gain = 0.5 * (gl * gl / (hl + lam)
                                  + gr * gr / (hr + lam) - parent)
                    if gain > gain_f[f, nd]:
                        gain_f[f, nd] = gain
                        thr_f[f, nd] = thr
                        miss_f[f, nd] = 0
            g_run[nd] += g[r]
            h_run[nd] += h[r]
            prev[nd] = v
            seen[nd] = 1


@njit(cache=True)
def _reduce_features(gain_f, thr_f, miss_f,
                     best_gain, best_feat, best_thr, best_miss_left):
    """Sequential reduction: strictly-greater comparison in ascending
    feature order keeps ties on the lowest feature index, independent of
    the parallel schedule above."""
    n_feat, m = gain_f.shape
    for f in range(n_feat):
        for nd in range(m):
            if gain_f[f, nd] > best_gain[nd]:
                best_gain[nd] = gain_f[f, nd]
                best_feat[nd] = f
                best_thr[nd] = thr_f[f, nd]
                best_miss_left[nd] = miss_f[f, nd]


def scan_level(X, sorted_rows, feat_offsets, g, h, node_of_row, is_active,
               G_tot, H_tot, min_child_weight, lam,
               best_gain, best_feat, best_thr, best_miss_left):
    """Best split per active node across all features (deterministic)."""
    n_feat = X.shape[1]
    m = G_tot.shape[0]
    gain_f = np.full((n_feat, m), -np.inf)
    thr_f = np.zeros((n_feat, m))
    miss_f = np.ones((n_feat, m), np.uint8)
    _scan_features(X, sorted_rows, feat_offsets, g, h, node_of_row, is_active,
                   G_tot, H_tot, min_child_weight, lam, gain_f, thr_f, miss_f)
    _reduce_features(gain_f, thr_f, miss_f,
                     best_gain, best_feat, best_thr, best_miss_left)


@njit(cache=True)
def traverse(X, feat, thr, miss_left, left, right) -> np.ndarray:
    """Leaf index reached by every row of X."""
    n = X.shape[0]
    out = np.empty(n, np.int32)
    for i in range(n):
        nd = 0
        while feat[nd] >= 0:
            v = X[i, feat[nd]]
            if np.isnan(v):
                nd = left[nd] if miss_left[nd] == 1 else right[nd]
            elif v < thr[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] = nd
    return out
