"""Compiled inner loop of multi-source fusion.

The arithmetic here must mirror fuselage.nms_oracle op for op (same
expressions, same accumulation order) so the two paths agree bit for
bit; change one only together with the other.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

DECAY_LINEAR = 0
DECAY_GAUSSIAN = 1


@njit(cache=True, nogil=True, inline="always")
def _pair_iou(x1, y1, x2, y2, area, i, j):
    iw = min(x2[i], x2[j]) - max(x1[i], x1[j])
    if iw <= 0.0:
        return 0.0
    ih = min(y2[i], y2[j]) - max(y1[i], y1[j])
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / ((area[i] + area[j]) - inter)


@njit(cache=True, nogil=True)
def _fuse_pool_into(
    means, variances, scores_in, is_rgb, idx,
    t1, t2, decay_kind, sigma_s, score_floor,
    out_mean, out_var, out_score, out_anchor, base,
):
    """Run the fusion loop over one pool (the boxes selected by idx).

    Emits into the out arrays starting at ``base`` and returns the new
    fill count. out_anchor receives indices into the full input pool.
    """
    n = idx.shape[0]
    x1 = np.empty(n)
    y1 = np.empty(n)
    x2 = np.empty(n)
    y2 = np.empty(n)
    area = np.empty(n)
    mu = np.empty((n, 4))
    var = np.empty((n, 4))
    scores = np.empty(n)
    rgb = np.empty(n, dtype=np.bool_)
    for i in range(n):
        g = idx[i]
        for k in range(4):
            mu[i, k] = means[g, k]
            var[i, k] = variances[g, k]
        scores[i] = scores_in[g]
        rgb[i] = is_rgb[g]
        half_w = mu[i, 2] / 2.0
        half_h = mu[i, 3] / 2.0
        x1[i] = mu[i, 0] - half_w
        x2[i] = mu[i, 0] + half_w
        y1[i] = mu[i, 1] - half_h
        y2[i] = mu[i, 1] + half_h
        area[i] = (x2[i] - x1[i]) * (y2[i] - y1[i])

    alive = np.ones(n, dtype=np.bool_)
    n_out = base
    n_alive = n

    while n_alive > 0:
        # anchor: highest live score, lowest pool index on ties
        m = -1
        best = -1.0
        for i in range(n):
            if alive[i] and scores[i] > best:
                best = scores[i]
                m = i
        alive[m] = False
        n_alive -= 1

        # decay survivors; drop any that sink below the floor
        for i in range(n):
            if alive[i]:
                v = _pair_iou(x1, y1, x2, y2, area, m, i)
                if decay_kind == DECAY_GAUSSIAN:
                    scores[i] = scores[i] * math.exp(-(v * v) / sigma_s)
                else:
                    if v > t1:
                        scores[i] = scores[i] * (1.0 - v)
                if scores[i] < score_floor:
                    alive[i] = False
                    n_alive -= 1

        # agreement against the full other-pipeline input pool
        has_other = False
        best_other = 0.0
        for i in range(n):
            if rgb[i] != rgb[m]:
                has_other = True
                v = _pair_iou(x1, y1, x2, y2, area, m, i)
                if v > best_other:
                    best_other = v
        if not has_other:
            case = 3
        elif best_other >= t2:
            case = 1
        elif best_other >= t1:
            case = 2
        else:
            case = 3
        gate = t2 if case == 1 else t1
        own_only = case == 3

        # inverse-variance fusion over {anchor} + qualifying live boxes,
        # accumulated in ascending pool index order
        num0 = 0.0
        num1 = 0.0
        num2 = 0.0
        num3 = 0.0
        den0 = 0.0
        den1 = 0.0
        den2 = 0.0
        den3 = 0.0
        for i in range(n):
            take = False
            if i == m:
                take = True
            elif alive[i]:
                if own_only and (rgb[i] != rgb[m]):
                    take = False
                elif _pair_iou(x1, y1, x2, y2, area, m, i) >= gate:
                    take = True
            if take:
                num0 += mu[i, 0] / var[i, 0]
                den0 += 1.0 / var[i, 0]
                num1 += mu[i, 1] / var[i, 1]
                den1 += 1.0 / var[i, 1]
                num2 += mu[i, 2] / var[i, 2]
                den2 += 1.0 / var[i, 2]
                num3 += mu[i, 3] / var[i, 3]
                den3 += 1.0 / var[i, 3]
                if i != m:
                    alive[i] = False
                    n_alive -= 1

        out_mean[n_out, 0] = num0 / den0
        out_mean[n_out, 1] = num1 / den1
        out_mean[n_out, 2] = num2 / den2
        out_mean[n_out, 3] = num3 / den3
        out_var[n_out, 0] = 1.0 / den0
        out_var[n_out, 1] = 1.0 / den1
        out_var[n_out, 2] = 1.0 / den2
        out_var[n_out, 3] = 1.0 / den3
        out_score[n_out] = scores[m]
        out_anchor[n_out] = idx[m]
        n_out += 1

    return n_out


@njit(cache=True, nogil=True)
def fuse_frame(
    means, variances, scores_in, is_rgb, class_ids, per_class,
    t1, t2, decay_kind, sigma_s, score_floor,
):
    """Fuse one frame's pooled detections, one sub-pool per class.

    Classes run in ascending id order when per_class is set. Returns
    (means, variances, scores, anchor_index) with anchor_index into
    the input pool.
    """
    n = means.shape[0]
    out_mean = np.empty((n, 4))
    out_var = np.empty((n, 4))
    out_score = np.empty(n)
    out_anchor = np.empty(n, dtype=np.int64)
    n_out = 0

    if not per_class:
        idx = np.arange(n)
        n_out = _fuse_pool_into(
            means, variances, scores_in, is_rgb, idx,
            t1, t2, decay_kind, sigma_s, score_floor,
            out_mean, out_var, out_score, out_anchor, n_out,
        )
    else:
        c_prev = np.int64(-(2 ** 62))
        while True:
            c_next = np.int64(2 ** 62)
            found = False
            for i in range(n):
                if class_ids[i] > c_prev and class_ids[i] < c_next:
                    c_next = class_ids[i]
                    found = True
            if not found:
                break
            count = 0
            for i in range(n):
                if class_ids[i] == c_next:
                    count += 1
            idx = np.empty(count, dtype=np.int64)
            j = 0
            for i in range(n):
                if class_ids[i] == c_next:
                    idx[j] = i
                    j += 1
            n_out = _fuse_pool_into(
                means, variances, scores_in, is_rgb, idx,
                t1, t2, decay_kind, sigma_s, score_floor,
                out_mean, out_var, out_score, out_anchor, n_out,
            )
            c_prev = c_next

    return (
        out_mean[:n_out].copy(),
        out_var[:n_out].copy(),
        out_score[:n_out].copy(),
        out_anchor[:n_out].copy(),
    )
