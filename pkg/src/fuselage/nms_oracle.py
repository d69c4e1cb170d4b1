"""Reference implementation of multi-source fusion.

A deliberately naive transcription of the fusion procedure in plain
Python: no caching, no vectorisation, quadratic-and-worse scans. It
exists so the compiled path in fuselage.nms_kernel can be checked
against an independent rendering of the same arithmetic; the two must
agree bit for bit, so expressions and accumulation order here mirror
the kernel exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .nms import Decay, DetectionSet, FusionConfig

__all__ = ["oracle_multi_source_nms"]


def _corners(means, i):
    half_w = means[i][2] / 2.0
    half_h = means[i][3] / 2.0
    x1 = means[i][0] - half_w
    x2 = means[i][0] + half_w
    y1 = means[i][1] - half_h
    y2 = means[i][1] + half_h
    return x1, y1, x2, y2


def _iou(means, i, j):
    ax1, ay1, ax2, ay2 = _corners(means, i)
    bx1, by1, bx2, by2 = _corners(means, j)
    iw = min(ax2, bx2) - max(ax1, bx1)
    if iw <= 0.0:
        return 0.0
    ih = min(ay2, by2) - max(ay1, by1)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / ((area_a + area_b) - inter)


def _fuse_one_pool(means, variances, scores, is_rgb, cfg: FusionConfig):
    n = len(means)
    scores = list(scores)
    alive = [True] * n
    emitted = []

    while any(alive):
        m = -1
        best = -1.0
        for i in range(n):
            if alive[i] and scores[i] > best:
                best = scores[i]
                m = i
        alive[m] = False

        for i in range(n):
            if alive[i]:
                v = _iou(means, m, i)
                if cfg.decay is Decay.GAUSSIAN:
                    scores[i] = scores[i] * math.exp(-(v * v) / cfg.sigma_s)
                else:
                    if v > cfg.t1:
                        scores[i] = scores[i] * (1.0 - v)
                if scores[i] < cfg.score_floor:
                    alive[i] = False

        has_other = False
        best_other = 0.0
        for i in range(n):
            if is_rgb[i] != is_rgb[m]:
                has_other = True
                v = _iou(means, m, i)
                if v > best_other:
                    best_other = v
        if not has_other:
            case = 3
        elif best_other >= cfg.t2:
            case = 1
        elif best_other >= cfg.t1:
            case = 2
        else:
            case = 3
        gate = cfg.t2 if case == 1 else cfg.t1
        own_only = case == 3

        num = [0.0, 0.0, 0.0, 0.0]
        den = [0.0, 0.0, 0.0, 0.0]
        for i in range(n):
            take = False
            if i == m:
                take = True
            elif alive[i]:
                if own_only and (is_rgb[i] != is_rgb[m]):
                    take = False
                elif _iou(means, m, i) >= gate:
                    take = True
            if take:
                for k in range(4):
                    num[k] += means[i][k] / variances[i][k]
                    den[k] += 1.0 / variances[i][k]
                if i != m:
                    alive[i] = False

        fused_mean = tuple(num[k] / den[k] for k in range(4))
        fused_var = tuple(1.0 / den[k] for k in range(4))
        emitted.append((fused_mean, fused_var, scores[m], m))

    return emitted


def oracle_multi_source_nms(rgb: DetectionSet, depth: DetectionSet, cfg: FusionConfig) -> DetectionSet:
    """Fuse two detection sets through the naive reference path."""
    means = [tuple(float(x) for x in row) for row in rgb.means] + [
        tuple(float(x) for x in row) for row in depth.means
    ]
    variances = [tuple(float(x) for x in row) for row in rgb.variances] + [
        tuple(float(x) for x in row) for row in depth.variances
    ]
    scores = [float(s) for s in rgb.scores] + [float(s) for s in depth.scores]
    class_ids = [int(c) for c in rgb.class_ids] + [int(c) for c in depth.class_ids]
    is_rgb = [bool(b) for b in rgb.rgb_mask] + [bool(b) for b in depth.rgb_mask]
    n = len(means)
    if n == 0:
        return DetectionSet.empty()

    if cfg.per_class:
        groups = [
            [i for i in range(n) if class_ids[i] == c]
            for c in sorted(set(class_ids))
        ]
    else:
        groups = [list(range(n))]

    rows = []  # (mean, var, score, class_id, is_rgb, emission sequence)
    seq = 0
    for idx in groups:
        emitted = _fuse_one_pool(
            [means[i] for i in idx],
            [variances[i] for i in idx],
            [scores[i] for i in idx],
            [is_rgb[i] for i in idx],
            cfg,
        )
        for fused_mean, fused_var, score, local_anchor in emitted:
            anchor = idx[local_anchor]
            rows.append((fused_mean, fused_var, score, class_ids[anchor], is_rgb[anchor], seq))
            seq += 1

    rows.sort(key=lambda r: (-r[2], r[3], r[5]))
    return DetectionSet(
        np.array([r[0] for r in rows], dtype=np.float64).reshape(-1, 4),
        np.array([r[1] for r in rows], dtype=np.float64).reshape(-1, 4),
        np.array([r[2] for r in rows], dtype=np.float64),
        np.array([r[3] for r in rows], dtype=np.int64),
        np.array([r[4] for r in rows], dtype=np.bool_),
    )
