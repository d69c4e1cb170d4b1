"""Suppression and fusion of box detections from two sensor pipelines.

Two kinds of duplicate handling live here:

* :func:`standard_nms`, the classic greedy keep-or-discard pass used
  inside a single pipeline.
* :func:`multi_source_nms`, which pools RGB and depth detections,
  decays competitor scores instead of discarding them, and replaces
  each emitted box with an inverse-variance weighted average of the
  boxes that agree with it. How aggressively boxes are pooled depends
  on whether the other pipeline confirms the detection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from .geometry import CornerBox, GaussianBox, Modality, iou, to_corners

__all__ = [
    "Decay",
    "OverlapCase",
    "FusionConfig",
    "DetectionSet",
    "decay",
    "classify_overlap",
    "softer_update",
    "standard_nms",
    "multi_source_nms",
]


class Decay(enum.Enum):
    """Score decay applied to boxes overlapping the current anchor.

    LINEAR multiplies by (1 - overlap) once overlap exceeds the low
    gate t1 and leaves smaller overlaps untouched. GAUSSIAN multiplies
    by exp(-overlap^2 / sigma_s) at every overlap level.
    """

    LINEAR = "linear"
    GAUSSIAN = "gaussian"


class OverlapCase(enum.IntEnum):
    """How strongly the other pipeline confirms an anchor box.

    CASE1: the other pipeline has a box overlapping at or above the
    high gate t2, so both sensors see the object and fusion may pool
    aggressively.
    CASE2: best cross-pipeline overlap falls in [t1, t2), an ambiguous
    partial agreement, so fusion pools at the low gate only.
    CASE3: the other pipeline offers nothing above t1 (or is absent
    entirely), so fusion stays within the anchor's own pipeline.
    """

    CASE1 = 1
    CASE2 = 2
    CASE3 = 3


@dataclass(frozen=True)
class FusionConfig:
    """Knobs for score decay and cross-pipeline fusion.

    t1/t2 are the low and high IoU gates used both to classify
    cross-pipeline agreement and to select which boxes merge into an
    emitted detection. Defaults follow the tuned operating point; use
    :meth:`reference_gates` for the looser (0.3, 0.5) pair.
    """

    t1: float = 0.45
    t2: float = 0.7
    decay: Decay = Decay.GAUSSIAN
    sigma_s: float = 0.5
    single_modal_nms_iou: float = 0.45
    score_floor: float = 0.01
    per_class: bool = True

    def __post_init__(self):
        if not (0.0 <= self.t1 < self.t2 <= 1.0):
            raise ValueError(f"gates must satisfy 0 <= t1 < t2 <= 1, got ({self.t1}, {self.t2})")
        if not self.sigma_s > 0.0:
            raise ValueError(f"sigma_s must be positive, got {self.sigma_s}")
        if not (0.0 <= self.single_modal_nms_iou <= 1.0):
            raise ValueError(f"single_modal_nms_iou out of [0, 1]: {self.single_modal_nms_iou}")
        if not (0.0 <= self.score_floor < 1.0):
            raise ValueError(f"score_floor must lie in [0, 1), got {self.score_floor}")

    @classmethod
    def reference_gates(cls, **overrides) -> "FusionConfig":
        """Config with the looser (t1, t2) = (0.3, 0.5) gate pair."""
        params = {"t1": 0.3, "t2": 0.5}
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True, eq=False)
class DetectionSet:
    """Column-oriented batch of detections.

    Arrays are the primary representation; :attr:`boxes` materialises
    :class:`GaussianBox` objects lazily. Arrays are frozen after
    validation so a set can be shared without defensive copies.
    """

    means: np.ndarray      # (n, 4) float64, columns mu_x, mu_y, mu_w, mu_h
    variances: np.ndarray  # (n, 4) float64, strictly positive
    scores: np.ndarray     # (n,) float64 in [0, 1]
    class_ids: np.ndarray  # (n,) int64
    rgb_mask: np.ndarray   # (n,) bool, True = RGB pipeline

    def __post_init__(self):
        means = np.ascontiguousarray(self.means, dtype=np.float64).reshape(-1, 4)
        variances = np.ascontiguousarray(self.variances, dtype=np.float64).reshape(-1, 4)
        scores = np.ascontiguousarray(self.scores, dtype=np.float64).reshape(-1)
        class_ids = np.ascontiguousarray(self.class_ids, dtype=np.int64).reshape(-1)
        rgb_mask = np.ascontiguousarray(self.rgb_mask, dtype=np.bool_).reshape(-1)
        n = means.shape[0]
        if not (variances.shape[0] == scores.shape[0] == class_ids.shape[0] == rgb_mask.shape[0] == n):
            raise ValueError("detection set columns disagree on length")
        if n:
            if not np.all(means[:, 2:] > 0):
                raise ValueError("box widths and heights must be positive")
            if not (np.all(variances > 0) and np.all(np.isfinite(variances))):
                raise ValueError("variances must be positive and finite")
            if not (np.all(scores >= 0) and np.all(scores <= 1)):
                raise ValueError("scores must lie in [0, 1]")
            if not np.all(np.isfinite(means)):
                raise ValueError("box coordinates must be finite")
        for arr in (means, variances, scores, class_ids, rgb_mask):
            arr.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "class_ids", class_ids)
        object.__setattr__(self, "rgb_mask", rgb_mask)

    @classmethod
    def _wrap(cls, means, variances, scores, class_ids, rgb_mask) -> "DetectionSet":
        """Adopt canonical arrays without re-validating.

        Only for columns produced by this module's kernels, which
        already satisfy every invariant; skipping __post_init__ keeps
        per-frame fusion overhead small.
        """
        out = cls.__new__(cls)
        for name, arr in (
            ("means", means), ("variances", variances), ("scores", scores),
            ("class_ids", class_ids), ("rgb_mask", rgb_mask),
        ):
            arr.flags.writeable = False
            object.__setattr__(out, name, arr)
        return out

    @classmethod
    def from_boxes(cls, boxes: Iterable[GaussianBox]) -> "DetectionSet":
        boxes = tuple(boxes)
        n = len(boxes)
        means = np.empty((n, 4))
        variances = np.empty((n, 4))
        scores = np.empty(n)
        class_ids = np.empty(n, dtype=np.int64)
        rgb_mask = np.empty(n, dtype=np.bool_)
        for i, b in enumerate(boxes):
            means[i] = (b.mu_x, b.mu_y, b.mu_w, b.mu_h)
            variances[i] = (b.var_x, b.var_y, b.var_w, b.var_h)
            scores[i] = b.score
            class_ids[i] = b.class_id
            rgb_mask[i] = b.modality is Modality.RGB
        return cls(means, variances, scores, class_ids, rgb_mask)

    @classmethod
    def empty(cls) -> "DetectionSet":
        return cls(
            np.empty((0, 4)), np.empty((0, 4)), np.empty(0),
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.bool_),
        )

    @cached_property
    def boxes(self) -> tuple[GaussianBox, ...]:
        return tuple(
            GaussianBox(
                mu_x=float(self.means[i, 0]),
                mu_y=float(self.means[i, 1]),
                mu_w=float(self.means[i, 2]),
                mu_h=float(self.means[i, 3]),
                var_x=float(self.variances[i, 0]),
                var_y=float(self.variances[i, 1]),
                var_w=float(self.variances[i, 2]),
                var_h=float(self.variances[i, 3]),
                score=float(self.scores[i]),
                class_id=int(self.class_ids[i]),
                modality=Modality.RGB if self.rgb_mask[i] else Modality.DEPTH,
            )
            for i in range(len(self))
        )

    @cached_property
    def corners(self) -> np.ndarray:
        """Corner-form coordinates, shape (n, 4): x_min, y_min, x_max, y_max."""
        half = self.means[:, 2:] / 2.0
        out = np.empty_like(self.means)
        out[:, :2] = self.means[:, :2] - half
        out[:, 2:] = self.means[:, :2] + half
        out.flags.writeable = False
        return out

    def __len__(self) -> int:
        return self.means.shape[0]

    def __iter__(self) -> Iterator[GaussianBox]:
        return iter(self.boxes)

    def __getitem__(self, i: int) -> GaussianBox:
        return self.boxes[i]

    def select(self, index: np.ndarray) -> "DetectionSet":
        """Subset by integer or boolean index array."""
        # fancy indexing copies, so the wrapped columns stay canonical
        return DetectionSet._wrap(
            self.means[index], self.variances[index], self.scores[index],
            self.class_ids[index], self.rgb_mask[index],
        )

    def same_as(self, other: "DetectionSet") -> bool:
        """Exact (value-level) equality of all columns."""
        return (
            len(self) == len(other)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.class_ids, other.class_ids)
            and np.array_equal(self.rgb_mask, other.rgb_mask)
        )


def decay(score: float, overlap: float, cfg: FusionConfig) -> float:
    """Decay a competitor's score given its overlap with the anchor."""
    if cfg.decay is Decay.GAUSSIAN:
        return score * math.exp(-(overlap * overlap) / cfg.sigma_s)
    if overlap > cfg.t1:
        return score * (1.0 - overlap)
    return score


def classify_overlap(iou_value: float, cfg: FusionConfig) -> OverlapCase:
    """Classify cross-pipeline agreement from the best cross IoU."""
    if iou_value >= cfg.t2:
        return OverlapCase.CASE1
    if iou_value >= cfg.t1:
        return OverlapCase.CASE2
    return OverlapCase.CASE3


def softer_update(anchor: GaussianBox, pool: Iterable[GaussianBox], gate: float) -> GaussianBox:
    """Replace the anchor's coordinates by an inverse-variance weighted mean.

    Every pool box whose IoU with the anchor strictly exceeds ``gate``
    contributes, weighted per coordinate by 1/variance. The anchor
    itself always contributes (so the qualifying set is never empty),
    and its score, class and modality carry over unchanged. The fused
    variance is the inverse precision sum, which never exceeds the
    variance of any contributor.
    """
    anchor_corners = to_corners(anchor)
    members = [anchor]
    for b in pool:
        if b is anchor:
            continue
        if iou(anchor_corners, to_corners(b)) > gate:
            members.append(b)
    num = np.zeros(4)
    den = np.zeros(4)
    for b in members:
        v = b.variance
        num += b.mean / v
        den += 1.0 / v
    mean = num / den
    var = 1.0 / den
    return replace(
        anchor,
        mu_x=float(mean[0]), mu_y=float(mean[1]), mu_w=float(mean[2]), mu_h=float(mean[3]),
        var_x=float(var[0]), var_y=float(var[1]), var_w=float(var[2]), var_h=float(var[3]),
    )


def standard_nms(dets: DetectionSet, iou_thresh: float, *, per_class: bool = False) -> DetectionSet:
    """Greedy keep-or-discard suppression.

    Boxes are visited in descending score order (ties: lower input
    index first); a box is discarded when its IoU with any already
    kept box strictly exceeds ``iou_thresh``. Output is sorted by
    descending score.
    """
    if not (0.0 <= iou_thresh <= 1.0):
        raise ValueError(f"iou_thresh out of [0, 1]: {iou_thresh}")
    n = len(dets)
    if n == 0:
        return dets
    if per_class:
        kept: list[np.ndarray] = []
        for c in np.unique(dets.class_ids):
            idx = np.flatnonzero(dets.class_ids == c)
            kept.append(idx[_nms_keep(dets.corners[idx], dets.scores[idx], iou_thresh)])
        keep = np.concatenate(kept)
    else:
        keep = _nms_keep(dets.corners, dets.scores, iou_thresh)
    order = np.lexsort((keep, -dets.scores[keep]))
    return dets.select(keep[order])


def _nms_keep(corners: np.ndarray, scores: np.ndarray, iou_thresh: float) -> np.ndarray:
    """Indices kept by greedy suppression, in visit order."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    kept: list[int] = []
    kept_corners: list[np.ndarray] = []
    for i in order:
        c = corners[i]
        discard = False
        for kc in kept_corners:
            iw = min(c[2], kc[2]) - max(c[0], kc[0])
            if iw <= 0.0:
                continue
            ih = min(c[3], kc[3]) - max(c[1], kc[1])
            if ih <= 0.0:
                continue
            inter = iw * ih
            area_a = (c[2] - c[0]) * (c[3] - c[1])
            area_b = (kc[2] - kc[0]) * (kc[3] - kc[1])
            if inter / ((area_a + area_b) - inter) > iou_thresh:
                discard = True
                break
        if not discard:
            kept.append(int(i))
            kept_corners.append(c)
    return np.array(kept, dtype=np.int64)


def multi_source_nms(rgb: DetectionSet, depth: DetectionSet, cfg: FusionConfig) -> DetectionSet:
    """Fuse RGB and depth detections into a single deduplicated set.

    The two sets are pooled (RGB first, preserving input order within
    each pipeline). Repeatedly the highest-scoring live box becomes the
    anchor: remaining live scores decay by their overlap with it, boxes
    falling below ``cfg.score_floor`` drop out, and the anchor's best
    IoU against the *other* pipeline's input pool picks the fusion
    regime (see :class:`OverlapCase`). The anchor is then replaced by
    the inverse-variance weighted mean of itself and every qualifying
    live box; contributors are consumed. With ``cfg.per_class`` the
    whole procedure runs independently per class.

    Output is sorted by descending score; ties break by class id, then
    emission order. Scores in the output reflect any decay the anchor
    absorbed before being emitted.
    """
    if len(rgb) and not bool(np.all(rgb.rgb_mask)):
        raise ValueError("rgb set contains non-RGB boxes")
    if len(depth) and bool(np.any(depth.rgb_mask)):
        raise ValueError("depth set contains RGB boxes")
    from . import nms_kernel

    means = np.concatenate([rgb.means, depth.means])
    variances = np.concatenate([rgb.variances, depth.variances])
    scores = np.concatenate([rgb.scores, depth.scores])
    class_ids = np.concatenate([rgb.class_ids, depth.class_ids])
    rgb_mask = np.concatenate([rgb.rgb_mask, depth.rgb_mask])
    n = means.shape[0]
    if n == 0:
        return DetectionSet.empty()

    decay_kind = nms_kernel.DECAY_GAUSSIAN if cfg.decay is Decay.GAUSSIAN else nms_kernel.DECAY_LINEAR
    fused_means, fused_vars, fused_scores, anchors = nms_kernel.fuse_frame(
        means, variances, scores, rgb_mask, class_ids, cfg.per_class,
        cfg.t1, cfg.t2, decay_kind, cfg.sigma_s, cfg.score_floor,
    )
    fused_classes = class_ids[anchors]
    fused_rgb = rgb_mask[anchors]
    # descending score; ties by class id then emission order
    order = np.lexsort((np.arange(len(anchors)), fused_classes, -fused_scores))
    return DetectionSet._wrap(
        fused_means[order], fused_vars[order], fused_scores[order],
        fused_classes[order], fused_rgb[order],
    )
