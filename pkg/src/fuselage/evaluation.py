"""Detection matching, average precision, and corpus evaluation.

Matching is the standard greedy protocol: detections in descending
score order claim their best-IoU unclaimed same-class ground truth at
or above the gate. AP uses 11-point interpolation over the corpus-wide
score-ranked precision/recall curve, and mAP averages the per-class
APs without weighting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError
from .geometry import CLASS_NAMES, CornerBox, GaussianBox, iou, to_corners

__all__ = [
    "GroundTruthFrame",
    "ClassEval",
    "EvalReport",
    "match_detections",
    "average_precision",
    "evaluate_detections",
    "RECALL_GRID",
]

# 11-point interpolation grid; k/10 reproduces the same binary doubles
# on both the implementation and any literal re-derivation
RECALL_GRID = tuple(k / 10.0 for k in range(11))


@dataclass(frozen=True)
class GroundTruthFrame:
    """Annotated objects of one frame: (class_id, corner box) pairs."""

    frame_id: str
    objects: tuple[tuple[int, CornerBox], ...]

    def __post_init__(self):
        objects = tuple((int(c), b) for c, b in self.objects)
        for c, b in objects:
            if c not in (0, 1, 2):
                raise ValueError(f"class_id must be 0, 1 or 2, got {c}")
            if not isinstance(b, CornerBox):
                raise ValueError(f"objects must hold CornerBox values, got {type(b)}")
        object.__setattr__(self, "objects", objects)

    def class_count(self, class_id: int) -> int:
        return sum(1 for c, _ in self.objects if c == class_id)


@dataclass(frozen=True)
class ClassEval:
    """Per-class outcome counts and AP."""

    ap: float
    tp: int
    fp: int
    fn: int
    n_gt: int


@dataclass(frozen=True)
class EvalReport:
    """Corpus evaluation: per-class results plus their unweighted mean.

    Classes with zero ground truth are excluded from the mean and
    listed in ``excluded_classes``.
    """

    per_class: dict[int, ClassEval]
    m_ap: float
    excluded_classes: tuple[int, ...]

    @property
    def counts(self) -> tuple[int, int, int]:
        """Total (tp, fp, fn) over all classes."""
        tp = sum(c.tp for c in self.per_class.values())
        fp = sum(c.fp for c in self.per_class.values())
        fn = sum(c.fn for c in self.per_class.values())
        return tp, fp, fn


def match_detections(
    dets: Iterable[GaussianBox],
    gt: GroundTruthFrame,
    iou_gate: float = 0.5,
) -> list[tuple[GaussianBox, int | None, float]]:
    """Greedily assign detections to ground-truth objects.

    Returns one (detection, matched gt index or None, iou) triple per
    detection, ordered by descending score (ties keep input order).
    A detection claims the unclaimed same-class ground truth with the
    highest IoU, provided that IoU reaches ``iou_gate``; the reported
    IoU is 0.0 for unmatched detections.
    """
    if not (0.0 < iou_gate < 1.0):
        raise ValueError(f"iou_gate must lie in (0, 1), got {iou_gate}")
    boxes = list(dets)
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    gt_corners = [(c, b) for c, b in gt.objects]
    claimed = [False] * len(gt_corners)
    results = []
    for i in order:
        det = boxes[i]
        det_corners = to_corners(det)
        best_iou = 0.0
        best_j = None
        for j, (cls, gt_box) in enumerate(gt_corners):
            if claimed[j] or cls != det.class_id:
                continue
            v = iou(det_corners, gt_box)
            if v >= iou_gate and v > best_iou:
                best_iou = v
                best_j = j
        if best_j is not None:
            claimed[best_j] = True
            results.append((det, best_j, best_iou))
        else:
            results.append((det, None, 0.0))
    return results


def average_precision(
    corpus: Sequence[tuple[Sequence[tuple[GaussianBox, int | None, float]], GroundTruthFrame]],
    class_id: int,
) -> float:
    """11-point interpolated AP of one class over a matched corpus.

    ``corpus`` pairs each frame's match list (from
    :func:`match_detections`) with its ground truth. Detections rank
    globally by descending score; equal scores break by frame position,
    then within-frame order.
    """
    n_gt = 0
    ranked: list[tuple[float, int, int, bool]] = []  # score, frame pos, rank, is_tp
    for frame_pos, (matches, gt) in enumerate(corpus):
        n_gt += gt.class_count(class_id)
        for rank, (det, gt_idx, _iou) in enumerate(matches):
            if det.class_id != class_id:
                continue
            ranked.append((det.score, frame_pos, rank, gt_idx is not None))
    if n_gt == 0:
        raise InsufficientDataError(f"no ground truth of class {class_id} in corpus")
    ranked.sort(key=lambda r: (-r[0], r[1], r[2]))

    tp = 0
    fp = 0
    precisions = []
    recalls = []
    for _score, _f, _r, is_tp in ranked:
        if is_tp:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gt)

    total = 0.0
    for r in RECALL_GRID:
        best = 0.0
        for p, rec in zip(precisions, recalls):
            if rec >= r and p > best:
                best = p
        total += best
    return total / len(RECALL_GRID)


def evaluate_detections(
    frames: Sequence[tuple[Iterable[GaussianBox], GroundTruthFrame]],
    iou_gate: float = 0.5,
) -> EvalReport:
    """Match and score a corpus, reporting per-class AP and mAP."""
    matched = [(match_detections(dets, gt, iou_gate), gt) for dets, gt in frames]
    per_class: dict[int, ClassEval] = {}
    excluded = []
    aps = []
    for class_id in range(len(CLASS_NAMES)):
        n_gt = sum(gt.class_count(class_id) for _, gt in matched)
        tp = sum(
            1
            for matches, _ in matched
            for det, gt_idx, _ in matches
            if det.class_id == class_id and gt_idx is not None
        )
        fp = sum(
            1
            for matches, _ in matched
            for det, gt_idx, _ in matches
            if det.class_id == class_id and gt_idx is None
        )
        if n_gt == 0:
            excluded.append(class_id)
            continue
        ap = average_precision(matched, class_id)
        per_class[class_id] = ClassEval(ap=ap, tp=tp, fp=fp, fn=n_gt - tp, n_gt=n_gt)
        aps.append(ap)
    m_ap = float(np.mean(aps)) if aps else 0.0
    return EvalReport(per_class=per_class, m_ap=m_ap, excluded_classes=tuple(excluded))
