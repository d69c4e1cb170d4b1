"""Gaussian regression losses and calibration diagnostics.

A detector that predicts a variance alongside each box coordinate can
be trained to trade residual error against claimed uncertainty
(:func:`attenuated_loss`, :func:`nll_loss`) and audited afterwards:
:func:`ece_curve` measures whether claimed variances cover the true
targets at the nominal rate, and :func:`correlation_stats` relates
variance, confidence, and localization quality on matched detections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import InsufficientDataError
from .geometry import CornerBox, GaussianBox, iou, to_corners

__all__ = [
    "LossSample",
    "LossBatch",
    "CalibrationCurve",
    "CorrelationStats",
    "DEFAULT_ECE_LEVELS",
    "attenuated_loss",
    "attenuated_loss_grad",
    "nll_loss",
    "ece_curve",
    "detection_triples",
    "correlation_from_triples",
    "correlation_stats",
]

# central-interval coverage levels 0.05, 0.10, ..., 0.95
DEFAULT_ECE_LEVELS: tuple[float, ...] = tuple(round(0.05 * k, 2) for k in range(1, 20))

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LossSample:
    """One regression target with its Gaussian prediction.

    Parameters
    ----------
    target : 4 floats
        Ground-truth box coordinates (x, y, w, h), pixels.
    pred_mu : 4 floats
        Predicted coordinate means.
    pred_var : 4 floats
        Predicted coordinate variances, strictly positive.
    gt_w_norm, gt_h_norm : float
        Ground-truth extent normalized to (0, 1]; small objects get a
        larger loss weight through the (2 - w*h)/2 factor.
    anchor_match : bool
        Whether this prediction was assigned to the target; unmatched
        samples contribute nothing to the weighted loss.
    """

    target: tuple[float, float, float, float]
    pred_mu: tuple[float, float, float, float]
    pred_var: tuple[float, float, float, float]
    gt_w_norm: float = 1.0
    gt_h_norm: float = 1.0
    anchor_match: bool = True

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(float(v) for v in self.target))
        object.__setattr__(self, "pred_mu", tuple(float(v) for v in self.pred_mu))
        object.__setattr__(self, "pred_var", tuple(float(v) for v in self.pred_var))
        if len(self.target) != 4 or len(self.pred_mu) != 4 or len(self.pred_var) != 4:
            raise ValueError("target, pred_mu and pred_var must have 4 coordinates")
        if not all(v > 0 and math.isfinite(v) for v in self.pred_var):
            raise ValueError(f"pred_var must be positive and finite, got {self.pred_var}")
        for name in ("gt_w_norm", "gt_h_norm"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {v}")

    @property
    def weight(self) -> float:
        """Size-dependent loss weight: (2 - w*h)/2, zero when unmatched."""
        if not self.anchor_match:
            return 0.0
        return (2.0 - self.gt_w_norm * self.gt_h_norm) / 2.0


@dataclass(frozen=True)
class LossBatch:
    """Flattened list of anchor-matched samples plus the density guard."""

    samples: tuple[LossSample, ...]
    epsilon: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class CalibrationCurve:
    """Nominal-vs-observed interval coverage and its summary gap.

    bins holds (expected_level, observed_frequency, inside_count) per
    level; ece is the mean absolute gap between the two frequencies.
    """

    bins: tuple[tuple[float, float, int], ...]
    ece: float


@dataclass(frozen=True)
class CorrelationStats:
    """Pearson correlations between IoU, mean variance, and score.

    Coefficients are NaN when the corresponding variate is constant;
    ``degenerate`` names the affected pairs. ``triples`` holds the raw
    (iou, mean_variance, score) rows for plotting.
    """

    iou_vs_variance: float
    iou_vs_score: float
    variance_vs_score: float
    degenerate: tuple[str, ...]
    triples: np.ndarray = field(repr=False)


def attenuated_loss(sample: LossSample) -> float:
    """Variance-attenuated squared error, summed over the 4 coordinates.

    Per coordinate: r^2 / (2 sigma^2) + log(sigma^2) / 2 with
    r = target - pred_mu. Large claimed variance dampens the residual
    term but pays the log penalty; for fixed r the minimum over
    sigma^2 sits exactly at sigma^2 = r^2.
    """
    total = 0.0
    for t, mu, var in zip(sample.target, sample.pred_mu, sample.pred_var):
        r = t - mu
        total += (r * r) / (2.0 * var) + 0.5 * math.log(var)
    return total


def attenuated_loss_grad(sample: LossSample) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partials of :func:`attenuated_loss`.

    Returns (d/d pred_mu, d/d pred_var), each a length-4 array:
    dL/dmu = -r / sigma^2 and dL/dvar = -r^2 / (2 sigma^4) + 1 / (2 sigma^2).
    """
    t = np.asarray(sample.target)
    mu = np.asarray(sample.pred_mu)
    var = np.asarray(sample.pred_var)
    r = t - mu
    d_mu = -r / var
    d_var = -(r * r) / (2.0 * var * var) + 1.0 / (2.0 * var)
    return d_mu, d_var


def nll_loss(batch: LossBatch) -> float:
    """Weighted negative log likelihood of a batch under its predictions.

    Each sample contributes weight * sum_k -log(N(target_k | mu_k,
    var_k) + epsilon) where weight = (2 - gt_w_norm*gt_h_norm)/2 for
    anchor-matched samples and 0 otherwise. The epsilon guard keeps the
    log finite for vanishing densities; note the density itself may
    exceed 1 for small variances, so individual terms can be negative.
    """
    total = 0.0
    eps = batch.epsilon
    for sample in batch.samples:
        w = sample.weight
        if w == 0.0:
            continue
        acc = 0.0
        for t, mu, var in zip(sample.target, sample.pred_mu, sample.pred_var):
            r = t - mu
            density = math.exp(-(r * r) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
            acc += -math.log(density + eps)
        total += w * acc
    return total


def ece_curve(paired, levels=None) -> CalibrationCurve:
    """Expected calibration error of Gaussian coordinate predictions.

    Parameters
    ----------
    paired : sequence of (pred_var, pred_mu, target)
        Each element holds three same-length coordinate vectors.
    levels : sequence of floats, optional
        Strictly increasing nominal coverage levels in (0, 1);
        defaults to 0.05 ... 0.95 in steps of 0.05.

    For each level p the observed frequency is the fraction of all
    (sample, coordinate) pairs whose target falls inside the central
    p-probability interval of N(pred_mu, pred_var). A perfectly
    calibrated predictor traces the diagonal; ece is the mean absolute
    deviation from it.
    """
    if levels is None:
        levels = DEFAULT_ECE_LEVELS
    levels = [float(p) for p in levels]
    if not levels or any(not (0.0 < p < 1.0) for p in levels):
        raise ValueError(f"levels must lie strictly inside (0, 1), got {levels}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")

    var_rows = []
    mu_rows = []
    target_rows = []
    for pred_var, pred_mu, target in paired:
        var_rows.append(np.asarray(pred_var, dtype=np.float64).ravel())
        mu_rows.append(np.asarray(pred_mu, dtype=np.float64).ravel())
        target_rows.append(np.asarray(target, dtype=np.float64).ravel())
    if not var_rows:
        raise InsufficientDataError("ece_curve needs at least one sample")
    var = np.concatenate(var_rows)
    mu = np.concatenate(mu_rows)
    target = np.concatenate(target_rows)
    if var.size == 0:
        raise InsufficientDataError("ece_curve needs at least one coordinate")
    if np.any(var <= 0):
        raise ValueError("pred_var must be strictly positive")

    abs_residual = np.abs(target - mu)
    sigma = np.sqrt(var)
    bins = []
    gaps = []
    for p in levels:
        z = float(ndtri((1.0 + p) / 2.0))
        inside = abs_residual <= z * sigma
        observed = float(np.count_nonzero(inside)) / inside.size
        bins.append((p, observed, int(np.count_nonzero(inside))))
        gaps.append(abs(p - observed))
    return CalibrationCurve(bins=tuple(bins), ece=float(np.mean(gaps)))


def detection_triples(dets: list[GaussianBox], gts: list[CornerBox]) -> np.ndarray:
    """Pair each detection with its best-IoU ground truth.

    Returns one (iou, mean_variance, score) row per detection; no
    exclusivity, and the IoU is 0 when nothing overlaps. Rows from
    several frames may be concatenated before correlating.
    """
    triples = np.empty((len(dets), 3))
    for i, det in enumerate(dets):
        det_corners = to_corners(det)
        best = 0.0
        for gt in gts:
            v = iou(det_corners, gt)
            if v > best:
                best = v
        triples[i] = (best, float(np.mean(det.variance)), det.score)
    return triples


def correlation_from_triples(triples: np.ndarray) -> CorrelationStats:
    """Pearson correlations between the columns of (iou, var, score) rows."""
    triples = np.asarray(triples, dtype=np.float64)
    if triples.ndim != 2 or triples.shape[1] != 3:
        raise ValueError(f"expected (n, 3) triples, got shape {triples.shape}")
    if triples.shape[0] < 3:
        raise InsufficientDataError(f"need >= 3 triples, got {triples.shape[0]}")

    def pearson(a: np.ndarray, b: np.ndarray) -> float:
        da = a - a.mean()
        db = b - b.mean()
        denom = math.sqrt(float(da @ da) * float(db @ db))
        if denom == 0.0:
            return math.nan
        return float(da @ db) / denom

    pairs = {
        "iou_vs_variance": pearson(triples[:, 0], triples[:, 1]),
        "iou_vs_score": pearson(triples[:, 0], triples[:, 2]),
        "variance_vs_score": pearson(triples[:, 1], triples[:, 2]),
    }
    degenerate = tuple(name for name, r in pairs.items() if math.isnan(r))
    triples = triples.copy()
    triples.flags.writeable = False
    return CorrelationStats(degenerate=degenerate, triples=triples, **pairs)


def correlation_stats(dets: list[GaussianBox], gts: list[CornerBox]) -> CorrelationStats:
    """Relate localization quality, claimed variance, and confidence.

    Every detection is paired with its best-IoU ground-truth box and
    the resulting (iou, mean_variance, score) triples are correlated
    column-wise. Needs at least 3 detections and 1 ground truth.
    """
    if len(dets) < 3 or len(gts) == 0:
        raise InsufficientDataError(
            f"need >= 3 detections and >= 1 ground truth, got {len(dets)}/{len(gts)}"
        )
    return correlation_from_triples(detection_triples(dets, gts))
