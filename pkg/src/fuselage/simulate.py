"""Synthetic two-detector stand-in for trained RGB and depth pipelines.

Real degradation experiments need trained networks; this simulator
reproduces their statistical behaviour instead. Each ground-truth
object is missed with a probability, or emitted with coordinates
perturbed by N(0, sigma_eff^2); both the miss rate and sigma_eff scale
with corruption kind and severity through a per-detector response
curve. Reported variances track the true perturbation scale with a
configurable fidelity, scores fall with perturbation size, and a
Poisson number of background false positives rounds out each frame.

Randomness uses Philox streams keyed by (seed, modality, frame), with
the severity deliberately excluded from the key: one frame draws one
set of random variates and every severity rescales the same draws
(common random numbers), so degradation across levels is monotone
per object instead of merely on average.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .corruption import CorruptionKind, CorruptionSpec
from .evaluation import GroundTruthFrame
from .geometry import CornerBox, Modality
from .nms import DetectionSet
from .util import digest64

__all__ = [
    "NoiseResponse",
    "SimDetectorSpec",
    "simulate_detections",
    "default_rgb_spec",
    "default_depth_spec",
    "make_synthetic_corpus",
    "load_golden_corpus",
    "corpus_to_jsonl",
    "corpus_from_jsonl",
]

_MASK64 = (1 << 64) - 1
_MODALITY_SALT = {Modality.RGB: 0x52474200, Modality.DEPTH: 0x44455054}  # "RGB\0", "DEPT"
_CORPUS_SALT = 0x636F7270  # "corp"

# class-conditional box extent ranges (w_lo, w_hi, h_lo, h_hi), pixels
_CLASS_SIZE = {
    0: (40.0, 90.0, 22.0, 48.0),   # car
    1: (12.0, 26.0, 38.0, 70.0),   # pedestrian
    2: (18.0, 40.0, 32.0, 60.0),   # cyclist
}
_CLASS_MIX = (0.60, 0.25, 0.15)

_LEVELS = (1, 2, 3, 4, 5)
_VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class NoiseResponse:
    """Per-(kind, level) multipliers on sigma and miss rate.

    Each field holds five (sigma_mult, miss_mult) pairs for severity
    levels 1..5; level 0 always maps to (1, 1).
    """

    gaussian_noise: tuple[tuple[float, float], ...]
    motion_blur: tuple[tuple[float, float], ...]
    frost: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for name in ("gaussian_noise", "motion_blur", "frost"):
            pairs = tuple((float(a), float(b)) for a, b in getattr(self, name))
            if len(pairs) != 5:
                raise ValueError(f"{name} must list 5 severity levels, got {len(pairs)}")
            if any(a < 1.0 or b < 1.0 for a, b in pairs):
                raise ValueError(f"{name} multipliers must be >= 1")
            object.__setattr__(self, name, pairs)

    def multipliers(self, kind: CorruptionKind, level: int) -> tuple[float, float]:
        if level == 0:
            return 1.0, 1.0
        return getattr(self, kind.value)[level - 1]


def _flat_response() -> NoiseResponse:
    flat = tuple((1.0, 1.0) for _ in _LEVELS)
    return NoiseResponse(flat, flat, flat)


@dataclass(frozen=True)
class SimDetectorSpec:
    """Statistical profile of one simulated detector."""

    modality: Modality
    loc_sigma_base: float
    miss_rate_base: float
    false_positive_rate: float
    score_scale: float = 12.0
    score_max: float = 1.0
    variance_fidelity: float = 1.0
    variance_prior: float = 4.0
    noise_response: NoiseResponse = field(default_factory=_flat_response)
    seed: int = 0
    frame_size: tuple[float, float] = (512.0, 128.0)

    def __post_init__(self):
        if self.loc_sigma_base < 0:
            raise ValueError(f"loc_sigma_base must be >= 0, got {self.loc_sigma_base}")
        if not (0.0 <= self.miss_rate_base <= 1.0):
            raise ValueError(f"miss_rate_base must lie in [0, 1], got {self.miss_rate_base}")
        if self.false_positive_rate < 0:
            raise ValueError(f"false_positive_rate must be >= 0, got {self.false_positive_rate}")
        if not (0.0 <= self.variance_fidelity <= 1.0):
            raise ValueError(f"variance_fidelity must lie in [0, 1], got {self.variance_fidelity}")
        if not (0.0 < self.score_max <= 1.0):
            raise ValueError(f"score_max must lie in (0, 1], got {self.score_max}")
        if self.score_scale <= 0 or self.variance_prior <= 0:
            raise ValueError("score_scale and variance_prior must be positive")

    def to_json(self) -> str:
        d = asdict(self)
        d["modality"] = self.modality.value
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimDetectorSpec":
        d = json.loads(text)
        d["modality"] = Modality(d["modality"])
        d["noise_response"] = NoiseResponse(**{
            k: tuple(tuple(p) for p in v) for k, v in d["noise_response"].items()
        })
        d["frame_size"] = tuple(d["frame_size"])
        return cls(**d)


def _frame_rng(spec: SimDetectorSpec, frame_id: str) -> np.random.Generator:
    key = np.array(
        [(spec.seed ^ _MODALITY_SALT[spec.modality]) & _MASK64, digest64(frame_id)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def simulate_detections(
    gt: GroundTruthFrame,
    spec: SimDetectorSpec,
    corruption: CorruptionSpec,
) -> DetectionSet:
    """Emit one frame of simulated detections under a corruption level.

    The random draws per frame depend only on (spec.seed, modality,
    frame_id); severity rescales them. Perturbed widths and heights
    clamp at 1 px; the reported per-coordinate variance is
    fidelity * sigma_eff^2 + (1 - fidelity) * variance_prior, floored
    at 1e-6 to stay positive when sigma_eff is 0.
    """
    sigma_mult, miss_mult = spec.noise_response.multipliers(corruption.kind, corruption.level)
    sigma_eff = spec.loc_sigma_base * sigma_mult
    miss_p = min(1.0, spec.miss_rate_base * miss_mult)
    rng = _frame_rng(spec, gt.frame_id)

    means = []
    variances = []
    scores = []
    class_ids = []
    reported_var = max(
        spec.variance_fidelity * sigma_eff * sigma_eff
        + (1.0 - spec.variance_fidelity) * spec.variance_prior,
        _VARIANCE_FLOOR,
    )
    for class_id, box in gt.objects:
        u_miss = float(rng.random())
        delta_raw = rng.standard_normal(4)
        if u_miss < miss_p:
            continue
        delta = sigma_eff * delta_raw
        cx, cy, w, h = box.center
        mu = (
            cx + delta[0],
            cy + delta[1],
            max(w + delta[2], 1.0),
            max(h + delta[3], 1.0),
        )
        norm_sq = float(delta @ delta)
        score = spec.score_max * math.exp(-norm_sq / (2.0 * spec.score_scale * spec.score_scale))
        means.append(mu)
        variances.append((reported_var,) * 4)
        scores.append(score)
        class_ids.append(class_id)

    n_fp = int(rng.poisson(spec.false_positive_rate))
    frame_w, frame_h = spec.frame_size
    for _ in range(n_fp):
        u_cls = float(rng.random())
        if u_cls < _CLASS_MIX[0]:
            fp_class = 0
        elif u_cls < _CLASS_MIX[0] + _CLASS_MIX[1]:
            fp_class = 1
        else:
            fp_class = 2
        w_lo, w_hi, h_lo, h_hi = _CLASS_SIZE[fp_class]
        w = w_lo + (w_hi - w_lo) * float(rng.random())
        h = h_lo + (h_hi - h_lo) * float(rng.random())
        cx = frame_w * float(rng.random())
        cy = frame_h * float(rng.random())
        score = 0.05 + 0.5 * float(rng.random())
        var = spec.variance_prior * (1.0 + float(rng.random()))
        means.append((cx, cy, w, h))
        variances.append((var,) * 4)
        scores.append(score)
        class_ids.append(fp_class)

    n = len(means)
    return DetectionSet(
        np.array(means, dtype=np.float64).reshape(n, 4),
        np.array(variances, dtype=np.float64).reshape(n, 4),
        np.array(scores, dtype=np.float64),
        np.array(class_ids, dtype=np.int64),
        np.full(n, spec.modality is Modality.RGB, dtype=np.bool_),
    )


def default_rgb_spec(seed: int = 0) -> SimDetectorSpec:
    """Camera pipeline profile: decent clean accuracy, noise-fragile."""
    return SimDetectorSpec(
        modality=Modality.RGB,
        loc_sigma_base=2.5,
        miss_rate_base=0.06,
        false_positive_rate=0.30,
        variance_fidelity=0.85,
        noise_response=NoiseResponse(
            gaussian_noise=((2.0, 1.5), (3.0, 2.4), (4.2, 3.6), (5.4, 5.2), (7.0, 7.5)),
            motion_blur=((1.8, 1.3), (2.8, 2.2), (4.5, 4.0), (6.0, 7.0), (8.0, 10.0)),
            frost=((2.2, 2.0), (3.2, 3.5), (4.2, 5.0), (5.5, 7.0), (7.0, 9.0)),
        ),
        seed=seed,
    )


def default_depth_spec(seed: int = 0) -> SimDetectorSpec:
    """Depth pipeline profile: more accurate clean, more noise-robust."""
    return SimDetectorSpec(
        modality=Modality.DEPTH,
        loc_sigma_base=2.0,
        miss_rate_base=0.04,
        false_positive_rate=0.25,
        variance_fidelity=0.90,
        noise_response=NoiseResponse(
            gaussian_noise=((1.8, 1.4), (2.5, 2.0), (3.5, 3.2), (4.6, 4.8), (6.0, 6.8)),
            motion_blur=((1.4, 1.2), (1.9, 1.7), (2.6, 2.5), (3.5, 3.5), (4.5, 4.8)),
            frost=((1.7, 1.6), (2.4, 2.6), (3.2, 4.0), (4.2, 5.5), (5.5, 7.5)),
        ),
        seed=seed,
    )


def make_synthetic_corpus(
    n_frames: int = 500,
    seed: int = 20260601,
    frame_size: tuple[float, float] = (512.0, 128.0),
) -> tuple[GroundTruthFrame, ...]:
    """Generate the synthetic ground-truth corpus.

    1 to 8 objects per frame, class mix 60/25/15 car/pedestrian/
    cyclist, class-conditional sizes, boxes fully inside the frame.
    Fully determined by the seed.
    """
    rng = np.random.Generator(
        np.random.Philox(key=np.array([seed & _MASK64, _CORPUS_SALT], dtype=np.uint64))
    )
    frame_w, frame_h = frame_size
    frames = []
    for i in range(n_frames):
        n_obj = int(rng.integers(1, 9))
        objects = []
        for _ in range(n_obj):
            u_cls = float(rng.random())
            if u_cls < _CLASS_MIX[0]:
                class_id = 0
            elif u_cls < _CLASS_MIX[0] + _CLASS_MIX[1]:
                class_id = 1
            else:
                class_id = 2
            w_lo, w_hi, h_lo, h_hi = _CLASS_SIZE[class_id]
            w = w_lo + (w_hi - w_lo) * float(rng.random())
            h = h_lo + (h_hi - h_lo) * float(rng.random())
            h = min(h, frame_h - 2.0)
            cx = w / 2.0 + (frame_w - w) * float(rng.random())
            cy = h / 2.0 + (frame_h - h) * float(rng.random())
            objects.append(
                (class_id, CornerBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0))
            )
        frames.append(GroundTruthFrame(frame_id=f"{i:06d}", objects=tuple(objects)))
    return tuple(frames)


def corpus_to_jsonl(frames: Sequence[GroundTruthFrame]) -> str:
    """Serialize ground-truth frames as JSON lines (lossless floats)."""
    lines = []
    for frame in frames:
        lines.append(json.dumps({
            "frame_id": frame.frame_id,
            "objects": [
                [c, b.x_min, b.y_min, b.x_max, b.y_max] for c, b in frame.objects
            ],
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def corpus_from_jsonl(text: str) -> tuple[GroundTruthFrame, ...]:
    frames = []
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        frames.append(GroundTruthFrame(
            frame_id=d["frame_id"],
            objects=tuple(
                (int(o[0]), CornerBox(o[1], o[2], o[3], o[4])) for o in d["objects"]
            ),
        ))
    return tuple(frames)


def load_golden_corpus() -> tuple[GroundTruthFrame, ...]:
    """Load the checked-in 500-frame synthetic corpus."""
    from importlib.resources import files

    text = files("fuselage").joinpath("data/golden_corpus.jsonl").read_text("utf-8")
    return corpus_from_jsonl(text)
