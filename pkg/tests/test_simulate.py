"""Tests for the statistical detector simulator and its corpora."""

import math
from importlib.resources import files

import numpy as np
import pytest

from fuselage import (
    CornerBox,
    CorruptionKind,
    CorruptionSpec,
    GroundTruthFrame,
    Modality,
    NoiseResponse,
    SimDetectorSpec,
    corpus_from_jsonl,
    corpus_to_jsonl,
    default_depth_spec,
    default_rgb_spec,
    load_golden_corpus,
    make_synthetic_corpus,
    simulate_detections,
)

FLAT = tuple((1.0, 1.0) for _ in range(5))
CLEAN = CorruptionSpec(CorruptionKind.GAUSSIAN_NOISE, 0)


def exact_spec(**overrides):
    """Noise-free baseline: no jitter, no misses, no false positives."""
    kwargs = dict(
        modality=Modality.RGB,
        loc_sigma_base=0.0,
        miss_rate_base=0.0,
        false_positive_rate=0.0,
        seed=7,
    )
    kwargs.update(overrides)
    return SimDetectorSpec(**kwargs)


def small_corpus(n=40):
    return make_synthetic_corpus(n_frames=n, seed=99)


class TestNoiseResponse:
    def test_level_zero_is_identity(self):
        resp = default_rgb_spec().noise_response
        for kind in CorruptionKind:
            assert resp.multipliers(kind, 0) == (1.0, 1.0)

    def test_levels_index_the_ladder(self):
        ladder = tuple((1.0 + k, 2.0 + k) for k in range(5))
        resp = NoiseResponse(gaussian_noise=ladder, motion_blur=FLAT, frost=FLAT)
        for level in range(1, 6):
            assert resp.multipliers(CorruptionKind.GAUSSIAN_NOISE, level) == ladder[level - 1]
            assert resp.multipliers(CorruptionKind.MOTION_BLUR, level) == (1.0, 1.0)

    @pytest.mark.parametrize(
        "ladder",
        [FLAT[:4], FLAT + ((1.0, 1.0),), (((0.5, 1.0),) + FLAT[1:]), (((1.0, 0.99),) + FLAT[1:])],
    )
    def test_rejects_invalid_ladders(self, ladder):
        with pytest.raises(ValueError):
            NoiseResponse(gaussian_noise=ladder, motion_blur=FLAT, frost=FLAT)


class TestSimDetectorSpec:
    def test_json_round_trip(self):
        for spec in (default_rgb_spec(seed=5), default_depth_spec(seed=11)):
            assert SimDetectorSpec.from_json(spec.to_json()) == spec

    def test_default_profiles(self):
        rgb = default_rgb_spec()
        depth = default_depth_spec()
        assert rgb.modality is Modality.RGB
        assert depth.modality is Modality.DEPTH
        # the depth stack is cleaner and more robust in every base rate
        assert depth.loc_sigma_base < rgb.loc_sigma_base
        assert depth.miss_rate_base < rgb.miss_rate_base
        assert depth.false_positive_rate < rgb.false_positive_rate
        assert depth.variance_fidelity > rgb.variance_fidelity

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(loc_sigma_base=-1.0),
            dict(miss_rate_base=1.5),
            dict(miss_rate_base=-0.1),
            dict(false_positive_rate=-1.0),
            dict(variance_fidelity=1.5),
            dict(score_max=0.0),
            dict(score_max=1.5),
            dict(score_scale=0.0),
            dict(variance_prior=0.0),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            exact_spec(**kwargs)


class TestSimulateDetections:
    def test_noiseless_detector_reproduces_ground_truth(self):
        spec = exact_spec()
        for gt in small_corpus(10):
            dets = simulate_detections(gt, spec, CLEAN)
            assert len(dets) == len(gt.objects)
            for i, (class_id, box) in enumerate(gt.objects):
                assert dets.class_ids[i] == class_id
                np.testing.assert_array_equal(dets.means[i], box.center)
                assert dets.scores[i] == 1.0

    def test_variance_floor_when_sigma_is_zero(self):
        spec = exact_spec(variance_fidelity=1.0)
        gt = small_corpus(1)[0]
        dets = simulate_detections(gt, spec, CLEAN)
        np.testing.assert_array_equal(dets.variances, 1e-6)

    def test_reported_variance_blends_truth_and_prior(self):
        """reported = fidelity * sigma_eff^2 + (1 - fidelity) * prior."""
        gt = small_corpus(1)[0]
        for fidelity, expected in ((1.0, 4.0), (0.0, 9.0), (0.25, 0.25 * 4.0 + 0.75 * 9.0)):
            spec = exact_spec(
                loc_sigma_base=2.0, variance_fidelity=fidelity, variance_prior=9.0
            )
            dets = simulate_detections(gt, spec, CLEAN)
            np.testing.assert_allclose(dets.variances, expected, rtol=1e-12)

    def test_modality_sets_rgb_mask(self):
        gt = small_corpus(1)[0]
        rgb = simulate_detections(gt, exact_spec(), CLEAN)
        depth = simulate_detections(gt, exact_spec(modality=Modality.DEPTH), CLEAN)
        assert bool(rgb.rgb_mask.all())
        assert not bool(depth.rgb_mask.any())

    def test_deterministic_per_frame(self):
        spec = default_rgb_spec(seed=3)
        gt = small_corpus(1)[0]
        cor = CorruptionSpec(CorruptionKind.FROST, 3, seed=1)
        assert simulate_detections(gt, spec, cor).same_as(simulate_detections(gt, spec, cor))

    def test_frames_draw_independent_streams(self):
        spec = default_rgb_spec(seed=3)
        a, b = small_corpus(2)
        da = simulate_detections(a, spec, CLEAN)
        db = simulate_detections(b, spec, CLEAN)
        assert not (len(da) == len(db) and da.same_as(db))

    def test_severity_rescales_the_same_jitter(self):
        """One unit draw per object: levels multiply it, never redraw.

        The x/y residual ratio between two levels equals the ratio of
        their sigma multipliers at every object.
        """
        resp = NoiseResponse(
            gaussian_noise=((2.0, 1.0), (3.0, 1.0), (4.0, 1.0), (5.0, 1.0), (6.0, 1.0)),
            motion_blur=FLAT,
            frost=FLAT,
        )
        spec = exact_spec(loc_sigma_base=2.0, noise_response=resp)
        for gt in small_corpus(8):
            centers = np.array([box.center for _, box in gt.objects])
            d1 = simulate_detections(gt, spec, CorruptionSpec(CorruptionKind.GAUSSIAN_NOISE, 1))
            d3 = simulate_detections(gt, spec, CorruptionSpec(CorruptionKind.GAUSSIAN_NOISE, 3))
            r1 = d1.means[:, :2] - centers[:, :2]
            r3 = d3.means[:, :2] - centers[:, :2]
            np.testing.assert_allclose(r3, 2.0 * r1, rtol=1e-12)

    def test_miss_sets_nest_across_levels(self):
        """Raising severity only adds misses: survivors at level k+1
        are a subset of survivors at level k. With zero jitter each
        survivor is identified by its exact center.
        """
        resp = NoiseResponse(
            gaussian_noise=((1.2, 1.2), (1.2, 1.6), (1.2, 2.0), (1.2, 2.5), (1.2, 3.0)),
            motion_blur=FLAT,
            frost=FLAT,
        )
        spec = exact_spec(miss_rate_base=0.3, noise_response=resp)
        for gt in small_corpus(30):
            survivors = []
            for level in range(6):
                dets = simulate_detections(
                    gt, spec, CorruptionSpec(CorruptionKind.GAUSSIAN_NOISE, level)
                )
                survivors.append({tuple(m) for m in dets.means})
            for bigger, smaller in zip(survivors, survivors[1:]):
                assert smaller <= bigger

    def test_rmse_matches_configured_sigma(self):
        spec = exact_spec(loc_sigma_base=2.0)
        sq_sum = 0.0
        n = 0
        for gt in load_golden_corpus():
            centers = np.array([box.center for _, box in gt.objects])
            dets = simulate_detections(gt, spec, CLEAN)
            res = dets.means[:, :2] - centers[:, :2]
            sq_sum += float((res * res).sum())
            n += res.size
        rmse = math.sqrt(sq_sum / n)
        assert abs(rmse - 2.0) < 2.0 * 0.03

    def test_score_decays_with_jitter_magnitude(self):
        """score = exp(-|delta|^2 / (2 scale^2)) against the realized
        residual, recomputed from the emitted means.
        """
        spec = exact_spec(loc_sigma_base=3.0, score_scale=5.0)
        gt = small_corpus(1)[0]
        dets = simulate_detections(gt, spec, CLEAN)
        centers = np.array([box.center for _, box in gt.objects])
        for i in range(len(dets)):
            delta = dets.means[i] - centers[i]
            # w/h clamping would break the identity; these boxes are large
            assert dets.means[i, 2] > 1.0 and dets.means[i, 3] > 1.0
            expected = math.exp(-float(delta @ delta) / (2.0 * 25.0))
            np.testing.assert_allclose(dets.scores[i], expected, rtol=1e-12)

    def test_extents_clamp_at_one_pixel(self):
        tiny = GroundTruthFrame(
            "tiny",
            tuple(
                (0, CornerBox(10.0 * k, 5.0, 10.0 * k + 1.5, 6.5)) for k in range(60)
            ),
        )
        spec = exact_spec(loc_sigma_base=40.0, seed=2)
        dets = simulate_detections(tiny, spec, CLEAN)
        assert float(dets.means[:, 2:].min()) >= 1.0
        assert bool((dets.means[:, 2:] == 1.0).any())

    def test_false_positive_stream(self):
        spec = exact_spec(miss_rate_base=1.0, false_positive_rate=3.0, variance_prior=4.0)
        counts = []
        for gt in small_corpus(40):
            dets = simulate_detections(gt, spec, CLEAN)
            counts.append(len(dets))
            if len(dets) == 0:
                continue
            assert float(dets.scores.min()) >= 0.05
            assert float(dets.scores.max()) <= 0.55
            assert float(dets.variances.min()) >= 4.0
            assert float(dets.variances.max()) <= 8.0
            assert float(dets.means[:, 0].min()) >= 0.0
            assert float(dets.means[:, 0].max()) <= 512.0
            assert float(dets.means[:, 1].max()) <= 128.0
        assert abs(np.mean(counts) - 3.0) < 0.9

    def test_empty_ground_truth_yields_only_false_positives(self):
        gt = GroundTruthFrame("empty", ())
        assert len(simulate_detections(gt, exact_spec(), CLEAN)) == 0
        with_fp = exact_spec(false_positive_rate=20.0)
        assert len(simulate_detections(gt, with_fp, CLEAN)) > 0


class TestCorpus:
    def test_generator_is_deterministic(self):
        assert make_synthetic_corpus(n_frames=30, seed=4) == make_synthetic_corpus(
            n_frames=30, seed=4
        )
        assert make_synthetic_corpus(n_frames=30, seed=4) != make_synthetic_corpus(
            n_frames=30, seed=5
        )

    def test_frame_invariants(self):
        frames = make_synthetic_corpus(n_frames=60, seed=1, frame_size=(300.0, 100.0))
        assert len(frames) == 60
        assert [f.frame_id for f in frames] == [f"{i:06d}" for i in range(60)]
        for frame in frames:
            assert 1 <= len(frame.objects) <= 8
            for _, box in frame.objects:
                assert box.x_min >= 0.0 and box.x_max <= 300.0
                assert box.y_min >= 0.0 and box.y_max <= 100.0

    def test_jsonl_round_trip(self):
        frames = make_synthetic_corpus(n_frames=25, seed=8)
        assert corpus_from_jsonl(corpus_to_jsonl(frames)) == frames

    def test_golden_corpus_contents(self):
        frames = load_golden_corpus()
        assert len(frames) == 500
        assert frames[0].frame_id == "000000"
        assert sum(len(f.objects) for f in frames) == 2264

    def test_golden_corpus_regenerates_bit_exactly(self):
        """The checked-in file equals a fresh run of the generator at
        its default arguments, byte for byte.
        """
        packaged = files("fuselage").joinpath("data/golden_corpus.jsonl").read_text("utf-8")
        assert corpus_to_jsonl(make_synthetic_corpus()) == packaged
