"""Gaussian losses, their gradients, and calibration diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar
from scipy.special import ndtr
from scipy.stats import norm

from fuselage import (
    CornerBox,
    LossBatch,
    LossSample,
    Modality,
    attenuated_loss,
    attenuated_loss_grad,
    correlation_from_triples,
    correlation_stats,
    detection_triples,
    ece_curve,
    nll_loss,
)
from fuselage.errors import InsufficientDataError
from fuselage.uncertainty import DEFAULT_ECE_LEVELS

from conftest import make_box


def _sample(target, mu, var, **kwargs):
    return LossSample(target=target, pred_mu=mu, pred_var=var, **kwargs)


def _random_sample(rng, var_lo=0.05, var_hi=9.0):
    return _sample(
        tuple(rng.normal(0, 10, 4)),
        tuple(rng.normal(0, 10, 4)),
        tuple(rng.uniform(var_lo, var_hi, 4)),
    )


class TestLossSample:
    def test_weight_formula(self):
        s = _sample((0,) * 4, (0,) * 4, (1,) * 4, gt_w_norm=0.5, gt_h_norm=0.4)
        assert s.weight == (2.0 - 0.2) / 2.0

    def test_unmatched_sample_weight_zero(self):
        s = _sample((0,) * 4, (0,) * 4, (1,) * 4, anchor_match=False)
        assert s.weight == 0.0

    def test_small_objects_weigh_more(self):
        small = _sample((0,) * 4, (0,) * 4, (1,) * 4, gt_w_norm=0.05, gt_h_norm=0.05)
        large = _sample((0,) * 4, (0,) * 4, (1,) * 4, gt_w_norm=1.0, gt_h_norm=1.0)
        assert small.weight > large.weight
        assert large.weight == 0.5

    @pytest.mark.parametrize("kwargs", [
        {"pred_var": (1.0, 1.0, 0.0, 1.0)},
        {"pred_var": (1.0, -1.0, 1.0, 1.0)},
        {"gt_w_norm": 0.0},
        {"gt_h_norm": 1.5},
        {"target": (0.0, 0.0, 0.0)},
    ])
    def test_validation(self, kwargs):
        base = dict(target=(0.0,) * 4, pred_mu=(0.0,) * 4, pred_var=(1.0,) * 4)
        base.update(kwargs)
        with pytest.raises(ValueError):
            LossSample(**base)


class TestAttenuatedLoss:
    def test_hand_value(self):
        """Unit residual at unit variance: 1/2 + log(1)/2 = 0.5 per
        coordinate."""
        s = _sample((1.0, 1.0, 1.0, 1.0), (0.0,) * 4, (1.0,) * 4)
        assert attenuated_loss(s) == 2.0

    def test_variance_trades_against_residual(self):
        big_residual = _sample((10.0, 0, 0, 0), (0.0,) * 4, (1.0,) * 4)
        attenuated = _sample((10.0, 0, 0, 0), (0.0,) * 4, (100.0, 1.0, 1.0, 1.0))
        assert attenuated_loss(attenuated) < attenuated_loss(big_residual)

    def test_gradient_matches_finite_differences(self, rng):
        h = 1e-6
        for _ in range(50):
            s = _random_sample(rng)
            d_mu, d_var = attenuated_loss_grad(s)
            for k in range(4):
                mu_hi = list(s.pred_mu)
                mu_lo = list(s.pred_mu)
                mu_hi[k] += h
                mu_lo[k] -= h
                fd = (
                    attenuated_loss(_sample(s.target, tuple(mu_hi), s.pred_var))
                    - attenuated_loss(_sample(s.target, tuple(mu_lo), s.pred_var))
                ) / (2 * h)
                np.testing.assert_allclose(d_mu[k], fd, rtol=1e-4, atol=1e-6)
                var_hi = list(s.pred_var)
                var_lo = list(s.pred_var)
                var_hi[k] += h
                var_lo[k] -= h
                fd = (
                    attenuated_loss(_sample(s.target, s.pred_mu, tuple(var_hi)))
                    - attenuated_loss(_sample(s.target, s.pred_mu, tuple(var_lo)))
                ) / (2 * h)
                np.testing.assert_allclose(d_var[k], fd, rtol=1e-4, atol=1e-6)

    def test_optimal_variance_equals_squared_residual(self):
        """For fixed residual r the loss is minimized at variance r^2:
        the gradient has its root there and a 1-D search lands on it."""
        for r in (0.3, 1.0, 2.5, 7.0):
            s = _sample((r, 0, 0, 0), (0.0,) * 4, (r * r, 1.0, 1.0, 1.0))
            d_mu, d_var = attenuated_loss_grad(s)
            assert abs(d_var[0]) < 1e-12

            def loss_of_var(v, r=r):
                return attenuated_loss(_sample((r, 0, 0, 0), (0.0,) * 4, (v, 1, 1, 1)))

            res = minimize_scalar(loss_of_var, bounds=(1e-6, 200.0), method="bounded",
                                  options={"xatol": 1e-10})
            np.testing.assert_allclose(res.x, r * r, rtol=1e-6)

    @given(st.floats(min_value=-50, max_value=50, allow_nan=False),
           st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=100)
    def test_minimum_property(self, r, factor):
        """Any variance other than r^2 scores at least as badly."""
        if abs(r) < 1e-3:
            return
        at_opt = attenuated_loss(_sample((r, 0, 0, 0), (0.0,) * 4, (r * r, 1, 1, 1)))
        elsewhere = attenuated_loss(
            _sample((r, 0, 0, 0), (0.0,) * 4, (r * r * factor, 1, 1, 1))
        )
        assert at_opt <= elsewhere + 1e-9


class TestNllLoss:
    def test_matches_scipy_logpdf(self, rng):
        """With a negligible epsilon the per-coordinate terms are exactly
        the Gaussian negative log density."""
        samples = [_random_sample(rng) for _ in range(20)]
        batch = LossBatch(samples=tuple(samples), epsilon=1e-300)
        expected = sum(
            s.weight * sum(
                -norm.logpdf(t, loc=mu, scale=math.sqrt(v))
                for t, mu, v in zip(s.target, s.pred_mu, s.pred_var)
            )
            for s in samples
        )
        np.testing.assert_allclose(nll_loss(batch), expected, rtol=1e-9)

    def test_identity_with_attenuated_loss(self, rng):
        """NLL = weight * (attenuated + 4 * log(2 pi)/2) when epsilon is
        negligible, since the losses differ per coordinate only by the
        constant half-log-2-pi."""
        s = _random_sample(rng)
        batch = LossBatch(samples=(s,), epsilon=1e-300)
        expected = s.weight * (attenuated_loss(s) + 2.0 * math.log(2.0 * math.pi))
        np.testing.assert_allclose(nll_loss(batch), expected, rtol=1e-9)

    def test_hand_value(self):
        """Single matched coordinate set: target = mu so each coordinate
        costs half the log of 2 pi var; frozen for var = 1, weight 1/2."""
        s = _sample((0.0,) * 4, (0.0,) * 4, (1.0,) * 4)
        batch = LossBatch(samples=(s,), epsilon=1e-300)
        np.testing.assert_allclose(nll_loss(batch), 2.0 * math.log(2.0 * math.pi) / 2.0,
                                   rtol=1e-12)

    def test_unmatched_samples_contribute_nothing(self):
        s = _sample((5.0,) * 4, (0.0,) * 4, (1.0,) * 4, anchor_match=False)
        assert nll_loss(LossBatch(samples=(s,))) == 0.0

    def test_epsilon_guards_vanishing_density(self):
        """A 100-sigma residual has density ~ 0; the guard caps the term
        near -log(epsilon) instead of overflowing."""
        s = _sample((100.0, 0, 0, 0), (0.0,) * 4, (1.0,) * 4)
        loss = nll_loss(LossBatch(samples=(s,), epsilon=1e-9))
        per_coord_cap = -math.log(1e-9)
        assert loss <= 1.0 * (per_coord_cap + 3 * 1.0)
        assert math.isfinite(loss)

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            LossBatch(samples=(), epsilon=0.0)


class TestEceCurve:
    def test_default_levels(self):
        assert DEFAULT_ECE_LEVELS[0] == 0.05
        assert DEFAULT_ECE_LEVELS[-1] == 0.95
        assert len(DEFAULT_ECE_LEVELS) == 19

    def test_self_consistent_predictions_are_calibrated(self, rng):
        n = 20000
        sigma = rng.uniform(0.5, 3.0, n)
        mu = rng.normal(0, 5, n)
        target = rng.normal(mu, sigma)
        curve = ece_curve([(sigma**2, mu, target)])
        assert curve.ece < 0.02
        for expected, observed, _ in curve.bins:
            assert abs(expected - observed) < 0.02

    def test_analytic_miscalibration(self, rng):
        """Claimed sigma 1 against true sigma 2: observed coverage at level
        p is P(|N(0,4)| <= z_p) = 2 Phi(z_p / 2) - 1."""
        n = 200000
        mu = np.zeros(n)
        target = rng.normal(0.0, 2.0, n)
        curve = ece_curve([(np.ones(n), mu, target)], levels=(0.5, 0.9))
        for (p, observed, _) in curve.bins:
            z = norm.ppf((1 + p) / 2)
            analytic = 2.0 * ndtr(z / 2.0) - 1.0
            np.testing.assert_allclose(observed, analytic, atol=0.01)

    def test_degenerate_overconfidence_observes_zero(self):
        """Tiny claimed variance with a fixed offset: no target ever falls
        inside any interval, so every level observes frequency 0 and the
        ece equals the mean of the levels."""
        n = 1000
        curve = ece_curve([(np.full(n, 1e-18), np.zeros(n), np.ones(n))])
        for (p, observed, count) in curve.bins:
            assert observed == 0.0
            assert count == 0
        np.testing.assert_allclose(curve.ece, np.mean(DEFAULT_ECE_LEVELS), rtol=1e-12)

    def test_counts_are_monotone_in_level(self, rng):
        n = 5000
        target = rng.normal(0, 1, n)
        curve = ece_curve([(np.ones(n), np.zeros(n), target)])
        counts = [c for _, _, c in curve.bins]
        assert counts == sorted(counts)

    def test_validation(self):
        with pytest.raises(InsufficientDataError):
            ece_curve([])
        with pytest.raises(ValueError):
            ece_curve([(np.zeros(3), np.zeros(3), np.zeros(3))])   # zero variance
        with pytest.raises(ValueError):
            ece_curve([(np.ones(3), np.zeros(3), np.zeros(3))], levels=(0.9, 0.5))
        with pytest.raises(ValueError):
            ece_curve([(np.ones(3), np.zeros(3), np.zeros(3))], levels=(0.0, 0.5))


class TestCorrelations:
    def _shifted_detections(self):
        """Detections sliding off a ground-truth box, with variance set
        to 1 - IoU and score set to the IoU itself."""
        gt = CornerBox(0.0, 0.0, 20.0, 20.0)
        dets = []
        for shift in (0.0, 2.0, 4.0, 6.0, 8.0, 10.0):
            b = make_box(mu_x=10.0 + shift, mu_y=10.0, mu_w=20.0, mu_h=20.0, var=1.0)
            v = detection_triples([b], [gt])[0, 0]
            dets.append(make_box(
                mu_x=10.0 + shift, mu_y=10.0, mu_w=20.0, mu_h=20.0,
                var=max(1.0 - v, 1e-6), score=max(v, 1e-6),
            ))
        return dets, [gt]

    def test_engineered_correlations(self):
        dets, gts = self._shifted_detections()
        stats = correlation_stats(dets, gts)
        np.testing.assert_allclose(stats.iou_vs_variance, -1.0, atol=1e-9)
        np.testing.assert_allclose(stats.iou_vs_score, 1.0, atol=1e-9)
        np.testing.assert_allclose(stats.variance_vs_score, -1.0, atol=1e-9)
        assert stats.degenerate == ()

    def test_triples_report_best_iou(self):
        gt_a = CornerBox(0.0, 0.0, 10.0, 10.0)
        gt_b = CornerBox(100.0, 100.0, 110.0, 110.0)
        det = make_box(mu_x=5.0, mu_y=5.0, mu_w=10.0, mu_h=10.0, var=2.0, score=0.7)
        triples = detection_triples([det], [gt_a, gt_b])
        np.testing.assert_array_equal(triples, [[1.0, 2.0, 0.7]])

    def test_no_overlap_reports_zero_iou(self):
        det = make_box(mu_x=500.0, mu_y=500.0)
        triples = detection_triples([det], [CornerBox(0.0, 0.0, 10.0, 10.0)])
        assert triples[0, 0] == 0.0

    def test_constant_column_flagged_degenerate(self):
        triples = np.array([
            [0.1, 1.0, 0.3],
            [0.5, 1.0, 0.6],
            [0.9, 1.0, 0.8],
        ])
        stats = correlation_from_triples(triples)
        assert math.isnan(stats.iou_vs_variance)
        assert set(stats.degenerate) == {"iou_vs_variance", "variance_vs_score"}
        assert not math.isnan(stats.iou_vs_score)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            correlation_stats([make_box(), make_box()], [CornerBox(0, 0, 1, 1)])
        with pytest.raises(InsufficientDataError):
            correlation_stats([make_box()] * 3, [])
        with pytest.raises(InsufficientDataError):
            correlation_from_triples(np.empty((2, 3)))

    def test_modality_does_not_matter(self):
        dets = [
            make_box(mu_x=float(x), var=float(v), score=s, modality=m)
            for x, v, s, m in [
                (9.0, 1.0, 0.9, Modality.RGB),
                (11.0, 2.0, 0.7, Modality.DEPTH),
                (13.0, 3.0, 0.5, Modality.RGB),
            ]
        ]
        gts = [CornerBox(8.0, 8.0, 12.0, 12.0)]
        stats = correlation_stats(dets, gts)
        assert stats.triples.shape == (3, 3)
