"""Shared builders for detection fixtures.

The random-frame factory deliberately crowds boxes around a few
cluster centres so pairwise IoUs land on both sides of the fusion
gates; uniformly scattered boxes would almost never overlap and the
interesting branches would go untested.
"""

import numpy as np
import pytest

from fuselage import DetectionSet, GaussianBox, Modality


def make_box(
    mu_x=10.0, mu_y=10.0, mu_w=4.0, mu_h=4.0,
    var=1.0, score=0.9, class_id=0, modality=Modality.RGB,
):
    if np.isscalar(var):
        var = (var, var, var, var)
    return GaussianBox(
        mu_x=mu_x, mu_y=mu_y, mu_w=mu_w, mu_h=mu_h,
        var_x=var[0], var_y=var[1], var_w=var[2], var_h=var[3],
        score=score, class_id=class_id, modality=modality,
    )


def random_detection_set(rng, n, modality, n_classes=3, cluster_spread=60.0):
    """Random but valid detections, crowded enough to overlap."""
    means = np.empty((n, 4))
    means[:, 0] = rng.uniform(0.0, cluster_spread, n)
    means[:, 1] = rng.uniform(0.0, cluster_spread, n)
    means[:, 2] = rng.uniform(5.0, 40.0, n)
    means[:, 3] = rng.uniform(5.0, 40.0, n)
    variances = rng.uniform(0.25, 25.0, (n, 4))
    scores = rng.uniform(0.02, 1.0, n)
    class_ids = rng.integers(0, n_classes, n)
    rgb_mask = np.full(n, modality is Modality.RGB)
    return DetectionSet(means, variances, scores, class_ids, rgb_mask)


def random_frame(rng, max_per_modality=8, n_classes=3):
    rgb = random_detection_set(rng, int(rng.integers(0, max_per_modality + 1)), Modality.RGB, n_classes)
    depth = random_detection_set(rng, int(rng.integers(0, max_per_modality + 1)), Modality.DEPTH, n_classes)
    return rgb, depth


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)
