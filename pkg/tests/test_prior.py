import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adwsod import diff
from adwsod.prior import (
    FRAME_CENTER,
    SIGMA_MIN,
    Keypoints,
    PriorParams,
    anchor_location,
    frame_weight_nodes,
    grid_cell,
    proposal_weights,
    raw_density,
)


def _prior(n_actions=1, n_kp=2, variant="normal", **kw):
    return PriorParams.init(n_actions, n_kp, variant=variant, **kw)


def test_anchor_weighted_sum():
    p = _prior()
    p.key_logits[0] = np.log([0.75, 0.25])
    kps = Keypoints([[0.2, 0.4], [0.6, 0.8]], [True, True])
    assert anchor_location(p, 0, kps) == pytest.approx((0.3, 0.5))


def test_anchor_uniform_symmetry():
    kps = Keypoints([[0.0, 0.0], [1.0, 1.0]], [True, True])
    assert anchor_location(_prior(), 0, kps) == pytest.approx((0.5, 0.5))


def test_anchor_center_variant_ignores_keypoints():
    kps = Keypoints([[0.1, 0.1], [0.2, 0.9]], [True, True])
    assert anchor_location(_prior(variant="center"), 0, kps) == (0.5, 0.5)


def test_anchor_fallbacks():
    p = _prior()
    assert anchor_location(p, 0, None) == FRAME_CENTER
    assert anchor_location(p, 0, Keypoints([[0.1, 0.1], [0.2, 0.2]], [False, False])) == FRAME_CENTER


def test_anchor_renormalizes_over_visible():
    p = _prior(n_kp=3)
    p.key_logits[0] = [0.0, 5.0, 0.0]
    kps = Keypoints([[0.1, 0.1], [0.9, 0.9], [0.3, 0.5]], [True, False, True])
    assert anchor_location(p, 0, kps) == pytest.approx((0.2, 0.3))


def test_anchor_wrong_keypoint_count():
    with pytest.raises(ValueError):
        anchor_location(_prior(n_kp=3), 0, Keypoints([[0.1, 0.1]], [True]))


def test_single_proposal_weight_one():
    p = _prior()
    p.mu[0] = [5.0, 5.0]  # density underflows to 0 in the linear domain
    assert proposal_weights(p, 0, (0.5, 0.5), [(0.1, 0.9)]) == pytest.approx([1.0])


def test_raw_density_at_mean():
    p = _prior()
    p.mu[0] = [0.1, -0.2]
    p.log_sigma[0] = np.log([0.1, 0.2])
    expected = 1.0 / (2.0 * math.pi * 0.1 * 0.2)
    assert expected == pytest.approx(7.9577, abs=1e-4)
    assert raw_density(p, 0, [0.1, -0.2]) == pytest.approx(expected, rel=1e-12)
    p.normalize = False
    w = proposal_weights(p, 0, (0.0, 0.0), [(0.1, -0.2)])
    assert w[0] == pytest.approx(expected, rel=1e-12)


def test_equidistant_proposals_split_evenly():
    p = _prior()
    p.mu[0] = [0.1, 0.0]
    w = proposal_weights(p, 0, (0.5, 0.5), [(0.5, 0.5), (0.7, 0.5)])
    assert w == pytest.approx([0.5, 0.5], abs=1e-12)


def test_grid_cell_examples():
    assert grid_cell((0.0, 0.0)) == (1, 1)
    assert grid_cell((0.4, -0.4)) == (0, 2)
    assert grid_cell((0.9, 0.0)) is None
    assert grid_cell((0.5, 0.5)) == (2, 2)
    assert grid_cell((-0.5, -0.5)) == (0, 0)


def test_grid_weights_and_uniform_fallback():
    p = _prior(variant="grid")
    p.grid_logits[0] = 0.0
    p.grid_logits[0, 1, 1] = math.log(2.0)
    # cell probs: centre 0.2, others 0.1
    w = proposal_weights(p, 0, (0.5, 0.5), [(0.5, 0.5), (0.8, 0.5), (0.5, 0.5)])
    assert w == pytest.approx(np.array([0.2, 0.1, 0.2]) / 0.5, abs=1e-9)
    far = proposal_weights(p, 0, (0.0, 0.0), [(0.9, 0.9), (0.8, 0.8)])
    assert far == pytest.approx([0.5, 0.5])


centers_st = st.lists(
    st.tuples(st.floats(0, 1), st.floats(0, 1)),
    min_size=1,
    max_size=8,
)


@settings(max_examples=100)
@given(
    centers_st,
    st.tuples(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3)),
    st.tuples(st.floats(0.01, 0.5), st.floats(0.01, 0.5)),
    st.sampled_from(["normal", "grid", "center"]),
)
def test_weights_are_probability_vector(centers, mu, sigma, variant):
    p = _prior(variant=variant)
    p.mu[0] = mu
    p.log_sigma[0] = np.log(sigma)
    p.grid_logits[0] = np.arange(9).reshape(3, 3) / 4.0
    w = proposal_weights(p, 0, (0.5, 0.5), centers)
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=100)
@given(
    centers_st,
    st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
)
def test_translation_equivariance(centers, shift, logits):
    p = _prior(n_kp=3)
    p.key_logits[0] = logits
    p.mu[0] = [0.05, -0.1]
    pts = np.array([[0.2, 0.3], [0.5, 0.1], [0.7, 0.8]])
    c = np.array(centers)
    kw = Keypoints(pts, [True] * 3)
    ks = Keypoints(pts + shift, [True] * 3)
    w0 = proposal_weights(p, 0, anchor_location(p, 0, kw), c)
    w1 = proposal_weights(p, 0, anchor_location(p, 0, ks), c + shift)
    assert w1 == pytest.approx(w0, abs=1e-9)


@settings(max_examples=100)
@given(centers_st, st.tuples(st.floats(0.02, 0.5), st.floats(0.02, 0.5)))
def test_argmax_is_closest_in_mahalanobis(centers, sigma):
    p = _prior()
    p.mu[0] = [0.1, -0.05]
    p.log_sigma[0] = np.log(sigma)
    anchor = np.array([0.4, 0.5])
    c = np.array(centers)
    d = (((c - anchor - p.mu[0]) / np.array(sigma)) ** 2).sum(1)
    w = proposal_weights(p, 0, anchor, c)
    assert d[np.argmax(w)] == pytest.approx(d.min(), rel=1e-9, abs=1e-12)


def _mask_grads(learn_mu, learn_sigma):
    p = _prior(n_actions=2, n_kp=3, learn_mu=learn_mu, learn_sigma=learn_sigma)
    p.mu[:] = [[0.1, 0.0], [-0.1, 0.2]]
    kps = Keypoints([[0.2, 0.3], [0.5, 0.1], [0.7, 0.8]], [True] * 3)
    centers = np.array([[0.3, 0.3], [0.6, 0.2], [0.1, 0.9]])
    target = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])

    def f(tape, nodes):
        w = frame_weight_nodes(tape, nodes, p, kps, centers)
        return diff.sum(w * target)

    return diff.evaluate(f, p.arrays())[1]


def test_learn_mask_zeroes_gradients():
    g = _mask_grads(False, True)
    assert np.all(g["prior.mu"] == 0.0) and np.any(g["prior.log_sigma"] != 0.0)
    g = _mask_grads(True, False)
    assert np.all(g["prior.log_sigma"] == 0.0) and np.any(g["prior.mu"] != 0.0)


def test_sigma_clamp():
    p = _prior()
    p.log_sigma[:] = -50.0
    p.clamp_()
    assert np.all(p.sigma() >= SIGMA_MIN * (1 - 1e-12))


def test_key_weights_are_probabilities():
    p = _prior(n_actions=3, n_kp=13)
    p.key_logits = np.random.default_rng(0).normal(0, 30, (3, 13))
    kw = p.key_weights()
    assert np.allclose(kw.sum(1), 1.0) and np.all(kw > 0)


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        _prior(variant="mixture")
