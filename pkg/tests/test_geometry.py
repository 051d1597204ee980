from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from radar.geometry import (
    SpaceKind,
    cartesian_project,
    descriptor_batch,
    euclid_descriptor,
    geodesic_descriptor,
    trajectory_descriptor,
    triad,
    window_transitions,
)

from conftest import make_pack

finite_vec = lambda dim: arrays(
    np.float64, (dim,), elements=st.floats(-100, 100, allow_nan=False)
)


# -- triad ---------------------------------------------------------------

def test_triad_collinear_example():
    t = triad(np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    np.testing.assert_array_equal(t.v_sep, [1.0, 0.0])
    np.testing.assert_array_equal(t.v_detour, [1.0, 0.0])
    np.testing.assert_array_equal(t.v_traj, [2.0, 0.0])


def test_triad_identical_partner():
    x = np.array([0.3, -0.7, 2.0])
    x1 = np.array([1.0, 0.5, -1.0])
    t = triad(x, x, x1)
    np.testing.assert_array_equal(t.v_sep, np.zeros(3))
    np.testing.assert_array_equal(t.v_detour, t.v_traj)


def test_triad_closure_random_dim8():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b, c = rng.standard_normal((3, 8))
        t = triad(a, b, c)
        # direct summation oracle
        np.testing.assert_allclose(t.v_sep + t.v_detour, t.v_traj, atol=1e-12)


def test_triad_dim_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        triad(np.zeros(2), np.zeros(3), np.zeros(2))


@settings(max_examples=100, deadline=None)
@given(a=finite_vec(5), b=finite_vec(5), c=finite_vec(5))
def test_closure_property(a, b, c):
    t = triad(a, b, c)
    np.testing.assert_allclose(t.v_sep + t.v_detour, t.v_traj, atol=1e-9)


# -- Euclidean descriptor ------------------------------------------------

def test_euclid_collinear_gives_zero():
    t = triad(np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    s = euclid_descriptor(t)
    assert s.theta == 0.0
    assert s.d == 0.0


def test_euclid_perpendicular_frozen():
    # hand arithmetic: theta = pi/2, d = (1 + 1 - sqrt(2)) / sqrt(2) = sqrt(2) - 1
    t = triad(np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    s = euclid_descriptor(t)
    assert s.theta == pytest.approx(math.pi / 2, abs=1e-12)
    assert s.d == pytest.approx(0.41421356237309515, abs=1e-12)


def test_euclid_zero_separation_degenerate():
    x = np.array([0.5, 0.5])
    x1 = np.array([1.5, 0.0])
    s = euclid_descriptor(triad(x, x, x1))
    assert s.theta == pytest.approx(math.pi / 2, abs=1e-12)  # 0/eps -> arccos(0)
    assert s.d == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(a=finite_vec(4), b=finite_vec(4), c=finite_vec(4))
def test_euclid_ranges_property(a, b, c):
    s = euclid_descriptor(triad(a, b, c))
    assert 0.0 <= s.theta <= math.pi
    assert s.d >= -1e-9


@settings(max_examples=100, deadline=None)
@given(
    a=finite_vec(3),
    b=finite_vec(3),
    c=finite_vec(3),
    scale=st.floats(1e-3, 1e3),
)
def test_euclid_scale_invariance(a, b, c, scale):
    t = triad(a, b, c)
    # invariance is a pure-ratio statement; skip the epsilon-guarded regime
    assume(min(np.linalg.norm(t.v_sep), np.linalg.norm(t.v_detour),
               np.linalg.norm(t.v_traj)) * min(scale, 1.0) > 1e-3)
    s1 = euclid_descriptor(t)
    s2 = euclid_descriptor(triad(scale * a, scale * b, scale * c))
    assert s2.theta == pytest.approx(s1.theta, abs=1e-6)
    assert s2.d == pytest.approx(s1.d, abs=1e-6, rel=1e-6)


# -- geodesic descriptor -------------------------------------------------

def test_geodesic_great_circle_collinear():
    # points on the unit circle at angles 0, pi/2, pi
    p0 = np.array([1.0, 0.0])
    p1 = np.array([0.0, 1.0])
    p2 = np.array([-1.0, 0.0])
    s = geodesic_descriptor(p0, p1, p2)
    assert s.d == pytest.approx(0.0, abs=1e-9)
    assert s.theta == pytest.approx(math.pi, abs=1e-6)


def test_geodesic_all_equal_degenerate():
    p = np.array([0.3, 0.4, 1.2])
    s = geodesic_descriptor(p, p, p)
    assert s.theta == pytest.approx(math.pi / 2, abs=1e-12)
    assert s.d == pytest.approx(0.0, abs=1e-12)


def test_geodesic_zero_vector_rejected():
    with pytest.raises(ValueError, match="zero-norm"):
        geodesic_descriptor(np.zeros(3), np.ones(3), np.ones(3))


def test_geodesic_triangle_inequality_bulk():
    rng = np.random.default_rng(1)
    for _ in range(10_000 // 100):
        pts = rng.standard_normal((100, 3, 16))
        for a, b, c in pts:
            s = geodesic_descriptor(a, b, c)
            assert s.d >= -1e-9


def test_geodesic_rescaling_invariance():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, b, c = rng.uniform(0.1, 1.0, (3, 8))
        sa, sb, sc = rng.uniform(0.1, 10.0, 3)
        s1 = geodesic_descriptor(a, b, c)
        s2 = geodesic_descriptor(sa * a, sb * b, sc * c)
        assert s2.theta == pytest.approx(s1.theta, abs=1e-9)
        assert s2.d == pytest.approx(s1.d, abs=1e-9)


# -- pseudo-Cartesian ----------------------------------------------------

def test_cartesian_zero_distance():
    from radar.geometry import StepDescriptor

    assert cartesian_project(StepDescriptor(theta=2.1, d=0.0)) == (0.0, 0.0)


def test_cartesian_quarter_turn():
    from radar.geometry import StepDescriptor

    x, y = cartesian_project(StepDescriptor(theta=math.pi / 2, d=1.0))
    assert x == pytest.approx(0.0, abs=1e-12)
    assert y == pytest.approx(1.0, abs=1e-12)


def test_cartesian_frozen_trig():
    from radar.geometry import StepDescriptor

    x, y = cartesian_project(StepDescriptor(theta=math.pi / 3, d=0.5))
    assert x == pytest.approx(0.25, abs=1e-12)
    assert y == pytest.approx(0.4330127018922193, abs=1e-12)


# -- trajectory descriptors ----------------------------------------------

def test_window_13_layers_center6():
    pack = make_pack(num_layers=13, dims=[4] * 13, domains=(("a", 8),), num_classes=2)
    td = trajectory_descriptor(pack.features, (0, 1), 6, 6)
    assert td.values.shape == (24,)  # 12 transitions x (theta, d)


def test_window_clamped_at_edges():
    pack = make_pack(num_layers=4, dims=[4] * 4, domains=(("a", 8),), num_classes=2)
    td = trajectory_descriptor(pack.features, (0, 1), 0, 6)
    assert td.values.shape == (6,)  # 3 transitions


def test_empty_window_rejected():
    with pytest.raises(ValueError, match="empty window"):
        window_transitions(0, 0, 5)


def test_descriptor_layout_interleaved(small_pack):
    anchors = np.array([0, 1, 2])
    partners = np.array([3, 4, 5])
    batch = descriptor_batch(small_pack.features, anchors, partners, 1, 1)
    assert batch.shape == (3, 4)  # 2 transitions x (theta, d)
    # column pairs match per-transition scalar computation
    for i in range(3):
        for j, t in enumerate(window_transitions(1, 1, 3)):
            tri = triad(
                small_pack.features[t][anchors[i]],
                small_pack.features[t][partners[i]],
                small_pack.features[t + 1][anchors[i]],
            )
            step = euclid_descriptor(tri)
            assert batch[i, 2 * j] == pytest.approx(step.theta, abs=1e-12)
            assert batch[i, 2 * j + 1] == pytest.approx(step.d, abs=1e-12)


def test_descriptor_feature_flags(small_pack):
    anchors = np.array([0, 1])
    partners = np.array([5, 6])
    full = descriptor_batch(small_pack.features, anchors, partners, 1, 1)
    only_d = descriptor_batch(
        small_pack.features, anchors, partners, 1, 1, use_angle=False
    )
    only_t = descriptor_batch(
        small_pack.features, anchors, partners, 1, 1, use_distance=False
    )
    np.testing.assert_array_equal(only_d, full[:, 1::2])
    np.testing.assert_array_equal(only_t, full[:, 0::2])
    with pytest.raises(ValueError, match="at least one"):
        descriptor_batch(
            small_pack.features, anchors, partners, 1, 1,
            use_angle=False, use_distance=False,
        )


def test_cartesian_requires_both_features(small_pack):
    with pytest.raises(ValueError, match="pseudo-Cartesian"):
        descriptor_batch(
            small_pack.features,
            np.array([0]),
            np.array([1]),
            1,
            1,
            SpaceKind.PSEUDO_CARTESIAN,
            use_angle=False,
        )


def test_cartesian_batch_matches_scalar(small_pack):
    anchors = np.array([0, 2])
    partners = np.array([7, 9])
    batch = descriptor_batch(
        small_pack.features, anchors, partners, 1, 1, SpaceKind.PSEUDO_CARTESIAN
    )
    for i in range(2):
        for j, t in enumerate(window_transitions(1, 1, 3)):
            s = geodesic_descriptor(
                small_pack.features[t][anchors[i]].astype(np.float64),
                small_pack.features[t][partners[i]].astype(np.float64),
                small_pack.features[t + 1][anchors[i]].astype(np.float64),
            )
            x, y = cartesian_project(s)
            assert batch[i, 2 * j] == pytest.approx(x, abs=1e-12)
            assert batch[i, 2 * j + 1] == pytest.approx(y, abs=1e-12)


def test_descriptor_determinism(small_pack):
    anchors = np.array([0, 1, 2, 3])
    partners = np.array([9, 8, 7, 6])
    a = descriptor_batch(small_pack.features, anchors, partners, 1, 2)
    b = descriptor_batch(small_pack.features, anchors, partners, 1, 2)
    assert a.tobytes() == b.tobytes()
