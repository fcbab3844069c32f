"""Parabolic metric, Vitali selection, and box-counting dimension estimates
against sets of known dimension."""

import numpy as np
import pytest

from cnsflow import (
    ParabolicCylinder,
    contains_backward_half,
    dimension_estimate,
    parabolic_distance,
    shifted_cover,
    verify_vitali,
    vitali_subcover,
)


# ---------------------------------------------------------------------------
# metric
# ---------------------------------------------------------------------------

def test_distance_examples():
    a = ((0.0, 0.0, 0.0), 0.0)
    b = ((0.3, 0.0, 0.0), 0.04)
    # spatial 0.3 vs temporal sqrt(0.04) = 0.2
    assert abs(parabolic_distance(a, b) - 0.3) < 1e-15
    c = ((0.1, 0.0, 0.0), 0.09)
    assert abs(parabolic_distance(a, c) - 0.3) < 1e-15


def test_distance_periodic_wrap():
    a = ((0.05, 0.0, 0.0), 0.0)
    b = ((0.95, 0.0, 0.0), 0.0)
    assert abs(parabolic_distance(a, b, box_length=1.0) - 0.1) < 1e-12
    assert abs(parabolic_distance(a, b) - 0.9) < 1e-12


def test_triangle_inequality_sampled():
    rng = np.random.default_rng(0)
    pts = [((rng.uniform(), rng.uniform(), rng.uniform()),
            rng.uniform(-1.0, 0.0)) for _ in range(60)]
    bad = 0
    for i in range(0, 60, 3):
        a, b, c = pts[i], pts[i + 1], pts[i + 2]
        if (parabolic_distance(a, c, 1.0)
                > parabolic_distance(a, b, 1.0)
                + parabolic_distance(b, c, 1.0) + 1e-12):
            bad += 1
    assert bad == 0


# ---------------------------------------------------------------------------
# Vitali selection
# ---------------------------------------------------------------------------

def test_vitali_single_cylinder():
    q = ParabolicCylinder((0.5, 0.5, 0.5), 0.0, 0.1)
    sel = vitali_subcover([q])
    assert sel == [q]
    rep = verify_vitali([q], sel)
    assert rep["pairwise_disjoint"] and rep["five_r_covers"]


def test_vitali_disjoint_family_kept_whole():
    cyls = [ParabolicCylinder((0.1 + 0.25 * i, 0.1, 0.1), 0.0, 0.05)
            for i in range(3)]
    sel = vitali_subcover(cyls)
    assert len(sel) == 3


def test_vitali_random_family_postconditions():
    rng = np.random.default_rng(42)
    cyls = [
        ParabolicCylinder(tuple(rng.uniform(0.0, 1.0, 3)),
                          rng.uniform(-0.5, 0.0),
                          rng.uniform(0.01, 0.08))
        for _ in range(200)
    ]
    sel = vitali_subcover(cyls, box_length=1.0)
    rep = verify_vitali(cyls, sel, box_length=1.0)
    assert rep["pairwise_disjoint"]
    assert rep["five_r_covers"]
    assert 0 < len(sel) < 200


def test_shifted_cover_contains_backward_half():
    pts = [((0.5, 0.5, 0.5), -0.1), ((0.2, 0.8, 0.4), 0.0)]
    for q in shifted_cover(pts, 0.07):
        assert q.shifted
        assert contains_backward_half(q)


def test_shifted_cover_rejects_bad_radius():
    with pytest.raises(ValueError):
        shifted_cover([((0.0, 0.0, 0.0), 0.0)], -0.1)


# ---------------------------------------------------------------------------
# box-counting dimension
# ---------------------------------------------------------------------------

def test_dimension_singleton_is_zero():
    est = dimension_estimate([((0.5, 0.5, 0.5), 0.0)] * 5,
                             [0.25, 0.125, 0.0625])
    assert est.counts == [1, 1, 1]
    assert abs(est.slope) <= 0.1


def test_dimension_spatial_segment_is_one():
    xs = np.linspace(0.0, 1.0, 1000)
    pts = [((x, 0.0, 0.0), 0.0) for x in xs]
    scales = [2.0**-k for k in range(2, 8)]
    est = dimension_estimate(pts, scales)
    assert abs(est.slope - 1.0) <= 0.15


def test_dimension_temporal_segment_is_two():
    # a time interval has parabolic dimension 2 (r covers r^2 in time)
    ts = np.linspace(-1.0, 0.0, 1000)
    pts = [((0.0, 0.0, 0.0), t) for t in ts]
    scales = [2.0**-k for k in range(1, 6)]
    est = dimension_estimate(pts, scales)
    assert abs(est.slope - 2.0) <= 0.2


def test_dimension_spatial_plane_is_two():
    xs = np.linspace(0.0, 1.0, 96)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = [((x, y, 0.0), 0.0) for x, y in zip(X.ravel(), Y.ravel())]
    scales = [2.0**-k for k in range(2, 6)]
    est = dimension_estimate(pts, scales)
    assert abs(est.slope - 2.0) <= 0.2


def test_dimension_spatial_cube_is_three():
    xs = np.linspace(0.0, 1.0, 28)
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    pts = [((x, y, z), 0.0)
           for x, y, z in zip(X.ravel(), Y.ravel(), Z.ravel())]
    est = dimension_estimate(pts, [0.25, 0.125, 0.0625])
    assert abs(est.slope - 3.0) <= 0.2


def test_counts_monotone_under_subset():
    rng = np.random.default_rng(3)
    pts = [((x, y, z), -t**2)
           for x, y, z, t in rng.uniform(0.0, 1.0, (500, 4))]
    sub = pts[:200]
    scales = [0.25, 0.125, 0.0625]
    full = dimension_estimate(pts, scales)
    part = dimension_estimate(sub, scales)
    for a, b in zip(part.counts, full.counts):
        assert a <= b


def test_measure_gauges():
    xs = np.linspace(0.0, 1.0, 1000)
    pts = [((x, 0.0, 0.0), 0.0) for x in xs]
    scales = [2.0**-k for k in range(2, 8)]
    est = dimension_estimate(pts, scales)
    # premeasure is nonincreasing in alpha at fixed scale
    assert est.measure_upper(1.0) >= est.measure_upper(2.0)
    # above the true dimension the premeasure decays with the scale
    assert est.measure_trend(2.0)["classification"] == "decreasing"


def test_dimension_requires_three_scales():
    with pytest.raises(ValueError):
        dimension_estimate([((0.0, 0.0, 0.0), 0.0)], [0.5, 0.25])
