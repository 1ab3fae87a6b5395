import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from matplotlib.path import Path as MplPath

from conftest import REFERENCE_X0_25, regular_patch
from topoant import geometry as g
from topoant.errors import DegenerateOutline, EnclosureFailure, InfeasibleBounds, NonPositiveIncrement


def test_equal_increments_place_vertices_on_circle():
    x = regular_patch(L=4, C=30.0, rho=0.5)
    p = g.decode(x)
    np.testing.assert_allclose(p.absolute_angles, [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    np.testing.assert_allclose(np.hypot(*p.vertices.T), 15.0)
    np.testing.assert_allclose(p.vertices[1], [0.0, 15.0], atol=1e-12)


def test_substrate_side():
    x = regular_patch(L=5)
    x[3 + 2] = 0.59
    assert g.decode(x).substrate_side == pytest.approx(45.4)


def test_feed_point():
    x = regular_patch(C=30, rho_f=0.2, phi_f=0.3)
    np.testing.assert_allclose(g.decode(x).feed_point, [6 * math.cos(0.3), 6 * math.sin(0.3)])


def test_reference_design_zero_increment_rejected():
    with pytest.raises(NonPositiveIncrement, match="phi_1"):
        g.decode(REFERENCE_X0_25)


def test_reference_design_decodes_with_floored_increment(reference_x0):
    p = g.decode(reference_x0)
    assert p.absolute_angles.size == 25
    assert np.all(np.diff(p.absolute_angles) > 0)
    assert p.absolute_angles[-1] < 2 * np.pi
    assert p.substrate_side == pytest.approx(45.4)


def test_coincident_vertices_rejected():
    x = regular_patch(L=4)
    x[3 + 4] = 1e-13   # vertices 1 and 2 at the same angle and radius
    with pytest.raises(DegenerateOutline):
        g.decode(x)


@pytest.mark.parametrize("n", [8, 10])
def test_bad_length(n):
    with pytest.raises(ValueError):
        g.n_points(np.zeros(n))


def test_record_round_trip():
    x = g.generate_candidate(6, 3)
    rec = g.design_record(x)
    assert rec["L"] == 6 and rec["labels"][3] == "rho_1" and rec["labels"][-1] == "phi_6"
    np.testing.assert_array_equal(g.from_record(rec), x)


def test_generation_deterministic():
    np.testing.assert_array_equal(g.generate_candidate(10, 7), g.generate_candidate(10, 7))
    assert not np.array_equal(g.generate_candidate(10, 7), g.generate_candidate(10, 8))


def test_generation_200_seeds_decodable_and_enclosed():
    gb = g.generation_bounds(25)
    for seed in range(1, 201):
        x = g.generate_candidate(25, seed)
        p = g.decode(x)
        assert g.contains_feed(p)
        assert gb.contains(x)
        phi = x[3 + 25:]
        assert phi.min() >= 0.01 and phi.max() <= 0.8


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0
            and orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def _is_simple(vertices):
    L = len(vertices)
    edges = [(vertices[i], vertices[(i + 1) % L]) for i in range(L)]
    for i in range(L):
        for j in range(i + 2, L):
            if i == 0 and j == L - 1:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


@given(L=st.integers(3, 30), seed=st.integers(0, 2**32 - 1))
def test_outline_is_simple_polygon(L, seed):
    x = g.generate_candidate(L, seed)
    p = g.decode(x)
    assert np.all(np.diff(p.absolute_angles) > 0)
    assert 0 <= p.absolute_angles[0] and p.absolute_angles[-1] < 2 * np.pi
    assert _is_simple(p.vertices)


def test_ten_thousand_draws_never_fail():
    gb = g.generation_bounds(25)
    failures = 0
    for seed in range(10_000):
        try:
            x = g.generate_candidate(25, [99, seed], gb)
        except EnclosureFailure:
            failures += 1
            continue
        assert g.contains_feed(g.decode(x))
    assert failures == 0


def test_unreachable_enclosure_raises():
    tiny = g.generation_bounds(5, c_range=(1.0, 1.1))
    with pytest.raises(EnclosureFailure):
        g.generate_candidate(5, 0, tiny, retries=5, outline_draws=3)


def test_scale_identity_and_doubling():
    x = g.generate_candidate(8, 1)
    np.testing.assert_array_equal(g.scale_design(x, 1.0), x)
    x[0] = 30.0
    y = g.scale_design(x, 2.0)
    assert y[0] == 60.0
    np.testing.assert_array_equal(y[1:], x[1:])
    np.testing.assert_array_equal(g.decode(y).vertices, 2 * g.decode(x).vertices)


@given(seed=st.integers(0, 10_000), c=st.floats(0.1, 10.0))
def test_decode_scale_equivariant(seed, c):
    x = g.generate_candidate(7, seed)
    np.testing.assert_allclose(g.decode(g.scale_design(x, c)).vertices,
                               c * g.decode(x).vertices, rtol=1e-14, atol=1e-12)


def test_scale_rejects_nonpositive():
    with pytest.raises(ValueError):
        g.scale_design(regular_patch(), 0.0)


def test_feed_at_origin_enclosed():
    x = regular_patch(L=12, rho_f=0.0)
    assert g.contains_feed(g.decode(x))


def test_feed_on_vertex_not_enclosed():
    x = regular_patch(L=6, rho=0.5, rho_f=0.5, phi_f=0.0)
    p = g.decode(x)
    np.testing.assert_allclose(p.feed_point, p.vertices[0])
    assert not g.contains_feed(p)


def _raster_enclosed(feed, vertices, margin, res=0.05):
    # enclosed iff every grid point of the margin disk (plus its rim) is inside
    r = np.arange(-margin, margin + res, res)
    gx, gy = np.meshgrid(r, r)
    keep = gx ** 2 + gy ** 2 <= margin ** 2
    ang = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    pts = np.vstack([np.column_stack([gx[keep], gy[keep]]),
                     margin * np.column_stack([np.cos(ang), np.sin(ang)])]) + feed
    return bool(np.all(MplPath(vertices).contains_points(pts)))


def test_enclosure_matches_rasterization_oracle():
    rng = np.random.default_rng(5)
    gb = g.generation_bounds(12)
    ambiguous = 0
    for _ in range(1000):
        x = rng.uniform(gb.lower, gb.upper)
        p = g.decode(x)
        got = g.contains_feed(p)
        want = _raster_enclosed(p.feed_point, p.vertices, g.R2_MM)
        if got != want:
            # only within one raster cell of the margin can the two disagree
            d = g.edge_distance(p.feed_point, p.vertices)
            assert abs(d - g.R2_MM) < 0.05
            ambiguous += 1
    assert ambiguous <= 5


def test_bounds_angular_window(reference_x0):
    b = g.build_bounds(reference_x0, 25, 35)
    assert b.lower[2] == pytest.approx(2.62 - np.pi)
    assert b.upper[2] == pytest.approx(2.62 + np.pi)
    assert (b.lower[0], b.upper[0]) == (25, 35)
    assert b.lower[1] == 0 and b.upper[1] == pytest.approx(0.59)
    np.testing.assert_array_equal(b.lower[3:28], 0.1)
    np.testing.assert_array_equal(b.upper[3:28], 0.9)
    np.testing.assert_array_equal(b.lower[28:], 0.01)
    np.testing.assert_array_equal(b.upper[28:], 0.8)


def test_bounds_around_sizing_factor(reference_x0):
    C0 = reference_x0[0]
    b = g.build_bounds(reference_x0, C0 - 2, C0 + 2)
    assert (b.lower[0], b.upper[0]) == (28, 32)


def test_bounds_infeasible(reference_x0):
    with pytest.raises(InfeasibleBounds, match="C"):
        g.build_bounds(reference_x0, 31, 35)
    with pytest.raises(InfeasibleBounds):
        g.build_bounds(reference_x0, 35, 25)


def test_bounds_clip_tolerance(reference_x0):
    x = reference_x0.copy()
    x[0] = 35 + 5e-7
    b = g.build_bounds(x, 25, 35)
    assert b.contains(b.clip(x))
    x[0] = 35 + 1e-5
    with pytest.raises(InfeasibleBounds):
        g.build_bounds(x, 25, 35)


@given(seed=st.integers(0, 10_000), lo=st.floats(10, 30), width=st.floats(0.5, 20))
def test_bounds_contain_x0(seed, lo, width):
    x = g.generate_candidate(9, seed, g.generation_bounds(9, c_range=(lo, lo + width)))
    b = g.build_bounds(x, lo, lo + width)
    assert b.contains(b.clip(x))
    np.testing.assert_allclose(b.clip(x), x)


def test_normalize_round_trip():
    b = g.generation_bounds(4)
    x = g.generate_candidate(4, 0)
    np.testing.assert_allclose(b.denormalize(b.normalize(x)), x)


def test_polygon_rows():
    rows = g.polygon_rows(regular_patch(L=4))
    assert len(rows) == 4
    assert rows[0] == pytest.approx((15.0, 0.0))
