import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridnav.geometry import (TAU_CONE, ConeSpec, GeometryError, HalfSpaceSpec, PlaneSpan,
                                angle_between, compare, in_cone, in_halfspace,
                                in_parallel_set, plane_distance, plane_project, reflect,
                                segment_hits_ball)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def vectors(n):
    return arrays(float, n, elements=finite)


# angle_between

@pytest.mark.parametrize("a, b, expected", [
    ((1, 0), (0, 1), math.pi / 2),
    ((2, 0), (5, 0), 0.0),
    ((1, 0), (-1, 1), 3 * math.pi / 4),
])
def test_angle_between_examples(a, b, expected):
    assert angle_between(a, b) == pytest.approx(expected, abs=1e-15)


def test_angle_between_rejects_zero_vector():
    with pytest.raises(GeometryError):
        angle_between((0, 0), (1, 0))


def test_angle_between_clamps_rounding():
    v = np.array([0.1, 0.7, 0.3])
    assert angle_between(v, 3 * v) == 0.0
    assert angle_between(v, -v) == pytest.approx(math.pi)


@given(vectors(3), vectors(3), vectors(3))
def test_angle_symmetric_and_triangle(a, b, c):
    assume(min(np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(c)) > 1e-3)
    ab, bc, ac = angle_between(a, b), angle_between(b, c), angle_between(a, c)
    assert ab == pytest.approx(angle_between(b, a), abs=1e-12)
    assert ac <= ab + bc + 1e-7


# reflect

@pytest.mark.parametrize("v, x, expected", [
    ((1, 0), (3, 4), (-3, 4)),
    ((1 / math.sqrt(2), 1 / math.sqrt(2)), (1, 0), (0, -1)),
    ((0, 1, 0), (1, 2, 3), (1, -2, 3)),
])
def test_reflect_examples(v, x, expected):
    np.testing.assert_allclose(reflect(v, x), expected, atol=1e-15)


def test_reflect_requires_unit_axis():
    with pytest.raises(GeometryError):
        reflect((2, 0), (1, 1))


@given(vectors(4), vectors(4))
def test_reflect_is_norm_preserving_involution(v, x):
    assume(np.linalg.norm(v) > 1e-3)
    v = v / np.linalg.norm(v)
    y = reflect(v, x)
    assert np.linalg.norm(y) == pytest.approx(np.linalg.norm(x), abs=1e-12)
    np.testing.assert_allclose(reflect(v, y), x, atol=1e-12)


# cones and half-spaces

def test_in_cone_examples():
    on_axis = ConeSpec(np.zeros(2), (1, 0), math.pi / 4, "<=")
    assert in_cone((1, 0), on_axis)
    assert in_cone((1, 1), on_axis, "=")
    assert not in_cone((0, 1), on_axis)


def test_cone_vertex_belongs_to_closed_relations():
    cone = ConeSpec(np.zeros(3), (0, 0, 1), 0.3)
    for rel in ("<=", "=", ">="):
        assert in_cone(np.zeros(3), cone, rel)
    for rel in ("<", ">"):
        assert not in_cone(np.zeros(3), cone, rel)


@pytest.mark.parametrize("aperture", [0.0, -0.1, math.pi / 2 + 1e-3])
def test_cone_spec_rejects_bad_aperture(aperture):
    with pytest.raises(GeometryError):
        ConeSpec(np.zeros(2), (1, 0), aperture)


def test_cone_spec_rejects_zero_axis():
    with pytest.raises(GeometryError):
        ConeSpec(np.zeros(2), (0, 0), 0.5)


@given(vectors(3), vectors(3), vectors(3), st.floats(0.05, math.pi / 2))
def test_cone_partition(q, vertex, axis, ap):
    assume(np.linalg.norm(axis) > 1e-3 and np.linalg.norm(q - vertex) > 1e-6)
    cone = ConeSpec(vertex, axis, ap)
    hits = [bool(in_cone(q, cone, rel)) for rel in ("<", "=", ">")]
    assert sum(hits) == 1


def test_in_parallel_set_examples():
    phi = math.pi / 6
    assert in_parallel_set((math.cos(phi), math.sin(phi)), (1, 0), phi)
    assert not in_parallel_set((1, 0), (1, 0), phi)
    assert in_parallel_set((0, 0), (1, 0), math.pi / 4)


def test_in_halfspace_examples():
    assert in_halfspace((1, 0), HalfSpaceSpec((0, 0), (1, 0), ">"))
    assert in_halfspace((0, 5), HalfSpaceSpec((0, 0), (1, 0), "="))
    assert not in_halfspace((-1, 2), HalfSpaceSpec((0, 0), (1, 0), ">="))


def test_compare_strict_relations_need_margin():
    assert not compare(0.0, 0.5 * TAU_CONE, "<")
    assert compare(0.0, 0.5 * TAU_CONE, "=")
    assert compare(0.0, 2 * TAU_CONE, "<")
    with pytest.raises(GeometryError):
        compare(0, 1, "!=")


@given(st.integers(2, 4), st.data())
def test_cones_sharing_vertex_meet_only_at_vertex(n, data):
    """Two cones whose axes are separated by more than the apertures are disjoint."""
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    c = rng.normal(size=n)
    v1 = rng.normal(size=n)
    v2 = rng.normal(size=n)
    psi = angle_between(v1, v2)
    assume(0.1 < psi < math.pi - 0.1)
    bound = min(psi, math.pi - psi)
    f1 = data.draw(st.floats(0.01, 0.49)) * bound
    f2 = data.draw(st.floats(0.01, 0.99)) * bound - f1
    assume(f2 > 0.005)
    c1, c2 = ConeSpec(c, v1, f1), ConeSpec(c, v2, f2)
    q = c + rng.normal(size=(400, n)) * rng.uniform(0.01, 5, size=(400, 1))
    both = in_cone(q, c1) & in_cone(q, c2)
    assert np.all(np.linalg.norm(q[both] - c, axis=1) <= TAU_CONE)


# segments and planes

def _segment_oracle(a, b, c, r):
    lam = np.linspace(0, 1, 10001)[:, None]
    pts = np.asarray(a, float) + lam * (np.asarray(b, float) - np.asarray(a, float))
    return np.linalg.norm(pts - c, axis=1).min() <= r + 1e-12


@pytest.mark.parametrize("a, b, c, r, expected", [
    ((0, 0), (4, 0), (2, 0), 1, True),
    ((0, 0), (0, 4), (2, 0), 1, False),
    ((0, 2), (4, 2), (2, 0), 2, True),
])
def test_segment_hits_ball_examples(a, b, c, r, expected):
    assert _segment_oracle(a, b, c, r) == expected
    assert segment_hits_ball(a, b, c, r) == expected


@given(vectors(2), vectors(2), vectors(2), st.floats(0.1, 5))
def test_segment_hits_ball_matches_grid(a, b, c, r):
    dense = _segment_oracle(a, b, c, r)
    # the grid can miss a grazing hit; only check decisive cases
    lam = np.linspace(0, 1, 10001)[:, None]
    dmin = np.linalg.norm(a + lam * (b - a) - c, axis=1).min()
    assume(abs(dmin - r) > 1e-3)
    assert segment_hits_ball(a, b, c, r) == dense


def test_plane_examples():
    z0 = PlaneSpan(np.zeros(3), (1, 0, 0), (0, 1, 0))
    np.testing.assert_allclose(plane_project((1, 1, 1), z0), (1, 1, 0))
    assert plane_distance((1, 1, 1), z0) == pytest.approx(1.0)
    assert plane_distance((3, -2, 0), z0) == pytest.approx(0.0)
    skew = PlaneSpan(np.zeros(3), (1, 0, 0), (1, 1, 0))
    # least-squares residual as the independent oracle
    A = np.array([[1, 0, 0], [1, 1, 0]], float).T
    q = np.array([0, 0, 5.0])
    coef, *_ = np.linalg.lstsq(A, q, rcond=None)
    assert plane_distance(q, skew) == pytest.approx(np.linalg.norm(q - A @ coef))
    assert plane_distance(q, skew) == pytest.approx(5.0)


def test_plane_rejects_colinear_span():
    with pytest.raises(GeometryError):
        PlaneSpan(np.zeros(3), (1, 0, 0), (-2, 0, 0))
    with pytest.raises(GeometryError):
        PlaneSpan.through((0, 0, 0), (1, 1, 1), (2, 2, 2))


@given(vectors(5), vectors(5), vectors(5), vectors(5))
def test_projection_is_idempotent(base, u1, u2, q):
    assume(np.linalg.norm(u1) > 0.1 and np.linalg.norm(u2) > 0.1)
    assume(0.05 < angle_between(u1, u2) < math.pi - 0.05)
    p = PlaneSpan(base, u1, u2)
    proj = plane_project(q, p)
    np.testing.assert_allclose(plane_project(proj, p), proj, atol=1e-9)
    assert plane_distance(proj, p) <= 1e-9
