"""Dimension-generic Euclidean primitives.

Every predicate broadcasts over leading axes: ``q`` may be a single point of
shape ``(n,)`` or a batch of shape ``(..., n)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAU_CONE = 1e-9
TAU_PAR = 1e-7
PLANE_ANGLE_TOL = 1e-8

_RELATIONS = {
    "<": "<", "<=": "<=", "≤": "<=", "=": "=", "==": "=",
    ">=": ">=", "≥": ">=", ">": ">",
}


class GeometryError(ValueError):
    """Raised when a geometric primitive is called outside its domain."""


def as_point(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim == 0 or q.shape[-1] < 2:
        raise GeometryError("points need at least two coordinates")
    if not np.all(np.isfinite(q)):
        raise GeometryError("non-finite coordinate")
    return q


def norm(v) -> np.ndarray:
    return np.linalg.norm(v, axis=-1)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = norm(v)
    if np.any(n == 0):
        raise GeometryError("cannot normalize a zero vector")
    return v / n[..., None] if v.ndim > 1 else v / n


def normalize_relation(relation: str) -> str:
    try:
        return _RELATIONS[relation]
    except KeyError:
        raise GeometryError(f"unknown relation {relation!r}") from None


def compare(lhs, rhs, relation: str, tol: float = TAU_CONE):
    """Evaluate ``lhs relation rhs`` with an absolute tolerance.

    Strict relations need a margin larger than ``tol``; ``=`` accepts a band
    of width ``tol``. The three relations ``<``, ``=`` and ``>`` therefore
    partition the real line.
    """
    d = np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float)
    rel = normalize_relation(relation)
    if rel == "<":
        return d < -tol
    if rel == "<=":
        return d <= tol
    if rel == "=":
        return np.abs(d) <= tol
    if rel == ">=":
        return d >= -tol
    return d > tol


def angle_between(a, b) -> np.ndarray | float:
    """Angle in ``[0, pi]`` between nonzero vectors ``a`` and ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = norm(a), norm(b)
    if np.any(na == 0) or np.any(nb == 0):
        raise GeometryError("angle with a zero vector is undefined")
    cos = np.sum(a * b, axis=-1) / (na * nb)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def reflect(v, x) -> np.ndarray:
    """Apply the elementary reflector ``I - 2 v v^T`` (``v`` unit) to ``x``."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(norm(v) - 1.0) > 1e-9):
        raise GeometryError("reflector axis must be a unit vector")
    return x - 2.0 * np.sum(v * x, axis=-1)[..., None] * v


@dataclass(frozen=True)
class ConeSpec:
    """Cone with vertex ``vertex``, axis ``axis`` and half aperture ``aperture``.

    ``relation`` picks the region: ``<=`` closed interior, ``<`` open interior,
    ``=`` lateral surface, ``>=`` / ``>`` closed / open exterior.
    """

    vertex: np.ndarray
    axis: np.ndarray
    aperture: float
    relation: str = "<="

    def __post_init__(self):
        object.__setattr__(self, "vertex", as_point(self.vertex))
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != self.vertex.shape:
            raise GeometryError("vertex and axis dimensions differ")
        if norm(axis) == 0:
            raise GeometryError("cone axis must be nonzero")
        object.__setattr__(self, "axis", axis)
        if not 0.0 < self.aperture <= np.pi / 2:
            raise GeometryError("cone aperture must lie in (0, pi/2]")
        object.__setattr__(self, "relation", normalize_relation(self.relation))


@dataclass(frozen=True)
class HalfSpaceSpec:
    """Set of points ``q`` with ``normal . (q - anchor)  relation  0``."""

    anchor: np.ndarray
    normal: np.ndarray
    relation: str = ">="

    def __post_init__(self):
        object.__setattr__(self, "anchor", as_point(self.anchor))
        normal = np.asarray(self.normal, dtype=float)
        if normal.shape != self.anchor.shape:
            raise GeometryError("anchor and normal dimensions differ")
        if norm(normal) == 0:
            raise GeometryError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "relation", normalize_relation(self.relation))


@dataclass(frozen=True)
class PlaneSpan:
    """Affine 2-plane ``base + span(u1, u2)`` embedded in R^n."""

    base: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", as_point(self.base))
        u1 = np.asarray(self.u1, dtype=float)
        u2 = np.asarray(self.u2, dtype=float)
        if u1.shape != self.base.shape or u2.shape != self.base.shape:
            raise GeometryError("plane vectors must match the base dimension")
        if norm(u1) == 0 or norm(u2) == 0:
            raise GeometryError("degenerate plane span")
        ang = angle_between(u1, u2)
        if ang < PLANE_ANGLE_TOL or ang > np.pi - PLANE_ANGLE_TOL:
            raise GeometryError("plane vectors are colinear")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @classmethod
    def through(cls, p0, p1, p2) -> "PlaneSpan":
        """Plane through three non-colinear points."""
        p0 = np.asarray(p0, dtype=float)
        return cls(p0, np.asarray(p1, dtype=float) - p0, np.asarray(p2, dtype=float) - p0)

    def basis(self) -> np.ndarray:
        """Orthonormal basis of the direction space, shape ``(2, n)``."""
        e1 = self.u1 / norm(self.u1)
        w = self.u2 - np.dot(self.u2, e1) * e1
        return np.stack([e1, w / norm(w)])


def cone_margin(q, vertex, axis, aperture):
    """Signed cone expression ``axis.(q-x) - |axis||q-x| cos(aperture)``.

    Positive strictly inside the cone, zero on its surface.
    """
    d = np.asarray(q, dtype=float) - vertex
    return d @ axis - norm(axis) * norm(d) * np.cos(aperture)


def in_cone(q, cone: ConeSpec, relation: str | None = None, tol: float = TAU_CONE):
    """Evaluate ``|v||q-x|cos(phi)  relation  v.(q-x)`` for the cone ``(x, v, phi)``."""
    rel = cone.relation if relation is None else relation
    d = np.asarray(q, dtype=float) - cone.vertex
    lhs = norm(cone.axis) * norm(d) * np.cos(cone.aperture)
    rhs = d @ cone.axis
    return compare(lhs, rhs, rel, tol)


def in_parallel_set(w, v, phi: float, tol: float = TAU_PAR):
    """True when ``w`` makes the angle ``phi`` with ``v`` (or ``w`` is zero)."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if norm(v) == 0:
        raise GeometryError("reference direction must be nonzero")
    scale = norm(w) * norm(v)
    return np.abs(w @ v - scale * np.cos(phi)) <= tol * scale


def in_halfspace(q, h: HalfSpaceSpec, relation: str | None = None, tol: float = TAU_CONE):
    """Evaluate ``n.(q - anchor)  relation  0``."""
    rel = h.relation if relation is None else relation
    val = (np.asarray(q, dtype=float) - h.anchor) @ h.normal
    return compare(val, 0.0, rel, tol)


def segment_hits_ball(a, b, center, radius: float, tol: float = 1e-12) -> bool:
    """Whether the closed segment ``[a, b]`` meets the closed ball."""
    if radius <= 0:
        raise GeometryError("radius must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(center, dtype=float)
    ab = b - a
    den = float(ab @ ab)
    lam = 0.0 if den == 0 else min(1.0, max(0.0, float((c - a) @ ab) / den))
    return bool(norm(a + lam * ab - c) <= radius + tol)


def plane_project(q, plane: PlaneSpan) -> np.ndarray:
    """Orthogonal projection of ``q`` onto the affine plane."""
    B = plane.basis()
    d = np.asarray(q, dtype=float) - plane.base
    return plane.base + (d @ B.T) @ B


def plane_distance(q, plane: PlaneSpan):
    return norm(np.asarray(q, dtype=float) - plane_project(q, plane))


def snap_to_sphere(x, center, radius: float) -> np.ndarray:
    """Radial projection of ``x`` onto the sphere, rounded inward.

    The result satisfies ``sqrt((c - z) . (c - z)) <= radius`` in floating
    point, so angles computed from it see the surface exactly.
    """
    c = np.asarray(center, dtype=float)
    d = np.asarray(x, dtype=float) - c
    y = d * (radius / float(np.sqrt(d @ d)))
    for i in range(64):
        z = c + y * (1 - i * 2.0 ** -52)
        e = c - z
        if float(np.sqrt(e @ e)) <= radius:
            return z
    raise GeometryError("could not round onto the sphere")
