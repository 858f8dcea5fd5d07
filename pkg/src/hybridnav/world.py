"""Sphere-world workspace: obstacles, target and the region predicates.

Obstacles are addressed by an integer *label*. For a workspace built from a
plain list the labels are ``0..b-1``; the sensor-based runner keeps labels
stable across scan cycles so that a selected obstacle survives re-detection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import TAU_CONE, as_point, cone_margin, norm

DEFAULT_GAMMA = 1.5
DEFAULT_C_PHI = 0.9
ACTIVE_RANGE_SCALE = 0.4
VD_DISTANCE_SCALE = 0.9
VD_RANGE_FACTOR = 1.25
BOUNDARY_SAMPLES = 4096


class WorkspaceError(ValueError):
    """Invalid workspace; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ParameterError(ValueError):
    """A derived avoidance parameter is out of its admissible range."""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    indices: tuple = ()

    def __str__(self):
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class Obstacle:
    """Spherical obstacle with its avoidance parameters.

    Attributes
    ----------
    center, radius : obstacle ball.
    active_range : width of the activation shell around the ball.
    vd_distance : distance from the target to the virtual destinations.
    aperture : half angle of the cones excluded around the equilibria lines.
    vd_active_range : shell width used for the avoidance flow sets; slightly
        larger than ``active_range`` so a fresh activation cannot exit at once.
    label : stable identifier.
    """

    center: np.ndarray
    radius: float
    active_range: float
    vd_distance: float
    aperture: float
    vd_active_range: float
    label: int = 0

    def __post_init__(self):
        c = as_point(self.center).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        for name in ("radius", "active_range", "vd_distance", "aperture", "vd_active_range"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "label", int(self.label))


def pairwise_clearance(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Surface-to-surface distances; the diagonal is ``+inf``."""
    d = norm(centers[:, None, :] - centers[None, :, :]) - radii[:, None] - radii[None, :]
    np.fill_diagonal(d, np.inf)
    return d


def validate(centers, radii, target, *, active_ranges=None, epsilon=None, gamma=None,
             vd_distances=None, r_hats=None, sensor_range=None) -> list[Violation]:
    """Check a workspace description and report every violation found.

    Returns an empty list when the description is admissible.
    """
    out: list[Violation] = []
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    target = np.asarray(target, dtype=float)
    b = len(radii)
    if b and centers.shape[0] != b:
        return [Violation("shape", "centers and radii lengths differ")]
    n = target.shape[-1]
    if n < 2:
        out.append(Violation("dimension", "dimension must be at least 2"))
    if b and centers.shape[1] != n:
        out.append(Violation("dimension", "obstacle and target dimensions differ"))
        return out
    if not np.all(np.isfinite(target)) or (b and not np.all(np.isfinite(centers))):
        out.append(Violation("finite", "non-finite coordinates"))
        return out
    for i in np.flatnonzero(~(radii > 0)):
        out.append(Violation("radius", f"obstacle {i} has non-positive radius", (int(i),)))
    if b > 1:
        clr = pairwise_clearance(centers, radii)
        for i, j in zip(*np.nonzero(np.triu(clr <= 0, 1))):
            out.append(Violation("overlap", f"obstacles {i} and {j} intersect or touch",
                                 (int(i), int(j))))
    if b:
        dt = norm(target - centers) - radii
        for i in np.flatnonzero(dt <= 0):
            out.append(Violation("target", f"target lies inside obstacle {i}", (int(i),)))
    if gamma is not None and not gamma > 0:
        out.append(Violation("gamma", "gain must be positive"))
    if active_ranges is not None:
        rb = np.asarray(active_ranges, dtype=float)
        for i in np.flatnonzero(~(rb > 0)):
            out.append(Violation("active_range", f"obstacle {i} active range must be positive",
                                 (int(i),)))
        if r_hats is not None:
            for i in np.flatnonzero(rb >= np.asarray(r_hats, dtype=float)):
                out.append(Violation("active_range",
                                     f"obstacle {i} active range reaches a hidden obstacle",
                                     (int(i),)))
        if sensor_range is not None:
            for i in np.flatnonzero(rb >= sensor_range):
                out.append(Violation("active_range",
                                     f"obstacle {i} active range exceeds the sensor range",
                                     (int(i),)))
        if epsilon is not None and b and not (0 < epsilon <= rb.min()):
            out.append(Violation("epsilon", "blend width must lie in (0, min active range]"))
    if vd_distances is not None:
        e = np.asarray(vd_distances, dtype=float)
        for i in np.flatnonzero(~(e > 0)):
            out.append(Violation("vd_distance", f"obstacle {i} virtual-destination distance "
                                 "must be positive", (int(i),)))
    return out


def vd_distance_bound(target, center, radius) -> tuple[float, float]:
    """Largest admissible virtual-destination distance and the tangent length.

    The first value keeps the virtual destinations on the target side of the
    hyperplane through the nearest obstacle point; the second is the distance
    from the target to the tangency circle.
    """
    D = float(norm(np.asarray(center) - np.asarray(target)))
    cos_t = math.sqrt(max(0.0, 1.0 - (radius / D) ** 2))
    return (D - radius) / cos_t, D * cos_t


def vd_opening_angle(target, center, radius, e) -> float:
    """Angle between ``c - x^1`` and ``c - x^-1`` for distance ``e``."""
    D = float(norm(np.asarray(center) - np.asarray(target)))
    s = radius / D
    c = math.sqrt(1.0 - s * s)
    return 2.0 * math.atan2(e * s, D - e * c)


def aperture_from_opening(psi: float, c_phi: float = DEFAULT_C_PHI) -> float:
    """Equilibria-cone aperture ``c_phi * min(psi/2, (pi-psi)/2)``."""
    if not 0.0 < psi < math.pi:
        raise ParameterError("degenerate virtual destinations (opening angle 0 or pi)")
    if not 0.0 < c_phi < 1.0:
        raise ParameterError("aperture safety factor must lie in (0, 1)")
    return c_phi * min(psi / 2.0, (math.pi - psi) / 2.0)


def _sphere_samples(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in R^n."""
    if n == 2:
        a = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        rho = np.sqrt(1 - z * z)
        a = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([rho * np.cos(a), rho * np.sin(a), z], axis=1)
    g = np.random.default_rng(0).standard_normal((count, n))
    return g / norm(g)[:, None]


@dataclass(frozen=True, eq=False)
class Workspace:
    """Validated sphere world with target ``target`` and gain ``gamma``."""

    obstacles: tuple
    target: np.ndarray
    gamma: float = DEFAULT_GAMMA
    epsilon: float | None = None
    sensor_range: float | None = None
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        obs = tuple(self.obstacles)
        target = as_point(self.target).copy()
        target.setflags(write=False)
        object.__setattr__(self, "obstacles", obs)
        object.__setattr__(self, "target", target)
        if self.epsilon is None and obs:
            object.__setattr__(self, "epsilon", 0.5 * min(o.active_range for o in obs))
        centers = np.array([o.center for o in obs]).reshape(len(obs), target.size)
        radii = np.array([o.radius for o in obs])
        viol = validate(centers, radii, target, gamma=self.gamma, epsilon=self.epsilon,
                        active_ranges=[o.active_range for o in obs],
                        vd_distances=[o.vd_distance for o in obs],
                        sensor_range=self.sensor_range)
        labels = [o.label for o in obs]
        if len(set(labels)) != len(labels):
            viol.append(Violation("label", "obstacle labels must be unique"))
        if viol:
            raise WorkspaceError(viol)
        for a in (centers, radii):
            a.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    # -- basic accessors ---------------------------------------------------
    @property
    def dimension(self) -> int:
        return self.target.size

    @property
    def labels(self) -> list[int]:
        return [o.label for o in self.obstacles]

    def __len__(self):
        return len(self.obstacles)

    def obstacle(self, k: int) -> Obstacle:
        try:
            return self.obstacles[self._index[k]]
        except KeyError:
            raise IndexError(f"no obstacle labelled {k}") from None

    def clearance(self, q) -> np.ndarray:
        """Distance from ``q`` to the nearest obstacle (negative inside)."""
        q = np.asarray(q, dtype=float)
        if not self.obstacles:
            return np.full(q.shape[:-1], np.inf)
        d = norm(q[..., None, :] - self.centers) - self.radii
        return d.min(axis=-1)

    def distance(self, q, k: int):
        o = self.obstacle(k)
        return norm(np.asarray(q, dtype=float) - o.center) - o.radius

    def in_free_space(self, q, tol: float = TAU_CONE):
        return self.clearance(q) >= -tol

    # -- region predicates -------------------------------------------------
    def theta(self, q, k: int):
        """Half aperture of the cone from ``q`` enclosing obstacle ``k``."""
        o = self.obstacle(k)
        d = norm(np.asarray(q, dtype=float) - o.center)
        if np.any(d < o.radius * (1 - 1e-12)):
            raise ValueError("theta is undefined strictly inside the obstacle")
        return np.arcsin(np.minimum(1.0, o.radius / d))

    def _dest(self, dest):
        return self.target if dest is None else np.asarray(dest, dtype=float)

    def shadow_margins(self, q, k: int, dest=None):
        """Cone and far-side margins of the shadow of ``k`` seen from ``dest``.

        Both values are nonnegative exactly on the shadow region (ignoring the
        free-space restriction).
        """
        o = self.obstacle(k)
        dest = self._dest(dest)
        q = np.asarray(q, dtype=float)
        axis = o.center - dest
        th = math.asin(min(1.0, o.radius / float(norm(axis))))
        cone = cone_margin(q, dest, axis, th)
        cut = np.sum((o.center - q) * (dest - q), axis=-1)
        return cone, cut

    def in_shadow(self, q, k: int, dest=None, tol: float = TAU_CONE):
        cone, cut = self.shadow_margins(q, k, dest)
        return (cone >= -tol) & (cut >= -tol) & self.in_free_space(q, tol)

    def active_margins(self, q, k: int, dest=None, active_range: float | None = None):
        """Stacked margins ``(cone, far side, shell)`` of the active region."""
        o = self.obstacle(k)
        rng = o.active_range if active_range is None else active_range
        cone, cut = self.shadow_margins(q, k, dest)
        shell = o.radius + rng - norm(np.asarray(q, dtype=float) - o.center)
        return np.stack(np.broadcast_arrays(cone, cut, shell), axis=-1)

    def in_active_region(self, q, k: int, dest=None, active_range: float | None = None,
                         tol: float = TAU_CONE):
        m = self.active_margins(q, k, dest, active_range)
        return np.all(m >= -tol, axis=-1) & self.in_free_space(q, tol)

    def on_cone_surface(self, q, k: int, dest=None, tol: float = TAU_CONE):
        cone, _ = self.shadow_margins(q, k, dest)
        return np.abs(cone) <= tol

    def in_exit_set(self, q, k: int, dest=None, active_range: float | None = None,
                    tol: float = TAU_CONE):
        return self.on_cone_surface(q, k, dest, tol) & \
            self.in_active_region(q, k, dest, active_range, tol)

    def in_hat(self, q, k: int, dest=None, active_range: float | None = None,
               tol: float = TAU_CONE):
        return self.on_cone_surface(q, k, dest, tol) & \
            ~self.in_active_region(q, k, dest, active_range, tol)

    def in_active_free_space(self, q, tol: float = TAU_CONE):
        q = np.asarray(q, dtype=float)
        hit = np.zeros(q.shape[:-1], dtype=bool)
        for lab in self.labels:
            hit |= self.in_active_region(q, lab, tol=tol)
        return hit

    # -- hidden obstacles ----------------------------------------------------
    def hidden_obstacles(self, k: int, dest=None, samples: int = BOUNDARY_SAMPLES) -> set[int]:
        return hidden_obstacles(self.centers, self.radii, self._index[k], self._dest(dest),
                                samples, labels=self.labels)

    def r_hat(self, k: int, dest=None, samples: int = BOUNDARY_SAMPLES) -> float:
        hid = self.hidden_obstacles(k, dest, samples)
        o = self.obstacle(k)
        return min((float(norm(o.center - self.obstacle(j).center)) - o.radius
                    - self.obstacle(j).radius for j in hid), default=math.inf)


def hidden_obstacles(centers, radii, i: int, dest, samples: int = BOUNDARY_SAMPLES,
                     labels: Sequence[int] | None = None) -> set[int]:
    """Obstacles whose boundary meets the shadow of obstacle ``i`` from ``dest``.

    Pairs whose ball lies angularly outside the enclosing cone are rejected
    analytically; the rest are decided by sampling the boundary sphere.
    """
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    labels = list(range(len(radii))) if labels is None else list(labels)
    dest = np.asarray(dest, dtype=float)
    c, r = centers[i], radii[i]
    axis = c - dest
    D = float(norm(axis))
    th = math.asin(min(1.0, r / D))
    ahat = axis / D
    dirs = None
    out = set()
    for j in range(len(radii)):
        if j == i:
            continue
        w = centers[j] - dest
        dw = float(norm(w))
        spread = math.asin(min(1.0, radii[j] / dw))
        off = math.acos(max(-1.0, min(1.0, float(w @ ahat) / dw)))
        if off - spread > th + 1e-9:
            continue
        if dirs is None:
            dirs = _sphere_samples(centers.shape[1], samples)
        pts = centers[j] + radii[j] * dirs
        # points of the sphere nearest and farthest along the axis, and nearest to it
        perp = w - (w @ ahat) * ahat
        extra = [centers[j] + radii[j] * ahat, centers[j] - radii[j] * ahat]
        if norm(perp) > 0:
            extra.append(centers[j] - radii[j] * perp / norm(perp))
        pts = np.vstack([pts, extra])
        cone = cone_margin(pts, dest, axis, th)
        cut = np.sum((c - pts) * (dest - pts), axis=-1)
        if np.any((cone >= -TAU_CONE) & (cut >= -TAU_CONE)):
            out.add(labels[j])
    return out


def _per_obstacle(value, b: int, name: str) -> list:
    if value is None:
        return [None] * b
    if np.isscalar(value):
        return [float(value)] * b
    value = list(value)
    if len(value) != b:
        raise WorkspaceError([Violation("shape", f"{name} needs one entry per obstacle")])
    return value


def build_workspace(centers, radii, target, *, gamma: float = DEFAULT_GAMMA,
                    epsilon: float | None = None, active_range=None, vd_distance=None,
                    c_phi: float = DEFAULT_C_PHI, sensor_range: float | None = None,
                    vd_range_factor: float = VD_RANGE_FACTOR,
                    active_range_scale: float = ACTIVE_RANGE_SCALE,
                    vd_distance_scale: float = VD_DISTANCE_SCALE,
                    labels: Iterable[int] | None = None,
                    samples: int = BOUNDARY_SAMPLES) -> Workspace:
    """Build a validated workspace, deriving every unspecified parameter.

    Parameters
    ----------
    centers : array_like, shape (b, n)
    radii : array_like, shape (b,)
    target : array_like, shape (n,)
    active_range, vd_distance : scalar, sequence (``None`` entries use the
        default) or ``None``.
    sensor_range : caps the default active range in sensor-based operation.

    Defaults are ``active_range = active_range_scale * min(R, r_k, clr_k)``
    with ``clr_k`` the clearance to the nearest other obstacle, and
    ``vd_distance = vd_distance_scale * min(tangent length, bound)``.
    """
    target = np.asarray(target, dtype=float).reshape(-1)
    radii = np.asarray(radii, dtype=float).reshape(-1)
    b = radii.size
    centers = np.asarray(centers, dtype=float).reshape(b, target.size) if b else \
        np.zeros((0, target.size))
    viol = validate(centers, radii, target, gamma=gamma)
    if viol:
        raise WorkspaceError(viol)
    labels = list(range(b)) if labels is None else [int(v) for v in labels]
    ars = _per_obstacle(active_range, b, "active_range")
    eds = _per_obstacle(vd_distance, b, "vd_distance")
    clr = pairwise_clearance(centers, radii).min(axis=1) if b > 1 else np.full(b, np.inf)
    cap = math.inf if sensor_range is None else float(sensor_range)

    obstacles = []
    problems = []
    for i in range(b):
        c, r = centers[i], float(radii[i])
        rbar = ars[i]
        if rbar is None:
            rbar = active_range_scale * min(cap, r, float(clr[i]))
        elif rbar >= clr[i]:
            # only a range beyond the nearest clearance can reach a hidden obstacle
            rh = min((float(norm(c - centers[j])) - r - radii[j]
                      for j in hidden_obstacles(centers, radii, i, target, samples)),
                     default=math.inf)
            if rbar >= rh:
                problems.append(Violation("active_range", f"obstacle {i} active range "
                                          f"{rbar:g} is not below {rh:g}", (i,)))
        e_max, tangent = vd_distance_bound(target, c, r)
        e = eds[i]
        if e is None:
            e = vd_distance_scale * min(tangent, e_max)
        elif e > e_max * (1 + 1e-12):
            problems.append(Violation("vd_distance", f"obstacle {i} virtual-destination "
                                      f"distance {e:g} exceeds {e_max:g}", (i,)))
            continue
        psi = vd_opening_angle(target, c, r, e)
        phi = aperture_from_opening(psi, c_phi)
        vd_rng = vd_range_factor * rbar
        if math.isfinite(clr[i]):
            vd_rng = min(vd_rng, 0.5 * (rbar + float(clr[i])))
        obstacles.append(Obstacle(c, r, rbar, e, phi, max(vd_rng, rbar), labels[i]))
    if problems:
        raise WorkspaceError(problems)
    return Workspace(tuple(obstacles), target, gamma=gamma, epsilon=epsilon,
                     sensor_range=sensor_range)


def dilate(ws: Workspace, amount: float, samples: int = BOUNDARY_SAMPLES) -> Workspace:
    """Workspace with every radius grown by ``amount``.

    Avoidance parameters are derived again with the default rules; labels,
    gain and sensor range carry over. Raises ``WorkspaceError`` when the grown
    balls touch each other or the target.
    """
    if amount < 0:
        raise ValueError("dilation must be nonnegative")
    if not ws.obstacles:
        return ws
    return build_workspace(ws.centers, ws.radii + amount, ws.target, gamma=ws.gamma,
                           sensor_range=ws.sensor_range, labels=ws.labels, samples=samples)
