"""Synthetic range scanners and closed-form obstacle reconstruction.

A 2D scan sweeps the full circle; a 3D scan sweeps polar angles ``0..180``
degrees and azimuths ``0..360`` degrees. Returns below the maximum range are
grouped into arcs (2D) or caps (3D), asymmetric groups are discarded, and
each remaining group yields a circle or sphere from the chord-sagitta identity
``r = b^2 / (2 sqrt(b^2 - a^2))`` with ``a`` the half chord (base radius in
3D) and ``b`` the distance from the nearest return to the chord ends.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import norm

S_TOL = 0.1
SPLIT_FACTOR = 3.0
DEFAULT_MARGIN = 0.1


class SensorError(ValueError):
    """Invalid sensor configuration or margin."""


@dataclass(frozen=True)
class ScanConfig2D:
    resolution: float = 0.5   # degrees
    max_range: float = 2.0

    def __post_init__(self):
        steps = 360.0 / self.resolution
        if self.resolution <= 0 or abs(steps - round(steps)) > 1e-9:
            raise SensorError("resolution must divide 360 degrees")
        if self.max_range <= 0:
            raise SensorError("max range must be positive")

    def angles(self) -> np.ndarray:
        return np.deg2rad(np.arange(round(360.0 / self.resolution)) * self.resolution)


@dataclass(frozen=True)
class ScanConfig3D:
    polar_resolution: float = 1.0      # degrees
    azimuth_resolution: float = 1.0    # degrees
    max_range: float = 2.0

    def __post_init__(self):
        for span, res in ((180.0, self.polar_resolution), (360.0, self.azimuth_resolution)):
            steps = span / res if res > 0 else math.nan
            if not res > 0 or abs(steps - round(steps)) > 1e-9:
                raise SensorError("resolutions must divide the angular ranges")
        if self.max_range <= 0:
            raise SensorError("max range must be positive")

    def grid(self):
        pol = np.deg2rad(np.arange(round(180.0 / self.polar_resolution) + 1)
                         * self.polar_resolution)
        azi = np.deg2rad(np.arange(round(360.0 / self.azimuth_resolution))
                         * self.azimuth_resolution)
        return pol, azi


@dataclass
class ScanFrame:
    """Scan taken from ``x``; ``ranges`` has the shape of the angular grid."""

    x: np.ndarray
    angles: tuple          # (psi,) in 2D, (polar, azimuth) in 3D, radians
    directions: np.ndarray  # grid shape + (n,)
    ranges: np.ndarray
    max_range: float

    @property
    def hits(self) -> np.ndarray:
        return self.ranges < self.max_range

    @property
    def points(self) -> np.ndarray:
        return self.x + self.ranges[..., None] * self.directions


@dataclass
class DetectedArc:
    """Returns attributed to one obstacle.

    ``points`` are ordered by scan angle (2D) or grid order (3D).
    ``c_plus``/``c_minus`` are the arc ends (2D); ``rim`` holds the cap
    boundary (3D). ``nearest`` is the return closest to the robot.
    """

    points: np.ndarray
    c_plus: np.ndarray | None
    c_minus: np.ndarray | None
    nearest: np.ndarray
    nearest_index: int
    rim: np.ndarray | None = None
    symmetric: bool = False
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _first_hits(x, directions, centers, radii, max_range):
    """Nearest ray-sphere intersection along each unit direction."""
    x = np.asarray(x, dtype=float)
    out = np.full(directions.shape[:-1], float(max_range))
    for c, r in zip(np.asarray(centers, dtype=float), np.asarray(radii, dtype=float)):
        f = x - c
        b = directions @ f
        q = float(f @ f) - r * r
        disc = b * b - q
        ok = (disc >= -1e-12) & (b < 0)
        s = -b - np.sqrt(np.maximum(disc, 0.0))
        s = np.where(ok & (s >= 0), s, np.inf)
        out = np.minimum(out, s)
    return out


def scan_2d(x, ws, cfg: ScanConfig2D = ScanConfig2D()) -> ScanFrame:
    """Full-circle range scan of the obstacles of ``ws`` (anything with
    ``centers`` and ``radii``) from ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise SensorError("scan_2d needs a planar position")
    psi = cfg.angles()
    dirs = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    rng = _first_hits(x, dirs, ws.centers, ws.radii, cfg.max_range)
    return ScanFrame(x, (psi,), dirs, rng, cfg.max_range)


def scan_3d(x, ws, cfg: ScanConfig3D = ScanConfig3D()) -> ScanFrame:
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise SensorError("scan_3d needs a 3D position")
    pol, azi = cfg.grid()
    P, A = np.meshgrid(pol, azi, indexing="ij")
    dirs = np.stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), np.cos(P)], axis=-1)
    rng = _first_hits(x, dirs, ws.centers, ws.radii, cfg.max_range)
    return ScanFrame(x, (pol, azi), dirs, rng, cfg.max_range)


def split_threshold(rho, step: float, factor: float = SPLIT_FACTOR):
    """Largest range change allowed between neighbouring beams of one obstacle.

    Near a tangent the range of a sphere changes like the square root of the
    angular offset, so the bound scales with ``sqrt(step)`` rather than with
    the beam spacing ``rho * step``.
    """
    return factor * np.asarray(rho) * math.sqrt(2.0 * step)


def _arc_from(frame: ScanFrame, idx: np.ndarray) -> DetectedArc:
    pts = frame.points.reshape(-1, frame.x.size)[idx]
    rng = frame.ranges.reshape(-1)[idx]
    i0 = int(np.argmin(rng))
    return DetectedArc(pts, pts[0], pts[-1], pts[i0], i0, indices=idx)


def segment_returns(frame: ScanFrame, factor: float = SPLIT_FACTOR,
                    s_tol: float = S_TOL) -> list[DetectedArc]:
    """Group sub-range returns into arcs (2D) or caps (3D) and flag symmetry."""
    if frame.x.size == 2:
        arcs = _segment_2d(frame, factor)
    else:
        arcs = _segment_3d(frame, factor)
    for a in arcs:
        a.symmetric = symmetry_test(a, frame.x, s_tol)
    return arcs


def _segment_2d(frame: ScanFrame, factor: float) -> list[DetectedArc]:
    rng = frame.ranges
    hit = frame.hits
    N = rng.size
    if not hit.any():
        return []
    step = 2 * math.pi / N
    nxt = np.roll(np.arange(N), -1)
    linked = hit & hit[nxt] & (np.abs(rng - rng[nxt]) <= split_threshold(
        np.minimum(rng, rng[nxt]), step, factor))
    if hit.all() and linked.all():
        return [_arc_from(frame, np.arange(N))]
    # start scanning just after a break so wrapped arcs stay contiguous
    start = int(np.flatnonzero(~linked)[0]) + 1
    order = (np.arange(N) + start) % N
    arcs, cur = [], []
    for i in order:
        if hit[i]:
            cur.append(i)
        if not linked[i]:
            if cur:
                arcs.append(_arc_from(frame, np.array(cur)))
            cur = []
    if cur:
        arcs.append(_arc_from(frame, np.array(cur)))
    return arcs


def _segment_3d(frame: ScanFrame, factor: float) -> list[DetectedArc]:
    rng = frame.ranges
    hit = frame.hits
    npol, nazi = rng.shape
    step = float(max(frame.angles[0][1] - frame.angles[0][0],
                     frame.angles[1][1] - frame.angles[1][0]))
    label = -np.ones(rng.shape, dtype=int)
    groups = []

    def neighbours(i, j):
        yield i, (j + 1) % nazi
        yield i, (j - 1) % nazi
        if i > 0:
            yield i - 1, j
        if i < npol - 1:
            yield i + 1, j
        if i == 0 or i == npol - 1:
            # pole rows collapse to a single direction
            for jj in range(0, nazi, max(1, nazi // 8)):
                yield i, jj

    for i0, j0 in zip(*np.nonzero(hit)):
        if label[i0, j0] >= 0:
            continue
        g = len(groups)
        label[i0, j0] = g
        members, rim = [], []
        queue = deque([(i0, j0)])
        while queue:
            i, j = queue.popleft()
            members.append((i, j))
            edge = False
            for a, b in neighbours(i, j):
                ok = hit[a, b] and abs(rng[a, b] - rng[i, j]) <= split_threshold(
                    min(rng[a, b], rng[i, j]), step, factor)
                if not ok:
                    edge = True
                    continue
                if label[a, b] < 0:
                    label[a, b] = g
                    queue.append((a, b))
            if edge:
                rim.append((i, j))
        groups.append((members, rim))

    arcs = []
    flat_pts = frame.points.reshape(-1, 3)
    for members, rim in groups:
        idx = np.array([i * nazi + j for i, j in members])
        arc = _arc_from(frame, idx)
        ridx = np.array([i * nazi + j for i, j in rim], dtype=int)
        arc.rim = flat_pts[ridx] if ridx.size else np.zeros((0, 3))
        arc.c_plus = arc.c_minus = None
        arcs.append(arc)
    return arcs


def _base_circle(rim: np.ndarray):
    """Center and radius of the circle through the rim returns.

    Fitted in the least-squares plane of the rim (algebraic circle fit), so
    the uneven density of a polar grid does not bias the center.
    """
    m0 = rim.mean(axis=0)
    _, _, vt = np.linalg.svd(rim - m0)
    uv = (rim - m0) @ vt[:2].T
    A = np.column_stack([2 * uv, np.ones(len(uv))])
    sol, *_ = np.linalg.lstsq(A, (uv ** 2).sum(axis=1), rcond=None)
    ctr = sol[:2]
    rad = math.sqrt(max(0.0, float(sol[2] + ctr @ ctr)))
    return m0 + ctr @ vt[:2], rad


def symmetry_test(arc: DetectedArc, x, s_tol: float = S_TOL) -> bool:
    """Whether the arc is centred on its nearest return.

    2D arcs pass when the two end distances agree within ``s_tol`` relative or
    when the beam counts on both sides differ by at most one (quantization of
    grazing end beams). 3D caps pass when the base circle's centre lies within
    ``s_tol`` base radii of the line from ``x`` through the nearest return.
    """
    if len(arc.points) < 3:
        return False
    x = np.asarray(x, dtype=float)
    if arc.rim is not None:
        if len(arc.rim) < 3:
            return False
        m, a = _base_circle(arc.rim)
        if a <= 0:
            return False
        d = arc.nearest - x
        d = d / norm(d)
        off = (m - x) - ((m - x) @ d) * d
        return bool(norm(off) <= s_tol * a)
    dp = float(norm(arc.c_plus - arc.nearest))
    dm = float(norm(arc.c_minus - arc.nearest))
    left, right = arc.nearest_index, len(arc.points) - 1 - arc.nearest_index
    if min(left, right) < 1:
        return False
    return abs(dp - dm) <= s_tol * max(dp, dm) or abs(left - right) <= 1


def chord_sagitta_radius(a: float, b: float) -> float:
    """Radius from the half chord ``a`` and the apex-to-end distance ``b``."""
    if not b * b > a * a:
        raise SensorError("degenerate arc: apex distance does not exceed half chord")
    return b * b / (2.0 * math.sqrt(b * b - a * a))


def _extrapolate(nearest, x, r):
    d = nearest - x
    return nearest + r * d / norm(d)


def reconstruct_2d(arc: DetectedArc, x, trim: int = 1):
    """Circle ``(center, radius)`` from a symmetric 2D arc.

    The arc is cut to a window symmetric about the nearest return; ``trim``
    extra beams are dropped from each end because grazing end beams carry the
    largest range error. Returns ``None`` when the arc is too short.
    """
    x = np.asarray(x, dtype=float)
    i0 = arc.nearest_index
    w = min(i0, len(arc.points) - 1 - i0)
    if w - trim >= 1:
        w -= trim
    if w < 1:
        return None
    cp, cm = arc.points[i0 - w], arc.points[i0 + w]
    a = 0.5 * float(norm(cp - cm))
    b = 0.5 * (float(norm(cp - arc.nearest)) + float(norm(cm - arc.nearest)))
    try:
        r = chord_sagitta_radius(a, b)
    except SensorError:
        return None
    return _extrapolate(arc.nearest, x, r), r


def reconstruct_3d(arc: DetectedArc, x):
    """Sphere ``(center, radius)`` from a symmetric cap; ``None`` on failure.

    ``a`` is the radius of the circle fitted to the rim and the sagitta is
    the distance from the nearest return to the rim plane, so
    ``b^2 = a^2 + h^2``. The center lies on the rim circle's axis.
    """
    x = np.asarray(x, dtype=float)
    if arc.rim is None or len(arc.rim) < 3:
        return None
    if norm(arc.rim - arc.nearest).min() == 0.0:
        return None  # a single ring: the apex is on the rim
    m, a = _base_circle(arc.rim)
    nrm = np.linalg.svd(arc.rim - arc.rim.mean(axis=0))[2][2]
    if nrm @ (m - x) < 0:
        nrm = -nrm
    h = float(nrm @ (m - arc.nearest))
    if not h > 0:
        return None
    try:
        r = chord_sagitta_radius(a, math.sqrt(a * a + h * h))
    except SensorError:
        return None
    return m + (r - h) * nrm, r


def apply_margin_and_range(detections, e_s: float = DEFAULT_MARGIN):
    """Dilate reconstructed obstacles by the safety margin ``e_s``.

    Raises ``SensorError`` when two estimates are closer than ``2 e_s`` so the
    dilated balls would touch. Active ranges are derived later against both the
    hidden-obstacle clearance and the sensor range.
    """
    if e_s < 0:
        raise SensorError("safety margin must be nonnegative")
    det = [(np.asarray(c, dtype=float), float(r)) for c, r in detections]
    for i in range(len(det)):
        for j in range(i + 1, len(det)):
            gap = float(norm(det[i][0] - det[j][0])) - det[i][1] - det[j][1]
            if gap <= 2 * e_s:
                raise SensorError(f"estimates {i} and {j} are {gap:.3g} m apart, "
                                  f"below twice the margin")
    return [(c, r + e_s) for c, r in det]


def perceive(x, world, scan_cfg, s_tol: float = S_TOL, factor: float = SPLIT_FACTOR):
    """Scan, segment and reconstruct; returns ``[(center, radius), ...]``."""
    if np.asarray(x).size == 2:
        frame = scan_2d(x, world, scan_cfg)
        recon = reconstruct_2d
    else:
        frame = scan_3d(x, world, scan_cfg)
        recon = reconstruct_3d
    out = []
    for arc in segment_returns(frame, factor, s_tol):
        if not arc.symmetric:
            continue
        est = recon(arc, frame.x)
        if est is not None:
            out.append(est)
    return out


class ObstacleTracker:
    """Keeps obstacle labels stable across scan cycles.

    A detection inherits the label of the nearest previous estimate whose
    center lies within half of that estimate's radius; otherwise it gets a
    fresh label.
    """

    def __init__(self):
        self.tracks: dict[int, tuple[np.ndarray, float]] = {}
        self._next = 0

    def update(self, detections) -> dict[int, tuple[np.ndarray, float]]:
        new: dict[int, tuple[np.ndarray, float]] = {}
        free = dict(self.tracks)
        for c, r in detections:
            best, best_d = None, math.inf
            for lab, (tc, tr) in free.items():
                d = float(norm(c - tc))
                if d <= 0.5 * tr and d < best_d:
                    best, best_d = lab, d
            if best is None:
                best = self._next
                self._next += 1
            else:
                del free[best]
            new[best] = (np.asarray(c, dtype=float), float(r))
        self.tracks = new
        return new
