"""Hybrid feedback law: virtual destinations, avoidance field and jump maps.

The hybrid state is ``(x, k, m)``: position, selected obstacle label and mode
(``0`` heads straight for the target, ``+1`` / ``-1`` steer around obstacle
``k`` toward one of its two virtual destinations).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import TAU_CONE, PlaneSpan, cone_margin, norm, segment_hits_ball
from .world import ParameterError, Workspace, vd_distance_bound

MODE_MAPS = ("zeno_free", "original")
CHOICE_MAPS = ("continuity", "original")
VD_PLANES = ("entry", "fixed")


class ContractError(RuntimeError):
    """A controller operation was called outside its precondition."""


@dataclass(frozen=True)
class HybridState:
    """Hybrid state with its hybrid time ``(t, j)``.

    ``armed`` marks that the currently selected obstacle has not been avoided
    yet, so entering its active region still triggers an activation. Without
    it the initial selection would mask the first obstacle on the way.
    """

    x: np.ndarray
    k: int | None
    m: int = 0
    t: float = 0.0
    j: int = 0
    armed: bool = True

    def __post_init__(self):
        if self.m not in (-1, 0, 1):
            raise ValueError("mode must be -1, 0 or 1")
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))


@dataclass(frozen=True)
class VirtualDestinations:
    """The pair of virtual destinations of one obstacle."""

    x1: np.ndarray
    x_neg1: np.ndarray
    e: float
    v1: np.ndarray
    v_neg1: np.ndarray
    plane: PlaneSpan
    aperture: float

    def point(self, m: int) -> np.ndarray:
        return self.x1 if m == 1 else self.x_neg1

    def axis(self, m: int) -> np.ndarray:
        return self.v1 if m == 1 else self.v_neg1


def nominal_control(x, target, gamma: float) -> np.ndarray:
    """Proportional field ``-gamma (x - target)``."""
    return -gamma * (np.asarray(x, dtype=float) - target)


def degenerate_direction(axis) -> np.ndarray:
    """Canonical basis vector least aligned with ``axis`` (first on ties)."""
    axis = np.asarray(axis, dtype=float)
    e = np.zeros_like(axis)
    e[int(np.argmin(np.abs(axis)))] = 1.0
    return e


def select_virtual_destinations(ws: Workspace, k: int, entry, *, direction=None
                                ) -> VirtualDestinations:
    """Virtual destinations of obstacle ``k`` in the plane through the entry.

    The plane contains the target, the obstacle center and ``entry``; ``x1``
    lies on the same side of the target-center line as ``entry``. When the
    entry lies on that line (or ``direction`` overrides it), the canonical
    basis vector least aligned with the axis spans the plane.
    """
    o = ws.obstacle(k)
    xd = ws.target
    axis = o.center - xd
    D = float(norm(axis))
    a = axis / D
    e = o.vd_distance
    e_max, _ = vd_distance_bound(xd, o.center, o.radius)
    if not 0 < e <= e_max * (1 + 1e-12):
        raise ParameterError(f"virtual-destination distance {e:g} exceeds {e_max:g}")
    y = np.asarray(entry if direction is None else xd + np.asarray(direction, float), float)
    w = (y - xd) - ((y - xd) @ a) * a
    if norm(w) <= 1e-9 * max(1.0, float(norm(y - xd))):
        y = xd + degenerate_direction(axis)
        w = (y - xd) - ((y - xd) @ a) * a
    w = w / norm(w)
    s = o.radius / D
    c = math.sqrt(1.0 - s * s)
    x1 = xd + e * (c * a + s * w)
    xm1 = xd + e * (c * a - s * w)
    return VirtualDestinations(x1, xm1, e, o.center - x1, o.center - xm1,
                               PlaneSpan(xd, axis, w), o.aperture)


def aperture(psi: float, c_phi: float = 0.9) -> float:
    """Equilibria-cone aperture for opening angle ``psi`` between the VD axes."""
    from .world import aperture_from_opening
    return aperture_from_opening(psi, c_phi)


def alpha_value(dist: float, rbar: float, eps: float) -> float:
    """Piecewise-linear blend on the distance to the obstacle surface."""
    if dist < rbar - eps:
        return 1.0
    if dist > rbar:
        return 0.0
    return (rbar - dist) / eps


def avoidance_terms(x, c, r, xm, gamma):
    """Return ``(kappa_bar, theta, beta, tau, kappa)`` at ``x``."""
    d = c - x
    dist = math.sqrt(float(d @ d))
    kb = gamma * (xm - x)
    nk = math.sqrt(float(kb @ kb))
    if nk == 0.0:
        raise ContractError("avoidance field is singular at the virtual destination")
    th = math.asin(min(1.0, r / dist))
    cb = float(d @ kb) / (dist * nk)
    be = math.acos(max(-1.0, min(1.0, cb)))
    ta = nk * math.sin(th - be) / math.sin(th)
    return kb, th, be, ta, kb - (ta / dist) * d


def avoidance_control(x, c, r, xm, e, gamma, rbar, eps, target) -> np.ndarray:
    """Blended avoidance control for a single point."""
    kb, th, be, ta, kap = avoidance_terms(x, c, r, xm, gamma)
    dx = x - xm
    mu = 1.0 + e / math.sqrt(float(dx @ dx)) * be / th
    dc = x - c
    al = alpha_value(math.sqrt(float(dc @ dc)) - r, rbar, eps)
    ud = gamma * (target - x)
    if al == 0.0:
        return ud
    if al == 1.0:
        return mu * kap
    return (al * mu) * kap + (1.0 - al) * ud


class HybridController:
    """Hybrid controller over a fixed workspace.

    Parameters
    ----------
    ws : Workspace
    mode_map : ``"zeno_free"`` (default) or ``"original"``.
    choice_map : ``"continuity"`` picks the nearest virtual destination inside
        the hysteresis region (default); ``"original"`` picks ``+1`` there.
    vd_plane : ``"entry"`` puts the virtual destinations in the plane through
        the entry point (default); ``"fixed"`` always uses the canonical
        direction, which breaks planarity on purpose.
    """

    def __init__(self, ws: Workspace, *, mode_map: str = "zeno_free",
                 choice_map: str = "continuity", vd_plane: str = "entry"):
        if mode_map not in MODE_MAPS:
            raise ValueError(f"mode_map must be one of {MODE_MAPS}")
        if choice_map not in CHOICE_MAPS:
            raise ValueError(f"choice_map must be one of {CHOICE_MAPS}")
        if vd_plane not in VD_PLANES:
            raise ValueError(f"vd_plane must be one of {VD_PLANES}")
        self.ws = ws
        self.mode_map = mode_map
        self.choice_map = choice_map
        self.vd_plane = vd_plane
        self.vds: dict[int, VirtualDestinations] = {}
        self._pack()

    def _pack(self):
        ws = self.ws
        b = len(ws)
        self._labels = ws.labels
        self._C = ws.centers
        self._R = ws.radii
        self._RB = np.array([o.active_range for o in ws.obstacles]).reshape(b)
        self._A = self._C - ws.target
        D = norm(self._A) if b else np.zeros(0)
        self._NA = D
        self._COS = np.sqrt(np.maximum(0.0, 1.0 - (self._R / np.where(D > 0, D, 1.0)) ** 2))

    # -- virtual destinations -------------------------------------------------
    def virtual_destinations(self, k: int) -> VirtualDestinations:
        try:
            return self.vds[k]
        except KeyError:
            raise ContractError(f"no virtual destinations selected for obstacle {k}") from None

    def select(self, k: int, entry) -> VirtualDestinations:
        direction = degenerate_direction(self.ws.obstacle(k).center - self.ws.target) \
            if self.vd_plane == "fixed" else None
        vd = select_virtual_destinations(self.ws, k, entry, direction=direction)
        self.vds[k] = vd
        return vd

    def aperture(self, k: int) -> float:
        return self.ws.obstacle(k).aperture

    # -- control pieces -----------------------------------------------------
    def nominal_control(self, x) -> np.ndarray:
        return nominal_control(x, self.ws.target, self.ws.gamma)

    def _terms(self, x, k, m):
        if m not in (-1, 1):
            raise ContractError("avoidance terms need m in {-1, 1}")
        o = self.ws.obstacle(k)
        xm = self.virtual_destinations(k).point(m)
        return avoidance_terms(np.asarray(x, dtype=float), o.center, o.radius, xm,
                               self.ws.gamma)

    def kappa_bar(self, x, k, m):
        return self._terms(x, k, m)[0]

    def beta(self, x, k, m):
        return self._terms(x, k, m)[2]

    def tau(self, x, k, m):
        return self._terms(x, k, m)[3]

    def kappa(self, x, k, m):
        return self._terms(x, k, m)[4]

    def mu(self, x, k, m):
        _, th, be, _, _ = self._terms(x, k, m)
        xm = self.virtual_destinations(k).point(m)
        return 1.0 + self.virtual_destinations(k).e / float(norm(x - xm)) * be / th

    def alpha(self, x, k):
        o = self.ws.obstacle(k)
        return alpha_value(float(norm(np.asarray(x) - o.center)) - o.radius,
                           o.active_range, self.ws.epsilon)

    def control(self, x, k, m) -> np.ndarray:
        """Hybrid control ``m^2 alpha mu kappa + (1 - m^2 alpha) u_d``."""
        x = np.asarray(x, dtype=float)
        if m == 0:
            return self.ws.gamma * (self.ws.target - x)
        o = self.ws.obstacle(k)
        vd = self.virtual_destinations(k)
        return avoidance_control(x, o.center, o.radius, vd.point(m), vd.e, self.ws.gamma,
                                 o.active_range, self.ws.epsilon, self.ws.target)

    # -- flow and jump sets -------------------------------------------------
    def avoid_margins(self, x, k, m) -> np.ndarray:
        """Margins ``(cone, far side, shell, equilibria cone)`` of the avoidance flow set.

        All four are nonnegative exactly on the flow set of mode ``m``.
        """
        o = self.ws.obstacle(k)
        vd = self.virtual_destinations(k)
        base = self.ws.active_margins(x, k, vd.point(m), o.vd_active_range)
        eq = -cone_margin(x, o.center, vd.axis(m), vd.aperture)
        return np.concatenate([base, np.asarray(eq)[..., None]], axis=-1)

    def in_Fkm(self, x, k, m, tol=TAU_CONE):
        return np.all(self.avoid_margins(x, k, m) >= -tol, axis=-1) & \
            self.ws.in_free_space(x, tol)

    def in_Jkm(self, x, k, m, tol=TAU_CONE):
        return np.any(self.avoid_margins(x, k, m) <= tol, axis=-1) & \
            self.ws.in_free_space(x, tol)

    def in_Fk0(self, x, k, tol=TAU_CONE):
        return np.any(self.ws.active_margins(x, k) <= tol, axis=-1) & \
            self.ws.in_free_space(x, tol)

    def in_Jk0(self, x, k, tol=TAU_CONE):
        return np.all(self.ws.active_margins(x, k) >= -tol, axis=-1) & \
            self.ws.in_free_space(x, tol)

    def in_F0(self, x, tol=TAU_CONE):
        x = np.asarray(x, dtype=float)
        out = self.ws.in_free_space(x, tol)
        for k in self._labels:
            out = out & self.in_Fk0(x, k, tol)
        return out

    def in_J0(self, x, tol=TAU_CONE):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for k in self._labels:
            out = out | self.in_Jk0(x, k, tol)
        return out

    def leaves_flow(self, x, k, m) -> bool:
        """Exact test used for event location: ``x`` is outside the avoidance flow set.

        Behind the far-side cut, lying in the cone from ``x^m`` is equivalent
        to ``beta <= theta`` seen from ``x``. That form has a simple root where
        trajectories touch the exit set (the cone form has a double one), and
        it is the quantity that controls the control mismatch at the jump.
        """
        o = self.ws.obstacle(k)
        vd = self.virtual_destinations(k)
        xm = vd.point(m)
        c = o.center
        d = x - c
        dist = math.sqrt(float(d @ d))
        if o.radius + o.vd_active_range - dist < 0.0:
            return True
        dx = c - x
        if float(dx @ (xm - x)) < 0.0:
            return True
        v = vd.axis(m)
        nv = math.sqrt(float(v @ v))
        if nv * dist * math.cos(vd.aperture) - float(v @ d) < 0.0:
            return True
        kb = xm - x
        nk = math.sqrt(float(kb @ kb))
        th = math.asin(min(1.0, o.radius / dist))
        be = math.acos(max(-1.0, min(1.0, float(dx @ kb) / (dist * nk))))
        return th - be < 0.0

    def activation_candidates(self, x, k=None, armed=True, tol: float = 0.0) -> list[int]:
        """Labels ``k'`` with ``x`` in the target active region, nearest first.

        The currently selected ``k`` is skipped unless ``armed``. ``tol=0``
        gives the exact test used to locate events.
        """
        if not self._labels:
            return []
        d = x - self._C
        dist = np.sqrt(np.einsum("ij,ij->i", d, d))
        shell = self._R + self._RB - dist
        idx = np.flatnonzero(shell >= -tol)
        out = []
        for i in idx:
            lab = self._labels[i]
            if lab == k and not armed:
                continue
            q = x - self.ws.target
            nq = math.sqrt(float(q @ q))
            cone = float(self._A[i] @ q) - self._NA[i] * nq * self._COS[i]
            cut = float((-d[i]) @ (-q))
            if cone >= -tol and cut >= -tol:
                out.append((dist[i] - self._R[i], lab))
        return [lab for _, lab in sorted(out)]

    # -- jump maps ------------------------------------------------------------
    def choose_mode(self, x, k) -> int:
        """Mode assigned on activation; virtual destinations must be selected."""
        o = self.ws.obstacle(k)
        vd = self.virtual_destinations(k)
        d = np.asarray(x, dtype=float) - o.center
        in1 = cone_margin(x, o.center, vd.v1, vd.aperture) > 0.0
        in_1 = cone_margin(x, o.center, vd.v_neg1, vd.aperture) > 0.0
        if in_1 and not in1:
            return 1
        if in1 and not in_1:
            return -1
        if self.choice_map == "original":
            return 1
        side = float((vd.x_neg1 - vd.x1) @ d)
        return -1 if side > 0.0 else 1

    def activate(self, state: HybridState, k: int) -> HybridState:
        self.select(k, state.x)
        return HybridState(state.x, k, self.choose_mode(state.x, k), state.t, state.j + 1,
                           armed=False)

    def deactivate(self, state: HybridState) -> HybridState:
        return HybridState(state.x, state.k, 0, state.t, state.j + 1, armed=False)

    def needs_jump(self, state: HybridState, tol: float = TAU_CONE) -> bool:
        """Whether ``state`` must jump under the configured maps."""
        x = state.x
        if state.m != 0:
            if self.mode_map == "original":
                return bool(self.in_Jkm(x, state.k, state.m, tol))
            return self.leaves_flow(x, state.k, state.m)
        if self.mode_map == "original":
            return bool(self.activation_candidates(x, None, True, tol))
        return bool(self.activation_candidates(x, state.k, state.armed, 0.0))

    def jump(self, state: HybridState, tol: float = TAU_CONE) -> HybridState:
        """Apply one jump of the configured maps to ``state``.

        Raises ``ContractError`` when ``state`` is not in the jump set.
        """
        x = state.x
        if state.m != 0:
            if not self.in_Jkm(x, state.k, state.m, tol):
                raise ContractError("state is not in the avoidance jump set")
            return self.deactivate(state)
        if self.mode_map == "original":
            cands = self.activation_candidates(x, None, True, tol)
        else:
            cands = self.activation_candidates(x, state.k, state.armed, tol)
        if not cands:
            if self.mode_map == "zeno_free" and self.in_J0(x, tol):
                return state  # same obstacle, already handled
            raise ContractError("state is not in the jump set")
        return self.activate(state, cands[0])

    # -- initialization -------------------------------------------------------
    def initial_obstacle(self, x0) -> int:
        """Nearest obstacle blocking the segment to the target (else the nearest)."""
        if not self._labels:
            raise IndexError("empty workspace")
        x0 = np.asarray(x0, dtype=float)
        dist = norm(x0 - self._C) - self._R
        block = [i for i in range(len(self._labels))
                 if segment_hits_ball(x0, self.ws.target, self._C[i], self._R[i])]
        pool = block if block else range(len(self._labels))
        return self._labels[min(pool, key=lambda i: (dist[i], i))]

    def initial_state(self, x0) -> HybridState:
        """Initial hybrid state.

        A start inside some target active region begins in avoidance mode for
        the nearest such obstacle; otherwise it starts in mode 0 with the
        initial obstacle armed.
        """
        x0 = np.asarray(x0, dtype=float)
        if not self._labels:
            return HybridState(x0, None, 0)
        cands = self.activation_candidates(x0, None, True, 0.0)
        if cands:
            k = cands[0]
            self.select(k, x0)
            return HybridState(x0, k, self.choose_mode(x0, k), armed=False)
        return HybridState(x0, self.initial_obstacle(x0), 0, armed=True)
