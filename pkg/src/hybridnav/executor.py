"""Hybrid-system runner.

Flows are integrated with fixed-step RK4. When a step crosses into a region
where the hybrid maps require a jump, the crossing is located by bisection on
the step fraction, the state is moved to the crossing and the jump is applied
there. Jumps repeat until the state can flow again.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .controller import HybridController, HybridState
from .diffdrive import DriveParams, UnicycleState, adapt, unicycle_step
from .geometry import PlaneSpan, snap_to_sphere
from .sensor import (DEFAULT_MARGIN, ObstacleTracker, ScanConfig2D, ScanConfig3D,
                     SensorError, apply_margin_and_range, perceive)
from .world import Workspace, build_workspace, dilate

BISECTION_STEPS = 52
SURFACE_BAND = 1e-12

CONVERGED = "converged"
TIMEOUT = "timeout"
SAFETY_FAULT = "safety_fault"
ZENO_FAULT = "zeno_fault"


@dataclass(frozen=True)
class RunConfig:
    """Integration and stopping settings.

    ``jump_budget=None`` uses ``2 b + 2`` for a known map and 100 for
    sensor-based runs, where the number of perceived obstacles is not known
    in advance.

    ``dilation`` grows every obstacle seen by the controller; ``body_radius``
    is the robot's own radius, so safety and the recorded clearance refer to
    the robot's disc against the true obstacles.
    """

    dt: float = 1e-3
    t_max: float = 60.0
    e_c: float = 1e-2
    jump_budget: int | None = None
    mode: str = "known-map"
    kinematics: str = "single-integrator"
    scan: ScanConfig2D | ScanConfig3D | None = None
    margin: float = DEFAULT_MARGIN
    drive: DriveParams | None = None
    heading: float = 0.0
    dilation: float = 0.0
    body_radius: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.e_c > 0:
            raise ValueError("e_c must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.mode not in ("known-map", "sensor-based"):
            raise ValueError("mode must be 'known-map' or 'sensor-based'")
        if self.kinematics not in ("single-integrator", "unicycle"):
            raise ValueError("kinematics must be 'single-integrator' or 'unicycle'")
        if not 0.0 <= self.body_radius <= self.dilation:
            raise ValueError("need 0 <= body_radius <= dilation")


@dataclass
class Switch:
    t: float
    j: int
    x: np.ndarray
    k_from: int | None
    k_to: int | None
    m_from: int
    m_to: int
    u_before: np.ndarray
    u_after: np.ndarray
    plane: PlaneSpan | None = None
    virtual_destination: np.ndarray | None = None


@dataclass
class Outcome:
    kind: str
    t: float
    j: int
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.kind == CONVERGED


@dataclass
class Trajectory:
    t: np.ndarray
    j: np.ndarray
    x: np.ndarray
    k: np.ndarray
    m: np.ndarray
    u: np.ndarray
    clearance: np.ndarray
    switches: list = field(default_factory=list)
    phi: np.ndarray | None = None
    v: np.ndarray | None = None
    omega: np.ndarray | None = None

    def __len__(self):
        return len(self.t)

    @property
    def activations(self) -> list[Switch]:
        return [s for s in self.switches if s.m_from == 0 and s.m_to != 0]

    def columns(self) -> list[str]:
        n = self.x.shape[1]
        cols = ["t", "j"] + [f"x_{i + 1}" for i in range(n)] + ["k", "m"] \
            + [f"u_{i + 1}" for i in range(n)] + ["clearance"]
        if self.phi is not None:
            cols += ["phi", "v", "omega"]
        return cols

    def rows(self):
        extra = self.phi is not None
        for i in range(len(self.t)):
            row = [repr(float(self.t[i])), str(int(self.j[i]))]
            row += [repr(float(v)) for v in self.x[i]]
            row += [str(int(self.k[i])), str(int(self.m[i]))]
            row += [repr(float(v)) for v in self.u[i]]
            row.append(repr(float(self.clearance[i])))
            if extra:
                row += [repr(float(self.phi[i])), repr(float(self.v[i])),
                        repr(float(self.omega[i]))]
            yield row

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            w.writerows(self.rows())


@dataclass
class RunResult:
    trajectory: Trajectory
    outcome: Outcome
    controller: HybridController | None = None


def rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + (0.5 * h) * k1)
    k3 = f(x + (0.5 * h) * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _onto_surface(ctrl: HybridController, k: int, x, tol: float):
    """Undo sub-tolerance penetration of the avoided obstacle.

    The avoidance field reaches the sphere in finite time (its radial speed
    scales with the square root of the clearance), so RK4 can sink the state
    slightly below the surface while sliding. Such points, and points within
    rounding of the surface, are moved radially onto the sphere; deeper
    violations are left for the safety check. The field is only Hoelder
    continuous at the surface, so the snapped point is rounded inward until the
    enclosing-cone angle evaluates to exactly pi/2.
    """
    o = ctrl.ws.obstacle(k)
    d = x - o.center
    rho = math.sqrt(float(d @ d))
    r = o.radius
    if (rho < r and r - rho <= tol) or (r <= rho <= r * (1 + SURFACE_BAND)):
        return snap_to_sphere(x, o.center, r)
    return x


def event_at(ctrl: HybridController, state: HybridState, x) -> bool:
    """Exact test for a mandatory jump of ``state`` moved to ``x``."""
    if state.m != 0:
        return ctrl.leaves_flow(x, state.k, state.m)
    if ctrl.mode_map == "original":
        return bool(ctrl.activation_candidates(x, None, True, 0.0))
    return bool(ctrl.activation_candidates(x, state.k, state.armed, 0.0))


def transition(ctrl: HybridController, state: HybridState) -> HybridState | None:
    """Successor of ``state`` if it must jump, else ``None``.

    With the Zeno-free maps the tests are exact; the original maps use the
    closed (tolerant) jump sets and therefore also jump on boundaries.
    """
    if state.m != 0:
        if ctrl.mode_map == "original":
            return ctrl.deactivate(state) if ctrl.in_Jkm(state.x, state.k, state.m) else None
        return ctrl.deactivate(state) if ctrl.leaves_flow(state.x, state.k, state.m) else None
    if ctrl.mode_map == "original":
        cands = ctrl.activation_candidates(state.x, None, True, 1e-9)
    else:
        cands = ctrl.activation_candidates(state.x, state.k, state.armed, 0.0)
    return ctrl.activate(state, cands[0]) if cands else None


class _Recorder:
    def __init__(self, unicycle: bool):
        self.t, self.j, self.x, self.k, self.m, self.u, self.c = ([] for _ in range(7))
        self.unicycle = unicycle
        self.phi, self.v, self.w = [], [], []
        self.switches: list[Switch] = []

    def add(self, state, u, clearance, drive=None):
        self.t.append(state.t)
        self.j.append(state.j)
        self.x.append(state.x)
        self.k.append(-1 if state.k is None else state.k)
        self.m.append(state.m)
        self.u.append(u)
        self.c.append(clearance)
        if self.unicycle:
            phi, v, w = drive
            self.phi.append(phi)
            self.v.append(v)
            self.w.append(w)

    def build(self, n) -> Trajectory:
        tr = Trajectory(np.array(self.t), np.array(self.j, dtype=int),
                        np.array(self.x).reshape(-1, n), np.array(self.k, dtype=int),
                        np.array(self.m, dtype=int), np.array(self.u).reshape(-1, n),
                        np.array(self.c), self.switches)
        if self.unicycle:
            tr.phi, tr.v, tr.omega = np.array(self.phi), np.array(self.v), np.array(self.w)
        return tr


class _Perception:
    """Per-cycle obstacle estimates with stable labels."""

    def __init__(self, world: Workspace, cfg: RunConfig, ctrl_kwargs: dict):
        self.world = world
        n = world.dimension
        self.scan = cfg.scan or (ScanConfig2D() if n == 2 else ScanConfig3D())
        self.margin = cfg.margin + cfg.dilation
        self.tracker = ObstacleTracker()
        self.kwargs = ctrl_kwargs
        self.frozen = {}

    def controller(self, x, state: HybridState | None, prev: HybridController | None):
        dets = perceive(x, self.world, self.scan)
        try:
            dets = apply_margin_and_range(dets, self.margin)
        except SensorError:
            dets = [(c, r + self.margin) for c, r in dets]
        tracks = self.tracker.update(dets)
        keep = None
        if state is not None and state.m != 0 and prev is not None:
            # the obstacle being avoided keeps its geometry and destinations
            keep = prev.ws.obstacle(state.k)
            tracks = {lab: v for lab, v in tracks.items() if lab != state.k}
            self.tracker.tracks[state.k] = (keep.center, keep.radius)
        ws = self._workspace(tracks, keep)
        ctrl = HybridController(ws, **self.kwargs)
        if prev is not None:
            for lab, vd in prev.vds.items():
                if lab in ws._index and (keep is None or lab == keep.label):
                    ctrl.vds[lab] = vd
        return ctrl

    def _workspace(self, tracks, keep):
        target = self.world.target
        labs = sorted(tracks)
        entries = []
        for lab in labs:
            c, r = tracks[lab]
            if float(np.linalg.norm(target - c)) <= r:
                continue
            if keep is not None and np.linalg.norm(c - keep.center) <= r + keep.radius:
                continue
            entries.append((lab, c, r))
        # drop estimates that overlap an earlier one
        kept = []
        for lab, c, r in entries:
            if all(np.linalg.norm(c - c2) > r + r2 for _, c2, r2 in kept):
                kept.append((lab, c, r))
        extra = [] if keep is None else [(keep.label, keep.center, keep.radius)]
        allc = kept + extra
        if not allc:
            return Workspace((), target, gamma=self.world.gamma,
                             sensor_range=self.scan.max_range)
        ws = build_workspace([c for _, c, _ in allc], [r for _, _, r in allc], target,
                             gamma=self.world.gamma, sensor_range=self.scan.max_range,
                             labels=[lab for lab, _, _ in allc], samples=256)
        if keep is None:
            return ws
        obs = tuple(keep if o.label == keep.label else o for o in ws.obstacles)
        eps = min(o.active_range for o in obs) * 0.5
        return Workspace(obs, target, gamma=self.world.gamma, epsilon=eps,
                         sensor_range=self.scan.max_range)


class Simulator:
    """Closed-loop stepper; ``run`` drives it to an outcome.

    ``controller`` and ``state`` override the controller built from ``ws``
    and the initial state it would pick for ``x0``.
    """

    def __init__(self, ws: Workspace, x0, cfg: RunConfig = RunConfig(), *,
                 mode_map: str = "zeno_free", choice_map: str = "continuity",
                 vd_plane: str = "entry", controller: HybridController | None = None,
                 state: HybridState | None = None):
        x0 = np.asarray(x0, dtype=float)
        self.world, self.cfg = ws, cfg
        if cfg.dilation > 0:
            ws = dilate(ws, cfg.dilation)
        self.ws = ws
        kwargs = dict(mode_map=mode_map, choice_map=choice_map, vd_plane=vd_plane)
        self.unicycle = cfg.kinematics == "unicycle"
        if self.unicycle and ws.dimension != 2:
            raise ValueError("unicycle kinematics are planar")
        self.drive = cfg.drive or DriveParams()
        self.sensing = cfg.mode == "sensor-based"
        self.perception = _Perception(self.world, cfg, kwargs) if self.sensing else None
        if controller is not None:
            self.ctrl = controller
        elif self.sensing:
            self.ctrl = self.perception.controller(x0, None, None)
        else:
            self.ctrl = HybridController(ws, **kwargs)
        budget = cfg.jump_budget
        if budget is None:
            budget = 100 if self.sensing else 2 * len(ws) + 2
        self.budget = budget
        self.state = state if state is not None else self.ctrl.initial_state(x0)
        self.phi = cfg.heading
        self.u_max = 0.0
        self.jumps = 0
        self.rec = _Recorder(self.unicycle)
        self.outcome: Outcome | None = None

    def clearance(self, x) -> float:
        """Gap between the robot and the nearest true obstacle."""
        return float(self.world.clearance(x)) - self.cfg.body_radius

    def _cmd(self, u):
        return adapt(u, self.phi, self.drive) if self.unicycle else (0.0, 0.0)

    def step(self) -> Outcome | None:
        """Record the current sample, then jump once or flow one step.

        Returns the outcome once the run has ended, else ``None``.
        """
        if self.outcome is not None:
            return self.outcome
        ctrl, state, ws, cfg = self.ctrl, self.state, self.ws, self.cfg
        x = state.x
        u = ctrl.control(x, state.k, state.m)
        self.u_max = max(self.u_max, math.sqrt(float(u @ u)))
        cmd = self._cmd(u)
        self.rec.add(state, u, self.clearance(x), (self.phi, *cmd))
        nxt = transition(ctrl, state)
        if nxt is not None:
            self.jumps += 1
            u_after = ctrl.control(x, nxt.k, nxt.m)
            sw = Switch(state.t, state.j, x, state.k, nxt.k, state.m, nxt.m, u, u_after)
            if nxt.m != 0 and state.m == 0:
                vd = ctrl.virtual_destinations(nxt.k)
                sw.plane, sw.virtual_destination = vd.plane, vd.point(nxt.m)
            self.rec.switches.append(sw)
            self.state = nxt
            if self.jumps > self.budget:
                self.outcome = Outcome(ZENO_FAULT, nxt.t, nxt.j,
                                       f"jump budget {self.budget} exhausted")
            return self.outcome
        dist = float(np.linalg.norm(x - ws.target))
        if dist <= cfg.e_c:
            self.outcome = Outcome(CONVERGED, state.t, state.j)
            return self.outcome
        if state.t >= cfg.t_max:
            self.outcome = Outcome(TIMEOUT, state.t, state.j, f"distance {dist:.3g} m left")
            return self.outcome

        advance = self._advance(x, state.k, state.m, cmd)
        dt = cfg.dt
        h = dt
        x_new, phi_new = advance(h)
        if event_at(ctrl, state, x_new):
            lo, hi = 0.0, 1.0
            for _ in range(BISECTION_STEPS):
                mid = 0.5 * (lo + hi)
                if event_at(ctrl, state, advance(mid * dt)[0]):
                    hi = mid
                else:
                    lo = mid
            h = hi * dt
            x_new, phi_new = advance(h)
        self.phi = phi_new
        self.state = HybridState(x_new, state.k, state.m, state.t + h, state.j, state.armed)

        clear = self.clearance(x_new)
        if clear < -self.u_max * dt:
            u = ctrl.control(x_new, state.k, state.m)
            self.rec.add(self.state, u, clear, (self.phi, *self._cmd(u)))
            self.outcome = Outcome(SAFETY_FAULT, self.state.t, self.state.j,
                                   f"clearance {clear:.3g} m below tolerance")
            return self.outcome
        if self.sensing:
            self.ctrl = self.perception.controller(x_new, self.state, ctrl)
        return None

    def _advance(self, x, k, m, cmd):
        ctrl, phi = self.ctrl, self.phi
        if self.unicycle:
            v, w = cmd
            uni = UnicycleState(x, phi)

            def advance(h):
                s = unicycle_step(uni, v, w, h)
                return s.x, s.phi
            return advance
        if m == 0:
            gamma, target = self.ws.gamma, self.ws.target

            def advance(h):
                return rk4(lambda p: gamma * (target - p), x, h), phi
            return advance
        tol = self.u_max * self.cfg.dt

        def advance(h):
            return _onto_surface(ctrl, k, rk4(lambda p: ctrl.control(p, k, m), x, h), tol), phi
        return advance

    def run(self) -> RunResult:
        while self.step() is None:
            pass
        return RunResult(self.rec.build(self.ws.dimension), self.outcome, self.ctrl)


def run(ws: Workspace, x0, cfg: RunConfig = RunConfig(), *, mode_map: str = "zeno_free",
        choice_map: str = "continuity", vd_plane: str = "entry",
        controller: HybridController | None = None,
        state: HybridState | None = None) -> RunResult:
    """Simulate the closed loop from ``x0`` until convergence or a fault.

    In sensor-based mode ``ws`` is the ground truth: it is only scanned, and
    the controller works on the reconstructed, dilated obstacles.
    """
    return Simulator(ws, x0, cfg, mode_map=mode_map, choice_map=choice_map,
                     vd_plane=vd_plane, controller=controller, state=state).run()
