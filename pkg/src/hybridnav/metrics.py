"""Run metrics and trajectory audits."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import plane_distance


def path_length(traj) -> float:
    """Sum of distances between consecutive samples.

    Accepts a ``Trajectory`` or an array of positions of shape ``(N, n)``.
    """
    x = np.asarray(getattr(traj, "x", traj), dtype=float)
    if len(x) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(x, axis=0), axis=1).sum())


def rld(length: float, reference: float) -> float:
    """Relative length difference in percent, ``100 (L - l) / l``."""
    return 100.0 * (length - reference) / reference


def jump_control_gaps(traj) -> list[float]:
    """``|u(xi) - u(xi+)|`` at every recorded jump."""
    return [float(np.linalg.norm(s.u_after - s.u_before)) for s in traj.switches]


def flow_control_steps(traj) -> np.ndarray:
    """Control change between consecutive samples of the same flow interval."""
    same = np.diff(traj.j) == 0
    du = np.linalg.norm(np.diff(traj.u, axis=0), axis=1)
    return du[same]


def activations_per_obstacle(traj) -> dict[int, int]:
    return dict(Counter(int(s.k_to) for s in traj.activations))


def planarity_residuals(traj) -> list[float]:
    """Largest distance to the selected plane, per activation.

    Samples from an activation up to the next activation (or the end of the
    run) are checked against the plane of that activation.
    """
    starts = []
    for s in traj.activations:
        idx = np.flatnonzero((traj.t == s.t) & (traj.j == s.j + 1))
        starts.append((int(idx[0]) if idx.size else None, s.plane))
    out = []
    for i, (i0, plane) in enumerate(starts):
        if i0 is None or plane is None:
            continue
        i1 = next((p for p, _ in starts[i + 1:] if p is not None), len(traj.t))
        out.append(float(np.max(plane_distance(traj.x[i0:i1], plane))))
    return out


@dataclass
class Metrics:
    outcome: str
    t_final: float
    jumps: int
    path_length: float
    straight_length: float
    min_clearance: float
    switches: int
    activations: dict = field(default_factory=dict)
    max_jump_gap: float = 0.0
    max_flow_step: float = 0.0
    samples: int = 0

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["activations"] = {str(k): v for k, v in sorted(self.activations.items())}
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Metrics":
        rec = dict(rec)
        rec["activations"] = {int(k): v for k, v in rec.get("activations", {}).items()}
        return cls(**rec)

    def dumps(self) -> str:
        return json.dumps(self.to_record(), indent=2, sort_keys=True)


def compute_metrics(result, x0, target) -> Metrics:
    tr = result.trajectory
    gaps = jump_control_gaps(tr)
    steps = flow_control_steps(tr)
    return Metrics(
        outcome=result.outcome.kind,
        t_final=float(result.outcome.t),
        jumps=int(result.outcome.j),
        path_length=path_length(tr),
        straight_length=float(np.linalg.norm(np.asarray(x0) - target)),
        min_clearance=float(np.min(tr.clearance)) if len(tr) else math.inf,
        switches=len(tr.switches),
        activations=activations_per_obstacle(tr),
        max_jump_gap=max(gaps, default=0.0),
        max_flow_step=float(steps.max()) if steps.size else 0.0,
        samples=len(tr),
    )
