import json
import math

import numpy as np
import pytest

from hybridnav.executor import run
from hybridnav.metrics import (Metrics, compute_metrics, flow_control_steps, path_length,
                               planarity_residuals, rld)
from hybridnav.world import Workspace, build_workspace


def test_straight_run_length():
    ws = Workspace((), np.zeros(2))
    x0 = np.array([1.01, 0.0])
    res = run(ws, x0)
    u_max = 1.5 * np.linalg.norm(x0)
    assert path_length(res.trajectory) == pytest.approx(1.0, abs=1e-3 * u_max)


def test_stationary_and_short():
    assert path_length(np.ones((5, 3))) == 0.0
    assert path_length(np.zeros((1, 2))) == 0.0


def test_arc_length():
    r, span = 1.7, 2.1
    a = np.linspace(0, span, 2001)
    pts = r * np.stack([np.cos(a), np.sin(a)], axis=1)
    assert path_length(pts) == pytest.approx(r * span, rel=1e-3)


def test_rld():
    assert rld(11.0, 10.0) == pytest.approx(10.0)
    assert rld(10.0, 10.0) == 0.0


def test_metrics_record_round_trip():
    ws = build_workspace([[2, 0]], [1.0], [0, 0])
    x0 = [4.5, 0.4]
    res = run(ws, x0)
    met = compute_metrics(res, x0, ws.target)
    assert met.activations == {0: 1}
    assert met.path_length >= met.straight_length - 1e-2
    back = Metrics.from_record(json.loads(met.dumps()))
    assert back == met
    assert met.max_jump_gap <= 1e-8 * 1.5 * (1 + np.linalg.norm(x0))
    assert met.max_flow_step == pytest.approx(flow_control_steps(res.trajectory).max())


def test_planarity_residual_flags_off_plane_motion():
    ws = build_workspace([[2, 0, 0]], [1.0], [0, 0, 0])
    x0 = [4.0, 0.3, 0.5]
    good = planarity_residuals(run(ws, x0).trajectory)
    bad = planarity_residuals(run(ws, x0, vd_plane="fixed").trajectory)
    assert max(good) <= 1e-6
    assert max(bad) > 1e-3
    assert not math.isnan(max(bad))
