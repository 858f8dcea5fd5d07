"""Samplers shared by the controller and acceptance tests."""
import math

import numpy as np

from hybridnav.geometry import angle_between


def shadow_samples(ctrl, k, m, count, rng, region="flow"):
    """Random points of the avoidance flow set (or its active region) of ``(k, m)``."""
    o = ctrl.ws.obstacle(k)
    n = ctrl.ws.dimension
    out = []
    while len(out) < count:
        d = rng.normal(size=(4 * count, n))
        d /= np.linalg.norm(d, axis=1)[:, None]
        rho = o.radius + rng.uniform(0, o.active_range, size=(4 * count, 1))
        q = o.center + rho * d
        if region == "flow":
            keep = ctrl.in_Fkm(q, k, m, tol=0.0)
        else:
            xm = ctrl.virtual_destinations(k).point(m)
            keep = np.all(ctrl.ws.active_margins(q, k, xm) > 0, axis=1)
        out.extend(q[keep])
    return np.array(out[:count])



def best_parallel_direction(x, c, th, target_dir, count=10_000):
    """Brute-force argmin of the angle to ``target_dir`` over unit vectors at angle ``th``
    from ``c - x``."""
    a = (c - x) / np.linalg.norm(c - x)
    n = a.size
    if n == 2:
        cands = np.array([math.cos(th) * a + math.sin(th) * s * np.array([-a[1], a[0]])
                          for s in (-1, 1)])
    else:
        basis = np.linalg.svd(a[None, :])[2][1:]
        phi = 2 * np.pi * np.arange(count) / count
        ring = np.cos(phi)[:, None] * basis[0] + np.sin(phi)[:, None] * basis[1]
        cands = math.cos(th) * a + math.sin(th) * ring
    ang = angle_between(cands, np.broadcast_to(target_dir, cands.shape))
    return cands[int(np.argmin(ang))]
