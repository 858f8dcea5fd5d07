"""scikit-learn style wrapper around the closed-loop simulator."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .executor import RunConfig, run
from .world import build_workspace


class HybridNavigator(BaseEstimator):
    """Navigate a point robot to a target among spherical obstacles.

    ``fit`` takes the obstacle table ``X`` of shape ``(b, n + 1)`` (center
    coordinates followed by the radius) and the target; ``predict`` simulates
    the closed loop from each row of ``X0`` and returns the final positions.

    Parameters
    ----------
    target : array_like of shape (n,), optional
        Target position; may also be passed to ``fit``.
    gamma : float, default=1.5
    c_phi : float, default=0.9
    dt, t_max, e_c : float
        Integration step, time limit and stop radius.
    mode_map : {"zeno_free", "original"}
    choice_map : {"continuity", "original"}
    """

    def __init__(self, target=None, gamma=1.5, c_phi=0.9, dt=1e-3, t_max=60.0,
                 e_c=1e-2, mode_map="zeno_free", choice_map="continuity"):
        self.target = target
        self.gamma = gamma
        self.c_phi = c_phi
        self.dt = dt
        self.t_max = t_max
        self.e_c = e_c
        self.mode_map = mode_map
        self.choice_map = choice_map

    def fit(self, X, y=None, target=None):
        X = check_array(X, ensure_min_samples=0)
        target = self.target if target is None else target
        if target is None:
            raise ValueError("a target position is required")
        target = np.asarray(target, dtype=float).reshape(-1)
        if X.shape[0] and X.shape[1] != target.size + 1:
            raise ValueError(f"obstacle rows need {target.size + 1} columns "
                             "(center then radius)")
        self.workspace_ = build_workspace(X[:, :-1], X[:, -1], target, gamma=self.gamma,
                                          c_phi=self.c_phi)
        self.n_features_in_ = X.shape[1]
        return self

    def _config(self):
        return RunConfig(dt=self.dt, t_max=self.t_max, e_c=self.e_c)

    def simulate(self, x0):
        """Full ``RunResult`` for one start."""
        check_is_fitted(self, "workspace_")
        return run(self.workspace_, x0, self._config(), mode_map=self.mode_map,
                   choice_map=self.choice_map)

    def predict(self, X0):
        """Final positions reached from each start."""
        check_is_fitted(self, "workspace_")
        X0 = check_array(X0)
        return np.array([self.simulate(x0).trajectory.x[-1] for x0 in X0])

    def score(self, X0, y=None):
        """Fraction of starts that converge."""
        check_is_fitted(self, "workspace_")
        X0 = check_array(X0)
        return float(np.mean([self.simulate(x0).outcome.converged for x0 in X0]))
