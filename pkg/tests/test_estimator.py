import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hybridnav import HybridNavigator

X = np.array([[2.0, 0.0, 1.0], [-1.5, 3.0, 0.6]])


def test_fit_predict_score():
    est = HybridNavigator(target=[0, 0]).fit(X)
    X0 = np.array([[4.5, 0.4], [-2.0, 5.0]])
    final = est.predict(X0)
    assert final.shape == (2, 2)
    assert np.all(np.linalg.norm(final, axis=1) <= 1e-2)
    assert est.score(X0) == 1.0
    assert est.n_features_in_ == 3


def test_params_and_clone():
    est = HybridNavigator(gamma=2.0, mode_map="original")
    assert clone(est).get_params()["gamma"] == 2.0
    assert est.set_params(dt=5e-4).dt == 5e-4


def test_errors():
    with pytest.raises(NotFittedError):
        HybridNavigator().predict([[1.0, 1.0]])
    with pytest.raises(ValueError, match="target"):
        HybridNavigator().fit(X)
    with pytest.raises(ValueError, match="columns"):
        HybridNavigator(target=[0, 0, 0]).fit(X)


def test_timeout_counts_as_failure():
    est = HybridNavigator(target=[0, 0], t_max=0.1).fit(X)
    assert est.score([[4.5, 0.4]]) == 0.0
