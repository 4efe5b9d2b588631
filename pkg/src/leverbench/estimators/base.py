"""Shared estimator plumbing: input validation, reference models, persistence.

All estimators follow the scikit-learn protocol. ``y`` is binary with 1 for
"L" and 0 for "R"; ``predict_proba`` returns columns ``[p(R), p(L)]`` and
``decision_function`` returns a score strictly increasing in ``p(L)``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..world import WorldSpec, probit_score

CLASSES = np.array([0, 1])


def check_X(X, n_features: int | None = None) -> np.ndarray:
    X = check_array(X, dtype=float, ensure_min_samples=0)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_Xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = check_X(X)
    y = np.asarray(y)
    if y.dtype.kind in "US":
        if not np.isin(y, ["L", "R"]).all():
            raise ValueError("string labels must be 'L' or 'R'")
        y = (y == "L").astype(np.int8)
    y = np.asarray(y).ravel()
    if len(y) != len(X):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} labels")
    if len(y) and not np.isin(y, CLASSES).all():
        raise ValueError("labels must be 0/1 (R/L)")
    return X, y.astype(np.int8)


def proba_columns(p_left: np.ndarray) -> np.ndarray:
    return np.column_stack([1.0 - p_left, p_left])


class LeverEstimatorMixin(ClassifierMixin):
    """predict / predict_left derived from predict_proba."""

    def predict_left(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        return (self.predict_left(X) >= 0.5).astype(np.int8)

    def decision_function(self, X) -> np.ndarray:
        return self.predict_left(X)


class TrueModel(LeverEstimatorMixin, BaseEstimator):
    """The ground-truth conditional of a world, wrapped as an estimator."""

    def __init__(self, world: WorldSpec | None = None):
        self.world = world

    def fit(self, X=None, y=None):
        if self.world is None:
            raise ValueError("TrueModel needs a world")
        self.classes_ = CLASSES
        self.n_features_in_ = self.world.n_columns
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self)
        return probit_score(self.world, X)

    def predict_proba(self, X) -> np.ndarray:
        from scipy.special import ndtr

        return proba_columns(ndtr(self.decision_function(X)))

    def to_dict(self) -> dict:
        return {"estimator": "truth", "world": self.world.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "TrueModel":
        return cls(WorldSpec.from_dict(data["world"])).fit()


class ConstantModel(LeverEstimatorMixin, BaseEstimator):
    """Predicts the same probability of "L" everywhere."""

    def __init__(self, p_left: float = 0.5):
        self.p_left = p_left

    def fit(self, X=None, y=None):
        if not 0.0 <= self.p_left <= 1.0:
            raise ValueError("p_left must be in [0, 1]")
        self.classes_ = CLASSES
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_X(X)
        return proba_columns(np.full(len(X), float(self.p_left)))

    def to_dict(self) -> dict:
        return {"estimator": "constant", "p_left": self.p_left}

    @classmethod
    def from_dict(cls, data: dict) -> "ConstantModel":
        return cls(data["p_left"]).fit()


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path):
    from . import REGISTRY

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return REGISTRY[data["estimator"]].from_dict(data)
