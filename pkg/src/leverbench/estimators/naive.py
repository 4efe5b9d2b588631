from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .base import CLASSES, LeverEstimatorMixin, check_X, check_Xy, proba_columns


class NaiveMLE(LeverEstimatorMixin, BaseEstimator):
    """Per-input outcome frequency with a 0.5 fallback for unseen inputs.

    Makes no assumption linking different inputs: each distinct visible input
    gets its own Bernoulli estimate ``N_{x,L} / N_x``.

    Attributes
    ----------
    counts_ : dict
        Maps each observed input (as a tuple) to ``(N_x, N_{x,L})``.
    """

    def fit(self, X, y):
        X, y = check_Xy(X, y)
        self.classes_ = CLASSES
        self.n_features_in_ = X.shape[1]
        self.counts_ = {}
        if len(X):
            keys, inverse = np.unique(X, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            totals = np.bincount(inverse, minlength=len(keys))
            lefts = np.bincount(inverse, weights=y, minlength=len(keys)).astype(int)
            for key, n, n_left in zip(keys, totals, lefts):
                self.counts_[tuple(key.tolist())] = (int(n), int(n_left))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "counts_")
        X = check_X(X, self.n_features_in_)
        p = np.empty(len(X))
        for i, row in enumerate(X):
            n, n_left = self.counts_.get(tuple(row.tolist()), (0, 0))
            p[i] = n_left / n if n > 0 else 0.5
        return proba_columns(p)

    @property
    def n_samples_seen_(self) -> int:
        return sum(n for n, _ in self.counts_.values())

    def to_dict(self) -> dict:
        check_is_fitted(self, "counts_")
        rows = sorted(self.counts_.items())
        return {
            "estimator": "naive",
            "n_features": self.n_features_in_,
            "counts": [[list(k), n, n_left] for k, (n, n_left) in rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NaiveMLE":
        model = cls()
        model.classes_ = CLASSES
        model.n_features_in_ = int(data["n_features"])
        model.counts_ = {tuple(float(v) for v in k): (int(n), int(nl)) for k, n, nl in data["counts"]}
        return model
