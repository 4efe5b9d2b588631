from __future__ import annotations

import warnings
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from scipy.special import expit, logit
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from .base import CLASSES, LeverEstimatorMixin, check_X, check_Xy, proba_columns


def monomial_index(n_vars: int, degree: int) -> list[tuple[int, ...]]:
    """Monomials of total degree 1..degree as tuples of variable indices.

    Order matches graded lexicographic enumeration, e.g. for two variables and
    degree 2: ``(0,), (1,), (0, 0), (0, 1), (1, 1)``.
    """
    if not 1 <= degree <= 4:
        raise ValueError("degree must be in [1, 4]")
    out = []
    for d in range(1, degree + 1):
        out.extend(combinations_with_replacement(range(n_vars), d))
    return out


def n_poly_features(n_vars: int, degree: int) -> int:
    """Number of non-constant monomials: ``C(v + degree, degree) - 1``."""
    return comb(n_vars + degree, degree) - 1


def poly_features(X, degree: int, index: list[tuple[int, ...]] | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if index is None:
        index = monomial_index(X.shape[1], degree)
    F = np.empty((len(X), len(index)))
    for j, mono in enumerate(index):
        F[:, j] = np.prod(X[:, list(mono)], axis=1)
    return F


class PolynomialLogisticRegression(LeverEstimatorMixin, BaseEstimator):
    """L2-regularized logistic regression on polynomial features.

    Fitted by damped Newton iterations (IRLS) on standardized features. The
    objective is the mean negative log-likelihood plus ``l2 / 2 * ||w||^2``;
    the intercept is not penalized. Identical inputs are aggregated before
    fitting, which leaves the objective unchanged.

    Parameters
    ----------
    degree : int
        Maximum total degree of the monomials, 1 to 4.
    l2 : float
        Ridge strength on the standardized weights.
    max_iter : int
        Newton iteration cap. If reached, a ``ConvergenceWarning`` is emitted
        and the best iterate is kept.
    tol : float
        Convergence threshold on the gradient 2-norm.
    """

    def __init__(self, degree: int = 3, l2: float = 1e-4, max_iter: int = 100, tol: float = 1e-6):
        self.degree = degree
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_Xy(X, y)
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        self.classes_ = CLASSES
        self.n_features_in_ = X.shape[1]
        self.feature_index_ = monomial_index(X.shape[1], self.degree)
        p = len(self.feature_index_)
        self.n_iter_ = 0
        self.converged_ = True
        self.degenerate_ = False

        if len(y) == 0 or y.min() == y.max():
            # intercept-only fallback: smoothed frequency, no feature weights
            self.degenerate_ = True
            self.mean_ = np.zeros(p)
            self.scale_ = np.ones(p)
            self.coef_ = np.zeros(p)
            self.intercept_ = float(logit((y.sum() + 0.5) / (len(y) + 1.0)))
            self.grad_norm_ = 0.0
            return self

        keys, inverse = np.unique(X, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        counts = np.bincount(inverse, minlength=len(keys)).astype(float)
        lefts = np.bincount(inverse, weights=y, minlength=len(keys))
        n = counts.sum()

        F = poly_features(keys, self.degree, self.feature_index_)
        mean = counts @ F / n
        var = counts @ (F - mean) ** 2 / n
        scale = np.sqrt(var)
        scale[scale < 1e-12] = 1.0
        Z = np.column_stack([np.ones(len(keys)), (F - mean) / scale])
        penalty = np.full(p + 1, float(self.l2))
        penalty[0] = 0.0

        def objective(w):
            eta = Z @ w
            nll = (counts @ np.logaddexp(0.0, eta) - lefts @ eta) / n
            return nll + 0.5 * np.sum(penalty * w * w)

        def gradient(w):
            mu = expit(Z @ w)
            return Z.T @ (counts * mu - lefts) / n + penalty * w

        w = np.zeros(p + 1)
        w[0] = logit(lefts.sum() / n)
        f = objective(w)
        g = gradient(w)
        for it in range(self.max_iter):
            if np.linalg.norm(g) <= self.tol:
                break
            mu = expit(Z @ w)
            weights = counts * mu * (1.0 - mu) / n
            H = (Z * weights[:, None]).T @ Z + np.diag(penalty)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H, g, rcond=None)[0]
            t = 1.0
            slope = g @ step
            for _ in range(40):
                w_new = w - t * step
                f_new = objective(w_new)
                if f_new <= f - 1e-4 * t * slope:
                    break
                t *= 0.5
            else:
                # no decrease along the Newton direction: stalled at precision
                break
            w, f = w_new, f_new
            g = gradient(w)
            self.n_iter_ = it + 1
        grad_norm = float(np.linalg.norm(g))
        if grad_norm > self.tol:
            self.converged_ = False
            warnings.warn(
                f"logistic regression stopped with gradient norm {grad_norm:.3g} > tol={self.tol}",
                ConvergenceWarning,
                stacklevel=2,
            )
        self.grad_norm_ = grad_norm
        self.mean_ = mean
        self.scale_ = scale
        self.intercept_ = float(w[0])
        self.coef_ = w[1:]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_X(X, self.n_features_in_)
        F = poly_features(X, self.degree, self.feature_index_)
        return self.intercept_ + ((F - self.mean_) / self.scale_) @ self.coef_

    def predict_proba(self, X):
        return proba_columns(expit(self.decision_function(X)))

    def to_dict(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "estimator": "logreg",
            "params": self.get_params(),
            "n_features": self.n_features_in_,
            "feature_index": [list(m) for m in self.feature_index_],
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_,
            "converged": self.converged_,
            "degenerate": self.degenerate_,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolynomialLogisticRegression":
        model = cls(**data["params"])
        model.classes_ = CLASSES
        model.n_features_in_ = int(data["n_features"])
        model.feature_index_ = [tuple(m) for m in data["feature_index"]]
        model.mean_ = np.asarray(data["mean"], dtype=float)
        model.scale_ = np.asarray(data["scale"], dtype=float)
        model.coef_ = np.asarray(data["coef"], dtype=float)
        model.intercept_ = float(data["intercept"])
        model.converged_ = bool(data["converged"])
        model.degenerate_ = bool(data["degenerate"])
        return model
