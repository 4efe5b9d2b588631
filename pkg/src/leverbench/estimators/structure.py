"""Maximum likelihood with the lever physics known and the latent unknown.

The estimator receives the world's structure (which object's distance is
latent and how torques combine) and learns only the latent distribution. The
latent mean stored in the world is never read during fitting.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import log_ndtr, ndtr
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..world import WorldSpec, probit_from_components
from .base import CLASSES, LeverEstimatorMixin, check_Xy, proba_columns

MODES = ("parametric", "grid")
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def structure_q(world: WorldSpec, X, latent_value) -> np.ndarray:
    """Deterministic outcome (1 = L) given inputs and a latent distance.

    The boundary convention is ``sum(T) >= 0 -> L``.
    """
    X = world.check_inputs(X)
    K, c = world.torque_components(X)
    return (K + c * np.asarray(latent_value, dtype=float) >= 0).astype(np.int8)


def golden_section_max(f, lo: float, hi: float, width: float = 1e-6) -> float:
    """Maximize a unimodal function on ``[lo, hi]`` until the bracket is < width."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def gaussian_log_likelihood(K, c, y, mu: float, weights=None) -> float:
    """Sum of log p(y | x; mu) for a N(mu, 1) latent distance.

    Rows with ``c == 0`` do not depend on ``mu`` and are skipped.
    """
    keep = c != 0
    K, c, y = K[keep], c[keep], y[keep]
    w = np.ones(len(K)) if weights is None else np.asarray(weights, dtype=float)[keep]
    z = (K + c * mu) / np.abs(c)
    return float(w @ np.where(y == 1, log_ndtr(z), log_ndtr(-z)))


def discretize_gaussian(grid: np.ndarray, mu: float, sd: float = 1.0) -> np.ndarray:
    """Mass of N(mu, sd^2) in cells centred on ``grid``; end cells take the tails."""
    grid = np.asarray(grid, dtype=float)
    edges = np.concatenate([[-np.inf], 0.5 * (grid[1:] + grid[:-1]), [np.inf]])
    cdf = norm.cdf(edges, loc=mu, scale=sd)
    pmf = np.diff(cdf)
    return pmf / pmf.sum()


def _aggregate(K, c, y):
    rows = np.column_stack([K, c, y])
    keys, inverse = np.unique(rows, axis=0, return_inverse=True)
    counts = np.bincount(inverse.ravel(), minlength=len(keys)).astype(float)
    return keys[:, 0], keys[:, 1], keys[:, 2].astype(np.int8), counts


class StructureMLE(LeverEstimatorMixin, BaseEstimator):
    """Latent-distribution MLE given the deterministic lever physics.

    Parameters
    ----------
    world : WorldSpec
        Supplies the structure only: variable layout and torque rule.
    mode : {"parametric", "grid"}
        ``"parametric"`` assumes a unit-variance Gaussian latent and finds its
        mean by golden-section search. ``"grid"`` estimates a pmf on a grid by
        EM over the posterior ``p(l = c | x_i, y_i)``, starting from uniform.
    grid_min, grid_max, grid_step : float
        Latent support; also the search interval of the parametric mode.
    tol : float
        Grid EM stops when no pmf entry moves by more than ``tol``.
    max_iter : int
        Grid EM iteration cap (1 gives the single posterior-averaging step).
    search_width : float
        Final bracket width of the golden-section search.
    """

    def __init__(
        self,
        world: WorldSpec | None = None,
        mode: str = "parametric",
        grid_min: float = -2.0,
        grid_max: float = 8.0,
        grid_step: float = 0.05,
        tol: float = 1e-8,
        max_iter: int = 500,
        search_width: float = 1e-6,
    ):
        self.world = world
        self.mode = mode
        self.grid_min = grid_min
        self.grid_max = grid_max
        self.grid_step = grid_step
        self.tol = tol
        self.max_iter = max_iter
        self.search_width = search_width

    def _check_params(self):
        if self.world is None:
            raise ValueError("StructureMLE needs the world structure")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.grid_max > self.grid_min:
            raise ValueError("grid_max must exceed grid_min")

    def _grid(self) -> np.ndarray:
        n = int(round((self.grid_max - self.grid_min) / self.grid_step)) + 1
        return self.grid_min + self.grid_step * np.arange(n)

    def fit(self, X, y):
        self._check_params()
        X, y = check_Xy(X, y)
        X = self.world.check_inputs(X) if len(X) else np.zeros((0, self.world.n_columns))
        self.classes_ = CLASSES
        self.n_features_in_ = self.world.n_columns
        self.grid_ = self._grid()
        self.empty_fit_ = len(y) == 0
        self.n_inconsistent_ = 0
        self.ll_history_ = []
        self.n_iter_ = 0
        if self.empty_fit_:
            warnings.warn("StructureMLE fitted on an empty dataset; using the prior", UserWarning, stacklevel=2)
        K, c = self.world.torque_components(X)

        if self.mode == "parametric":
            if self.empty_fit_:
                self.mean_ = 0.5 * (self.grid_min + self.grid_max)
            else:
                Ku, cu, yu, w = _aggregate(K, c, y)
                self.mean_ = golden_section_max(
                    lambda m: gaussian_log_likelihood(Ku, cu, yu, m, w),
                    self.grid_min,
                    self.grid_max,
                    self.search_width,
                )
                self.log_likelihood_ = gaussian_log_likelihood(Ku, cu, yu, self.mean_, w)
            self.pmf_ = None
            return self

        pmf = np.full(len(self.grid_), 1.0 / len(self.grid_))
        if not self.empty_fit_:
            pmf = self._em(*_aggregate(K, c, y), pmf)
        self.pmf_ = pmf
        self.mean_ = float(self.grid_ @ pmf)
        return self

    def _em(self, K, c, y, counts, pmf):
        A = ((K[:, None] + c[:, None] * self.grid_[None, :] >= 0) == (y[:, None] == 1)).astype(float)
        consistent = A.sum(axis=1) > 0
        self.n_inconsistent_ = int(counts[~consistent].sum())
        A, counts = A[consistent], counts[consistent]
        n = counts.sum()
        if n == 0:
            return pmf
        lik = A @ pmf
        self.ll_history_ = [float(counts @ np.log(lik))]
        for it in range(self.max_iter):
            # posterior-averaging update: mean over samples of p(l = c | x_i, y_i)
            new = pmf * (A.T @ (counts / lik)) / n
            new /= new.sum()
            change = np.max(np.abs(new - pmf))
            pmf = new
            lik = A @ pmf
            self.ll_history_.append(float(counts @ np.log(lik)))
            self.n_iter_ = it + 1
            if change < self.tol:
                break
        return pmf

    @classmethod
    def from_latent_mean(cls, world: WorldSpec, mu: float, mode: str = "parametric", **params):
        """A fitted model with a given latent mean (grid mode: discretized N(mu, 1))."""
        model = cls(world=world, mode=mode, **params)
        model._check_params()
        model.classes_ = CLASSES
        model.n_features_in_ = world.n_columns
        model.grid_ = model._grid()
        model.empty_fit_ = False
        model.n_inconsistent_ = 0
        model.ll_history_ = []
        model.n_iter_ = 0
        if mode == "grid":
            model.pmf_ = discretize_gaussian(model.grid_, mu)
            model.mean_ = float(model.grid_ @ model.pmf_)
        else:
            model.pmf_ = None
            model.mean_ = float(mu)
        return model

    def _masses(self, X):
        X = self.world.check_inputs(X)
        K, c = self.world.torque_components(X)
        left = (K[:, None] + c[:, None] * self.grid_[None, :]) >= 0
        mass_left = left @ self.pmf_
        mass_right = (~left) @ self.pmf_
        return mass_left, mass_right

    def decision_function(self, X):
        check_is_fitted(self, "mean_")
        if self.mode == "parametric":
            X = self.world.check_inputs(X)
            K, c = self.world.torque_components(X)
            return probit_from_components(K, c, self.mean_)
        mass_left, mass_right = self._masses(X)
        with np.errstate(divide="ignore"):
            return np.log(mass_left) - np.log(mass_right)

    def predict_proba(self, X):
        check_is_fitted(self, "mean_")
        if self.mode == "parametric":
            return proba_columns(ndtr(self.decision_function(X)))
        mass_left, mass_right = self._masses(X)
        return proba_columns(np.clip(mass_left / (mass_left + mass_right), 0.0, 1.0))

    def to_dict(self) -> dict:
        check_is_fitted(self, "mean_")
        params = self.get_params()
        params.pop("world")
        return {
            "estimator": "structure",
            "params": params,
            "world": self.world.to_dict(),
            "mean": self.mean_,
            "pmf": None if self.pmf_ is None else self.pmf_.tolist(),
            "empty_fit": self.empty_fit_,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StructureMLE":
        world = WorldSpec.from_dict(data["world"])
        model = cls(world=world, **data["params"])
        model.classes_ = CLASSES
        model.n_features_in_ = world.n_columns
        model.grid_ = model._grid()
        model.mean_ = float(data["mean"])
        model.pmf_ = None if data["pmf"] is None else np.asarray(data["pmf"], dtype=float)
        model.empty_fit_ = bool(data["empty_fit"])
        model.n_inconsistent_ = 0
        model.ll_history_ = []
        model.n_iter_ = 0
        return model
