"""Expected total-variation distance and the structure score."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .world import VariableKind, WorldSpec, enumerate_visible_inputs, probit_score, true_conditional

SCHEMA_VERSION = 1
MIN_MC_DRAWS = 100


def tv_point(p, q):
    """TV distance between Bernoulli(p) and Bernoulli(q), i.e. ``|p - q|``."""
    return np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))


def _p_left(model, X) -> np.ndarray:
    if hasattr(model, "predict_left"):
        return np.asarray(model.predict_left(X), dtype=float)
    return np.asarray(model.predict_proba(X), dtype=float)[:, 1]


def monte_carlo_tv(world: WorldSpec, model, n_draws: int, seed: int = 0) -> tuple[float, float]:
    """Mean TV over inputs drawn from the input distribution, with its standard error."""
    if n_draws < MIN_MC_DRAWS:
        raise ValueError(f"monte-carlo evaluation needs at least {MIN_MC_DRAWS} draws")
    X = world.sample_inputs(np.random.default_rng(seed), n_draws)
    d = tv_point(_p_left(model, X), true_conditional(world, X))
    return float(d.mean()), float(d.std(ddof=1) / np.sqrt(n_draws))


def expected_tv(world: WorldSpec, model, mode: str = "enumerate", n_draws: int = 10_000, seed: int = 0) -> float:
    """Expected TV distance between a model's ``p(L | x)`` and the truth.

    ``mode="enumerate"`` sums exactly over every visible input;
    ``mode="monte-carlo"`` averages over ``n_draws`` sampled inputs (see
    :func:`monte_carlo_tv` for the standard error).
    """
    if mode == "enumerate":
        X, w = enumerate_visible_inputs(world)
        return float(w @ tv_point(_p_left(model, X), true_conditional(world, X)))
    if mode == "monte-carlo":
        return monte_carlo_tv(world, model, n_draws, seed)[0]
    raise ValueError(f"unknown evaluation mode {mode!r}")


@dataclass(frozen=True)
class Perturbation:
    x: np.ndarray
    x_star: np.ndarray
    index: int
    side: int
    delta_x: float


@dataclass(frozen=True, eq=False)
class PerturbationSet:
    """Single-variable perturbations stored column-wise.

    ``X`` and ``X_star`` differ in exactly one free scalar column ``index``
    (plus the derived mass when a density or volume changed).
    """

    X: np.ndarray
    X_star: np.ndarray
    index: np.ndarray
    side: np.ndarray
    delta_x: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> Perturbation:
        return Perturbation(self.X[i], self.X_star[i], int(self.index[i]), int(self.side[i]), float(self.delta_x[i]))

    def __iter__(self) -> Iterator[Perturbation]:
        return (self[i] for i in range(len(self)))


def make_perturbations(world: WorldSpec, m: int = 1000, seed: int = 0) -> PerturbationSet:
    """Draw ``m`` inputs and change one free scalar in each.

    The changed column is uniform over free scalars (free masses, densities,
    volumes, visible distances); the new value is uniform over the other grid
    values. Sides are never perturbed and derived masses are recomputed.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    X = world.sample_inputs(rng, m)
    eligible = np.array(world.free_columns())
    index = eligible[rng.integers(0, len(eligible), size=m)]
    grid = np.asarray(world.grid, dtype=float)
    X_star = X.copy()
    rows = np.arange(m)
    old = X[rows, index]
    old_pos = np.searchsorted(grid, old) if np.all(np.diff(grid) > 0) else np.array([list(grid).index(v) for v in old])
    shift = rng.integers(1, len(grid), size=m)
    X_star[rows, index] = grid[(old_pos + shift) % len(grid)]
    world.complete(X_star)
    side_cols = np.array([world.column_index(world.columns[j].object_index, VariableKind.SIDE) for j in index])
    side = X[rows, side_cols].astype(int)
    delta_x = side * (X_star[rows, index] - old)
    return PerturbationSet(X, X_star, index, side, delta_x)


def _score_diff(model, X, X_star) -> np.ndarray:
    """Change of a strictly monotone transform of p(L); avoids saturation."""
    f = model.decision_function if hasattr(model, "decision_function") else (lambda Z: _p_left(model, Z))
    a = np.asarray(f(X), dtype=float)
    b = np.asarray(f(X_star), dtype=float)
    with np.errstate(invalid="ignore"):
        diff = b - a
    # inf - inf: both inputs sit at the same saturated end
    return np.where(np.isnan(diff), 0.0, diff)


def true_delta_sign(world: WorldSpec, perturbations: PerturbationSet) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        diff = probit_score(world, perturbations.X_star) - probit_score(world, perturbations.X)
    return np.sign(np.where(np.isnan(diff), 0.0, diff))


def structure_score(world: WorldSpec, model, perturbations: PerturbationSet) -> float:
    """Fraction of perturbations where the model's change in p(L) has the true sign.

    ``sign(0) = 0``, so a model that does not react scores zero on every
    perturbation the truth reacts to.
    """
    real = true_delta_sign(world, perturbations)
    ours = np.sign(_score_diff(model, perturbations.X, perturbations.X_star))
    return float(np.mean(real == ours))


@dataclass
class EvalReport:
    expected_tv: float
    structure_score: float
    n_train: int
    world_id: str
    estimator_id: str
    seeds: dict = field(default_factory=dict)
    eval_mode: str = "enumerate"
    n_draws: int | None = None
    tv_stderr: float | None = None
    schema_version: int = SCHEMA_VERSION

    CSV_FIELDS = (
        "schema_version",
        "world_id",
        "estimator_id",
        "n_train",
        "expected_tv",
        "structure_score",
        "eval_mode",
        "n_draws",
        "tv_stderr",
        "seeds",
    )

    def __post_init__(self):
        for name in ("expected_tv", "structure_score"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def csv_row(self) -> list[str]:
        d = asdict(self)
        d["seeds"] = json.dumps(self.seeds, sort_keys=True)
        return ["" if d[k] is None else (repr(d[k]) if isinstance(d[k], float) else str(d[k])) for k in self.CSV_FIELDS]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(self.CSV_FIELDS)
        writer.writerow(self.csv_row())
        return buf.getvalue()


def evaluate(
    world: WorldSpec,
    model,
    perturbations: PerturbationSet,
    n_train: int,
    estimator_id: str,
    mode: str = "enumerate",
    n_draws: int = 10_000,
    seeds: dict | None = None,
) -> EvalReport:
    """Expected TV plus structure score as an :class:`EvalReport`."""
    stderr = None
    if mode == "monte-carlo":
        seed = (seeds or {}).get("eval", 0)
        tv, stderr = monte_carlo_tv(world, model, n_draws, seed)
    else:
        tv = expected_tv(world, model, mode)
    return EvalReport(
        expected_tv=min(max(tv, 0.0), 1.0),
        structure_score=structure_score(world, model, perturbations),
        n_train=n_train,
        world_id=world.world_id,
        estimator_id=estimator_id,
        seeds=dict(seeds or {}),
        eval_mode=mode,
        n_draws=n_draws if mode == "monte-carlo" else None,
        tv_stderr=stderr,
    )
