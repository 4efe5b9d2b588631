"""Lever world definitions and the exact ground-truth conditional.

A world is a lever with objects placed on either side of a fulcrum. Each
object has a side ``s`` in {+1, -1} (left, right), a distance ``d`` and a mass
``m``, where the mass is either free or derived as ``density * volume``. The
outcome is "L" when the total torque ``sum(s * d * m)`` is non-negative.

Exactly one scalar is latent: the distance of one object (by default the last
one), drawn from ``N(mu, 1)``. Every visible free scalar is uniform over the
grid {1, ..., 5} and every random side is uniform over {+1, -1}, so the visible
input space is finite and can be enumerated.

Visible inputs are represented as rows of a float array whose columns follow
:attr:`WorldSpec.columns`.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

LEFT = 1
RIGHT = -1
DEFAULT_GRID = (1, 2, 3, 4, 5)
MU_RANGE = (1.0, 5.0)


class VariableKind(str, enum.Enum):
    DENSITY = "density"
    VOLUME = "volume"
    MASS = "mass"
    DISTANCE = "distance"
    SIDE = "side"


# rendering / column order within one object
FIELD_ORDER = (
    VariableKind.DENSITY,
    VariableKind.VOLUME,
    VariableKind.DISTANCE,
    VariableKind.SIDE,
    VariableKind.MASS,
)


class OffManifoldError(ValueError):
    """A visible input violates the world's support or derived-mass rule."""


@dataclass(frozen=True)
class LatentGaussian:
    mean: float
    variance: float = 1.0

    def __post_init__(self):
        if self.variance != 1.0:
            raise ValueError("latent variance is fixed to 1")
        if not np.isfinite(self.mean):
            raise ValueError("latent mean must be finite")


@dataclass(frozen=True)
class ObjectSpec:
    """One object on the lever.

    ``side`` is None for a side drawn uniformly per sample, or a fixed +1/-1.
    """

    index: int
    uses_density_volume: bool = False
    latent_distance: bool = False
    side: int | None = None

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("object index must be positive")
        if self.side not in (None, LEFT, RIGHT):
            raise ValueError(f"side must be None, +1 or -1, got {self.side!r}")

    def visible_kinds(self) -> list[VariableKind]:
        kinds = []
        for kind in FIELD_ORDER:
            if kind in (VariableKind.DENSITY, VariableKind.VOLUME) and not self.uses_density_volume:
                continue
            if kind is VariableKind.DISTANCE and self.latent_distance:
                continue
            kinds.append(kind)
        return kinds

    def free_kinds(self) -> list[VariableKind]:
        """Visible scalar variables that carry their own grid distribution."""
        free = []
        for kind in self.visible_kinds():
            if kind is VariableKind.SIDE:
                continue
            if kind is VariableKind.MASS and self.uses_density_volume:
                continue
            free.append(kind)
        return free


@dataclass(frozen=True)
class Column:
    object_index: int
    kind: VariableKind

    @property
    def name(self) -> str:
        return f"object{self.object_index} {self.kind.value}"


@dataclass(frozen=True)
class WorldSpec:
    seed: int
    objects: tuple[ObjectSpec, ...]
    latent: LatentGaussian
    grid: tuple[float, ...] = DEFAULT_GRID
    name: str | None = None
    columns: tuple[Column, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        objects = tuple(self.objects)
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "grid", tuple(self.grid))
        if len(objects) < 2:
            raise ValueError("a lever world needs at least two objects")
        if [o.index for o in objects] != list(range(1, len(objects) + 1)):
            raise ValueError("object indices must be 1..n in order")
        n_latent = sum(o.latent_distance for o in objects)
        if n_latent != 1:
            raise ValueError(f"exactly one latent variable is supported, got {n_latent}")
        if len(self.grid) < 2 or len(set(self.grid)) != len(self.grid):
            raise ValueError("grid needs at least two distinct values")
        if min(self.grid) <= 0:
            raise ValueError("grid values must be positive reals")
        cols = tuple(Column(o.index, k) for o in objects for k in o.visible_kinds())
        object.__setattr__(self, "columns", cols)

    # -- layout helpers -------------------------------------------------

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def latent_object(self) -> ObjectSpec:
        return next(o for o in self.objects if o.latent_distance)

    @property
    def world_id(self) -> str:
        return self.name or f"seed{self.seed}"

    def column_index(self, object_index: int, kind: VariableKind | str) -> int:
        kind = VariableKind(kind)
        for j, col in enumerate(self.columns):
            if col.object_index == object_index and col.kind is kind:
                return j
        raise KeyError(f"object{object_index} {kind.value} is not visible")

    def free_columns(self) -> list[int]:
        """Indices of free scalar columns (perturbable, grid-distributed)."""
        out = []
        for o in self.objects:
            for kind in o.free_kinds():
                out.append(self.column_index(o.index, kind))
        return out

    def random_side_columns(self) -> list[int]:
        return [self.column_index(o.index, VariableKind.SIDE) for o in self.objects if o.side is None]

    @property
    def n_inputs(self) -> int:
        return len(self.grid) ** len(self.free_columns()) * 2 ** len(self.random_side_columns())

    # -- derived quantities ---------------------------------------------

    def complete(self, X: np.ndarray) -> np.ndarray:
        """Fill fixed sides and derived masses in place and return ``X``."""
        for o in self.objects:
            if o.side is not None:
                X[:, self.column_index(o.index, VariableKind.SIDE)] = o.side
            if o.uses_density_volume:
                rho = X[:, self.column_index(o.index, VariableKind.DENSITY)]
                vol = X[:, self.column_index(o.index, VariableKind.VOLUME)]
                X[:, self.column_index(o.index, VariableKind.MASS)] = rho * vol
        return X

    def check_inputs(self, X) -> np.ndarray:
        """Validate visible inputs against the world's support.

        Raises :class:`OffManifoldError` for wrong shape, values outside the
        grid, invalid sides or masses inconsistent with density * volume.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_columns:
            raise OffManifoldError(
                f"expected inputs with {self.n_columns} columns ({', '.join(self.column_names)}), "
                f"got shape {X.shape}"
            )
        grid = np.asarray(self.grid, dtype=float)
        for j in self.free_columns():
            if not np.isin(X[:, j], grid).all():
                raise OffManifoldError(f"{self.columns[j].name} has values outside the grid {self.grid}")
        for o in self.objects:
            s = X[:, self.column_index(o.index, VariableKind.SIDE)]
            allowed = [o.side] if o.side is not None else [LEFT, RIGHT]
            if not np.isin(s, allowed).all():
                raise OffManifoldError(f"object{o.index} side must be in {allowed}")
            if o.uses_density_volume:
                expected = self.complete(X.copy())[:, self.column_index(o.index, VariableKind.MASS)]
                got = X[:, self.column_index(o.index, VariableKind.MASS)]
                if not np.array_equal(expected, got):
                    raise OffManifoldError(f"object{o.index} mass must equal density * volume")
        return X

    def torque_components(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split the torque sum into ``K + c * latent_distance``.

        Returns the visible torque sum ``K`` and the latent coefficient
        ``c = s * m`` of the object whose distance is latent. Uses only the
        physics, never the latent distribution.
        """
        K = np.zeros(len(X))
        c = None
        for o in self.objects:
            s = X[:, self.column_index(o.index, VariableKind.SIDE)]
            m = X[:, self.column_index(o.index, VariableKind.MASS)]
            if o.latent_distance:
                c = s * m
            else:
                K = K + s * X[:, self.column_index(o.index, VariableKind.DISTANCE)] * m
        return K, c

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "name": self.name,
            "grid": list(self.grid),
            "objects": [
                {
                    "index": o.index,
                    "uses_density_volume": o.uses_density_volume,
                    "latent_distance": o.latent_distance,
                    "side": o.side,
                }
                for o in self.objects
            ],
            "free_distribution": "uniform-grid",
            "side_distribution": "uniform-pm1",
            "latent": {"kind": "gaussian", "mean": self.latent.mean, "variance": self.latent.variance},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorldSpec":
        latent = data["latent"]
        if latent.get("kind", "gaussian") != "gaussian":
            raise ValueError("only Gaussian latents are supported")
        return cls(
            seed=int(data["seed"]),
            objects=tuple(ObjectSpec(**o) for o in data["objects"]),
            latent=LatentGaussian(float(latent["mean"]), float(latent.get("variance", 1.0))),
            grid=tuple(data.get("grid", DEFAULT_GRID)),
            name=data.get("name"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "WorldSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_mean(self, mean: float) -> "WorldSpec":
        return replace(self, latent=LatentGaussian(float(mean)))

    # -- sampling -------------------------------------------------------

    def sample_inputs(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` visible inputs from the input distribution."""
        X = np.zeros((n, self.n_columns))
        grid = np.asarray(self.grid, dtype=float)
        for j in self.free_columns():
            X[:, j] = grid[rng.integers(0, len(grid), size=n)]
        for j in self.random_side_columns():
            X[:, j] = np.where(rng.integers(0, 2, size=n) == 0, LEFT, RIGHT)
        return self.complete(X)


def _as_flags(value, n: int, what: str) -> list[bool]:
    if isinstance(value, (bool, np.bool_)):
        return [bool(value)] * n
    flags = [bool(v) for v in value]
    if len(flags) != n:
        raise ValueError(f"{what} needs one entry per object ({n}), got {len(flags)}")
    return flags


def generate_world(
    seed: int,
    n_objects: int = 2,
    use_density_volume: bool | Sequence[bool] = False,
    *,
    latent: Iterable[tuple[int, str]] | None = None,
    mu: float | None = None,
    sides: Sequence[int | None] | None = None,
    grid: Sequence[float] = DEFAULT_GRID,
    name: str | None = None,
) -> WorldSpec:
    """Build a seeded lever world.

    Parameters
    ----------
    seed : int
        Seed of the generator that draws the latent mean from ``U[1, 5]``.
    n_objects : int
        Number of objects on the lever (at least 2).
    use_density_volume : bool or sequence of bool
        Per-object flag; when set the mass is derived as density * volume.
    latent : iterable of (object_index, kind), optional
        Latent variables. Defaults to the last object's distance. Only a single
        latent distance is supported.
    mu : float, optional
        Explicit latent mean overriding the seeded draw.
    sides : sequence of {None, +1, -1}, optional
        Fixed sides per object; None keeps the side random.
    """
    if n_objects < 2:
        raise ValueError("n_objects must be >= 2")
    dv = _as_flags(use_density_volume, n_objects, "use_density_volume")
    fixed_sides = list(sides) if sides is not None else [None] * n_objects
    if len(fixed_sides) != n_objects:
        raise ValueError(f"sides needs one entry per object ({n_objects})")
    latent = list(latent) if latent is not None else [(n_objects, "distance")]
    if len(latent) != 1:
        raise ValueError(f"exactly one latent variable is supported, got {len(latent)}")
    latent_index, latent_kind = latent[0]
    if VariableKind(latent_kind) is not VariableKind.DISTANCE:
        raise ValueError("only a latent distance is supported")
    if not 1 <= latent_index <= n_objects:
        raise ValueError(f"latent object index {latent_index} out of range")

    rng = np.random.default_rng(seed)
    drawn_mu = float(rng.uniform(*MU_RANGE))
    objects = tuple(
        ObjectSpec(
            index=i + 1,
            uses_density_volume=dv[i],
            latent_distance=(i + 1 == latent_index),
            side=fixed_sides[i],
        )
        for i in range(n_objects)
    )
    return WorldSpec(
        seed=seed,
        objects=objects,
        latent=LatentGaussian(drawn_mu if mu is None else float(mu)),
        grid=tuple(grid),
        name=name,
    )


def world_1(**overrides) -> WorldSpec:
    """Two free-mass objects, latent second distance, mean 2.668."""
    params = dict(seed=1, n_objects=2, use_density_volume=False, mu=2.668, name="world-1")
    params.update(overrides)
    return generate_world(**params)


def world_3(**overrides) -> WorldSpec:
    """Two density/volume objects, latent second distance, mean 3.203."""
    params = dict(seed=3, n_objects=2, use_density_volume=True, mu=3.203, name="world-3")
    params.update(overrides)
    return generate_world(**params)


def balance_outcome(torques) -> str:
    """'L' when the torques sum to a non-negative value, else 'R'."""
    torques = list(torques)
    if not torques:
        raise ValueError("need at least one torque")
    return "L" if sum(torques) >= 0 else "R"


def torque(side: float, distance: float, mass: float) -> float:
    return side * distance * mass


def probit_from_components(K, c, mu: float) -> np.ndarray:
    """``z`` with ``P(K + c * D >= 0) = Phi(z)`` for ``D ~ N(mu, 1)``.

    ``z = (K + c * mu) / |c|``; when ``c == 0`` the outcome is fixed and ``z``
    is ``+inf`` if ``K >= 0`` else ``-inf``.
    """
    K = np.asarray(K, dtype=float)
    c = np.asarray(c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.atleast_1d((K + c * mu) / np.abs(c))
    degenerate = np.atleast_1d(c == 0)
    z[degenerate] = np.where(np.atleast_1d(K)[degenerate] >= 0, np.inf, -np.inf)
    return z


def probit_score(world: WorldSpec, X) -> np.ndarray:
    """Return ``z`` with ``p(L | x) = Phi(z)`` for each row of ``X``."""
    X = world.check_inputs(X)
    K, c = world.torque_components(X)
    return probit_from_components(K, c, world.latent.mean)


def true_conditional(world: WorldSpec, X) -> np.ndarray:
    """Exact ``p(b = L | x)`` for each row of ``X``."""
    return ndtr(probit_score(world, X))


def enumerate_visible_inputs(world: WorldSpec) -> tuple[np.ndarray, np.ndarray]:
    """All visible inputs with their probability weights.

    Returns
    -------
    X : ndarray of shape (n_inputs, n_columns)
    weights : ndarray of shape (n_inputs,), summing to 1
    """
    free = world.free_columns()
    sides = world.random_side_columns()
    grid = [float(v) for v in world.grid]
    axes = [grid] * len(free) + [[LEFT, RIGHT]] * len(sides)
    combos = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(axes))
    X = np.zeros((len(combos), world.n_columns))
    X[:, free + sides] = combos
    world.complete(X)
    weights = np.full(len(X), 1.0 / len(X))
    return X, weights
