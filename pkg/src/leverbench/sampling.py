"""Dataset sampling, text rendering and corpus export.

Sampling is chunked: chunk ``k`` of a dataset with seed ``s`` draws from
``SeedSequence(s, spawn_key=(k,))``. A dataset therefore does not depend on how
many workers produced it, and its canonical order is by sample index.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .world import LEFT, RIGHT, VariableKind, WorldSpec

CHUNK_SIZE = 65536
OUTCOMES = ("R", "L")  # index by y: 0 -> R, 1 -> L


@dataclass(frozen=True)
class Sample:
    visible: tuple[float, ...]
    outcome: str

    def __post_init__(self):
        if self.outcome not in ("L", "R"):
            raise ValueError(f"outcome must be 'L' or 'R', got {self.outcome!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered set of observations of one world.

    ``X`` holds visible inputs in the world's column order and ``y`` is 1 for
    "L" and 0 for "R". Latent draws are never kept.
    """

    world: WorldSpec
    X: np.ndarray
    y: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if len(self.X) != len(self.y):
            raise ValueError("X and y lengths differ")

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self) -> Iterator[Sample]:
        for row, label in zip(self.X, self.y):
            yield Sample(tuple(float(v) for v in row), OUTCOMES[int(label)])

    def __getitem__(self, i: int) -> Sample:
        return Sample(tuple(float(v) for v in self.X[i]), OUTCOMES[int(self.y[i])])

    def to_dict(self) -> dict:
        return {
            "world": self.world.to_dict(),
            "seed": self.seed,
            "columns": self.world.column_names,
            "X": [[_json_number(v) for v in row] for row in self.X],
            "y": [OUTCOMES[int(v)] for v in self.y],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "Dataset":
        world = WorldSpec.from_dict(data["world"])
        X = np.asarray(data["X"], dtype=float).reshape(-1, world.n_columns)
        y = np.array([1 if v == "L" else 0 for v in data["y"]], dtype=np.int8)
        return cls(world, world.check_inputs(X), y, data.get("seed"))

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _json_number(v: float):
    v = float(v)
    return int(v) if v.is_integer() else v


def _sample_chunk(world: WorldSpec, seed: int, chunk: int, size: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
    X = world.sample_inputs(rng, size)
    d = rng.normal(world.latent.mean, np.sqrt(world.latent.variance), size=size)
    K, c = world.torque_components(X)
    y = (K + c * d >= 0).astype(np.int8)
    return X, y


def sample_dataset(world: WorldSpec, n: int, seed: int, n_jobs: int = 1) -> Dataset:
    """Draw ``n`` i.i.d. observations from ``world``.

    The result is identical for any ``n_jobs``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    sizes = [min(CHUNK_SIZE, n - start) for start in range(0, n, CHUNK_SIZE)]
    if n_jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda k: _sample_chunk(world, seed, k, sizes[k]), range(len(sizes))))
    else:
        parts = [_sample_chunk(world, seed, k, size) for k, size in enumerate(sizes)]
    if parts:
        X = np.concatenate([p[0] for p in parts])
        y = np.concatenate([p[1] for p in parts])
    else:
        X = np.zeros((0, world.n_columns))
        y = np.zeros(0, dtype=np.int8)
    return Dataset(world, X, y, seed)


def format_value(v: float) -> str:
    """Shortest exact decimal; integers without a decimal point."""
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def render_input(world: WorldSpec, x) -> str:
    """Render the visible part of one input (no balance field)."""
    fields = []
    for col, v in zip(world.columns, x):
        if col.kind is VariableKind.SIDE:
            text = "L" if v == LEFT else "R"
        else:
            text = format_value(v)
        fields.append(f"{col.name}: {text}")
    return ", ".join(fields)


def render_sample(world: WorldSpec, sample: Sample) -> str:
    head = render_input(world, sample.visible)
    return f"{head}, balance: {sample.outcome}" if head else f"balance: {sample.outcome}"


_FIELD = re.compile(r"^object(\d+) (density|volume|distance|side|mass): (\S+)$")


def parse_input(world: WorldSpec, text: str) -> np.ndarray:
    """Inverse of :func:`render_input`; validates against the world."""
    values = {}
    for part in text.strip().split(", "):
        m = _FIELD.match(part)
        if not m:
            raise ValueError(f"cannot parse field {part!r}")
        idx, kind, raw = int(m.group(1)), VariableKind(m.group(2)), m.group(3)
        if kind is VariableKind.SIDE:
            if raw not in ("L", "R"):
                raise ValueError(f"bad side {raw!r}")
            value = float(LEFT if raw == "L" else RIGHT)
        else:
            value = float(raw)
        values[world.column_index(idx, kind)] = value
    if sorted(values) != list(range(world.n_columns)):
        raise ValueError("rendered input does not list every visible variable exactly once")
    x = np.array([values[j] for j in range(world.n_columns)])
    return world.check_inputs(x)[0]


def parse_sample(world: WorldSpec, line: str) -> Sample:
    head, sep, outcome = line.strip().rpartition("balance: ")
    if not sep or outcome not in ("L", "R"):
        raise ValueError(f"missing balance field in {line!r}")
    head = head[:-2] if head.endswith(", ") else head
    x = parse_input(world, head)
    return Sample(tuple(float(v) for v in x), outcome)


def export_corpus(dataset: Dataset, destination) -> Path:
    """Write one rendered line per sample plus a ``.meta.json`` sidecar.

    Returns the corpus path. I/O errors are re-raised with the path attached.
    """
    path = Path(destination)
    meta_path = path.with_name(path.name + ".meta.json")
    lines = [render_sample(dataset.world, s) for s in dataset]
    body = "".join(line + "\n" for line in lines)
    meta = {
        "world": dataset.world.to_dict(),
        "seed": dataset.seed,
        "n_samples": len(dataset),
        "format": "one rendered sample per line",
    }
    try:
        path.write_text(body, encoding="utf-8")
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write corpus to {path}: {exc}") from exc
    return path
