"""Learning-curve sweeps over (estimator, sample size, seed) cells.

Each cell samples a training set, fits one estimator and evaluates it. The
training-data seed of a cell depends only on ``(master_seed, n, seed_index)``,
so all estimators see the same data at a given ``(n, seed_index)`` and the
results do not depend on the number of workers. Finished cells are appended
to ``cells.jsonl`` as they complete; a rerun in the same directory with the
same configuration skips them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import make_estimator
from .metrics import evaluate, make_perturbations
from .sampling import sample_dataset
from .world import WorldSpec, generate_world, world_1, world_3

logger = logging.getLogger(__name__)

OUTPUT_ENV = "LEVERBENCH_OUTPUT"
DEFAULT_SCHEDULE = (10, 32, 100, 316, 1000, 3162, 10000, 31623, 100000)
PRESETS = {"world-1": world_1, "world-3": world_3}
PERTURBATION_STREAM = 2**31 - 1
RESULT_FIELDS = (
    "config_hash",
    "world_id",
    "estimator",
    "n_train",
    "seed_index",
    "data_seed",
    "expected_tv",
    "structure_score",
    "eval_mode",
    "status",
    "error",
)


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def resolve_world(source: dict) -> WorldSpec:
    """Build a world from ``{"preset": ...}``, ``{"spec_file": ...}`` or generator kwargs."""
    source = dict(source)
    if "preset" in source:
        name = source.pop("preset")
        if name not in PRESETS:
            raise ValueError(f"unknown world preset {name!r}; choose from {sorted(PRESETS)}")
        return PRESETS[name](**source)
    if "spec_file" in source:
        return WorldSpec.load(source["spec_file"])
    if "spec" in source:
        return WorldSpec.from_dict(source["spec"])
    return generate_world(**source)


def estimator_label(spec: dict) -> str:
    if spec.get("label"):
        return spec["label"]
    params = spec.get("params", {})
    extra = "-".join(f"{k}={params[k]}" for k in sorted(params))
    return spec["name"] + (f"[{extra}]" if extra else "")


@dataclass
class ExperimentConfig:
    world: dict
    estimators: list[dict]
    sample_sizes: list[int] = field(default_factory=lambda: list(DEFAULT_SCHEDULE))
    n_seeds: int = 5
    master_seed: int = 0
    eval_mode: str = "enumerate"
    n_draws: int = 10_000
    n_perturbations: int = 1000
    output_dir: str | None = None
    n_jobs: int = 1

    def __post_init__(self):
        sizes = [int(n) for n in self.sample_sizes]
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sample sizes must be strictly increasing")
        if sizes[0] < 0:
            raise ValueError("sample sizes must be non-negative")
        if self.n_seeds < 1:
            raise ValueError("need at least one seed per point")
        if not self.estimators:
            raise ValueError("need at least one estimator")
        if self.eval_mode not in ("enumerate", "monte-carlo"):
            raise ValueError(f"unknown eval mode {self.eval_mode!r}")
        labels = [estimator_label(e) for e in self.estimators]
        if len(set(labels)) != len(labels):
            raise ValueError("estimator labels must be unique")
        self.sample_sizes = sizes

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        # execution details do not change results
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("n_jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def cells(self) -> list[tuple[int, int, int]]:
        return [
            (e, n, s)
            for e in range(len(self.estimators))
            for n in self.sample_sizes
            for s in range(self.n_seeds)
        ]


def data_seed(master_seed: int, n: int, seed_index: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(n, seed_index)).generate_state(1)[0])


def perturbation_seed(master_seed: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(PERTURBATION_STREAM,)).generate_state(1)[0])


def run_cell(config: dict, world: dict, estimator_index: int, n: int, seed_index: int) -> dict:
    """Sample, fit and evaluate one cell; failures become data, never exceptions."""
    cfg = ExperimentConfig.from_dict(config)
    spec = cfg.estimators[estimator_index]
    world_spec = WorldSpec.from_dict(world)
    dseed = data_seed(cfg.master_seed, n, seed_index)
    row = {
        "config_hash": cfg.config_hash(),
        "world_id": world_spec.world_id,
        "estimator": estimator_label(spec),
        "n_train": n,
        "seed_index": seed_index,
        "data_seed": dseed,
        "expected_tv": None,
        "structure_score": None,
        "eval_mode": cfg.eval_mode,
        "status": "ok",
        "error": "",
    }
    start = time.perf_counter()
    try:
        data = sample_dataset(world_spec, n, dseed)
        model = make_estimator(spec["name"], world=world_spec, **spec.get("params", {}))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.fit(data.X, data.y)
        perturbations = make_perturbations(world_spec, cfg.n_perturbations, perturbation_seed(cfg.master_seed))
        report = evaluate(
            world_spec,
            model,
            perturbations,
            n_train=n,
            estimator_id=row["estimator"],
            mode=cfg.eval_mode,
            n_draws=cfg.n_draws,
            seeds={"data": dseed, "eval": dseed},
        )
        row["expected_tv"] = report.expected_tv
        row["structure_score"] = report.structure_score
    except Exception as exc:  # noqa: BLE001 - a failed cell is recorded, not raised
        logger.warning("cell %s n=%d seed=%d failed: %s", row["estimator"], n, seed_index, exc)
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_clock"] = time.perf_counter() - start
    return row


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_FIELDS)
    for r in rows:
        writer.writerow([_format(r[k]) for k in RESULT_FIELDS])
    return buf.getvalue()


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    rows: list[dict]
    wall_clock: float
    version: str = __version__
    output_dir: str | None = None

    def csv(self) -> str:
        return rows_to_csv(self.rows)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _load_finished(path: Path, config_hash: str) -> dict:
    done = {}
    if not path.exists():
        return done
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError:
            continue  # torn write from an interrupted run
        if row.get("config_hash") == config_hash:
            done[(row["estimator"], row["n_train"], row["seed_index"])] = row
    return done


def run_learning_curve(config: ExperimentConfig, resume: bool = True) -> RunRecord:
    """Evaluate every (estimator, n, seed) cell of ``config``.

    With ``config.output_dir`` set, writes ``cells.jsonl`` incrementally and
    ``results.csv`` / ``run.json`` at the end.
    """
    start = time.perf_counter()
    world = resolve_world(config.world)
    chash = config.config_hash()
    cfg_dict = config.to_dict()
    out = Path(config.output_dir) if config.output_dir else None
    journal = None
    done = {}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        journal = out / "cells.jsonl"
        if resume:
            done = _load_finished(journal, chash)
        elif journal.exists():
            journal.unlink()

    labels = [estimator_label(e) for e in config.estimators]
    pending = [c for c in config.cells() if (labels[c[0]], c[1], c[2]) not in done]
    results = dict(done)

    def record(row):
        results[(row["estimator"], row["n_train"], row["seed_index"])] = row
        if journal is not None:
            with journal.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    world_dict = world.to_dict()
    if config.n_jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            futures = [pool.submit(run_cell, cfg_dict, world_dict, *c) for c in pending]
            for fut in futures:
                record(fut.result())
    else:
        for c in pending:
            record(run_cell(cfg_dict, world_dict, *c))

    rows = [results[(labels[e], n, s)] for e, n, s in config.cells()]
    rec = RunRecord(cfg_dict, chash, rows, time.perf_counter() - start, output_dir=str(out) if out else None)
    if out is not None:
        (out / "results.csv").write_text(rec.csv(), encoding="utf-8")
        (out / "run.json").write_text(json.dumps(rec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return rec


def summarize(rows: list[dict]) -> dict:
    """Mean and std of TV and structure score per (estimator, n) over ok cells."""
    groups: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        groups.setdefault((r["estimator"], r["n_train"]), []).append(r)
    out = {}
    for key, rs in groups.items():
        tv = np.array([r["expected_tv"] for r in rs])
        sc = np.array([r["structure_score"] for r in rs])
        out[key] = {
            "tv_mean": float(tv.mean()),
            "tv_std": float(tv.std()),
            "score_mean": float(sc.mean()),
            "score_std": float(sc.std()),
            "n": len(rs),
        }
    return out


def emit_plots(record: RunRecord, out_dir=None) -> list[Path]:
    """TV vs n, score vs n and TV-vs-score tradeoff plots as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir or record.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(record.rows)
    estimators = list(dict.fromkeys(r["estimator"] for r in record.rows))
    plt.rcParams["svg.hashsalt"] = "leverbench"
    paths = []
    for metric, ylabel, fname in (
        ("tv", "expected TV distance", "tv_vs_n.svg"),
        ("score", "structure score", "score_vs_n.svg"),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        for est in estimators:
            pts = sorted((n, v) for (e, n), v in summary.items() if e == est and n > 0)
            if not pts:
                continue
            ns = [n for n, _ in pts]
            ax.errorbar(ns, [v[f"{metric}_mean"] for _, v in pts], yerr=[v[f"{metric}_std"] for _, v in pts],
                        marker="o", capsize=2, label=est)
        ax.set_xscale("log")
        ax.set_xlabel("training samples")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out / fname
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for est in estimators:
        pts = sorted((n, v) for (e, n), v in summary.items() if e == est)
        ax.plot([v["tv_mean"] for _, v in pts], [v["score_mean"] for _, v in pts], marker="o", label=est)
    ax.set_xlabel("expected TV distance")
    ax.set_ylabel("structure score")
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out / "tradeoff.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(path)
    return paths
