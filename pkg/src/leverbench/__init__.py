"""Sample-complexity benchmark on stochastic lever worlds."""

__version__ = "0.1.0"

from .world import (  # noqa: E402
    LatentGaussian,
    ObjectSpec,
    VariableKind,
    WorldSpec,
    balance_outcome,
    enumerate_visible_inputs,
    generate_world,
    true_conditional,
    world_1,
    world_3,
)
from .sampling import Dataset, Sample, export_corpus, parse_sample, render_sample, sample_dataset  # noqa: E402
from .estimators import NaiveMLE, PolynomialLogisticRegression, StructureMLE, TrueModel  # noqa: E402
from .metrics import EvalReport, expected_tv, make_perturbations, structure_score  # noqa: E402

__all__ = [
    "Dataset",
    "EvalReport",
    "LatentGaussian",
    "NaiveMLE",
    "ObjectSpec",
    "PolynomialLogisticRegression",
    "Sample",
    "StructureMLE",
    "TrueModel",
    "VariableKind",
    "WorldSpec",
    "balance_outcome",
    "enumerate_visible_inputs",
    "expected_tv",
    "export_corpus",
    "generate_world",
    "make_perturbations",
    "parse_sample",
    "render_sample",
    "sample_dataset",
    "structure_score",
    "true_conditional",
    "world_1",
    "world_3",
]
