from .base import ConstantModel, TrueModel, check_X, check_Xy, load_model, save_model
from .logreg import PolynomialLogisticRegression, monomial_index, n_poly_features, poly_features
from .naive import NaiveMLE
from .structure import StructureMLE, discretize_gaussian, golden_section_max, structure_q

REGISTRY = {
    "naive": NaiveMLE,
    "logreg": PolynomialLogisticRegression,
    "structure": StructureMLE,
    "truth": TrueModel,
    "constant": ConstantModel,
}

# estimators that need the world passed as a constructor parameter
WORLD_AWARE = {"structure", "truth"}


def make_estimator(name: str, world=None, **params):
    """Instantiate a registered estimator by name."""
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(REGISTRY)}") from None
    if name in WORLD_AWARE:
        params["world"] = world
    return cls(**params)


__all__ = [
    "REGISTRY",
    "ConstantModel",
    "NaiveMLE",
    "PolynomialLogisticRegression",
    "StructureMLE",
    "TrueModel",
    "check_X",
    "check_Xy",
    "discretize_gaussian",
    "golden_section_max",
    "load_model",
    "make_estimator",
    "monomial_index",
    "n_poly_features",
    "poly_features",
    "save_model",
    "structure_q",
]
