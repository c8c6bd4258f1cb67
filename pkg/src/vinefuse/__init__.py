"""Regular-vine copula toolkit and Bayes fusion classifier."""

__version__ = "0.1.0"

from .bicop import CopulaFamily, PairCopula  # noqa: E402
from .classify import ClassifierBundle, ConfusionMatrix, evaluate, log_posterior, predict, train  # noqa: E402
from .margins import MarginalModel, fit_marginal  # noqa: E402
from .select import SelectionConfig, select_structure_and_fit  # noqa: E402
from .vine import VineEdge, VineModel, VineStructure, validate_structure  # noqa: E402

__all__ = [
    "ClassifierBundle",
    "ConfusionMatrix",
    "CopulaFamily",
    "MarginalModel",
    "PairCopula",
    "SelectionConfig",
    "VineEdge",
    "VineModel",
    "VineStructure",
    "evaluate",
    "fit_marginal",
    "log_posterior",
    "predict",
    "select_structure_and_fit",
    "train",
    "validate_structure",
]
