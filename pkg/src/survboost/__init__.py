"""Gradient-boosted competing-risks models trained with an IPCW-reweighted log loss."""
from .data import Dataset, TimeGrid, load_dataset, split, write_dataset
from .exceptions import (
    DataError,
    ModelFormatError,
    ModelVersionError,
    ParseError,
    SchemaError,
    SurvBoostError,
    ValidationError,
)
from .nonparametric import StepFunction, aalen_johansen, censoring_km, kaplan_meier
from .survival_boost import (
    SurvivalBoostConfig,
    SurvivalModel,
    fit,
    fit_aalen_johansen,
    fit_kaplan_meier,
    load_model,
    predict_cif,
    save_model,
)

__version__ = "0.1.0"
