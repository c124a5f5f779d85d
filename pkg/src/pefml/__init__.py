"""Photoelectric-factor prediction from conventional well logs."""

from .errors import ArityError, DataError, DegenerateError, ModelError, ParseError, PefError, UnknownCurveError
from .metrics import EvaluationResult, aape, evaluate, outside_ci_fraction, pearson_r, rmse
from .synthetic import pef_from_z, z_from_pef
from .well_data import INPUT_CURVES, TARGET_CURVE, LogCurve, WellDataset

__version__ = "0.1.0"
