"""Rare-event probabilities, densities and conditional draws for sums of dependent log-normals."""
from __future__ import annotations

from .estimators import (CdfEstimator, ConditionalSampler, PdfEstimator, RightTailEstimator, estimate)
from .exceptions import (ConfigError, DimensionMismatch, DomainError, EmptyRegion, ModelError, NoConvergence,
                         NotIid, NotPositiveDefinite, SlnError)
from .lefttail import estimate_cdf, estimate_cdf_simple, estimate_pdf, sample_conditional
from .model import (BlackScholesSpec, SlnModel, black_scholes_model, equicorrelated, load_model,
                    model_from_dict, new_model)
from .righttail import ell_as, estimate_right_tail
from .stats import LogEstimate

__version__ = "0.1.0"

__all__ = [
    "BlackScholesSpec", "CdfEstimator", "ConditionalSampler", "ConfigError", "DimensionMismatch", "DomainError",
    "EmptyRegion", "LogEstimate", "ModelError", "NoConvergence", "NotIid", "NotPositiveDefinite", "PdfEstimator",
    "RightTailEstimator", "SlnError", "SlnModel", "black_scholes_model", "ell_as", "equicorrelated", "estimate",
    "estimate_cdf", "estimate_cdf_simple", "estimate_pdf", "estimate_right_tail", "load_model", "model_from_dict",
    "new_model", "sample_conditional",
]
