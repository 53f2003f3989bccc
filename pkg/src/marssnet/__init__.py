"""Directional brain-network inference with a clustering-enabled multivariate
autoregressive state-space model, plus the windowing, metrics and baseline
tooling around it."""

from .errors import MarssError, NumericalError, ValidationError
from .gibbs import PosteriorSummary, run_gibbs
from .model import Hyperparams, ModelState, Recording, Segment
from .pipeline import RunConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "MarssError",
    "NumericalError",
    "ValidationError",
    "PosteriorSummary",
    "run_gibbs",
    "Hyperparams",
    "ModelState",
    "Recording",
    "Segment",
    "RunConfig",
    "run_pipeline",
]
