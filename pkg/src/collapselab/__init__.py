"""Analytic loss landscapes and collapse prediction for linear self-supervised models."""

from .datamodel import AugmentationSpec, CovarianceModel, Dataset, ImbalanceSpec
from .losses import LossSpec, Weights
from .spectra import SpectralPair

__version__ = "0.1.0"

__all__ = [
    "AugmentationSpec",
    "CovarianceModel",
    "Dataset",
    "ImbalanceSpec",
    "LossSpec",
    "SpectralPair",
    "Weights",
    "__version__",
]
