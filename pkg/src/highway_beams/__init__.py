"""Beam-switching and handover analysis for mmWave highway networks."""
from .codebook import Codebook, LaneGeometry
from .stochastic_geometry import LosModel, PointProcess1D, Seed, Side

__version__ = "0.1.0"

__all__ = ["Codebook", "LaneGeometry", "LosModel", "PointProcess1D", "Seed", "Side", "__version__"]
