"""Thermodynamic formalism for random countable topological Markov chains."""

from .base import BaseSystem
from .config import build, fixture
from .errors import (
    AssertionFailure,
    BipFailure,
    ConfigError,
    NoConvergence,
    RTMCError,
    SandwichViolation,
    TruncationUnsound,
    UnknownFixture,
)
from .matrix import MatrixCocycle, random_pf, stationary_distribution
from .potential import Potential
from .shift import BipCertificate, RandomShift, verify_bip
from .spectral import conformal_measure, eigenfunction, lambda_quotient
from .transfer import AnchorFamily, pressure

__version__ = "0.1.0"

__all__ = [
    "AnchorFamily", "AssertionFailure", "BaseSystem", "BipCertificate", "BipFailure", "ConfigError",
    "MatrixCocycle", "NoConvergence", "Potential", "RTMCError", "RandomShift", "SandwichViolation",
    "TruncationUnsound", "UnknownFixture", "build", "conformal_measure", "eigenfunction", "fixture",
    "lambda_quotient", "pressure", "random_pf", "stationary_distribution", "verify_bip",
]
