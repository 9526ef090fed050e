"""Frequency-resolved entanglement swapping between two SPDC sources.

Gaussian joint spectra, heralded two-color Bell states and their
Hong-Ou-Mandel fringes, finite-resolution filter banks, quasi-orthogonal
mode selection, and a synthetic time-tag pipeline.
"""
from .errors import (
    ConfigurationError,
    ContractViolation,
    CoverageError,
    DegenerateHeraldError,
    FitError,
    FreqSwapError,
    InvalidBackgroundError,
    NullStateError,
    ParameterDomainError,
    TruncationError,
)
from .filters import FilterBank, build_filter_bank
from .spectral import (
    AmplitudeMatrix,
    DensityMatrix,
    JsaParams,
    SchmidtResult,
    SpectralGrid,
    build_jsa,
    default_grids,
    overlap_integral,
    reduced_density,
    schmidt_decompose,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeMatrix",
    "ConfigurationError",
    "ContractViolation",
    "CoverageError",
    "DegenerateHeraldError",
    "DensityMatrix",
    "FilterBank",
    "FitError",
    "FreqSwapError",
    "InvalidBackgroundError",
    "JsaParams",
    "NullStateError",
    "ParameterDomainError",
    "SchmidtResult",
    "SpectralGrid",
    "TruncationError",
    "build_filter_bank",
    "build_jsa",
    "default_grids",
    "overlap_integral",
    "reduced_density",
    "schmidt_decompose",
    "__version__",
]
