"""Divergence-free spectral toolkit for 2D incompressible flow on the unit torus."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    Grid,
    ScalarField,
    SpectralField,
    VectorField2,
    curl_perp,
    curl_scalar,
    divergence,
    l2_inner,
    l2_norm,
)
from .hodge import helmholtz_decompose, leray_project, stream_function_of  # noqa: E402

__all__ = [
    "Grid",
    "ScalarField",
    "SpectralField",
    "VectorField2",
    "curl_perp",
    "curl_scalar",
    "divergence",
    "l2_inner",
    "l2_norm",
    "leray_project",
    "helmholtz_decompose",
    "stream_function_of",
]
