"""Consensus averaging on clustered networks with a two-time-scale rate certificate."""
from ._accel import HAS_NUMBA, backend
from .dynamics import (
    Decomposition,
    EnvelopeVerdict,
    Trajectory,
    decomposition,
    integrate,
    timescale_metrics,
    verify_envelope,
)
from .graph_core import ClusterGraph, TopologySpec, generate, laplacian, laplacian_direct, validate
from .spectral import RateReport, algebraic_connectivity, analyze, eigenvalues_symmetric, spectral_norm

__version__ = "0.1.0"

__all__ = [
    "HAS_NUMBA",
    "ClusterGraph",
    "Decomposition",
    "EnvelopeVerdict",
    "RateReport",
    "TopologySpec",
    "Trajectory",
    "algebraic_connectivity",
    "analyze",
    "backend",
    "decomposition",
    "eigenvalues_symmetric",
    "generate",
    "integrate",
    "laplacian",
    "laplacian_direct",
    "spectral_norm",
    "timescale_metrics",
    "validate",
    "verify_envelope",
]
