"""Symmetric stable log densities, difference priors and MAP inversion."""

from .hybrid import HybridModel, default_grid_dir, logpdf, logpdf_vec
from .oracles import OracleError, StableParams, oracle_logpdf_dr, oracle_pdf
from .priors import (
    DifferencePrior1D,
    FieldPrior2D,
    HierarchicalSpec,
    HierarchyMode,
    InitialDist,
    grad_logprior_1d,
    grad_logprior_2d,
    grad_logprior_hier,
    logprior_1d,
    logprior_2d,
    logprior_hier,
)

__all__ = [
    "DifferencePrior1D", "FieldPrior2D", "HierarchicalSpec", "HierarchyMode", "HybridModel",
    "InitialDist", "OracleError", "StableParams", "default_grid_dir", "grad_logprior_1d",
    "grad_logprior_2d", "grad_logprior_hier", "logpdf", "logpdf_vec", "logprior_1d",
    "logprior_2d", "logprior_hier", "oracle_logpdf_dr", "oracle_pdf",
]
