"""Coupled multichannel Bregman iterations for color image denoising."""
from .admm import AdmmConfig, InnerSolverError, solve_rof_with_prior
from .bregman import StopRule, WeightMatrix, WeightMatrixError, psnr, run, run_channelwise
from .grid import TVFlavor, divergence, gradient
from .infconv import infconv_run

__all__ = [
    "AdmmConfig",
    "InnerSolverError",
    "StopRule",
    "TVFlavor",
    "WeightMatrix",
    "WeightMatrixError",
    "divergence",
    "gradient",
    "infconv_run",
    "psnr",
    "run",
    "run_channelwise",
    "solve_rof_with_prior",
]
