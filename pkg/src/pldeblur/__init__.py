"""Photon-limited non-blind deblurring with Plug-and-Play splitting."""
from ._backend import BACKEND
from .core import BlurKernel, DenoiserSpec, Domain, Image, SolverConfig, SolverState, data_term, validate
from .dataio import gaussian_kernel, poisson_forward
from .linops import circ_convolve, circ_correlate, deblur_solve, wiener_init
from .metrics import psnr, ssim
from .prox import poisson_prox
from .solvers import pnp2_run, pnp3_run, richardson_lucy
from .unrolled import UnrolledParams, grad_check, unrolled_backward, unrolled_forward

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BlurKernel", "DenoiserSpec", "Domain", "Image", "SolverConfig", "SolverState",
    "UnrolledParams", "circ_convolve", "circ_correlate", "data_term", "deblur_solve", "gaussian_kernel",
    "grad_check", "pnp2_run", "pnp3_run", "poisson_forward", "poisson_prox", "psnr", "richardson_lucy",
    "ssim", "unrolled_backward", "unrolled_forward", "validate", "wiener_init",
]
