"""Closed-form Poisson proximal map and the denoiser step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import denoisers
from ._backend import kernels
from .core import DenoiserSpec


@dataclass(frozen=True)
class ProxResult:
    value: np.ndarray
    stationarity_residual: float


def poisson_prox_value(vt, y, alpha: float, rho2: float) -> np.ndarray:
    """Unchecked elementwise minimizer of ``-y*log(alpha*v) + alpha*v + rho2/2*(v - vt)^2``."""
    return kernels.poisson_prox(vt, y, float(alpha), float(rho2))


def stationarity_residual(v, vt, y, alpha: float, rho2: float) -> float:
    """Max of ``|-y/v + alpha + rho2*(v - vt)|`` over pixels with ``v > 0``."""
    v, vt, y = np.broadcast_arrays(v, vt, y)
    mask = v > 0
    if not mask.any():
        return 0.0
    vm, vtm, ym = v[mask], vt[mask], y[mask]
    return float(np.abs(-ym / vm + alpha + rho2 * (vm - vtm)).max())


def poisson_prox(vt, y, alpha: float, rho2: float) -> ProxResult:
    vt = np.asarray(vt, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    alpha = float(alpha)
    # alpha == 0 is accepted here: the map stays well defined without the linear term.
    if not (alpha >= 0 and np.isfinite(alpha)):
        raise ValueError(f"alpha must be nonnegative and finite, got {alpha!r}")
    if vt.shape != y.shape:
        raise ValueError(f"dimension mismatch: vt {vt.shape} vs y {y.shape}")
    if not rho2 > 0:
        raise ValueError(f"rho2 must be positive, got {rho2!r}")
    if np.any(y < 0):
        raise ValueError("photon counts y must be nonnegative")
    v = poisson_prox_value(vt, y, alpha, rho2)
    return ProxResult(v, stationarity_residual(v, vt, y, alpha, rho2))


def poisson_prox_partials(v, vt, y, alpha: float, rho2: float):
    """Partial derivatives of the prox output w.r.t. (vt, rho2, y).

    Obtained by implicit differentiation of the stationarity condition;
    pixels with ``v == 0`` (the projected branch) have zero derivatives.
    """
    den = y + rho2 * v * v
    safe = np.where(den > 0, den, 1.0)
    pos = den > 0
    d_vt = np.where(pos, rho2 * v * v / safe, 0.0)
    d_rho2 = np.where(pos, -(v - vt) * v * v / safe, 0.0)
    d_y = np.where(pos, v / safe, 0.0)
    return d_vt, d_rho2, d_y


def z_prox(zt, denoiser: DenoiserSpec) -> np.ndarray:
    """Denoiser step of the splitting; pure delegation to ``denoiser``."""
    if not isinstance(denoiser, DenoiserSpec):
        raise ValueError(f"unknown denoiser {denoiser!r}")
    return denoisers.apply(denoiser, zt)
