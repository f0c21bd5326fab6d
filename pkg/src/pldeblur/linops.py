"""FFT-based circular blur, its adjoint, the coupled least-squares x-update
and Wiener initialization.

All transforms use the real-input DFT. The exposed operations do not depend
on the transform normalization.
"""
from __future__ import annotations

import numpy as np
from scipy import fft

from .core import as_kernel, check_alpha


class FreqPlan:
    """Cached spectra of a kernel bound to one image shape. Read-only once built."""

    def __init__(self, h, shape):
        self.kernel = as_kernel(h)
        self.shape = tuple(int(s) for s in shape)
        self.otf = self.kernel.otf(self.shape)
        self.otf_conj = np.conj(self.otf)
        self.otf_abs2 = (self.otf * self.otf_conj).real

    def forward(self, x: np.ndarray) -> np.ndarray:
        return fft.rfft2(x)

    def inverse(self, spec: np.ndarray) -> np.ndarray:
        return fft.irfft2(spec, s=self.shape)

    def convolve(self, x):
        return self.inverse(self.forward(x) * self.otf)

    def correlate(self, r):
        return self.inverse(self.forward(r) * self.otf_conj)

    def deblur(self, x0t, x1t, rho_ratio):
        num = self.forward(x0t) + rho_ratio * self.otf_conj * self.forward(x1t)
        return self.inverse(num / (1.0 + rho_ratio * self.otf_abs2))

    def deblur_adjoint(self, g, rho_ratio):
        """Adjoint of :meth:`deblur`: returns the cotangents of (x0t, x1t)."""
        a = self.inverse(self.forward(g) / (1.0 + rho_ratio * self.otf_abs2))
        return a, rho_ratio * self.convolve(a)


def _plan(h, shape) -> FreqPlan:
    if isinstance(h, FreqPlan):
        if h.shape != tuple(shape):
            raise ValueError(f"plan bound to {h.shape}, image is {tuple(shape)}")
        return h
    return FreqPlan(h, shape)


def _grid(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    return x


def circ_convolve(x, h) -> np.ndarray:
    """Blur ``x`` with ``h`` under circular boundary conditions (``Hx``)."""
    x = _grid(x)
    return _plan(h, x.shape).convolve(x)


def circ_correlate(r, h) -> np.ndarray:
    """Apply the adjoint blur ``H^T r``."""
    r = _grid(r, "r")
    return _plan(h, r.shape).correlate(r)


def deblur_solve(x0t, x1t, h, rho_ratio: float) -> np.ndarray:
    """Minimize ``||x - x0t||^2 + rho_ratio*||Hx - x1t||^2`` in closed form.

    ``rho_ratio`` is rho2 / rho1.
    """
    x0t, x1t = _grid(x0t, "x0t"), _grid(x1t, "x1t")
    if x0t.shape != x1t.shape:
        raise ValueError(f"dimension mismatch: {x0t.shape} vs {x1t.shape}")
    if not rho_ratio > 0:
        raise ValueError(f"rho_ratio must be positive, got {rho_ratio!r}")
    return _plan(h, x0t.shape).deblur(x0t, x1t, float(rho_ratio))


def wiener_filter(y, h, alpha: float) -> np.ndarray:
    """Unclamped regularized inverse filter with noise-to-signal ratio 1/alpha."""
    y = _grid(y, "y")
    alpha = check_alpha(alpha)
    plan = _plan(h, y.shape)
    spec = plan.otf_conj * plan.forward(y) / (1.0 / alpha + plan.otf_abs2)
    return plan.inverse(spec) / alpha


def wiener_init(y, h, alpha: float, clamp: bool = True) -> np.ndarray:
    """Initial scene estimate from photon counts; clamped to [0, 1] by default."""
    x0 = wiener_filter(y, h, alpha)
    return np.clip(x0, 0.0, 1.0) if clamp else x0


def wiener_adjoint(g, h, alpha: float) -> np.ndarray:
    plan = _plan(h, np.shape(g))
    spec = plan.otf * plan.forward(g) / (1.0 / alpha + plan.otf_abs2)
    return plan.inverse(spec) / alpha

