"""Denoisers that stand in for the proximal map of the image prior."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import fft, ndimage

from ._backend import kernels
from .core import DenoiserSpec

TRUNCATE = 4.0


def _taps_1d(sigma: float, n: int):
    """Normalized circular Gaussian taps of length ``n`` and their sigma-derivative."""
    g = np.zeros(n)
    dg = np.zeros(n)
    if sigma == 0:
        g[0] = 1.0
        return g, dg
    radius = int(np.floor(TRUNCATE * sigma))
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    dw = w * d * d / sigma ** 3
    total, dtotal = w.sum(), dw.sum()
    gw = w / total
    dgw = (dw - gw * dtotal) / total
    np.add.at(g, d.astype(int) % n, gw)
    np.add.at(dg, d.astype(int) % n, dgw)
    return g, dg


@lru_cache(maxsize=64)
def gaussian_transfer(sigma: float, shape: tuple):
    """Transfer function (rfft2 layout) of the separable circular Gaussian and its d/dsigma.

    The kernel is symmetric, so both spectra are real.
    """
    m, n = shape
    gr, dgr = _taps_1d(sigma, m)
    gc, dgc = _taps_1d(sigma, n)
    fr, dfr = fft.fft(gr).real, fft.fft(dgr).real
    fc, dfc = fft.rfft(gc).real, fft.rfft(dgc).real
    t = np.outer(fr, fc)
    dt = np.outer(dfr, fc) + np.outer(fr, dfc)
    t.flags.writeable = False
    dt.flags.writeable = False
    return t, dt


def gaussian_smooth(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.array(img, dtype=np.float64)
    t, _ = gaussian_transfer(float(sigma), img.shape)
    return fft.irfft2(fft.rfft2(img) * t, s=img.shape)


def tv_objective(u: np.ndarray, f: np.ndarray, weight: float) -> float:
    """ROF energy ``0.5*||u - f||^2 + weight*TV(u)`` with isotropic forward differences."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = np.diff(u, axis=1)
    gy[:-1, :] = np.diff(u, axis=0)
    return 0.5 * float(np.sum((u - f) ** 2)) + weight * float(np.sum(np.hypot(gx, gy)))


def tv_denoise(img: np.ndarray, weight: float, iters: int = 50, tol: float = 1e-5) -> np.ndarray:
    u, _ = kernels.tv_denoise(img, float(weight), int(iters), float(tol))
    return u


def apply(spec: DenoiserSpec, img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"denoiser input must be 2-D, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("denoiser input contains non-finite values")
    if spec.kind == "identity":
        return img.copy()
    if spec.kind == "gauss":
        return gaussian_smooth(img, spec.sigma)
    if spec.kind == "tv":
        return tv_denoise(img, spec.weight, spec.iters, spec.tol)
    if spec.kind == "median":
        return ndimage.median_filter(img, size=2 * spec.radius + 1, mode="wrap")
    raise ValueError(f"unknown denoiser kind {spec.kind!r}")


def apply_with_jacobian(spec: DenoiserSpec, img, cotangent):
    """Gaussian smoothing with its vector-Jacobian product and d<cotangent, D(img)>/dsigma.

    Returns ``(D(img), D(cotangent), dsigma)``; the smoothing is self-adjoint.
    """
    if spec.kind != "gauss":
        raise ValueError(f"denoiser {spec.kind!r} is not differentiable; use 'gauss'")
    img = np.asarray(img, dtype=np.float64)
    cotangent = np.asarray(cotangent, dtype=np.float64)
    if img.shape != cotangent.shape:
        raise ValueError(f"dimension mismatch: {img.shape} vs {cotangent.shape}")
    if spec.sigma == 0:
        return img.copy(), cotangent.copy(), 0.0
    t, dt = gaussian_transfer(float(spec.sigma), img.shape)
    fi = fft.rfft2(img)
    fc = fft.rfft2(cotangent)
    out = fft.irfft2(fi * t, s=img.shape)
    vjp = fft.irfft2(fc * t, s=img.shape)
    dsigma = float(np.sum(cotangent * fft.irfft2(fi * dt, s=img.shape)))
    return out, vjp, dsigma
