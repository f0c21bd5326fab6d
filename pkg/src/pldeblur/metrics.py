"""PSNR and SSIM for images in scene units (peak 1.0)."""
import numpy as np
from scipy import ndimage

PSNR_CAP = 99.0
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; identical images give the 99 dB cap."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _window():
    d = np.arange(-SSIM_RADIUS, SSIM_RADIUS + 1, dtype=np.float64)
    w = np.exp(-d * d / (2 * SSIM_SIGMA ** 2))
    return w / w.sum()


def _filter(img, w):
    out = ndimage.correlate1d(img, w, axis=0, mode="reflect")
    return ndimage.correlate1d(out, w, axis=1, mode="reflect")


def ssim(a, b) -> float:
    """Mean SSIM over the 11x11 Gaussian-weighted windows lying fully inside the image."""
    a, b = _pair(a, b)
    size = 2 * SSIM_RADIUS + 1
    if a.ndim != 2 or a.shape[0] < size or a.shape[1] < size:
        raise ValueError(f"ssim needs images of at least {size}x{size}, got {a.shape}")
    w = _window()
    mu_a, mu_b = _filter(a, w), _filter(b, w)
    var_a = _filter(a * a, w) - mu_a * mu_a
    var_b = _filter(b * b, w) - mu_b * mu_b
    cov = _filter(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    smap = num / den
    r = SSIM_RADIUS
    return float(smap[r:-r, r:-r].mean())
