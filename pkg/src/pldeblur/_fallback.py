"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``PLDEBLUR_BACKEND=python`` is set. Results agree with the extension: the
Poisson sampler bit-for-bit, the float kernels to rounding.
"""
import math

import numpy as np

NAME = "python"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_KEY2_SALT = 0xD1B54A32D192ED03
_TWO_M53 = 1.0 / 9007199254740992.0
_MAX_INVERSION_STEPS = 1000
_INVERSION_CUTOFF = 10.0
_LOGFACT_TABLE = [0.0]
for _k in range(1, 10):
    _LOGFACT_TABLE.append(_LOGFACT_TABLE[-1] + math.log(_k))


def _mix(z):
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def stream_keys(seed):
    seed &= _MASK
    return _mix(seed), _mix(seed ^ _KEY2_SALT)


def _uniform(k1, k2, pixel, draw):
    z = _mix(((pixel << 32) | draw) ^ k1)
    z = _mix((z + k2) & _MASK)
    return (z >> 11) * _TWO_M53


def uniforms(seed, pixels, draw=0):
    """Uniform [0, 1) variates for the given flat pixel indices at one draw index."""
    k1, k2 = stream_keys(int(seed))
    flat = np.asarray(pixels, dtype=np.int64).ravel()
    out = np.fromiter((_uniform(k1, k2, int(j), draw) for j in flat), dtype=np.float64, count=flat.size)
    return out.reshape(np.shape(pixels))


def log_factorial(k):
    if k < 10:
        return _LOGFACT_TABLE[k]
    x = k + 1.0
    x2 = 1.0 / (x * x)
    series = (((-1.0 / 1680.0) * x2 + 1.0 / 1260.0) * x2 - 1.0 / 360.0) * x2 + 1.0 / 12.0
    return (x - 0.5) * math.log(x) - x + 0.9189385332046727 + series / x


def _poisson_one(lam, k1, k2, pixel):
    if lam <= 0.0:
        return 0
    if lam < _INVERSION_CUTOFF:
        u = _uniform(k1, k2, pixel, 0)
        p = math.exp(-lam)
        cdf = p
        k = 0
        while u > cdf and k < _MAX_INVERSION_STEPS:
            k += 1
            p = p * lam / k
            cdf = cdf + p
        return k
    # Transformed rejection with squeeze (PTRS), two uniforms per attempt.
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    draw = 0
    while True:
        U = _uniform(k1, k2, pixel, draw) - 0.5
        V = _uniform(k1, k2, pixel, draw + 1)
        draw += 2
        us = 0.5 - abs(U)
        if us <= 0.0:
            continue
        k = int(math.floor((2.0 * a / us + b) * U + lam + 0.43))
        if us >= 0.07 and V <= vr:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        if (math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - log_factorial(k)):
            return k


def poisson_sample(rate, seed):
    rate = np.ascontiguousarray(rate, dtype=np.float64)
    k1, k2 = stream_keys(int(seed))
    flat = rate.ravel()
    out = np.empty(flat.size, dtype=np.float64)
    for j in range(flat.size):
        out[j] = _poisson_one(float(flat[j]), k1, k2, j)
    return out.reshape(rate.shape)


def poisson_prox(vt, y, alpha, rho2):
    c = rho2 * vt - alpha
    s = np.sqrt(c * c + 4.0 * rho2 * y)
    pos = c >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_branch = np.where(s - c > 0, 2.0 * y / (s - c), 0.0)
    return np.where(pos, (c + s) / (2.0 * rho2), neg_branch)


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _div(px, py):
    # Negative adjoint of _grad; relies on px[:, -1] == py[-1, :] == 0.
    d = px.copy()
    d[:, 1:] -= px[:, :-1]
    d += py
    d[1:, :] -= py[:-1, :]
    return d


def tv_denoise(f, weight, iters, tol, tau=0.25):
    """Dual projected-gradient ROF solver; returns (u, iterations run)."""
    f = np.ascontiguousarray(f, dtype=np.float64)
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    inv_w = 1.0 / weight
    it = 0
    for it in range(1, iters + 1):
        gx, gy = _grad(_div(px, py) - f * inv_w)
        qx = px + tau * gx
        qy = py + tau * gy
        norm = np.maximum(1.0, np.sqrt(qx * qx + qy * qy))
        qx /= norm
        qy /= norm
        change = max(np.abs(qx - px).max(), np.abs(qy - py).max())
        px, py = qx, qy
        if change < tol:
            break
    return f - weight * _div(px, py), it
