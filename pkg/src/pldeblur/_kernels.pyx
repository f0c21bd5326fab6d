# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: counter-based Poisson sampling, elementwise Poisson
proximal map and the dual TV iteration. Mirrors ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, floor, fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

NAME = "cython"

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL
cdef uint64_t _KEY2_SALT = 0xD1B54A32D192ED03ULL
cdef double _TWO_M53 = 1.0 / 9007199254740992.0
cdef int _MAX_INVERSION_STEPS = 1000
cdef double _INVERSION_CUTOFF = 10.0
cdef double _LOGFACT[10]

_LOGFACT[0] = 0.0
for _k in range(1, 10):
    _LOGFACT[_k] = _LOGFACT[_k - 1] + log(<double>_k)


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = z + _GOLDEN
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t k1, uint64_t k2, uint64_t pixel, uint64_t draw) nogil:
    cdef uint64_t z = _mix(((pixel << 32) | draw) ^ k1)
    z = _mix(z + k2)
    return <double>(z >> 11) * _TWO_M53


def stream_keys(seed):
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return int(_mix(s)), int(_mix(s ^ _KEY2_SALT))


def uniforms(seed, pixels, draw=0):
    k1, k2 = stream_keys(seed)
    cdef uint64_t a = k1, b = k2, d = draw
    cdef const int64_t[::1] flat = np.ascontiguousarray(pixels, dtype=np.int64).ravel()
    out = np.empty(flat.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t j
    for j in range(flat.shape[0]):
        ov[j] = _uniform(a, b, <uint64_t>flat[j], d)
    return out.reshape(np.shape(pixels))


cdef inline double _log_factorial(int64_t k) nogil:
    cdef double x, x2, series
    if k < 10:
        return _LOGFACT[k]
    x = k + 1.0
    x2 = 1.0 / (x * x)
    series = (((-1.0 / 1680.0) * x2 + 1.0 / 1260.0) * x2 - 1.0 / 360.0) * x2 + 1.0 / 12.0
    return (x - 0.5) * log(x) - x + 0.9189385332046727 + series / x


def log_factorial(k):
    return _log_factorial(k)


cdef int64_t _poisson_one(double lam, uint64_t k1, uint64_t k2, uint64_t pixel) nogil:
    cdef double u, p, cdf, slam, loglam, b, a, invalpha, vr, U, V, us
    cdef int64_t k
    cdef uint64_t draw
    if lam <= 0.0:
        return 0
    if lam < _INVERSION_CUTOFF:
        u = _uniform(k1, k2, pixel, 0)
        p = exp(-lam)
        cdf = p
        k = 0
        while u > cdf and k < _MAX_INVERSION_STEPS:
            k += 1
            p = p * lam / k
            cdf = cdf + p
        return k
    slam = sqrt(lam)
    loglam = log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    draw = 0
    while True:
        U = _uniform(k1, k2, pixel, draw) - 0.5
        V = _uniform(k1, k2, pixel, draw + 1)
        draw += 2
        us = 0.5 - fabs(U)
        if us <= 0.0:
            continue
        k = <int64_t>floor((2.0 * a / us + b) * U + lam + 0.43)
        if us >= 0.07 and V <= vr:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        if (log(V) + log(invalpha) - log(a / (us * us) + b)
                <= -lam + k * loglam - _log_factorial(k)):
            return k


def poisson_sample(rate, seed):
    k1, k2 = stream_keys(seed)
    cdef uint64_t a = k1, b = k2
    flat = np.ascontiguousarray(rate, dtype=np.float64).ravel()
    out = np.empty(flat.shape[0])
    cdef const double[::1] fv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t j, n = flat.shape[0]
    with nogil:
        for j in range(n):
            ov[j] = <double>_poisson_one(fv[j], a, b, <uint64_t>j)
    return out.reshape(np.shape(rate))


def poisson_prox(vt, y, double alpha, double rho2):
    vt_b, y_b = np.broadcast_arrays(np.asarray(vt, dtype=np.float64), np.asarray(y, dtype=np.float64))
    shape = vt_b.shape
    cdef const double[::1] vv = np.ascontiguousarray(vt_b).ravel()
    cdef const double[::1] yv = np.ascontiguousarray(y_b).ravel()
    out = np.empty(vv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = vv.shape[0]
    cdef double c, s
    with nogil:
        for i in range(n):
            c = rho2 * vv[i] - alpha
            s = sqrt(c * c + 4.0 * rho2 * yv[i])
            if c >= 0:
                ov[i] = (c + s) / (2.0 * rho2)
            elif s - c > 0:
                ov[i] = 2.0 * yv[i] / (s - c)
            else:
                ov[i] = 0.0
    return out.reshape(shape)


cdef void _div(double[:, ::1] px, double[:, ::1] py, double[:, ::1] d) nogil:
    cdef Py_ssize_t i, j, m = px.shape[0], n = px.shape[1]
    for i in range(m):
        for j in range(n):
            d[i, j] = px[i, j] + py[i, j]
            if j > 0:
                d[i, j] -= px[i, j - 1]
            if i > 0:
                d[i, j] -= py[i - 1, j]


def tv_denoise(f, double weight, int iters, double tol, double tau=0.25):
    fa = np.ascontiguousarray(f, dtype=np.float64)
    cdef const double[:, ::1] fv = fa
    cdef Py_ssize_t m = fv.shape[0], n = fv.shape[1], i, j
    px_a = np.zeros((m, n)); py_a = np.zeros((m, n)); w_a = np.zeros((m, n))
    cdef double[:, ::1] px = px_a
    cdef double[:, ::1] py = py_a
    cdef double[:, ::1] w = w_a
    cdef double inv_w = 1.0 / weight, gx, gy, qx, qy, nrm, change
    cdef int it = 0
    with nogil:
        while it < iters:
            it += 1
            _div(px, py, w)
            for i in range(m):
                for j in range(n):
                    w[i, j] = w[i, j] - fv[i, j] * inv_w
            change = 0.0
            for i in range(m):
                for j in range(n):
                    gx = w[i, j + 1] - w[i, j] if j + 1 < n else 0.0
                    gy = w[i + 1, j] - w[i, j] if i + 1 < m else 0.0
                    qx = px[i, j] + tau * gx
                    qy = py[i, j] + tau * gy
                    nrm = sqrt(qx * qx + qy * qy)
                    if nrm < 1.0:
                        nrm = 1.0
                    qx = qx / nrm
                    qy = qy / nrm
                    if fabs(qx - px[i, j]) > change:
                        change = fabs(qx - px[i, j])
                    if fabs(qy - py[i, j]) > change:
                        change = fabs(qy - py[i, j])
                    px[i, j] = qx
                    py[i, j] = qy
            if change < tol:
                break
        _div(px, py, w)
    u = fa - weight * w_a
    return u, it
