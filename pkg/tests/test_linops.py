import numpy as np
import pytest

from pldeblur.core import BlurKernel
from pldeblur.dataio import gaussian_kernel
from pldeblur.linops import FreqPlan, circ_convolve, circ_correlate, deblur_solve, wiener_filter, wiener_init

from oracles import dense_blur_matrix, spatial_circular_convolve


def test_delta_is_identity(rng, delta_kernel):
    x = rng.random((9, 7))
    assert np.max(np.abs(circ_convolve(x, delta_kernel) - x)) < 1e-12
    assert np.max(np.abs(circ_correlate(x, delta_kernel) - x)) < 1e-12


def test_impulse_response_is_wrapped_kernel():
    taps = np.arange(1.0, 10.0).reshape(3, 3)
    h = BlurKernel(taps / taps.sum())
    x = np.zeros((6, 6))
    x[0, 0] = 1.0
    out = circ_convolve(x, h)
    expected = np.roll(np.pad(h.taps, ((0, 3), (0, 3))), (-1, -1), axis=(0, 1))
    assert np.allclose(out, expected, atol=1e-14)


def test_convolve_matches_spatial_loop(rng):
    x = rng.random((8, 8))
    taps = rng.random((3, 3))
    h = BlurKernel.normalized(taps)
    assert np.max(np.abs(circ_convolve(x, h) - spatial_circular_convolve(x, h.taps))) < 1e-12


def test_mass_preserved(rng, gauss_kernel):
    x = rng.random((10, 12))
    assert abs(circ_convolve(x, gauss_kernel).sum() - x.sum()) < 1e-8


def test_symmetric_kernel_self_adjoint(rng, gauss_kernel):
    x = rng.random((8, 8))
    assert np.max(np.abs(circ_correlate(x, gauss_kernel) - circ_convolve(x, gauss_kernel))) < 1e-13


def test_adjoint_identity(rng):
    h = BlurKernel.normalized(rng.random((3, 3)))
    x, r = rng.random((2, 8, 8))
    assert abs(np.vdot(circ_convolve(x, h), r) - np.vdot(x, circ_correlate(r, h))) < 1e-10


def test_deblur_identity_kernel_averages(rng, delta_kernel):
    a, b = rng.random((2, 6, 6))
    assert np.max(np.abs(deblur_solve(a, b, delta_kernel, 1.0) - (a + b) / 2)) < 1e-12


def test_deblur_tiny_ratio(rng, gauss_kernel):
    a, b = rng.random((2, 8, 8))
    assert np.max(np.abs(deblur_solve(a, b, gauss_kernel, 1e-12) - a)) < 1e-6


def test_deblur_matches_dense_solve(rng):
    h = gaussian_kernel(5, 1.2)
    a, b = rng.random((2, 12, 12))
    ratio = 0.7
    H = dense_blur_matrix(h.taps, a.shape)
    expected = np.linalg.solve(np.eye(144) + ratio * H.T @ H, a.ravel() + ratio * H.T @ b.ravel())
    assert np.max(np.abs(deblur_solve(a, b, h, ratio).ravel() - expected)) < 1e-8


def test_deblur_stationarity(rng, gauss_kernel):
    a, b = rng.random((2, 10, 10))
    rho1, rho2 = 3.0, 5.0
    x = deblur_solve(a, b, gauss_kernel, rho2 / rho1)
    res = rho1 * (x - a) + rho2 * circ_correlate(circ_convolve(x, gauss_kernel) - b, gauss_kernel)
    assert np.max(np.abs(res)) < 1e-8


def test_deblur_rejects_bad_ratio(delta_kernel):
    with pytest.raises(ValueError):
        deblur_solve(np.zeros((2, 2)), np.zeros((2, 2)), delta_kernel, 0.0)


def test_wiener_identity_constant(delta_kernel):
    out = wiener_filter(np.full((4, 4), 5.0), delta_kernel, 10.0)
    assert np.allclose(out, 5.0 / 11.0, atol=1e-14)
    assert np.allclose(wiener_init(np.zeros((4, 4)), delta_kernel, 10.0), 0.0)


def test_wiener_matches_dense(rng):
    h = gaussian_kernel(5, 1.0)
    y = rng.poisson(10, (8, 8)).astype(float)
    alpha = 20.0
    H = dense_blur_matrix(h.taps, y.shape)
    # (1/alpha) (1/alpha I + H^T H)^{-1} H^T y; circulant matrices commute
    expected = np.linalg.solve(np.eye(64) / alpha + H.T @ H, H.T @ y.ravel()) / alpha
    assert np.max(np.abs(wiener_filter(y, h, alpha).ravel() - expected)) < 1e-10


def test_wiener_init_clamps(rng, gauss_kernel):
    y = rng.poisson(30, (8, 8)).astype(float)
    out = wiener_init(y, gauss_kernel, 2.0)
    assert out.min() >= 0 and out.max() <= 1


@pytest.mark.parametrize("op", ["convolve", "correlate", "deblur", "wiener"])
def test_linearity(rng, op):
    h = BlurKernel.normalized(rng.random((5, 5)))
    p, q, p2, q2 = rng.standard_normal((4, 9, 11))
    a, b = 1.7, -0.3
    f = {
        "convolve": lambda s, t: circ_convolve(s, h),
        "correlate": lambda s, t: circ_correlate(s, h),
        "deblur": lambda s, t: deblur_solve(s, t, h, 2.5),
        "wiener": lambda s, t: wiener_filter(s, h, 15.0),
    }[op]
    lhs = f(a * p + b * q, a * p2 + b * q2)
    rhs = a * f(p, p2) + b * f(q, q2)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_plan_roundtrip(rng, gauss_kernel):
    x = rng.standard_normal((7, 10))
    plan = FreqPlan(gauss_kernel, x.shape)
    back = plan.inverse(plan.forward(x))
    assert np.linalg.norm(back - x) <= 1e-12 * np.linalg.norm(x)


def test_plan_shape_mismatch(gauss_kernel):
    plan = FreqPlan(gauss_kernel, (8, 8))
    with pytest.raises(ValueError):
        circ_convolve(np.zeros((6, 6)), plan)


def test_deblur_adjoint(rng, gauss_kernel):
    plan = FreqPlan(gauss_kernel, (8, 8))
    a, b, g = rng.standard_normal((3, 8, 8))
    ga, gb = plan.deblur_adjoint(g, 1.3)
    lhs = np.vdot(plan.deblur(a, b, 1.3), g)
    assert abs(lhs - (np.vdot(a, ga) + np.vdot(b, gb))) < 1e-10
