import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pldeblur.core import DenoiserSpec
from pldeblur.denoisers import apply, apply_with_jacobian, gaussian_smooth, tv_denoise, tv_objective

from oracles import tv_fista_dual


@pytest.fixture
def noisy_step():
    f = np.zeros((16, 16))
    f[:, 8:] = 1.0
    return f + 0.1 * np.random.default_rng(5).standard_normal(f.shape)


def test_identity_exact(rng):
    img = rng.random((5, 7))
    assert np.array_equal(apply(DenoiserSpec("identity"), img), img)


def test_gauss_constant_unchanged():
    img = np.full((9, 12), 0.37)
    assert np.max(np.abs(apply(DenoiserSpec("gauss", sigma=1.5), img) - img)) < 1e-12


def test_gauss_preserves_mean(rng):
    img = rng.random((10, 14))
    assert abs(gaussian_smooth(img, 2.3).mean() - img.mean()) < 1e-10


def test_median_removes_impulse():
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    assert np.array_equal(apply(DenoiserSpec("median", radius=1), img), np.zeros((7, 7)))


def test_tv_decreases_objective(noisy_step):
    out = apply(DenoiserSpec("tv", weight=0.1), noisy_step)
    assert tv_objective(out, noisy_step, 0.1) <= tv_objective(noisy_step, noisy_step, 0.1)


def test_tv_reaches_oracle_objective(noisy_step):
    ref = tv_fista_dual(noisy_step, 0.1, iters=200)
    ours = tv_denoise(noisy_step, 0.1, iters=2000, tol=1e-9)
    assert tv_objective(ours, noisy_step, 0.1) <= tv_objective(ref, noisy_step, 0.1) + 1e-4


def test_tv_rejects_nonfinite():
    img = np.zeros((4, 4))
    img[0, 0] = np.inf
    with pytest.raises(ValueError):
        apply(DenoiserSpec("tv"), img)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_tv_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 12, 12))
    spec = DenoiserSpec("tv", weight=0.1, iters=300, tol=1e-9)
    assert np.linalg.norm(apply(spec, a) - apply(spec, b)) <= np.linalg.norm(a - b) + 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), sigma=st.floats(0.1, 4))
def test_gauss_self_adjoint_and_contractive(seed, sigma):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 11, 13))
    assert abs(np.vdot(gaussian_smooth(a, sigma), b) - np.vdot(a, gaussian_smooth(b, sigma))) < 1e-10
    assert np.linalg.norm(gaussian_smooth(a, sigma)) <= np.linalg.norm(a) + 1e-10


def test_jacobian_sigma_zero(rng):
    img, cot = rng.random((2, 6, 6))
    out, vjp, ds = apply_with_jacobian(DenoiserSpec("gauss", sigma=0.0), img, cot)
    assert np.array_equal(vjp, cot) and ds == 0.0


def test_jacobian_constant_image(rng):
    _, _, ds = apply_with_jacobian(DenoiserSpec("gauss", sigma=1.3), np.full((8, 8), 0.4), rng.random((8, 8)))
    assert abs(ds) < 1e-10


def test_jacobian_dsigma_finite_difference(rng):
    img, cot = rng.random((2, 8, 8))
    _, vjp, ds = apply_with_jacobian(DenoiserSpec("gauss", sigma=1.2), img, cot)
    fd = (np.vdot(cot, gaussian_smooth(img, 1.2 + 1e-4)) - np.vdot(cot, gaussian_smooth(img, 1.2 - 1e-4))) / 2e-4
    assert ds == pytest.approx(fd, rel=1e-5)
    assert np.allclose(vjp, gaussian_smooth(cot, 1.2), atol=1e-14)


def test_jacobian_rejects_tv(rng):
    with pytest.raises(ValueError, match="differentiable"):
        apply_with_jacobian(DenoiserSpec("tv"), rng.random((4, 4)), rng.random((4, 4)))
