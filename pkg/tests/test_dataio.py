import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from pldeblur import dataio
from pldeblur.core import BlurKernel, Domain
from pldeblur.dataio import (
    ColorPlanes, FormatError, RawFrame, center_crop, estimate_alpha, gaussian_kernel, gray_world,
    load_float, load_image, load_kernel, load_pgm, load_raw, poisson_forward, raw_to_photons,
    reflect_pad, save_float, save_image, save_kernel, save_pgm, save_raw,
)
from pldeblur.linops import circ_convolve


# --- forward model -------------------------------------------------------------

def test_zero_rate_gives_zero():
    x = np.zeros((8, 8))
    x[0, 0] = 1.0
    y = poisson_forward(x, BlurKernel.delta(1), 20.0, seed=3)
    assert np.all(y[x == 0] == 0)


def test_poisson_moments():
    y = poisson_forward(np.ones((256, 256)), BlurKernel.delta(1), 20.0, seed=2024)
    assert 19.8 <= y.mean() <= 20.2
    assert 19.0 <= y.var(ddof=1) <= 21.0
    assert np.array_equal(y, np.round(y))


@pytest.mark.parametrize("lam", [0.3, 4.0, 12.0, 150.0])
def test_poisson_moments_across_branches(lam):
    y = dataio.poisson_sample(np.full(200_000, lam), seed=7)
    se = np.sqrt(lam / y.size)
    assert abs(y.mean() - lam) < 5 * se
    assert abs(y.var() / lam - 1) < 0.03


def test_poisson_deterministic():
    x = np.random.default_rng(0).random((16, 16))
    h = gaussian_kernel(5, 1.0)
    a = poisson_forward(x, h, 10.0, seed=9)
    assert np.array_equal(a, poisson_forward(x, h, 10.0, seed=9))
    assert not np.array_equal(a, poisson_forward(x, h, 10.0, seed=10))


def test_poisson_order_independent():
    rate = np.random.default_rng(1).uniform(0, 30, (12, 12))
    full = dataio.poisson_sample(rate, seed=5)
    # the same rates in a larger frame keep their draws at the same flat positions
    bigger = np.concatenate([rate.ravel(), np.ones(10)])
    assert np.array_equal(dataio.poisson_sample(bigger, seed=5)[:144], full.ravel())


def test_forward_rejects_out_of_range_scene():
    with pytest.raises(ValueError):
        poisson_forward(np.full((4, 4), 2.0), BlurKernel.delta(1), 5.0, seed=0)


# --- kernels -------------------------------------------------------------------

def test_gaussian_kernel_isotropic_rotation():
    a = gaussian_kernel(9, 1.7, 1.7, 0.0)
    b = gaussian_kernel(9, 1.7, 1.7, 0.83)
    assert np.max(np.abs(a.taps - b.taps)) < 1e-10


def test_gaussian_kernel_sum_and_narrow_center():
    assert abs(gaussian_kernel(7, 2.0, 0.8, 0.4).taps.sum() - 1) < 1e-12
    k = gaussian_kernel(5, 0.1)
    assert k.taps[2, 2] > 0.99
    assert k.taps[2, 2] == pytest.approx(1 / (1 + 4 * np.exp(-50) + 4 * np.exp(-100)), rel=1e-12)


def test_gaussian_kernel_anisotropic_orientation():
    k = gaussian_kernel(9, 2.0, 0.5, 0.0)
    assert k.taps[4, 6] > k.taps[6, 4]
    k90 = gaussian_kernel(9, 2.0, 0.5, np.pi / 2)
    assert np.allclose(k90.taps, k.taps.T, atol=1e-12)


def test_gaussian_kernel_errors():
    with pytest.raises(ValueError):
        gaussian_kernel(4, 1.0)
    with pytest.raises(ValueError):
        gaussian_kernel(5, 0.0)


def test_kernel_spec_parsing(tmp_path):
    k = dataio.parse_kernel_spec("gauss:7,1.5")
    assert k == gaussian_kernel(7, 1.5)
    path = tmp_path / "k.txt"
    save_kernel(path, k)
    assert dataio.parse_kernel_spec(str(path)) == k
    assert dataio.kernel_hash(k) == dataio.kernel_hash(load_kernel(path))


def test_kernel_file_negative_rejected(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0.5 -0.1 0.6\n0 0 0\n0 0 0\n")
    with pytest.raises(FormatError, match="nonnegative"):
        load_kernel(path)


def test_kernel_file_normalized_and_padded(tmp_path):
    path = tmp_path / "k.txt"
    path.write_text("1 1\n1 1\n")
    k = load_kernel(path)
    assert k.size == 3 and abs(k.taps.sum() - 1) < 1e-12


# --- image files ----------------------------------------------------------------

def test_float_round_trip(tmp_path, rng):
    img = rng.random((5, 9)).astype(np.float32)
    save_float(tmp_path / "a.flt", img)
    back = load_float(tmp_path / "a.flt")
    assert back.shape == (5, 9)
    assert back.astype(np.float32).tobytes() == img.tobytes()
    raw = (tmp_path / "a.flt").read_bytes()
    assert raw[:6] == b"PLDF1\0" and len(raw) == 16 + 4 * 45


def test_float_malformed(tmp_path):
    p = tmp_path / "bad.flt"
    p.write_bytes(b"NOPE!!" + bytes(10))
    with pytest.raises(FormatError, match="magic"):
        load_float(p)
    p.write_bytes(b"PLDF1\0" + (4).to_bytes(4, "little") + (4).to_bytes(4, "little") + bytes(2) + bytes(8))
    with pytest.raises(FormatError, match="expected"):
        load_float(p)
    p.write_bytes(b"PLDF1\0" + (1 << 20).to_bytes(4, "little") + (1).to_bytes(4, "little") + bytes(2))
    with pytest.raises(FormatError, match="out of range"):
        load_float(p)


@pytest.mark.parametrize("bits", [8, 16])
def test_pgm_lattice_round_trip(tmp_path, rng, bits):
    maxval = (1 << bits) - 1
    img = rng.integers(0, maxval + 1, (6, 11)) / maxval
    save_pgm(tmp_path / "a.pgm", img, bits=bits)
    assert np.array_equal(load_pgm(tmp_path / "a.pgm"), img)


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n# max\n255\n\x00\xff")
    assert load_pgm(p).tolist() == [[0.0, 1.0]]


def test_pgm_malformed(tmp_path):
    p = tmp_path / "m.pgm"
    p.write_bytes(b"P2\n2 2\n255\n")
    with pytest.raises(FormatError):
        load_pgm(p)
    p.write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(FormatError, match="truncated"):
        load_pgm(p)


def test_load_image_domains(tmp_path, rng):
    img = rng.random((4, 4))
    save_image(tmp_path / "a.pgm", img)
    assert load_image(tmp_path / "a.pgm").domain is Domain.SCENE
    save_image(tmp_path / "a.flt", img)
    loaded = load_image(tmp_path / "a.flt")
    assert loaded.domain is Domain.PHOTON
    assert np.max(np.abs(loaded.data - img)) < 1e-7


# --- raw sensor data --------------------------------------------------------------

def test_raw_to_photons_examples():
    frame = RawFrame(np.array([[2047, 2118, 2000]]))
    assert raw_to_photons(frame).tolist() == [[0.0, 1.0, 0.0]]


def test_raw_gain_must_be_positive():
    with pytest.raises(ValueError):
        raw_to_photons(RawFrame(np.zeros((1, 1), dtype=int), gain=0.0))


def test_raw_out_of_range_warns():
    with pytest.warns(RuntimeWarning):
        RawFrame(np.array([[20000]]))


def test_raw_round_trip(tmp_path, rng):
    frame = RawFrame(rng.integers(0, 1 << 14, (3, 5)), black_level=100, gain=2.5)
    save_raw(tmp_path / "f.raw", tmp_path / "f.meta", frame)
    back = load_raw(tmp_path / "f.raw", tmp_path / "f.meta")
    assert np.array_equal(back.values, frame.values)
    assert (back.black_level, back.gain) == (100, 2.5)


def test_raw_meta_missing_field(tmp_path):
    (tmp_path / "m.meta").write_text("width=4\n")
    with pytest.raises(FormatError, match="height"):
        dataio.read_raw_meta(tmp_path / "m.meta")


def test_estimate_alpha_examples():
    assert estimate_alpha(np.full((4, 4), 3.3)) == pytest.approx(10.0, abs=1e-12)
    assert estimate_alpha(np.ones((3, 3)), beta=0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        estimate_alpha(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        estimate_alpha(np.zeros((0, 0)))


# --- padding and colour ------------------------------------------------------------

def test_reflect_pad_golden():
    out = reflect_pad(np.array([[1.0, 2.0, 3.0, 4.0]]))
    assert out.shape == (2, 8)
    assert out[0].tolist() == [2, 1, 1, 2, 3, 4, 4, 3]
    assert np.array_equal(out[0], out[1])


def test_reflect_pad_constant():
    assert np.array_equal(reflect_pad(np.full((3, 5), 0.7)), np.full((6, 10), 0.7))


@settings(max_examples=50)
@given(m=st.integers(1, 12), n=st.integers(1, 12), seed=st.integers(0, 1000))
def test_pad_crop_round_trip(m, n, seed):
    img = np.random.default_rng(seed).random((m, n))
    padded = reflect_pad(img)
    assert padded.shape == (2 * m, 2 * n)
    assert np.array_equal(center_crop(padded, n, m), img)


def test_crop_too_large():
    with pytest.raises(ValueError):
        center_crop(np.zeros((4, 4)), 5, 2)


def test_padded_convolution_matches_spatial_interior(rng):
    yy, xx = np.mgrid[:24, :20]
    img = 0.5 + 0.3 * np.sin(xx / 5.0) * np.cos(yy / 7.0)
    h = gaussian_kernel(5, 1.0)
    out = center_crop(circ_convolve(reflect_pad(img), h), 20, 24)
    ref = ndimage.convolve(img, h.taps, mode="reflect")
    r = h.size // 2
    assert np.max(np.abs(out[r:-r, r:-r] - ref[r:-r, r:-r])) < 1e-10


def test_gray_world(rng):
    planes = ColorPlanes(*(rng.uniform(0.1, 3.0, (4, 4)) for _ in range(4)))
    for p in gray_world(planes).planes():
        assert abs(p.mean() - 1) < 1e-12
    two = np.full((2, 2), 2.0)
    assert np.array_equal(gray_world(ColorPlanes(two, two, two, two)).r, np.ones((2, 2)))
    ones = ColorPlanes(*(np.ones((2, 2)),) * 4)
    assert np.array_equal(gray_world(ones).g1, np.ones((2, 2)))
    with pytest.raises(ValueError):
        gray_world(ColorPlanes(np.zeros((2, 2)), two, two, two))


def test_bayer_split():
    mosaic = np.arange(16).reshape(4, 4)
    planes = ColorPlanes.from_bayer(mosaic)
    assert planes.r.tolist() == [[0, 2], [8, 10]]
    assert planes.b.tolist() == [[5, 7], [13, 15]]
