"""Synthetic forward model, kernels, file formats and raw-sensor preprocessing."""
from __future__ import annotations

import hashlib
import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .core import BlurKernel, Domain, Image, check_alpha
from .linops import circ_convolve

log = logging.getLogger(__name__)

FLOAT_MAGIC = b"PLDF1\0"
FLOAT_HEADER = struct.Struct("<6sII2x")  # magic, width, height, 2 reserved bytes
MAX_DIM = 1 << 16
RAW_MAX = (1 << 14) - 1


class FormatError(ValueError):
    pass


# -- forward model -----------------------------------------------------------

def poisson_sample(rate, seed: int) -> np.ndarray:
    """Independent Poisson draws with the given per-pixel rates.

    Draws come from a counter-based generator keyed by ``seed`` and indexed
    by the flat pixel position, so each pixel's value does not depend on
    evaluation order.
    """
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate < 0) or not np.all(np.isfinite(rate)):
        raise ValueError("Poisson rates must be finite and nonnegative")
    return kernels.poisson_sample(rate, int(seed))


def poisson_forward(x, h, alpha: float, seed: int) -> np.ndarray:
    """Photon counts ``y ~ Poisson(alpha * Hx)``."""
    x = np.asarray(x, dtype=np.float64)
    alpha = check_alpha(alpha)
    if x.size and (x.min() < -1e-6 or x.max() > 1 + 1e-6):
        raise ValueError("scene image must lie in [0, 1]")
    rate = np.maximum(alpha * circ_convolve(x, h), 0.0)
    return poisson_sample(rate, seed)


# -- kernels -----------------------------------------------------------------

def gaussian_kernel(size: int, sigma_x: float, sigma_y: float = None, theta: float = 0.0) -> BlurKernel:
    """Sampled, rotated anisotropic Gaussian normalized to unit sum."""
    if sigma_y is None:
        sigma_y = sigma_x
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if not (sigma_x > 0 and sigma_y > 0):
        raise ValueError("kernel sigmas must be positive")
    r = size // 2
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    c, s = np.cos(theta), np.sin(theta)
    u = c * xx + s * yy
    v = -s * xx + c * yy
    taps = np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))
    return BlurKernel(taps / taps.sum())


def parse_kernel_spec(text: str) -> BlurKernel:
    """``gauss:size,sx[,sy[,theta]]`` or a path to a kernel text file."""
    if text.startswith("gauss:"):
        parts = [p for p in text[6:].split(",") if p]
        if not 2 <= len(parts) <= 4:
            raise ValueError(f"bad gaussian kernel spec {text!r}")
        size = int(parts[0])
        vals = [float(p) for p in parts[1:]]
        sx = vals[0]
        sy = vals[1] if len(vals) > 1 else sx
        theta = vals[2] if len(vals) > 2 else 0.0
        return gaussian_kernel(size, sx, sy, theta)
    return load_kernel(text)


def kernel_hash(h: BlurKernel) -> str:
    return hashlib.sha256(np.ascontiguousarray(h.taps, dtype="<f8").tobytes()).hexdigest()[:16]


def load_kernel(path) -> BlurKernel:
    """Whitespace-separated taps, one row per line; normalized and padded to odd square size."""
    try:
        taps = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed kernel file ({exc})") from None
    if taps.size == 0:
        raise FormatError(f"{path}: empty kernel")
    if not np.all(np.isfinite(taps)):
        raise FormatError(f"{path}: kernel taps must be finite")
    if np.any(taps < 0):
        raise FormatError(f"{path}: kernel taps must be nonnegative")
    m, n = taps.shape
    side = max(m, n)
    side += 1 - side % 2
    padded = np.zeros((side, side))
    padded[:m, :n] = taps
    return BlurKernel.normalized(padded)


def save_kernel(path, h: BlurKernel):
    np.savetxt(path, h.taps, fmt="%.17g")


# -- image files -------------------------------------------------------------

def _check_dims(width, height, path):
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        raise FormatError(f"{path}: image dimensions {width}x{height} out of range")


def save_float(path, img):
    data = np.asarray(img, dtype="<f4")
    if data.ndim != 2:
        raise ValueError("image must be 2-D")
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(FLOAT_HEADER.pack(FLOAT_MAGIC, width, height))
        fh.write(np.ascontiguousarray(data).tobytes())


def load_float(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < FLOAT_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, width, height = FLOAT_HEADER.unpack_from(raw)
    if magic != FLOAT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    _check_dims(width, height, path)
    expected = FLOAT_HEADER.size + 4 * width * height
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=FLOAT_HEADER.size).reshape(height, width)
    return data.astype(np.float64)


def _pgm_tokens(raw: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(raw[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte ends the header


def load_pgm(path) -> np.ndarray:
    """Binary PGM (P5) as floats in [0, 1] (value / maxval)."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    try:
        tokens, offset = _pgm_tokens(raw, 3)
        width, height, maxval = (int(t) for t in tokens)
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed PGM header") from None
    _check_dims(width, height, path)
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad maxval {maxval}")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    count = width * height
    if len(raw) - offset < count * dtype.itemsize:
        raise FormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(height, width)
    return data.astype(np.float64) / maxval


def save_pgm(path, img, bits: int = 8):
    """Quantize [0, 1] values to an 8- or 16-bit binary PGM."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    data = np.asarray(img, dtype=np.float64)
    maxval = (1 << bits) - 1
    q = np.rint(np.clip(data, 0.0, 1.0) * maxval)
    dtype = "u1" if bits == 8 else ">u2"
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(q.astype(dtype).tobytes())


def load_image(path, domain: Domain = None) -> Image:
    """Load ``.pgm`` (scene units) or the float grid format (any other suffix)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return Image(load_pgm(path), domain or Domain.SCENE)
    return Image(load_float(path), domain or Domain.PHOTON)


def save_image(path, img):
    path = Path(path)
    data = np.asarray(img)
    if path.suffix.lower() == ".pgm":
        save_pgm(path, data, bits=16)
    else:
        save_float(path, data)


# -- raw sensor data ---------------------------------------------------------

@dataclass(frozen=True)
class RawFrame:
    values: np.ndarray
    black_level: int = 2047
    gain: float = 71.0

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 2:
            raise ValueError("raw frame must be 2-D")
        if vals.size and (vals.min() < 0 or vals.max() > RAW_MAX):
            warnings.warn("raw values outside the 14-bit range", RuntimeWarning, stacklevel=2)
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def read_raw_meta(path) -> dict:
    meta = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        meta[key.strip()] = value.strip()
    try:
        width, height = int(meta["width"]), int(meta["height"])
    except KeyError as exc:
        raise FormatError(f"{path}: missing {exc.args[0]}") from None
    _check_dims(width, height, path)
    return {
        "width": width,
        "height": height,
        "black_level": int(meta.get("black_level", 2047)),
        "gain": float(meta.get("gain", 71.0)),
    }


def load_raw(raw_path, meta_path) -> RawFrame:
    """Planar little-endian uint16 frame plus its key=value sidecar."""
    meta = read_raw_meta(meta_path)
    raw = Path(raw_path).read_bytes()
    count = meta["width"] * meta["height"]
    if len(raw) != 2 * count:
        raise FormatError(f"{raw_path}: expected {2 * count} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<u2").reshape(meta["height"], meta["width"])
    return RawFrame(values.astype(np.int64), meta["black_level"], meta["gain"])


def save_raw(raw_path, meta_path, frame: RawFrame):
    Path(raw_path).write_bytes(np.asarray(frame.values, dtype="<u2").tobytes())
    Path(meta_path).write_text(
        f"width={frame.width}\nheight={frame.height}\n"
        f"black_level={frame.black_level}\ngain={frame.gain!r}\n"
    )


def raw_to_photons(raw: RawFrame) -> np.ndarray:
    """Subtract the black level, divide by the gain, floor at zero."""
    if not raw.gain > 0:
        raise ValueError(f"gain must be positive, got {raw.gain!r}")
    return np.maximum((np.asarray(raw.values, dtype=np.float64) - raw.black_level) / raw.gain, 0.0)


def estimate_alpha(y, beta: float = 0.33) -> float:
    """Photon level guess: mean photons per pixel divided by ``beta``."""
    y = np.asarray(y, dtype=np.float64)
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if y.size == 0:
        raise ValueError("cannot estimate alpha from an empty image")
    alpha = float(y.mean()) / beta
    if not alpha > 0:
        raise ValueError("estimated alpha is not positive (image has no photons)")
    return alpha


# -- boundary handling and colour -------------------------------------------

def reflect_pad(img) -> np.ndarray:
    """Double both dimensions by mirroring about the edges (edge samples repeated).

    A row ``a b c d`` becomes ``b a | a b c d | d c``.
    """
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape
    return np.pad(img, ((m // 2, m - m // 2), (n // 2, n - n // 2)), mode="symmetric")


def center_crop(img, width: int, height: int) -> np.ndarray:
    """Cut out the centred ``height x width`` block; inverts :func:`reflect_pad`."""
    img = np.asarray(img)
    m, n = img.shape
    if height > m or width > n or height < 1 or width < 1:
        raise ValueError(f"cannot crop {height}x{width} from {m}x{n}")
    top = (m - height) // 2
    left = (n - width) // 2
    return img[top:top + height, left:left + width]


@dataclass(frozen=True)
class ColorPlanes:
    r: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(p) for p in self.planes()}
        if len(shapes) != 1:
            raise ValueError(f"colour planes differ in shape: {sorted(shapes)}")

    def planes(self):
        return (self.r, self.g1, self.g2, self.b)

    @classmethod
    def from_bayer(cls, mosaic, pattern: str = "RGGB") -> "ColorPlanes":
        mosaic = np.asarray(mosaic)
        if pattern != "RGGB":
            raise ValueError("only the RGGB pattern is supported")
        return cls(mosaic[0::2, 0::2], mosaic[0::2, 1::2], mosaic[1::2, 0::2], mosaic[1::2, 1::2])


def gray_world(planes: ColorPlanes) -> ColorPlanes:
    """Scale each plane to unit mean."""
    scaled = []
    for p in planes.planes():
        p = np.asarray(p, dtype=np.float64)
        mean = p.mean()
        if not mean > 0:
            raise ValueError("gray-world balance needs planes with positive mean")
        scaled.append(p / mean)
    return ColorPlanes(*scaled)
