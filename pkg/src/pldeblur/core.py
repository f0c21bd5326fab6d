"""Domain types and the Poisson data-fidelity objective.

Arrays are plain ``numpy.ndarray`` inside the numerical code. The
:class:`Image` wrapper carries a domain tag and is checked at API and file
boundaries only.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

SCENE_EPS = 1e-6
KERNEL_SUM_TOL = 1e-8
EPS_LOG = 1e-8


class Domain(enum.Enum):
    SCENE = "scene"
    PHOTON = "photon"


@dataclass(frozen=True)
class Image:
    """A 2-D intensity grid tagged as scene units ([0, 1]) or photon counts."""

    data: np.ndarray
    domain: Domain = Domain.SCENE

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)


def validate(img: Union[Image, np.ndarray], domain: Optional[Domain] = None) -> list[str]:
    """Return the list of violated invariants (empty when the image is ok).

    Violation names: ``"shape"``, ``"finite"``, ``"range"``.
    """
    if isinstance(img, Image):
        data, domain = img.data, img.domain if domain is None else domain
    else:
        data = np.asarray(img, dtype=np.float64)
        domain = Domain.SCENE if domain is None else domain
    problems = []
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        problems.append("shape")
        return problems
    finite = np.isfinite(data)
    if not finite.all():
        problems.append("finite")
    vals = data[finite]
    if vals.size:
        if domain is Domain.SCENE:
            if vals.min() < -SCENE_EPS or vals.max() > 1 + SCENE_EPS:
                problems.append("range")
        elif vals.min() < 0:
            problems.append("range")
    return problems


class BlurKernel:
    """Normalized, odd-sized point spread function.

    The transfer function at a given image shape is computed lazily and cached.
    The kernel centre is placed at index (0, 0) with circular wrap, so the
    delta kernel is exactly the identity operator.
    """

    def __init__(self, taps):
        taps = np.array(taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1]:
            raise ValueError(f"kernel must be square 2-D, got shape {taps.shape}")
        if taps.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {taps.shape[0]}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel taps must be finite")
        if np.any(taps < 0):
            raise ValueError("kernel taps must be nonnegative")
        total = taps.sum()
        if abs(total - 1.0) > KERNEL_SUM_TOL:
            raise ValueError(f"kernel taps must sum to 1 (sum={total!r})")
        taps.flags.writeable = False
        self.taps = taps
        self._otf = {}

    @classmethod
    def normalized(cls, taps) -> "BlurKernel":
        taps = np.asarray(taps, dtype=np.float64)
        if np.any(taps < 0):
            raise ValueError("kernel taps must be nonnegative")
        total = taps.sum()
        if not total > 0:
            raise ValueError("kernel taps sum to zero")
        return cls(taps / total)

    @classmethod
    def delta(cls, size: int = 1) -> "BlurKernel":
        taps = np.zeros((size, size))
        taps[size // 2, size // 2] = 1.0
        return cls(taps)

    @property
    def size(self) -> int:
        return self.taps.shape[0]

    def embed(self, shape) -> np.ndarray:
        """Zero-pad to ``shape`` with the centre tap moved to (0, 0)."""
        m, n = shape
        if self.size > m or self.size > n:
            raise ValueError(f"kernel of size {self.size} larger than image {shape}")
        r = self.size // 2
        psf = np.zeros((m, n))
        psf[: self.size, : self.size] = self.taps
        return np.roll(psf, (-r, -r), axis=(0, 1))

    def otf(self, shape) -> np.ndarray:
        """Real-input DFT of the embedded kernel (``rfft2`` layout)."""
        shape = tuple(int(s) for s in shape)
        cached = self._otf.get(shape)
        if cached is None:
            from scipy import fft

            cached = fft.rfft2(self.embed(shape))
            cached.flags.writeable = False
            self._otf[shape] = cached
        return cached

    def __eq__(self, other):
        return isinstance(other, BlurKernel) and np.array_equal(self.taps, other.taps)

    def __hash__(self):
        return hash(self.taps.tobytes())

    def __repr__(self):
        return f"BlurKernel(size={self.size})"


def as_kernel(h) -> BlurKernel:
    return h if isinstance(h, BlurKernel) else BlurKernel(h)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (alpha > 0 and np.isfinite(alpha)):
        raise ValueError(f"photon level alpha must be positive and finite, got {alpha!r}")
    return alpha


@dataclass(frozen=True)
class DenoiserSpec:
    """Denoiser selection for the z-update.

    ``kind`` is one of ``identity``, ``gauss``, ``tv``, ``median``.
    """

    kind: str = "tv"
    sigma: float = 1.0
    weight: float = 0.05
    iters: int = 50
    tol: float = 1e-5
    radius: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "gauss", "tv", "median"):
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if self.kind == "gauss" and not self.sigma >= 0:
            raise ValueError("gauss denoiser needs sigma >= 0")
        if self.kind == "tv" and not (self.weight > 0 and self.iters >= 1 and self.tol >= 0):
            raise ValueError("tv denoiser needs weight > 0, iters >= 1, tol >= 0")
        if self.kind == "median" and self.radius < 0:
            raise ValueError("median denoiser needs radius >= 0")

    @classmethod
    def parse(cls, text: str) -> "DenoiserSpec":
        """Parse ``identity``, ``gauss:SIGMA``, ``tv:WEIGHT`` or ``median:RADIUS``."""
        kind, _, arg = text.partition(":")
        if kind == "identity":
            return cls("identity")
        if not arg:
            raise ValueError(f"denoiser {text!r} needs a parameter")
        if kind == "gauss":
            return cls("gauss", sigma=float(arg))
        if kind == "tv":
            return cls("tv", weight=float(arg))
        if kind == "median":
            return cls("median", radius=int(arg))
        raise ValueError(f"unknown denoiser {text!r}")

    def __str__(self):
        if self.kind == "identity":
            return "identity"
        if self.kind == "gauss":
            return f"gauss:{self.sigma:g}"
        if self.kind == "tv":
            return f"tv:{self.weight:g}"
        return f"median:{self.radius}"


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    rho1_init: Optional[float] = None
    rho2_init: Optional[float] = None
    adaptive: bool = True
    gamma: float = 1.01
    decay_threshold: float = 0.99
    max_iters: int = 150
    delta_tol: float = 1e-2
    K: int = 8
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)
    eps_log: float = EPS_LOG
    # "scaled" starts v at y/alpha (scene units); "counts" starts it at the raw counts y.
    v_init: str = "scaled"

    def __post_init__(self):
        check_alpha(self.alpha)
        for name in ("rho1_init", "rho2_init"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not 0 < self.decay_threshold < 1:
            raise ValueError("decay_threshold must lie in (0, 1)")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.v_init not in ("scaled", "counts"):
            raise ValueError(f"unknown v_init {self.v_init!r}")

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass
class SolverState:
    """Mutable ADMM iterate (x, z, v, u1, u2); owned by a single run."""

    x: np.ndarray
    z: np.ndarray
    v: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    iter: int = 0
    delta_history: list = field(default_factory=list)

    def __post_init__(self):
        shape = np.shape(self.x)
        for name in ("z", "v", "u1", "u2"):
            if np.shape(getattr(self, name)) != shape:
                raise ValueError(f"state grid {name} has shape {np.shape(getattr(self, name))}, expected {shape}")

    def copy(self) -> "SolverState":
        return SolverState(
            self.x.copy(), self.z.copy(), self.v.copy(), self.u1.copy(), self.u2.copy(),
            self.iter, list(self.delta_history),
        )


def _check_pair(a: np.ndarray, b: np.ndarray, names=("x", "y")):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {names[0]} {a.shape} vs {names[1]} {b.shape}")
    for name, arr in zip(names, (a, b)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")


def log_likelihood_terms(hx: np.ndarray, y: np.ndarray, alpha: float, eps_log: float = EPS_LOG) -> np.ndarray:
    """Per-pixel ``alpha*hx - y*log(alpha*hx)`` with 0*log(.) := 0."""
    arg = np.maximum(alpha * hx, eps_log)
    return alpha * hx - np.where(y > 0, y * np.log(arg), 0.0)


def data_term(x, y, h, alpha: float, eps_log: float = EPS_LOG) -> float:
    """Poisson negative log-likelihood ``alpha*1'Hx - y'log(alpha*Hx)``."""
    from .linops import circ_convolve

    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(x, y)
    alpha = check_alpha(alpha)
    return float(log_likelihood_terms(circ_convolve(x, h), y, alpha, eps_log).sum())
