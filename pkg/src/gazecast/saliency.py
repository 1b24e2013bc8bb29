"""Per-frame saliency maps and their pooled feature vectors.

Providers turn a preprocessed frame into a single-channel map in [0, 1]:

* ``precomputed`` reads SMAP files written by an external saliency network
  (run UniSal offline and store its output here),
* ``spectral-residual`` is a content-aware fallback computed in-process,
* ``center-bias`` ignores content and returns a centred Gaussian.

SMAP layout: ``b"SMAP"``, then little-endian uint32 ``version``, ``width``,
``height``, then ``width * height`` little-endian float32 values, row-major.
Files live at ``<root>/<session_id>/<frame_index>.smap``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import DataError, DomainError

DEFAULT_SIZE = (384, 288)  # width, height
SMAP_MAGIC = b"SMAP"
SMAP_VERSION = 1
_SMAP_HEADER = struct.Struct("<4sIII")


@dataclass
class Frame:
    """Image with values in [0, 1], stored as ``(height, width, channels)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3) or px.shape[0] == 0 or px.shape[1] == 0:
            raise DomainError(f"frame must be HxW, HxWx1 or HxWx3, got {np.shape(self.pixels)}")
        if not np.all((px >= 0.0) & (px <= 1.0)):
            raise DomainError("frame values must lie in [0, 1]")
        self.pixels = px

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]

    def gray(self):
        if self.channels == 1:
            return self.pixels[:, :, 0]
        return self.pixels @ np.array([0.299, 0.587, 0.114])


@dataclass
class SaliencyMap:
    values: np.ndarray  # (height, width)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class PoolSpec:
    grid_rows: int = 9
    grid_cols: int = 12
    mode: str = "mean"

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise DomainError("pooling grid must be at least 1x1")
        if self.mode not in ("mean", "max"):
            raise DomainError(f"unknown pooling mode {self.mode!r}")

    @property
    def n_features(self):
        return self.grid_rows * self.grid_cols


def preprocess(frame: Frame, target=DEFAULT_SIZE) -> Frame:
    """Bilinear resize (half-pixel centres) to ``target = (width, height)``."""
    w, h = target
    if w <= 0 or h <= 0:
        raise DomainError(f"target size must be positive, got {target}")
    if (frame.width, frame.height) == (w, h):
        return Frame(frame.pixels.copy())
    out = kernels.bilinear_resize(frame.pixels, h, w)
    return Frame(np.clip(out, 0.0, 1.0))


def normalize_map(values) -> np.ndarray:
    """Min-max scale to [0, 1]; constant maps become all zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if not hi > lo:
        return np.zeros_like(v)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def pool_flatten(smap: SaliencyMap, spec: PoolSpec = PoolSpec()) -> np.ndarray:
    """Area-weighted pooling onto ``spec``'s grid, flattened row-major."""
    pooled = kernels.area_pool(smap.values, spec.grid_rows, spec.grid_cols, spec.mode == "max")
    return np.clip(pooled, 0.0, 1.0).reshape(-1)


class SaliencyProvider:
    """Base provider. Subclasses implement :meth:`compute`.

    :meth:`map_for` is what the dataset calls; the default loads the frame
    image from ``frames_root/<session_id>/<index>.png`` and runs
    :meth:`saliency` on it.
    """

    name = "base"
    needs_frames = True

    def __init__(self, frames_root=None, size=DEFAULT_SIZE):
        self.frames_root = Path(frames_root) if frames_root is not None else None
        self.size = tuple(size)

    def compute(self, frame: Frame) -> np.ndarray:
        raise NotImplementedError

    def saliency(self, frame: Frame) -> SaliencyMap:
        return SaliencyMap(normalize_map(self.compute(frame)))

    def load_frame(self, session_id, index) -> Frame:
        if self.frames_root is None:
            raise DataError(f"provider {self.name!r} needs a frames directory")
        path = self.frames_root / str(session_id) / f"{index}.png"
        if not path.exists():
            raise DataError(f"missing frame image for {session_id}:{index} ({path})")
        return read_image(path)

    def map_for(self, session_id, index, frame: Frame | None = None) -> SaliencyMap:
        if frame is None:
            frame = self.load_frame(session_id, index)
        return self.saliency(preprocess(frame, self.size))


class CenterBiasProvider(SaliencyProvider):
    """Isotropic Gaussian on the middle pixel, sigma = 0.25 * min(W, H)."""

    name = "center-bias"
    needs_frames = False

    def compute(self, frame):
        return self._gaussian(frame.height, frame.width)

    @staticmethod
    def _gaussian(h, w):
        sigma = 0.25 * min(w, h)
        y = np.arange(h) - h // 2
        x = np.arange(w) - w // 2
        return np.exp(-(y[:, None] ** 2 + x[None, :] ** 2) / (2 * sigma ** 2))

    def map_for(self, session_id, index, frame=None):
        w, h = self.size if frame is None else (frame.width, frame.height)
        return SaliencyMap(normalize_map(self._gaussian(h, w)))


class SpectralResidualProvider(SaliencyProvider):
    """Spectral-residual saliency on a downsampled grayscale copy of the frame."""

    name = "spectral-residual"

    def __init__(self, frames_root=None, size=DEFAULT_SIZE, work_width=64, blur_sigma=2.5, floor=1e-3):
        super().__init__(frames_root, size)
        self.work_width = work_width
        self.blur_sigma = blur_sigma
        self.floor = floor

    def compute(self, frame):
        gray = frame.gray()
        if np.ptp(gray) == 0.0:
            return np.zeros_like(gray)
        h, w = gray.shape
        ww = min(self.work_width, w)
        wh = max(1, round(h * ww / w))
        # Area averaging, not point sampling: small objects must survive the shrink.
        small = kernels.area_pool(gray, wh, ww, False)
        spec = np.fft.fft2(small)
        amp = np.abs(spec)
        # Floor relative to the peak so spectral nulls do not dominate the residual.
        log_amp = np.log(np.maximum(amp, self.floor * amp.max()))
        phase = np.angle(spec)
        residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
        sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
        # The map is periodic (it came out of an FFT), so blur and upsample with wrap-around.
        sal = ndimage.gaussian_filter(sal, self.blur_sigma, mode="wrap")
        return _periodic_resize_matrix(h, wh) @ sal @ _periodic_resize_matrix(w, ww).T


def _periodic_resize_matrix(n_out, n_in):
    """Linear interpolation weights with half-pixel centres and wrap-around edges."""
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    lo = np.floor(src).astype(int)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo % n_in), 1.0 - frac)
    np.add.at(m, (rows, (lo + 1) % n_in), frac)
    return m


class PrecomputedProvider(SaliencyProvider):
    """Reads ``<root>/<session_id>/<index>.smap`` files."""

    name = "precomputed"
    needs_frames = False

    def __init__(self, root, size=DEFAULT_SIZE):
        super().__init__(None, size)
        self.root = Path(root)

    def path_for(self, session_id, index):
        return self.root / str(session_id) / f"{index}.smap"

    def map_for(self, session_id, index, frame=None):
        path = self.path_for(session_id, index)
        if not path.exists():
            raise DataError(f"no precomputed saliency map for frame {session_id}:{index} ({path})")
        return SaliencyMap(normalize_map(read_smap(path)))

    def saliency(self, frame):
        raise DataError("precomputed provider looks maps up by frame id; use map_for()")


class ArrayProvider(SaliencyProvider):
    """Serves maps from a callable ``fn(session_id, index) -> 2-D array``."""

    name = "array"
    needs_frames = False

    def __init__(self, fn, size=DEFAULT_SIZE):
        super().__init__(None, size)
        self.fn = fn

    def map_for(self, session_id, index, frame=None):
        return SaliencyMap(normalize_map(self.fn(session_id, index)))


PROVIDERS = {
    "center-bias": CenterBiasProvider,
    "spectral-residual": SpectralResidualProvider,
    "precomputed": PrecomputedProvider,
}


def make_provider(name, *, frames_root=None, smap_root=None, size=DEFAULT_SIZE) -> SaliencyProvider:
    if name == "precomputed":
        if smap_root is None:
            raise DomainError("precomputed provider needs a saliency-map directory")
        return PrecomputedProvider(smap_root, size)
    if name not in PROVIDERS:
        raise DomainError(f"unknown saliency provider {name!r}; choose from {sorted(PROVIDERS)}")
    return PROVIDERS[name](frames_root=frames_root, size=size)


def write_smap(path, values) -> None:
    v = np.asarray(values)
    if v.ndim != 2:
        raise DomainError(f"saliency map must be 2-D, got shape {v.shape}")
    h, w = v.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_SMAP_HEADER.pack(SMAP_MAGIC, SMAP_VERSION, w, h))
        fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def read_smap(path) -> np.ndarray:
    """Returns a float32 ``(height, width)`` array."""
    raw = Path(path).read_bytes()
    if len(raw) < _SMAP_HEADER.size:
        raise DataError(f"{path}: truncated SMAP header")
    magic, version, w, h = _SMAP_HEADER.unpack_from(raw)
    if magic != SMAP_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != SMAP_VERSION:
        raise DataError(f"{path}: unsupported SMAP version {version}")
    body = raw[_SMAP_HEADER.size:]
    if len(body) != 4 * w * h:
        raise DataError(f"{path}: expected {w * h} values, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float32)


def read_image(path) -> Frame:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return Frame(arr)
