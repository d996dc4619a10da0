"""Raster data model, file I/O and per-pixel feature extraction.

Supported formats:

* PGM (``P5``) - one band, maxval up to 65535
* PPM (``P6``) - three bands, maxval up to 65535
* MBR - ``"MBR <width> <height> <bands>\\n"`` followed by little-endian
  float32 samples in band-major order

Integer formats are normalized to [0, 1] on load.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np


class RasterFormatError(ValueError):
    """Malformed or unsupported file header."""


class RasterLengthError(ValueError):
    """Payload shorter than the header promises."""


@dataclass
class Raster:
    """Multiband grid stored as a ``(bands, height, width)`` float64 array."""

    data: np.ndarray
    pixel_size: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"raster must be (bands, height, width), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("raster samples must be finite")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")
        self.data = data

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def samples(self) -> np.ndarray:
        """Flat band-major sample vector."""
        return self.data.reshape(-1)

    def band_mean(self) -> np.ndarray:
        return self.data.mean(axis=0)


@dataclass
class LabelGrid:
    """Per-pixel class ids in ``0..k-1``."""

    labels: np.ndarray
    k: int = field(default=0)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError("label grid must be 2-D")
        labels = labels.astype(np.int64)
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        top = int(labels.max()) + 1 if labels.size else 1
        if not self.k:
            self.k = top
        if top > self.k:
            raise ValueError(f"label {top - 1} out of range for k={self.k}")
        self.labels = labels

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass
class FeatureGrid:
    """Spectral (band values) and spatial (window mean/std) features per pixel.

    ``spectral`` has shape ``(height, width, bands)``; ``spatial`` has shape
    ``(height, width, 2 * bands)`` holding all per-band means followed by all
    per-band standard deviations.
    """

    spectral: np.ndarray
    spatial: np.ndarray

    @property
    def height(self) -> int:
        return self.spectral.shape[0]

    @property
    def width(self) -> int:
        return self.spectral.shape[1]

    def flat(self, kind: str) -> np.ndarray:
        """Feature vectors as an ``(n_pixels, dim)`` matrix in raster order."""
        arr = {"spectral": self.spectral, "spatial": self.spatial}[kind]
        return arr.reshape(-1, arr.shape[-1])


# ---------------------------------------------------------------------------
# Netpbm / MBR parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    for _ in range(count):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise RasterFormatError("truncated header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise RasterFormatError("missing whitespace after header")
    return tokens, pos + 1


def _parse_int(token: bytes, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise RasterFormatError(f"bad {what}: {token!r}") from None
    if value < 1:
        raise RasterFormatError(f"{what} must be positive, got {value}")
    return value


def _parse_netpbm(buf: bytes) -> tuple[np.ndarray, int]:
    tokens, offset = _read_header_tokens(buf, 4)
    magic = tokens[0]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise RasterFormatError(f"unsupported magic {magic!r}")
    width = _parse_int(tokens[1], "width")
    height = _parse_int(tokens[2], "height")
    maxval = _parse_int(tokens[3], "maxval")
    if maxval > 65535:
        raise RasterFormatError(f"maxval {maxval} exceeds 65535")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height * channels
    payload = buf[offset:]
    if len(payload) < n * dtype.itemsize:
        raise RasterLengthError(
            f"expected {n * dtype.itemsize} payload bytes, got {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=dtype, count=n)
    # interleaved RGB -> band-major
    arr = pixels.reshape(height, width, channels).transpose(2, 0, 1)
    return arr, maxval


def _parse_mbr(buf: bytes) -> np.ndarray:
    newline = buf.find(b"\n")
    if newline < 0:
        raise RasterFormatError("MBR header has no newline")
    parts = buf[:newline].split()
    if len(parts) != 4 or parts[0] != b"MBR":
        raise RasterFormatError(f"bad MBR header {buf[:newline]!r}")
    width, height, bands = (_parse_int(p, name) for p, name in
                            zip(parts[1:], ("width", "height", "bands")))
    n = width * height * bands
    payload = buf[newline + 1 :]
    if len(payload) < 4 * n:
        raise RasterLengthError(f"expected {4 * n} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4", count=n).reshape(bands, height, width)


def load_raster(path: str | os.PathLike, pixel_size: float = 1.0) -> Raster:
    """Read a PGM, PPM or MBR file.

    Args:
        path: file to read; the format is detected from the magic bytes.
        pixel_size: ground meters per pixel, stored on the result.

    Returns:
        A :class:`Raster`; integer formats are divided by their maxval.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf.startswith(b"MBR"):
        data = _parse_mbr(buf).astype(np.float64)
    elif buf[:2] in (b"P5", b"P6"):
        arr, maxval = _parse_netpbm(buf)
        data = arr.astype(np.float64) / maxval
    else:
        raise RasterFormatError(f"{path}: unrecognized raster format")
    return Raster(data, pixel_size=pixel_size)


def save_mbr(path: str | os.PathLike, raster: Raster) -> None:
    header = f"MBR {raster.width} {raster.height} {raster.bands}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raster.data.astype("<f4").tobytes())


def save_pgm(path: str | os.PathLike, gray: np.ndarray, maxval: int = 255) -> None:
    """Write a 2-D integer array as binary PGM."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError("PGM payload must be 2-D")
    if gray.min(initial=0) < 0 or gray.max(initial=0) > maxval:
        raise ValueError(f"gray values must lie in [0, {maxval}]")
    dtype = ">u2" if maxval > 255 else "u1"
    height, width = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(gray.astype(dtype).tobytes())


def save_ppm(path: str | os.PathLike, raster: Raster, maxval: int = 255) -> None:
    """Write a 3-band raster in [0, 1] as binary PPM."""
    if raster.bands != 3:
        raise ValueError("PPM needs exactly 3 bands")
    dtype = ">u2" if maxval > 255 else "u1"
    rgb = np.rint(np.clip(raster.data, 0.0, 1.0) * maxval).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{raster.width} {raster.height}\n{maxval}\n".encode("ascii"))
        fh.write(rgb.astype(dtype).tobytes())


def mask_gray_levels(k: int) -> np.ndarray:
    """Gray value used for each label when writing a k-class mask."""
    if k <= 1:
        return np.zeros(max(k, 1), dtype=np.int64)
    return (255 * np.arange(k)) // (k - 1)


def save_mask(path: str | os.PathLike, grid: LabelGrid) -> None:
    """Write a label grid as PGM, label ``i`` mapped to ``floor(255*i/(k-1))``."""
    if grid.k > 256:
        raise ValueError("at most 256 labels fit in an 8-bit mask")
    save_pgm(path, mask_gray_levels(grid.k)[grid.labels])


def load_mask(path: str | os.PathLike, k: int = 2) -> LabelGrid:
    """Inverse of :func:`save_mask` for a known class count."""
    with open(path, "rb") as fh:
        arr, maxval = _parse_netpbm(fh.read())
    if arr.shape[0] != 1:
        raise RasterFormatError("masks must be single-band PGM")
    gray = arr[0].astype(np.int64)
    if maxval != 255:
        gray = np.rint(gray * 255.0 / maxval).astype(np.int64)
    if k <= 1:
        return LabelGrid(np.zeros_like(gray), k=1)
    levels = mask_gray_levels(k)
    labels = np.abs(gray[..., None] - levels).argmin(axis=-1)
    return LabelGrid(labels, k=k)


def save_binary_mask(path: str | os.PathLike, mask: np.ndarray) -> None:
    save_mask(path, LabelGrid(np.asarray(mask, dtype=bool).astype(np.int64), k=2))


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def window_features(raster: Raster, w: int = 3) -> FeatureGrid:
    """Spectral values plus clamped-window mean and population std per band.

    Args:
        raster: input image.
        w: odd window side; borders use replicated edge pixels.

    Returns:
        FeatureGrid with the same height and width as ``raster``.
    """
    if w < 1 or w % 2 == 0:
        raise ValueError(f"window size must be odd and >= 1, got {w}")
    r = w // 2
    data = raster.data
    padded = np.pad(data, ((0, 0), (r, r), (r, r)), mode="edge")
    h, wd = raster.height, raster.width
    offsets = [(dy, dx) for dy in range(w) for dx in range(w)]
    # offsets from the window's own center pixel; constant windows stay exactly 0
    total = np.zeros_like(data)
    for dy, dx in offsets:
        total += padded[:, dy : dy + h, dx : dx + wd] - data
    shift = total / (w * w)
    mean = data + shift
    # two-pass variance; avoids the cancellation of E[x^2] - E[x]^2
    sq = np.zeros_like(data)
    for dy, dx in offsets:
        sq += (padded[:, dy : dy + h, dx : dx + wd] - data - shift) ** 2
    std = np.sqrt(sq / (w * w))
    spectral = data.transpose(1, 2, 0).copy()
    spatial = np.concatenate([mean, std], axis=0).transpose(1, 2, 0)
    return FeatureGrid(spectral=spectral, spatial=np.ascontiguousarray(spatial))
