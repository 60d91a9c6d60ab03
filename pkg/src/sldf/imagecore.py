"""Image and spectrum containers, centered unitary FFTs and filtering.

Conventions used throughout the package:

* arrays are indexed ``[row, column]`` = ``[y, x]``;
* the spatial origin sits at pixel ``(height // 2, width // 2)``, so the
  physical position of pixel ``(i, j)`` is ``((j - W/2) * pitch, (i - H/2) * pitch)``;
* spectra are DC-centered (bin ``N // 2`` is zero frequency) and unitary, so
  Parseval holds without scale factors.

Only even dimensions are accepted, which keeps the DC bin unambiguous.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BadDimsError, GridMismatchError, ImagResidueError

log = logging.getLogger(__name__)

MIN_SIZE = 8
IMAG_DISCARD_TOL = 1e-9
IMAG_ERROR_TOL = 1e-6

# incremented whenever inverse_fft drops a non-negligible imaginary part
imag_discard_count = 0


def _check_dims(height: int, width: int) -> None:
    if width < MIN_SIZE or height < MIN_SIZE:
        raise BadDimsError(f"image must be at least {MIN_SIZE}x{MIN_SIZE}, got {width}x{height}")
    if width % 2 or height % 2:
        raise BadDimsError(f"image dimensions must be even, got {width}x{height}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Sampling grid shared by an image and its spectrum."""

    width: int
    height: int
    pixel_pitch: float  # micrometers

    def __post_init__(self):
        _check_dims(self.height, self.width)
        if not self.pixel_pitch > 0 or not np.isfinite(self.pixel_pitch):
            raise BadDimsError(f"pixel pitch must be positive, got {self.pixel_pitch}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def freq_step_x(self) -> float:
        return 1.0 / (self.width * self.pixel_pitch)

    @property
    def freq_step_y(self) -> float:
        return 1.0 / (self.height * self.pixel_pitch)

    @property
    def nyquist(self) -> float:
        return 0.5 / self.pixel_pitch

    @property
    def field_of_view(self) -> tuple[float, float]:
        return (self.width * self.pixel_pitch, self.height * self.pixel_pitch)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical (x, y) positions in micrometers, origin at the center pixel."""
        x = (np.arange(self.width) - self.width // 2) * self.pixel_pitch
        y = (np.arange(self.height) - self.height // 2) * self.pixel_pitch
        return np.meshgrid(x, y)

    def freqs(self) -> tuple[np.ndarray, np.ndarray]:
        """Frequency coordinates (fx, fy) in cycles/um of the centered spectrum."""
        fx = (np.arange(self.width) - self.width // 2) * self.freq_step_x
        fy = (np.arange(self.height) - self.height // 2) * self.freq_step_y
        return np.meshgrid(fx, fy)

    def radial_freq(self) -> np.ndarray:
        fx, fy = self.freqs()
        return np.hypot(fx, fy)

    def upsampled(self, factor: int) -> "Grid":
        """Same field of view, ``factor`` times finer sampling."""
        if int(factor) != factor or factor < 1:
            raise BadDimsError(f"upsample factor must be a positive integer, got {factor}")
        factor = int(factor)
        return Grid(self.width * factor, self.height * factor, self.pixel_pitch / factor)

    def same_as(self, other: "Grid") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and np.isclose(self.pixel_pitch, other.pixel_pitch, rtol=1e-12, atol=0.0)
        )


@dataclass(frozen=True, eq=False)
class Image:
    """Real 2-D raster with a physical pixel pitch (micrometers)."""

    data: np.ndarray
    pixel_pitch: float
    grid: Grid = field(init=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise BadDimsError(f"image data must be 2-D, got shape {data.shape}")
        if np.iscomplexobj(data):
            raise TypeError("image data must be real")
        object.__setattr__(self, "data", _frozen(data.astype(np.float64)))
        object.__setattr__(self, "grid", Grid(data.shape[1], data.shape[0], float(self.pixel_pitch)))

    @classmethod
    def zeros(cls, grid: Grid) -> "Image":
        return cls(np.zeros(grid.shape), grid.pixel_pitch)

    @property
    def width(self) -> int:
        return self.grid.width

    @property
    def height(self) -> int:
        return self.grid.height

    def with_data(self, data: np.ndarray) -> "Image":
        return Image(data, self.pixel_pitch)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """DC-centered complex spectrum; ``pixel_pitch`` is that of the source image."""

    data: np.ndarray
    pixel_pitch: float
    grid: Grid = field(init=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise BadDimsError(f"spectrum data must be 2-D, got shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data.astype(np.complex128)))
        object.__setattr__(self, "grid", Grid(data.shape[1], data.shape[0], float(self.pixel_pitch)))

    @property
    def freq_step_x(self) -> float:
        return self.grid.freq_step_x

    @property
    def freq_step_y(self) -> float:
        return self.grid.freq_step_y

    def with_data(self, data: np.ndarray) -> "Spectrum":
        return Spectrum(data, self.pixel_pitch)


@dataclass(frozen=True, eq=False)
class Filter:
    """Complex per-bin gains on a spectrum grid."""

    data: np.ndarray
    pixel_pitch: float
    label: str = ""
    grid: Grid = field(init=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise BadDimsError(f"filter data must be 2-D, got shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data.astype(np.complex128)))
        object.__setattr__(self, "grid", Grid(data.shape[1], data.shape[0], float(self.pixel_pitch)))

    @classmethod
    def ones(cls, grid: Grid, label: str = "identity") -> "Filter":
        return cls(np.ones(grid.shape), grid.pixel_pitch, label)


def fft_centered(a: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(a), norm="ortho"))


def ifft_centered(a: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(a), norm="ortho"))


def forward_fft(img: Image) -> Spectrum:
    return Spectrum(fft_centered(img.data), img.pixel_pitch)


def inverse_fft(spec: Spectrum) -> Image:
    """Inverse transform to a real image.

    A tiny imaginary residue (round-off) is dropped; a residue carrying more
    than ``IMAG_ERROR_TOL`` of the total energy means the spectrum was not
    Hermitian and raises :class:`ImagResidueError`.
    """
    global imag_discard_count
    z = ifft_centered(spec.data)
    total = float(np.sum(np.abs(z) ** 2))
    if total > 0:
        imag_energy = float(np.sum(z.imag**2))
        if imag_energy > IMAG_ERROR_TOL * total:
            raise ImagResidueError(
                f"imaginary energy fraction {imag_energy / total:.3g} exceeds {IMAG_ERROR_TOL:g}"
            )
        if np.max(np.abs(z.imag)) > IMAG_DISCARD_TOL * np.max(np.abs(z)):
            imag_discard_count += 1
            log.debug("discarded imaginary residue (fraction %.3g)", imag_energy / total)
    return Image(z.real, spec.pixel_pitch)


def _check_grid(a, b) -> None:
    if not a.grid.same_as(b.grid):
        raise GridMismatchError(
            f"grids differ: {a.grid.width}x{a.grid.height}"
            f"@{a.grid.pixel_pitch} vs {b.grid.width}x{b.grid.height}@{b.grid.pixel_pitch}"
        )


def apply_filter(spec: Spectrum, f: Filter) -> Spectrum:
    _check_grid(spec, f)
    return spec.with_data(spec.data * f.data)


def _embed_offsets(old: int, new: int) -> int:
    return new // 2 - old // 2


def pad_to(img: Image, new_w: int, new_h: int) -> Image:
    """Zero-pad keeping the center pixel (``dim // 2``) fixed."""
    if new_w < img.width or new_h < img.height:
        raise BadDimsError(f"cannot pad {img.width}x{img.height} down to {new_w}x{new_h}")
    out = np.zeros((new_h, new_w))
    oy, ox = _embed_offsets(img.height, new_h), _embed_offsets(img.width, new_w)
    out[oy : oy + img.height, ox : ox + img.width] = img.data
    return Image(out, img.pixel_pitch)


def crop_to(img: Image, w: int, h: int) -> Image:
    if w > img.width or h > img.height:
        raise BadDimsError(f"cannot crop {img.width}x{img.height} up to {w}x{h}")
    oy, ox = _embed_offsets(h, img.height), _embed_offsets(w, img.width)
    return Image(img.data[oy : oy + h, ox : ox + w], img.pixel_pitch)


def resample_spectrum(spec: Spectrum, grid: Grid) -> Spectrum:
    """Move a spectrum onto a grid with the same field of view.

    Bins are zero-padded or cropped around DC and rescaled so that pixel
    values (not energy) are preserved, i.e. Fourier interpolation or ideal
    band-limited decimation. The edge row/column at -Nyquist of the smaller
    grid is zeroed to keep real images real.
    """
    src = spec.grid
    if not np.allclose(src.field_of_view, grid.field_of_view, rtol=1e-9):
        raise GridMismatchError(
            f"field of view differs: {src.field_of_view} vs {grid.field_of_view}"
        )
    if src.same_as(grid):
        return spec
    h = min(src.height, grid.height)
    w = min(src.width, grid.width)
    sy, sx = src.height // 2 - h // 2, src.width // 2 - w // 2
    block = np.array(spec.data[sy : sy + h, sx : sx + w])
    block[0, :] = 0.0
    block[:, 0] = 0.0
    out = np.zeros(grid.shape, dtype=np.complex128)
    dy, dx = grid.height // 2 - h // 2, grid.width // 2 - w // 2
    out[dy : dy + h, dx : dx + w] = block
    scale = np.sqrt((grid.width * grid.height) / (src.width * src.height))
    return Spectrum(out * scale, grid.pixel_pitch)


def resample_image(img: Image, grid: Grid) -> Image:
    if img.grid.same_as(grid):
        return img
    return inverse_fft(resample_spectrum(forward_fft(img), grid))
