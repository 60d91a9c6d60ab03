"""Synthetic test objects and the resolution/contrast metrics used to score images.

Physical coordinates follow :mod:`sldf.imagecore`: micrometers, origin at the
center pixel, x along columns and y along rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import LayoutOverflowError, NoPeakError, OutOfBoundsError
from .imagecore import Grid, Image, forward_fft
from .optics import ConfigError, SampleStack

ORIENTATIONS = ("vertical", "horizontal", "both")
MIN_PROFILE_SAMPLES = 16


# --- targets ------------------------------------------------------------


@dataclass(frozen=True)
class BarGroup:
    frequency: float  # cycles/um
    elements: int = 1  # three-bar elements placed edge to edge


@dataclass(frozen=True)
class BarTargetSpec:
    """Three-bar resolution groups, one row per group.

    "vertical" bars run along y (contrast measured along x). Each element is
    three bars of width half a period; ``elements`` > 1 places several
    elements edge to edge, continuing the grating. Bars are
    ``bar_length_periods`` periods long (the USAF ratio is 5 bar widths).
    """

    groups: tuple
    orientation: str = "vertical"
    amplitude: float = 1.0
    bar_length_periods: float = 2.5
    row_gap_um: float = 2.0

    def __post_init__(self):
        groups = tuple(g if isinstance(g, BarGroup) else BarGroup(*g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise ConfigError("bar target needs at least one group")
        for g in groups:
            if not g.frequency > 0:
                raise ConfigError(f"bar frequency must be positive, got {g.frequency}")
            if g.elements < 1:
                raise ConfigError(f"element count must be >= 1, got {g.elements}")
        if self.orientation not in ORIENTATIONS:
            raise ConfigError(f"orientation must be one of {ORIENTATIONS}")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be nonnegative")


@dataclass(frozen=True)
class BarBlock:
    """Placement of one group's bars; ``center`` and ``size`` in micrometers."""

    frequency: float
    orientation: str  # "vertical" or "horizontal"
    center: tuple[float, float]
    size: tuple[float, float]
    n_bars: int

    def bar_centers(self) -> list[float]:
        """Positions of the bar centers along the contrast axis."""
        period = 1.0 / self.frequency
        c = self.center[0] if self.orientation == "vertical" else self.center[1]
        first = c - (self.n_bars - 1) * period / 2
        return [first + i * period for i in range(self.n_bars)]

    def cross_section(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Segment across the central three-bar element.

        Runs from the bar left of the middle one to the bar right of it, so the
        measured contrast sees interior bars only, away from the block edges.
        """
        centers = self.bar_centers()
        mid = len(centers) // 2
        lo, hi = centers[max(mid - 1, 0)], centers[min(mid + 1, len(centers) - 1)]
        cx, cy = self.center
        if self.orientation == "vertical":
            return (lo, cy), (hi, cy)
        return (cx, lo), (cx, hi)


def _coverage_1d(lo: float, hi: float, centers: np.ndarray, pitch: float) -> np.ndarray:
    """Fraction of each pixel [c - pitch/2, c + pitch/2] covered by [lo, hi]."""
    left = np.maximum(centers - pitch / 2, lo)
    right = np.minimum(centers + pitch / 2, hi)
    return np.clip(right - left, 0, None) / pitch


def _paint_rect(out: np.ndarray, grid: Grid, x0: float, x1: float, y0: float, y1: float, value: float) -> None:
    xs = (np.arange(grid.width) - grid.width // 2) * grid.pixel_pitch
    ys = (np.arange(grid.height) - grid.height // 2) * grid.pixel_pitch
    cx = _coverage_1d(x0, x1, xs, grid.pixel_pitch)
    cy = _coverage_1d(y0, y1, ys, grid.pixel_pitch)
    out += value * np.outer(cy, cx)


def bar_layout(spec: BarTargetSpec, grid: Grid) -> list[BarBlock]:
    """Row-by-row placement of the groups, centered on the grid."""
    kinds = ["vertical", "horizontal"] if spec.orientation == "both" else [spec.orientation]
    rows = []
    for g in spec.groups:
        if g.frequency >= grid.nyquist:
            raise ConfigError(f"bar frequency {g.frequency:.4g} is not below the grid Nyquist {grid.nyquist:.4g}")
        period = 1.0 / g.frequency
        n_bars = 3 * g.elements
        across = (n_bars - 0.5) * period
        along = spec.bar_length_periods * period
        blocks = []
        for kind in kinds:
            size = (across, along) if kind == "vertical" else (along, across)
            blocks.append((kind, size, n_bars))
        width = sum(b[1][0] for b in blocks) + spec.row_gap_um * (len(blocks) - 1)
        height = max(b[1][1] for b in blocks)
        rows.append((g, blocks, width, height))
    total_h = sum(r[3] for r in rows) + spec.row_gap_um * (len(rows) - 1)
    fov_w, fov_h = grid.field_of_view
    margin = 4 * grid.pixel_pitch
    if total_h > fov_h - 2 * margin or max(r[2] for r in rows) > fov_w - 2 * margin:
        raise LayoutOverflowError(
            f"bar groups need {max(r[2] for r in rows):.3g} x {total_h:.3g} um, field is {fov_w:.3g} x {fov_h:.3g} um"
        )
    placed = []
    y = -total_h / 2
    for g, blocks, width, height in rows:
        x = -width / 2
        for kind, size, n_bars in blocks:
            center = (x + size[0] / 2, y + height / 2)
            placed.append(BarBlock(g.frequency, kind, center, size, n_bars))
            x += size[0] + spec.row_gap_um
        y += height + spec.row_gap_um
    return placed


def render_bars(spec: BarTargetSpec, grid: Grid) -> Image:
    out = np.zeros(grid.shape)
    for block in bar_layout(spec, grid):
        half_w = 0.25 / block.frequency
        cx, cy = block.center
        sx, sy = block.size
        for c in block.bar_centers():
            if block.orientation == "vertical":
                _paint_rect(out, grid, c - half_w, c + half_w, cy - sy / 2, cy + sy / 2, spec.amplitude)
            else:
                _paint_rect(out, grid, cx - sx / 2, cx + sx / 2, c - half_w, c + half_w, spec.amplitude)
    return Image(out, grid.pixel_pitch)


def gen_bars(spec: BarTargetSpec, grid: Grid) -> SampleStack:
    """Bar target as an in-focus scattering density (edges area-averaged)."""
    return SampleStack.single(render_bars(spec, grid))


@dataclass(frozen=True)
class RingTargetSpec:
    radius: float  # um, to the middle of the ring wall
    thickness: float  # um
    amplitude: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not 0 < self.thickness < self.radius:
            raise ConfigError(f"need 0 < thickness < radius, got {self.thickness}, {self.radius}")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be nonnegative")


def gen_ring(spec: RingTargetSpec, grid: Grid) -> SampleStack:
    """Annulus with 2-pixel linear edge ramps."""
    x, y = grid.coords()
    cx, cy = spec.center
    reach = spec.radius + spec.thickness / 2 + 2 * grid.pixel_pitch
    fov_w, fov_h = grid.field_of_view
    lo_x, hi_x = -grid.width // 2 * grid.pixel_pitch, (grid.width // 2 - 1) * grid.pixel_pitch
    lo_y, hi_y = -grid.height // 2 * grid.pixel_pitch, (grid.height // 2 - 1) * grid.pixel_pitch
    if cx - reach < lo_x or cx + reach > hi_x or cy - reach < lo_y or cy + reach > hi_y:
        raise LayoutOverflowError(f"ring of outer radius {reach:.3g} um does not fit the {fov_w:.3g} um field")
    dist = np.abs(np.hypot(x - cx, y - cy) - spec.radius)
    ramp = 2 * grid.pixel_pitch
    data = spec.amplitude * np.clip(0.5 + (spec.thickness / 2 - dist) / ramp, 0, 1)
    return SampleStack.single(Image(data, grid.pixel_pitch))


def gen_points(grid: Grid, positions, amplitude: float = 1.0) -> SampleStack:
    """Point scatterers snapped to the nearest pixel."""
    data = np.zeros(grid.shape)
    for px, py in positions:
        j = int(round(px / grid.pixel_pitch)) + grid.width // 2
        i = int(round(py / grid.pixel_pitch)) + grid.height // 2
        if not (0 <= i < grid.height and 0 <= j < grid.width):
            raise LayoutOverflowError(f"point ({px}, {py}) um lies outside the field")
        data[i, j] += amplitude
    return SampleStack.single(Image(data, grid.pixel_pitch))


def gen_beads(grid: Grid, n: int, seed: int = 0, margin_um: float = 2.0, amplitude=(0.5, 1.5)) -> SampleStack:
    """Randomly placed point scatterers with random strength (seeded)."""
    rng = np.random.default_rng(seed)
    half_w = grid.width // 2 * grid.pixel_pitch - margin_um
    half_h = grid.height // 2 * grid.pixel_pitch - margin_um
    data = np.zeros(grid.shape)
    xs = rng.uniform(-half_w, half_w, n)
    ys = rng.uniform(-half_h, half_h, n)
    amps = rng.uniform(*amplitude, n)
    for x, y, a in zip(xs, ys, amps):
        j = int(round(x / grid.pixel_pitch)) + grid.width // 2
        i = int(round(y / grid.pixel_pitch)) + grid.height // 2
        data[i, j] += a
    return SampleStack.single(Image(data, grid.pixel_pitch))


def gen_two_plane(in_focus: Image, out_focus: Image, dz: float) -> SampleStack:
    """In-focus plane plus a second plane at defocus ``dz`` (um).

    ``SampleStack.masks()`` then gives each plane's support for energy
    bookkeeping.
    """
    if dz == 0:
        raise ConfigError("the second plane must be out of focus (dz != 0)")
    return SampleStack(((in_focus, 0.0), (out_focus, float(dz))))


# --- metrics --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProfileMeasurement:
    positions: np.ndarray  # um along the segment, starting at 0
    values: np.ndarray
    start: tuple[float, float]
    end: tuple[float, float]

    def __len__(self):
        return len(self.values)


def _to_index(img: Image, x: float, y: float) -> tuple[float, float]:
    return y / img.pixel_pitch + img.height // 2, x / img.pixel_pitch + img.width // 2


def profile(img: Image, p0, p1, n: int = 256) -> ProfileMeasurement:
    """``n`` bilinear samples from ``p0`` to ``p1`` (um, inclusive)."""
    if n < MIN_PROFILE_SAMPLES:
        raise ValueError(f"a profile needs at least {MIN_PROFILE_SAMPLES} samples, got {n}")
    rows, cols = [], []
    for x, y in (p0, p1):
        r, c = _to_index(img, x, y)
        if not (0 <= r <= img.height - 1 and 0 <= c <= img.width - 1):
            raise OutOfBoundsError(f"point ({x}, {y}) um lies outside the image")
        rows.append(r)
        cols.append(c)
    t = np.linspace(0, 1, n)
    rr = rows[0] + t * (rows[1] - rows[0])
    cc = cols[0] + t * (cols[1] - cols[0])
    vals = ndimage.map_coordinates(img.data, [rr, cc], order=1, mode="nearest")
    length = float(np.hypot(p1[0] - p0[0], p1[1] - p0[1]))
    return ProfileMeasurement(t * length, vals, tuple(p0), tuple(p1))


def _values(prof) -> np.ndarray:
    return np.asarray(prof.values if isinstance(prof, ProfileMeasurement) else prof, dtype=float)


def michelson_contrast(prof) -> float:
    v = _values(prof)
    if v.size < 2:
        raise ValueError("contrast needs at least 2 samples")
    hi, lo = float(v.max()), float(v.min())
    if hi + lo == 0:
        return 0.0
    return (hi - lo) / (hi + lo)


def radial_spectrum(img: Image) -> tuple[np.ndarray, np.ndarray]:
    """Radially averaged spectral magnitude and bin radii (cycles/um)."""
    grid = img.grid
    mag = np.abs(forward_fft(img).data)
    step = max(grid.freq_step_x, grid.freq_step_y)
    idx = np.rint(grid.radial_freq() / step).astype(int)
    sums = np.bincount(idx.ravel(), mag.ravel())
    counts = np.bincount(idx.ravel())
    with np.errstate(invalid="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return np.arange(mean.size) * step, mean


def effective_cutoff(img: Image, noise_floor: float = 1e-3) -> float:
    """Largest radius whose radially averaged |spectrum| exceeds ``noise_floor`` x DC."""
    radii, mean = radial_spectrum(img)
    dc = mean[0]
    if dc <= 0:
        return 0.0
    above = np.flatnonzero(mean > noise_floor * dc)
    return float(radii[above[-1]])


def _half_max_width(x: np.ndarray, v: np.ndarray, k: int, level: float) -> float | None:
    """Distance between the half-level crossings on either side of index ``k``."""
    left = k
    while left > 0 and v[left] > level:
        left -= 1
    right = k
    while right < v.size - 1 and v[right] > level:
        right += 1
    if v[left] > level or v[right] > level:
        return None
    xl = np.interp(level, [v[left], v[left + 1]], [x[left], x[left + 1]])
    xr = np.interp(level, [v[right], v[right - 1]], [x[right], x[right - 1]])
    return float(xr - xl)


def edge_fwhm(prof: ProfileMeasurement, mode: str = "edge", window: tuple[float, float] | None = None) -> float:
    """FWHM (um) of the edge response derivative or of a peak.

    ``mode="edge"`` differentiates the profile and measures its dominant
    lobe; ``mode="peak"`` measures the highest peak directly. Half maximum is
    taken above the minimum of the examined span. ``window`` restricts the
    search to positions ``[a, b]`` along the profile, e.g. one wall of a ring.
    """
    if mode not in ("edge", "peak"):
        raise ValueError(f"mode must be 'edge' or 'peak', got {mode!r}")
    x = np.asarray(prof.positions, dtype=float)
    v = np.asarray(prof.values, dtype=float)
    if window is not None:
        keep = (x >= window[0]) & (x <= window[1])
        x, v = x[keep], v[keep]
    if v.size < 3:
        raise NoPeakError("too few samples in the examined span")
    if mode == "edge":
        v = np.abs(np.gradient(v, x))
    k = int(np.argmax(v))
    base = float(v.min())
    if k in (0, v.size - 1) or v[k] <= base:
        raise NoPeakError("no interior maximum in the examined span")
    width = _half_max_width(x, v, k, base + (v[k] - base) / 2)
    if width is None:
        raise NoPeakError("profile does not fall to half maximum on both sides")
    return width
