"""Sinusoidal fringe patterns and the DMD-plane to sample-plane frequency map."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import BadMagnificationError, FreqAliasedError, PartialProtocolError, PatternError, UnprojectableError
from .imagecore import Grid, Image, fft_centered

PAPER_ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)
PAPER_PHASES = (0.0, 120.0, 240.0)
PAPER_FREQ_DMD = 300.0  # cycles/mm


def dmd_to_sample_frequency(freq_dmd: float, magnification: float) -> float:
    """Fringe frequency at the sample (cycles/um) from the DMD-plane value (cycles/mm).

    ``magnification`` is sample-plane size over DMD-plane size.
    """
    if not magnification > 0:
        raise BadMagnificationError(f"magnification must be positive, got {magnification}")
    return freq_dmd / (1000.0 * magnification)


@dataclass(frozen=True)
class PatternSpec:
    """Parametric fringe protocol; angles are in degrees."""

    magnification: float
    freq_dmd: float = PAPER_FREQ_DMD
    orientations: tuple = PAPER_ORIENTATIONS
    phases: tuple = PAPER_PHASES
    modulation: float = 1.0
    mean_level: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "orientations", tuple(float(t) for t in self.orientations))
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        if not self.orientations:
            raise PatternError("at least one orientation is required")
        if len(self.phases) < 3:
            raise PartialProtocolError(f"at least 3 phases are required, got {len(self.phases)}")
        wrapped = np.round(np.mod(self.phases, 360.0), 9) % 360.0
        if len(set(wrapped)) != len(wrapped):
            raise PatternError(f"phases must be distinct modulo 360 degrees: {self.phases}")
        if not 0 <= self.modulation <= 1:
            raise PatternError(f"modulation depth must lie in [0, 1], got {self.modulation}")
        if not self.mean_level > 0:
            raise PatternError(f"mean level must be positive, got {self.mean_level}")
        if self.freq_dmd < 0:
            raise PatternError(f"DMD frequency must be nonnegative, got {self.freq_dmd}")
        dmd_to_sample_frequency(self.freq_dmd, self.magnification)

    @classmethod
    def for_sample_frequency(cls, p: float, **kw) -> "PatternSpec":
        """Spec whose magnification maps ``freq_dmd`` onto sample frequency ``p``."""
        freq_dmd = kw.pop("freq_dmd", PAPER_FREQ_DMD)
        return cls(magnification=freq_dmd / (1000.0 * p), freq_dmd=freq_dmd, **kw)

    @property
    def frequency(self) -> float:
        return dmd_to_sample_frequency(self.freq_dmd, self.magnification)

    def p_vector(self, theta_deg: float) -> tuple[float, float]:
        t = np.deg2rad(theta_deg)
        p = self.frequency
        return (p * np.cos(t), p * np.sin(t))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["orientations"] = list(self.orientations)
        d["phases"] = list(self.phases)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PatternSpec":
        return cls(**d)


def check_projectable(spec: PatternSpec, report) -> None:
    """Reject fringes finer than the illumination aperture can form."""
    if spec.frequency > report.p_max:
        raise UnprojectableError(
            f"fringe frequency {spec.frequency:.4g} cycles/um exceeds p_max {report.p_max:.4g}"
        )


def render_pattern(spec: PatternSpec, theta: float, phi: float, grid: Grid) -> Image:
    """I0 (1 + m cos(2 pi p.r + phi)); phi = 0 puts a maximum at the grid center."""
    p = spec.frequency
    if p > grid.nyquist:
        raise FreqAliasedError(f"fringe frequency {p:.4g} exceeds grid Nyquist {grid.nyquist:.4g}")
    px, py = spec.p_vector(theta)
    x, y = grid.coords()
    arg = 2 * np.pi * (px * x + py * y) + np.deg2rad(phi)
    data = spec.mean_level * (1 + spec.modulation * np.cos(arg))
    return Image(data, grid.pixel_pitch)


@dataclass(frozen=True, eq=False)
class PatternSet:
    spec: PatternSpec
    frames: tuple  # [orientation][phase] -> Image
    p_vectors: tuple  # per orientation, cycles/um

    @property
    def grid(self) -> Grid:
        return self.frames[0][0].grid

    def __len__(self) -> int:
        return sum(len(row) for row in self.frames)


def _side_peak_ok(img: Image, pvec: tuple[float, float]) -> bool:
    grid = img.grid
    mag = np.abs(fft_centered(img.data))
    cy, cx = grid.height // 2, grid.width // 2
    kx, ky = pvec[0] / grid.freq_step_x, pvec[1] / grid.freq_step_y
    for sign in (1, -1):
        ix, iy = cx + sign * kx, cy + sign * ky
        # strongest bin in a small window around the expected location
        x0, y0 = int(np.floor(ix)) - 1, int(np.floor(iy)) - 1
        win = mag[max(y0, 0) : y0 + 4, max(x0, 0) : x0 + 4]
        if win.size == 0:
            return False
        wy, wx = np.unravel_index(np.argmax(win), win.shape)
        by, bx = max(y0, 0) + wy, max(x0, 0) + wx
        if abs(bx - ix) > 0.5 + 1e-9 or abs(by - iy) > 0.5 + 1e-9:
            return False
    return True


def make_pattern_set(spec: PatternSpec, grid: Grid) -> PatternSet:
    frames = []
    pvecs = []
    for theta in spec.orientations:
        row = tuple(render_pattern(spec, theta, phi, grid) for phi in spec.phases)
        pvec = spec.p_vector(theta)
        if spec.modulation > 0 and spec.frequency > 0 and not _side_peak_ok(row[0], pvec):
            raise PatternError(f"side peaks of orientation {theta:g} deg are not at +/- p")
        frames.append(row)
        pvecs.append(pvec)
    return PatternSet(spec, tuple(frames), tuple(pvecs))
