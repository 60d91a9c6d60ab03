"""Detection OTFs, dark-field geometry checks and the incoherent forward model.

The sample is a scattering density: only structure that scatters into the
detection cone is represented and the blocked direct beam contributes no
background term. Image formation is incoherent, i.e. a convolution of
(density x illumination) with the intensity PSF, done by multiplying spectra
with the OTF.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .errors import GridMismatchError, GridTooCoarseError, NotDarkFieldError, SLDFError
from .imagecore import (
    Filter,
    Grid,
    Image,
    crop_to,
    fft_centered,
    ifft_centered,
    pad_to,
    resample_image,
)
from .stack import RawStack

MODES = ("transmission", "reflectance")
GUARD_BAND = 16
_QUAD_NODES = 96


class ConfigError(SLDFError, ValueError):
    code = "BAD_CONFIG"


@dataclass(frozen=True)
class NoiseSpec:
    """Detector noise. Intensities are in counts at unit gain.

    Shot noise uses the Gaussian approximation sigma = sqrt(photon_scale * I) / photon_scale;
    ``photon_scale = 0`` disables it.
    """

    read_noise_sigma: float = 0.0
    photon_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.read_noise_sigma < 0:
            raise ConfigError(f"read_noise_sigma must be >= 0, got {self.read_noise_sigma}")
        if self.photon_scale < 0:
            raise ConfigError(f"photon_scale must be >= 0, got {self.photon_scale}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def enabled(self) -> bool:
        return self.read_noise_sigma > 0 or self.photon_scale > 0


@dataclass(frozen=True)
class OpticsConfig:
    """Microscope parameters. Wavelength is in micrometers.

    The dark-field ordering of the apertures is checked by
    :func:`validate_darkfield`, not here, so that a wrong geometry can be
    loaded and reported.
    """

    na_detection: float = 0.4
    na_illumination_outer: float = 0.75
    na_illumination_inner: float = 0.5
    wavelength: float = 0.55
    mode: str = "transmission"
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        for name in ("na_detection", "na_illumination_outer", "na_illumination_inner"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if not 0.3 <= self.wavelength <= 1.1:
            raise ConfigError(f"wavelength must lie in [0.3, 1.1] um, got {self.wavelength}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def cutoff(self) -> float:
        """Incoherent detection cutoff 2 NA / lambda in cycles/um."""
        return 2 * self.na_detection / self.wavelength

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OpticsConfig":
        d = dict(d)
        noise = NoiseSpec(**d.pop("noise", {}))
        return cls(noise=noise, **d)


def incoherent_otf(rho, na: float, wavelength: float) -> np.ndarray:
    """Diffraction-limited OTF of a circular pupil at radial frequency ``rho``."""
    r = np.abs(np.asarray(rho, dtype=float)) / (2 * na / wavelength)
    out = np.zeros_like(r)
    inside = r < 1
    ri = r[inside]
    out[inside] = (2 / np.pi) * (np.arccos(ri) - ri * np.sqrt(1 - ri**2))
    return out


def defocused_otf(rho, na: float, wavelength: float, dz: float) -> np.ndarray:
    """OTF of a circular pupil with quadratic defocus W20 = dz NA^2 / 2.

    Writing the pupils' overlap in normalized pupil units, the phase
    difference between the two sheared pupils is linear in x, which reduces
    the autocorrelation to

        OTF(u) = (4/pi) int_0^theta0 cos(a (cos t - u/2)) sin^2 t dt,
        cos theta0 = u/2,  a = 2 k W20 u,

    with u = rho / (NA/lambda) in [0, 2]. The integrand is smooth, so a fixed
    Gauss-Legendre rule is accurate to round-off for the defocus range used here.
    """
    rho = np.abs(np.asarray(rho, dtype=float))
    if dz == 0:
        return incoherent_otf(rho, na, wavelength)
    u = rho / (na / wavelength)
    out = np.zeros_like(u)
    inside = u < 2
    ui = u[inside]
    w20 = dz * na**2 / 2
    a = 2 * (2 * np.pi / wavelength) * w20 * ui
    theta0 = np.arccos(ui / 2)
    nodes, weights = np.polynomial.legendre.leggauss(_QUAD_NODES)
    vals = np.empty_like(ui)
    # chunked to bound memory on large grids
    step = 65536
    for s in range(0, ui.size, step):
        sl = slice(s, s + step)
        t = 0.5 * theta0[sl, None] * (nodes[None, :] + 1)
        integrand = np.cos(a[sl, None] * (np.cos(t) - ui[sl, None] / 2)) * np.sin(t) ** 2
        vals[sl] = 0.5 * theta0[sl] * (integrand @ weights)
    out[inside] = (4 / np.pi) * vals
    return out


def _check_cutoff(cfg: OpticsConfig, grid: Grid) -> None:
    if cfg.cutoff > grid.nyquist:
        raise GridTooCoarseError(
            f"OTF cutoff {cfg.cutoff:.4g} cycles/um exceeds grid Nyquist {grid.nyquist:.4g}"
        )


@lru_cache(maxsize=64)
def _otf_table(na: float, wavelength: float, grid: Grid, dz: float) -> np.ndarray:
    out = defocused_otf(grid.radial_freq(), na, wavelength, dz)
    out.setflags(write=False)
    return out


def make_otf(cfg: OpticsConfig, grid: Grid) -> Filter:
    _check_cutoff(cfg, grid)
    table = _otf_table(cfg.na_detection, cfg.wavelength, grid, 0.0)
    return Filter(table, grid.pixel_pitch, f"OTF NA={cfg.na_detection:g}")


def make_defocused_otf(cfg: OpticsConfig, grid: Grid, dz: float) -> Filter:
    _check_cutoff(cfg, grid)
    table = _otf_table(cfg.na_detection, cfg.wavelength, grid, float(dz))
    return Filter(table, grid.pixel_pitch, f"OTF NA={cfg.na_detection:g} dz={dz:g}um")


def otf_at(cfg: OpticsConfig, fx, fy) -> np.ndarray:
    """In-focus detection OTF at arbitrary frequency coordinates."""
    return incoherent_otf(np.hypot(fx, fy), cfg.na_detection, cfg.wavelength)


def illumination_attenuation(cfg: OpticsConfig, rho, dz: float) -> np.ndarray:
    """Defocus factor applied to fringes of frequency ``rho`` at distance ``dz``.

    Ratio of the defocused to the in-focus OTF of the illumination aperture
    (outer NA); zero where the illumination cannot carry the frequency.
    """
    na = cfg.na_illumination_outer
    num = defocused_otf(rho, na, cfg.wavelength, dz)
    den = incoherent_otf(rho, na, cfg.wavelength)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass(frozen=True)
class DarkFieldReport:
    ok: bool
    mode: str
    p_max: float
    message: str


def validate_darkfield(cfg: OpticsConfig) -> DarkFieldReport:
    """Check that the illumination ring lies outside the detection cone.

    Returns a report carrying the largest projectable fringe frequency
    ``2 NA_outer / lambda``; raises :class:`NotDarkFieldError` otherwise.
    """
    blocked = "direct reflection" if cfg.mode == "reflectance" else "direct transmission"
    if not cfg.na_illumination_inner > cfg.na_detection:
        raise NotDarkFieldError(
            f"na_illumination_inner ({cfg.na_illumination_inner:g}) must exceed "
            f"na_detection ({cfg.na_detection:g}); {blocked} would enter the detection cone"
        )
    if not cfg.na_illumination_inner <= cfg.na_illumination_outer:
        raise NotDarkFieldError(
            f"na_illumination_inner ({cfg.na_illumination_inner:g}) must not exceed "
            f"na_illumination_outer ({cfg.na_illumination_outer:g})"
        )
    p_max = 2 * cfg.na_illumination_outer / cfg.wavelength
    return DarkFieldReport(
        True, cfg.mode, p_max, f"{cfg.mode} dark-field: {blocked} blocked, p_max = {p_max:.4g} cycles/um"
    )


@dataclass(frozen=True, eq=False)
class SampleStack:
    """Scattering-density planes with their defocus (micrometers)."""

    planes: tuple

    def __post_init__(self):
        planes = tuple((img, float(dz)) for img, dz in self.planes)
        if not planes:
            raise ConfigError("sample needs at least one plane")
        grid = planes[0][0].grid
        for img, _ in planes:
            if not img.grid.same_as(grid):
                raise GridMismatchError("all sample planes must share one grid")
            if np.any(img.data < 0):
                raise ConfigError("scattering density must be nonnegative")
        object.__setattr__(self, "planes", planes)

    @classmethod
    def single(cls, density: Image) -> "SampleStack":
        return cls(((density, 0.0),))

    @property
    def grid(self) -> Grid:
        return self.planes[0][0].grid

    def total_density(self) -> Image:
        return self.planes[0][0].with_data(sum(img.data for img, _ in self.planes))

    def masks(self) -> list[np.ndarray]:
        """Nonzero support of each plane."""
        return [img.data > 0 for img, _ in self.planes]

    def scaled(self, s: float) -> "SampleStack":
        return SampleStack(tuple((img.with_data(img.data * s), dz) for img, dz in self.planes))


def _add_noise(data: np.ndarray, noise: NoiseSpec, frame_key: tuple[int, int]) -> np.ndarray:
    rng = np.random.default_rng([int(noise.seed), *map(int, frame_key)])
    out = data.copy()
    if noise.photon_scale > 0:
        sigma = np.sqrt(noise.photon_scale * np.clip(data, 0, None)) / noise.photon_scale
        out = out + sigma * rng.standard_normal(data.shape)
    if noise.read_noise_sigma > 0:
        out = out + noise.read_noise_sigma * rng.standard_normal(data.shape)
    return out


def _defocus_pattern(pattern: Image, cfg: OpticsConfig, dz: float) -> np.ndarray:
    ratio = illumination_attenuation(cfg, pattern.grid.radial_freq(), dz)
    return ifft_centered(fft_centered(pattern.data) * ratio).real


def simulate_frame(
    sample: SampleStack,
    pattern: Image,
    cfg: OpticsConfig,
    grid: Grid | None = None,
    frame_key: tuple[int, int] = (0, 0),
    boundary: str = "zero",
) -> Image:
    """Detected dark-field frame for one illumination pattern.

    ``grid`` is the detector grid; it defaults to the sample grid and may be
    coarser as long as it covers the same field of view and still samples the
    detection cutoff. ``boundary="zero"`` treats the sample as confined to the
    field (16-pixel guard band against wrap-around); ``"periodic"`` uses
    circular convolution. ``frame_key`` selects the noise stream.
    """
    sgrid = sample.grid
    if not pattern.grid.same_as(sgrid):
        raise GridMismatchError("pattern grid must match the sample grid")
    if np.any(pattern.data < 0):
        raise ConfigError("illumination pattern must be nonnegative")
    grid = sgrid if grid is None else grid
    if boundary == "zero":
        pgrid = Grid(sgrid.width + 2 * GUARD_BAND, sgrid.height + 2 * GUARD_BAND, sgrid.pixel_pitch)
    elif boundary == "periodic":
        pgrid = sgrid
    else:
        raise ConfigError(f"unknown boundary mode {boundary!r}")
    _check_cutoff(cfg, grid)

    acc = np.zeros(pgrid.shape, dtype=complex)
    for density, dz in sample.planes:
        illum = pattern.data if dz == 0 else _defocus_pattern(pattern, cfg, dz)
        product = Image(density.data * illum, sgrid.pixel_pitch)
        if pgrid is not sgrid:
            product = pad_to(product, pgrid.width, pgrid.height)
        otf = _otf_table(cfg.na_detection, cfg.wavelength, pgrid, float(dz))
        acc += fft_centered(product.data) * otf
    detected = Image(ifft_centered(acc).real, sgrid.pixel_pitch)
    if pgrid is not sgrid:
        detected = crop_to(detected, sgrid.width, sgrid.height)
    detected = resample_image(detected, grid)
    data = detected.data
    if cfg.noise.enabled:
        data = _add_noise(data, cfg.noise, frame_key)
    return Image(np.clip(data, 0, None), grid.pixel_pitch)


def simulate_stack(sample: SampleStack, patterns, cfg: OpticsConfig, grid: Grid | None = None,
                   boundary: str = "zero") -> RawStack:
    """Simulate one frame per (orientation, phase), orientation-major."""
    from .patterns import check_projectable

    report = validate_darkfield(cfg)
    check_projectable(patterns.spec, report)
    frames = []
    for i, row in enumerate(patterns.frames):
        frames.append(
            [simulate_frame(sample, pat, cfg, grid, frame_key=(i, j), boundary=boundary)
             for j, pat in enumerate(row)]
        )
    provenance = {"simulated": {"seed": int(cfg.noise.seed), "boundary": boundary,
                                "sample_pitch_um": sample.grid.pixel_pitch}}
    return RawStack(frames, patterns.spec, cfg, provenance)
