"""Structured-illumination super-resolution reconstruction.

Pipeline per orientation: separate the three spectral copies of the object
carried by the phase-shifted frames, find (or take from the manifest) the
fringe vector, phase and modulation, shift the side copies back to their true
frequencies, then merge everything with a generalized Wiener filter on a
finer grid and apodize out to the extended cutoff.

Sign conventions: a frame acquired under ``1 + m cos(2 pi p.r + phi)`` has
spectrum ``H(f) [O(f) + m/2 e^{i phi} O(f - p) + m/2 e^{-i phi} O(f + p)]``.
``C+`` is the copy ``H(f) O(f - p)``; moving it by ``-p`` puts ``O(g)`` at
``g`` behind the displaced transfer function ``H(g + p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .errors import (
    GridMismatchError,
    NoPeakError,
    PartialProtocolError,
    SingularPhasesError,
    SupportOverflowError,
)
from .imagecore import (
    Filter,
    Grid,
    Image,
    Spectrum,
    fft_centered,
    forward_fft,
    ifft_centered,
    inverse_fft,
    resample_spectrum,
)
from .optics import ConfigError, OpticsConfig, make_otf, otf_at
from .stack import RawStack

APODIZATIONS = ("triangle", "raised-cosine", "none")
PARAMETER_SOURCES = ("manifest", "estimate")
MAX_CONDITION = 1e8
SIDEBAND_FLOOR = 1e-20  # relative energy; below this C+ is round-off
MIN_PEAK_RATIO = 3.0
RELIABLE_OTF = 0.05  # OTF gain below which bins are left out of the search
MIN_OVERLAP = 0.05  # smallest usable passband overlap, relative to full


@dataclass(frozen=True)
class ReconParams:
    """Reconstruction settings.

    ``parameter_source=None`` picks ``"manifest"`` for simulated stacks and
    ``"estimate"`` for ingested ones.
    """

    wiener_w: float = 0.05
    apodization: str = "triangle"
    parameter_source: str | None = None
    upsample_factor: int = 2

    def __post_init__(self):
        if not self.wiener_w > 0:
            raise ConfigError(f"wiener_w must be positive, got {self.wiener_w}")
        if self.apodization not in APODIZATIONS:
            raise ConfigError(f"apodization must be one of {APODIZATIONS}, got {self.apodization!r}")
        if self.parameter_source not in (None, *PARAMETER_SOURCES):
            raise ConfigError(f"parameter_source must be one of {PARAMETER_SOURCES}")
        if int(self.upsample_factor) != self.upsample_factor or self.upsample_factor < 1:
            raise ConfigError(f"upsample_factor must be an integer >= 1, got {self.upsample_factor}")

    def source_for(self, stack: RawStack) -> str:
        if self.parameter_source is not None:
            return self.parameter_source
        return "manifest" if "simulated" in stack.provenance else "estimate"

    def to_dict(self) -> dict:
        return {
            "wiener_w": self.wiener_w,
            "apodization": self.apodization,
            "parameter_source": self.parameter_source,
            "upsample_factor": int(self.upsample_factor),
        }


@dataclass(frozen=True)
class FringeEstimate:
    p_vector: tuple[float, float]  # cycles/um
    phase0: float  # radians
    modulation: float
    peak_ratio: float = float("inf")


@dataclass(eq=False)
class OrientationComponents:
    c0: Spectrum
    c_plus: Spectrum
    c_minus: Spectrum
    p_vector: tuple[float, float]
    phase0: float = 0.0
    modulation: float = 1.0
    shifted: bool = False

    @property
    def has_sides(self) -> bool:
        return self.modulation > 0


@dataclass(eq=False)
class ComponentSet:
    orientations: list[OrientationComponents] = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.orientations[0].c0.grid

    def __iter__(self):
        return iter(self.orientations)

    def __len__(self):
        return len(self.orientations)


def mixing_matrix(phases) -> np.ndarray:
    """Rows ``[1, e^{i phi_k}, e^{-i phi_k}]`` for phases in radians.

    Modulation depth is kept out of the matrix so the conditioning reflects
    the phase geometry alone (equally spaced phases give condition number 1).
    """
    phi = np.asarray(phases, dtype=float)
    return np.stack([np.ones_like(phi), np.exp(1j * phi), np.exp(-1j * phi)], axis=1).astype(complex)


def separate_components(spectra, phases, m: float) -> tuple[Spectrum, Spectrum, Spectrum]:
    """Solve ``D_k = C0 + (m/2) e^{i phi_k} C+ + (m/2) e^{-i phi_k} C-`` per bin.

    ``phases`` are in radians. With ``m == 0`` there is nothing to recover in
    the side bands and both are returned as zero.
    """
    spectra = list(spectra)
    if len(spectra) != 3 or len(phases) != 3:
        raise PartialProtocolError(f"separation needs exactly 3 frames, got {len(spectra)}")
    grid = spectra[0].grid
    for s in spectra[1:]:
        if not s.grid.same_as(grid):
            raise GridMismatchError("phase frames must share one grid")
    mat = mixing_matrix(phases)
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularPhasesError(f"mixing matrix condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
    inv = np.linalg.inv(mat)
    d = np.stack([s.data for s in spectra])
    c = np.tensordot(inv, d, axes=1)
    c0 = c[0]
    if m > 0:
        c_plus, c_minus = c[1] * (2 / m), c[2] * (2 / m)
    else:
        c_plus = c_minus = np.zeros_like(c0)
    pitch = spectra[0].pixel_pitch
    return Spectrum(c0, pitch), Spectrum(c_plus, pitch), Spectrum(c_minus, pitch)


def _spatial(spec: Spectrum) -> np.ndarray:
    return ifft_centered(spec.data)


def _quadratic_vertex(patch: np.ndarray) -> tuple[float, float]:
    """Sub-bin offset (dy, dx) of the maximum of a 2-D quadratic fit to a 3x3 patch."""
    yy, xx = np.mgrid[-1:2, -1:2]
    xx, yy = xx.ravel(), yy.ravel()
    a = np.stack([np.ones(9), xx, yy, xx**2, xx * yy, yy**2], axis=1)
    c = np.linalg.lstsq(a, patch.ravel(), rcond=None)[0]
    hess = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    if np.linalg.det(hess) <= 0 or hess[0, 0] >= 0:
        return 0.0, 0.0
    dx, dy = np.linalg.solve(hess, -c[1:3])
    if abs(dx) > 1 or abs(dy) > 1:
        return 0.0, 0.0
    return float(dy), float(dx)


def estimate_fringe_params(
    c0: Spectrum,
    c_plus: Spectrum,
    otf: Filter,
    p_hint: tuple[float, float] | None = None,
    search_bins: int = 3,
    m_used: float = 1.0,
) -> FringeEstimate:
    """Locate the fringe vector by cross-correlating ``C0`` with ``C+``.

    The correlation ``sum_f conj(C0(f)) C+(f + q)`` (OTF-compensated and
    normalized, see :func:`_normalized_correlation`) peaks at ``q = p``. The
    integer-bin argmax (within ``search_bins`` of ``p_hint``, or over the
    whole annulus ``0 < |q| < 2 rho_c``) is refined by a 2-D quadratic fit.
    Phase and modulation follow from the OTF-weighted overlap of ``C0`` and
    ``C+`` moved back by the refined ``p``; ``m_used`` is the depth assumed
    when ``C+`` was separated. Background for the NO_PEAK test is the median
    coefficient over the admissible annulus.
    """
    if not c0.grid.same_as(c_plus.grid) or not c0.grid.same_as(otf.grid):
        raise GridMismatchError("components and OTF must share one grid")
    grid = c0.grid
    e0 = float(np.sum(np.abs(c0.data) ** 2))
    if np.sum(np.abs(c_plus.data) ** 2) <= SIDEBAND_FLOOR * e0:
        raise NoPeakError("side band carries no energy above round-off")
    corr, overlap = _normalized_correlation(c0.data, c_plus.data, np.abs(otf.data))

    fx, fy = grid.freqs()
    rho = np.hypot(fx, fy)
    otf_mag = np.abs(otf.data)
    support = rho[otf_mag > 0].max() if np.any(otf_mag > 0) else 0.0
    min_r = max(3 * max(grid.freq_step_x, grid.freq_step_y), 0.05 * support)
    annulus = (rho > min_r) & (rho < 2 * support) & (overlap >= MIN_OVERLAP * overlap.max())
    if not annulus.any():
        raise NoPeakError("search region is empty")
    if p_hint is not None:
        ix = grid.width // 2 + p_hint[0] / grid.freq_step_x
        iy = grid.height // 2 + p_hint[1] / grid.freq_step_y
        jj, ii = np.meshgrid(np.arange(grid.width), np.arange(grid.height))
        window = (np.abs(jj - ix) <= search_bins + 0.5) & (np.abs(ii - iy) <= search_bins + 0.5)
        region = window & annulus
    else:
        region = annulus
    if not region.any():
        raise NoPeakError("search window does not intersect the admissible annulus")
    vals = np.where(region, corr, -np.inf)
    best = vals.max()
    background = float(np.median(corr[annulus]))
    if not np.isfinite(best) or best <= 1e-300 or best < MIN_PEAK_RATIO * background:
        ratio = best / background if background > 0 else 0.0
        raise NoPeakError(f"correlation peak-to-background ratio {ratio:.3g} below {MIN_PEAK_RATIO:g}")
    # exact ties resolve toward the lowest frequency
    ties = np.flatnonzero(vals.ravel() == best)
    k = ties[np.argmin(rho.ravel()[ties])]
    iy, ix = np.unravel_index(k, vals.shape)
    if 1 <= iy < grid.height - 1 and 1 <= ix < grid.width - 1:
        dy, dx = _quadratic_vertex(corr[iy - 1 : iy + 2, ix - 1 : ix + 2])
    else:
        dy = dx = 0.0
    px = (ix - grid.width // 2 + dx) * grid.freq_step_x
    py = (iy - grid.height // 2 + dy) * grid.freq_step_y

    # phase and modulation from the OTF-weighted overlap at the refined vector
    x, y = grid.coords()
    shifted_plus = fft_centered(_spatial(c_plus) * np.exp(-2j * np.pi * (px * x + py * y)))
    h = otf.data.real
    h_shift = _otf_shifted_like(otf, px, py)
    num = np.sum(np.conj(c0.data * h_shift) * shifted_plus * h)
    den = np.sum(np.abs(c0.data) ** 2 * h_shift**2)
    if den <= 0 or num == 0:
        raise NoPeakError("no overlap between C0 and the shifted side band")
    ratio = best / background if background > 0 else float("inf")
    return FringeEstimate((float(px), float(py)), float(np.angle(num)), float(abs(num) / den * m_used), ratio)


def _normalized_correlation(c0: np.ndarray, c_plus: np.ndarray, otf: np.ndarray):
    """Normalized cross-correlation of the OTF-compensated copies.

    Dividing by the OTF on its reliable support leaves ``O(f)`` and
    ``O(f - p)``; normalizing by the energies inside each overlap makes the
    coefficient reach exactly 1 at ``q = p`` (Cauchy-Schwarz), so the peak is
    not dragged toward small ``q`` where the passbands overlap more.
    Correlations are linear (zero-padded), origin at the center bin. Returns
    the coefficient and the overlap size in bins.
    """
    h, w = c0.shape
    keep = otf > RELIABLE_OTF
    safe = np.where(keep, otf, 1.0)
    a = np.where(keep, c0 / safe, 0)
    b = np.where(keep, c_plus / safe, 0)
    shape = (2 * h, 2 * w)

    def centered(full):
        # lags q in [-h/2, h/2) x [-w/2, w/2), zero lag at the center bin
        return np.roll(full, (h // 2, w // 2), axis=(0, 1))[:h, :w]

    # sum_f conj(x(f)) y(f + q), as an inverse transform of conj(X) Y
    fa, fb = sfft.fft2(a, shape), sfft.fft2(b, shape)
    num = np.abs(centered(sfft.ifft2(np.conj(fa) * fb)))
    rs = sfft.rfft2(keep.astype(float), shape)
    ra, rb = sfft.rfft2(np.abs(a) ** 2, shape), sfft.rfft2(np.abs(b) ** 2, shape)
    ea = centered(sfft.irfft2(np.conj(ra) * rs, shape))
    eb = centered(sfft.irfft2(np.conj(rs) * rb, shape))
    overlap = np.rint(centered(sfft.irfft2(np.conj(rs) * rs, shape)))
    den = np.sqrt(np.clip(ea, 0, None) * np.clip(eb, 0, None))
    tiny = 1e-12 * max(float(den.max()), 1e-300)
    coef = np.where(den > tiny, num / np.where(den > tiny, den, 1.0), 0.0)
    return coef, overlap


def _otf_shifted_like(otf: Filter, px: float, py: float) -> np.ndarray:
    """Radially symmetric OTF table evaluated at ``f + p`` by radial interpolation."""
    grid = otf.grid
    rho = grid.radial_freq()
    table = otf.data.real
    # a circularly symmetric filter is fully described by its profile along +x
    cy, cx = grid.height // 2, grid.width // 2
    prof_r = rho[cy, cx:]
    prof_v = table[cy, cx:]
    fx, fy = grid.freqs()
    r = np.hypot(fx + px, fy + py)
    return np.interp(r, prof_r, prof_v, right=0.0)


def shift_component(c: Spectrum, shift: tuple[float, float], cutoff: float | None = None) -> Spectrum:
    """Translate spectral content by ``shift`` (cycles/um): result(f) = c(f - shift).

    Done exactly as a modulation in real space, so any sub-bin shift is
    allowed. When ``cutoff`` (the band limit of ``c``) is given, the moved
    band must still fit inside the grid.
    """
    grid = c.grid
    sx, sy = shift
    if cutoff is not None and np.hypot(sx, sy) + cutoff > grid.nyquist:
        raise SupportOverflowError(
            f"|shift| {np.hypot(sx, sy):.4g} + cutoff {cutoff:.4g} exceeds grid Nyquist {grid.nyquist:.4g}"
        )
    if sx == 0 and sy == 0:
        return c
    x, y = grid.coords()
    moved = fft_centered(ifft_centered(c.data) * np.exp(2j * np.pi * (sx * x + sy * y)))
    return c.with_data(moved)


def _apodization(rho: np.ndarray, extent: float, kind: str) -> np.ndarray:
    if kind == "none":
        return np.ones_like(rho)
    t = rho / extent
    if kind == "triangle":
        return np.clip(1 - t, 0, None)
    return np.where(t < 1, 0.5 * (1 + np.cos(np.pi * np.clip(t, 0, 1))), 0.0)


def wiener_combine(components: ComponentSet, cfg: OpticsConfig, params: ReconParams) -> Spectrum:
    """Generalized Wiener synthesis of shifted components.

    ``S = sum_d conj(H_d) C_d / (sum_d |H_d|^2 + w^2)`` with ``H_d`` the
    detection OTF displaced with its component. The orientations' ``C0``
    estimates of the same widefield spectrum are averaged into a single term,
    so a protocol with no usable side bands reduces to plain Wiener
    deconvolution of the conventional image. The result is apodized to
    ``rho_c + max |p|``.
    """
    grid = components.grid
    for oc in components:
        if not oc.shifted:
            raise ValueError("components must be shifted to their true positions first")
        for s in (oc.c0, oc.c_plus, oc.c_minus):
            if not s.grid.same_as(grid):
                raise GridMismatchError("all components must share the reconstruction grid")
    fx, fy = grid.freqs()
    h0 = otf_at(cfg, fx, fy)
    c0 = sum(oc.c0.data for oc in components) / len(components)
    num = h0 * c0
    den = h0**2
    extent = cfg.cutoff
    for oc in components:
        if not oc.has_sides:
            continue
        px, py = oc.p_vector
        h_plus = otf_at(cfg, fx + px, fy + py)
        h_minus = otf_at(cfg, fx - px, fy - py)
        num = num + h_plus * oc.c_plus.data + h_minus * oc.c_minus.data
        den = den + h_plus**2 + h_minus**2
        extent = max(extent, cfg.cutoff + float(np.hypot(px, py)))
    s = num / (den + params.wiener_w**2)
    s = s * _apodization(np.hypot(fx, fy), extent, params.apodization)
    return Spectrum(s, grid.pixel_pitch)


def wiener_deconvolve(img: Image, cfg: OpticsConfig, params: ReconParams) -> Image:
    """Wiener-deconvolved widefield image on the reconstruction grid."""
    grid = img.grid.upsampled(params.upsample_factor)
    spec = resample_spectrum(forward_fft(img), grid)
    oc = OrientationComponents(spec, spec.with_data(np.zeros(grid.shape)),
                               spec.with_data(np.zeros(grid.shape)), (0.0, 0.0),
                               modulation=0.0, shifted=True)
    out = inverse_fft(wiener_combine(ComponentSet([oc]), cfg, params))
    return Image(np.clip(out.data, 0, None), out.pixel_pitch)


@dataclass(eq=False)
class ReconResult:
    enhanced: Image
    conventional: Image
    conventional_wiener: Image
    estimates: list[FringeEstimate]
    parameter_source: str
    params: ReconParams

    def report(self) -> dict:
        out = {"parameter_source": self.parameter_source, **{f"recon_{k}": v for k, v in self.params.to_dict().items()}}
        for i, e in enumerate(self.estimates):
            out[f"orientation_{i}_px_cyc_per_um"] = e.p_vector[0]
            out[f"orientation_{i}_py_cyc_per_um"] = e.p_vector[1]
            out[f"orientation_{i}_p_cyc_per_um"] = float(np.hypot(*e.p_vector))
            out[f"orientation_{i}_phase0_deg"] = float(np.rad2deg(e.phase0))
            out[f"orientation_{i}_modulation"] = e.modulation
        return out


def _check_protocol(stack: RawStack) -> None:
    if stack.n_phases != 3:
        raise PartialProtocolError(f"reconstruction needs exactly 3 phases per orientation, got {stack.n_phases}")


def decompose(stack: RawStack, params: ReconParams) -> tuple[ComponentSet, list[FringeEstimate], str]:
    """Separate and parameterize every orientation (components on the raw grid)."""
    _check_protocol(stack)
    source = params.source_for(stack)
    spec = stack.pattern
    cfg = stack.optics
    phases = np.deg2rad(spec.phases)
    otf = make_otf(cfg, stack.grid)
    comps = ComponentSet()
    estimates = []
    for k, row in enumerate(stack.frames):
        spectra = [forward_fft(img) for img in row]
        hint = spec.p_vector(spec.orientations[k])
        if source == "manifest":
            c0, cp, cm = separate_components(spectra, phases, spec.modulation)
            est = FringeEstimate(hint, 0.0, spec.modulation)
        else:
            c0, cp, cm = separate_components(spectra, phases, 1.0)
            est = estimate_fringe_params(c0, cp, otf, p_hint=hint, m_used=1.0)
            rot = np.exp(-1j * est.phase0) / est.modulation
            cp = cp.with_data(cp.data * rot)
            cm = cm.with_data(cm.data * np.conj(rot))
        comps.orientations.append(OrientationComponents(c0, cp, cm, est.p_vector, est.phase0, est.modulation))
        estimates.append(est)
    return comps, estimates, source


def shift_all(components: ComponentSet, cfg: OpticsConfig, grid: Grid) -> ComponentSet:
    """Upsample every component onto ``grid`` and move side bands home."""
    out = ComponentSet()
    for oc in components:
        c0 = resample_spectrum(oc.c0, grid)
        cp = resample_spectrum(oc.c_plus, grid)
        cm = resample_spectrum(oc.c_minus, grid)
        if oc.has_sides:
            px, py = oc.p_vector
            cp = shift_component(cp, (-px, -py), cfg.cutoff)
            cm = shift_component(cm, (px, py), cfg.cutoff)
        out.orientations.append(replace(oc, c0=c0, c_plus=cp, c_minus=cm, shifted=True))
    return out


def run_reconstruction(stack: RawStack, params: ReconParams = ReconParams()) -> ReconResult:
    cfg = stack.optics
    grid = stack.grid.upsampled(params.upsample_factor)
    comps, estimates, source = decompose(stack, params)
    shifted = shift_all(comps, cfg, grid)
    s = wiener_combine(shifted, cfg, params)
    enhanced = inverse_fft(s)
    enhanced = Image(np.clip(enhanced.data, 0, None), enhanced.pixel_pitch)
    conventional = stack.conventional()
    return ReconResult(
        enhanced,
        conventional,
        wiener_deconvolve(conventional, cfg, params),
        estimates,
        source,
        params,
    )


def reconstruct(stack: RawStack, params: ReconParams = ReconParams()) -> Image:
    """Resolution-enhanced image on the upsampled grid."""
    return run_reconstruction(stack, params).enhanced
