import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sldf.errors import NoPeakError, PartialProtocolError, SingularPhasesError, SupportOverflowError
from sldf.evaluation import effective_cutoff, gen_beads, gen_points, radial_spectrum
from sldf.imagecore import Grid, Image, Spectrum, forward_fft, inverse_fft, resample_spectrum
from sldf.optics import OpticsConfig, SampleStack, incoherent_otf, make_otf, simulate_stack
from sldf.patterns import PatternSpec, make_pattern_set
from sldf.recon import (
    ComponentSet,
    OrientationComponents,
    ReconParams,
    decompose,
    estimate_fringe_params,
    mixing_matrix,
    reconstruct,
    run_reconstruction,
    separate_components,
    shift_all,
    shift_component,
    wiener_combine,
    wiener_deconvolve,
)
from sldf.stack import RawStack

CFG = OpticsConfig()
RC = CFG.cutoff
PITCH = 1 / (1.4 * RC * 5)
GRID = Grid(256, 256, PITCH)
PHASES = np.deg2rad([0.0, 120.0, 240.0])


def _random_spectrum(rng, shape=(64, 64)):
    return Spectrum(rng.normal(size=shape) + 1j * rng.normal(size=shape), 0.1)


def _compose(c0, cp, cm, phases, m):
    return [
        Spectrum(c0.data + m / 2 * np.exp(1j * p) * cp.data + m / 2 * np.exp(-1j * p) * cm.data, 0.1)
        for p in phases
    ]


# --- separation ---------------------------------------------------------


def test_identical_spectra_have_no_side_bands():
    rng = np.random.default_rng(0)
    s = _random_spectrum(rng)
    c0, cp, cm = separate_components([s, s, s], PHASES, 1.0)
    np.testing.assert_allclose(c0.data, s.data, atol=1e-12)
    assert np.max(np.abs(cp.data)) < 1e-12 and np.max(np.abs(cm.data)) < 1e-12


@pytest.mark.parametrize("m", [0.5, 1.0])
def test_compose_separate_round_trip(m):
    rng = np.random.default_rng(1)
    truth = [_random_spectrum(rng) for _ in range(3)]
    got = separate_components(_compose(*truth, PHASES, m), PHASES, m)
    for a, b in zip(got, truth):
        assert np.max(np.abs(a.data - b.data)) <= 1e-9 * np.max(np.abs(b.data))


def test_equally_spaced_phases_are_well_conditioned():
    assert np.linalg.cond(mixing_matrix(PHASES)) == pytest.approx(1.0, abs=1e-12)


def test_repeated_phases_are_singular():
    rng = np.random.default_rng(2)
    s = [_random_spectrum(rng) for _ in range(3)]
    with pytest.raises(SingularPhasesError):
        separate_components(s, np.deg2rad([0.0, 0.0, 120.0]), 1.0)


def test_separation_needs_three_frames():
    rng = np.random.default_rng(3)
    with pytest.raises(PartialProtocolError):
        separate_components([_random_spectrum(rng)] * 2, PHASES[:2], 1.0)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0, 2 * np.pi), min_size=3, max_size=3),
    st.floats(0.1, 1.0),
    st.integers(0, 10_000),
)
def test_round_trip_any_reasonable_phases(phases, m, seed):
    cond = np.linalg.cond(mixing_matrix(phases))
    if not cond < 10:
        return
    rng = np.random.default_rng(seed)
    truth = [_random_spectrum(rng, (16, 16)) for _ in range(3)]
    frames = [Spectrum(f.data, 0.1) for f in _compose(*truth, phases, m)]
    got = separate_components(frames, phases, m)
    for a, b in zip(got, truth):
        assert np.max(np.abs(a.data - b.data)) <= 1e-9 * np.max(np.abs(b.data))


def test_side_bands_are_conjugate_mirrors_for_real_frames():
    rng = np.random.default_rng(4)
    frames = [forward_fft(Image(rng.random((64, 64)), 0.1)) for _ in range(3)]
    _, cp, cm = separate_components(frames, PHASES, 0.8)
    # mirror f -> -f on the centered grid (skip the unpaired -Nyquist row/column)
    mirrored = np.conj(cp.data[1:, 1:][::-1, ::-1])
    np.testing.assert_allclose(cm.data[1:, 1:], mirrored, rtol=1e-6, atol=1e-9)


# --- shifting -------------------------------------------------------------


def test_zero_shift_is_identity():
    rng = np.random.default_rng(5)
    s = _random_spectrum(rng)
    np.testing.assert_allclose(shift_component(s, (0.0, 0.0)).data, s.data, atol=1e-9)


def test_integer_bin_shift_is_translation():
    rng = np.random.default_rng(6)
    s = _random_spectrum(rng)
    kx, ky = 3, -5
    out = shift_component(s, (kx * s.freq_step_x, ky * s.freq_step_y))
    oracle = np.roll(s.data, (ky, kx), axis=(0, 1))
    assert np.max(np.abs(out.data - oracle)) < 1e-9


def test_shift_round_trip_and_energy():
    rng = np.random.default_rng(7)
    s = _random_spectrum(rng)
    p = (0.37, -0.81)
    there = shift_component(s, p)
    back = shift_component(there, (-p[0], -p[1]))
    assert np.max(np.abs(back.data - s.data)) < 1e-7
    assert np.sum(np.abs(there.data) ** 2) == pytest.approx(np.sum(np.abs(s.data) ** 2), rel=1e-6)


def test_shift_support_overflow():
    s = Spectrum(np.zeros((64, 64)), 0.1)  # Nyquist 5
    with pytest.raises(SupportOverflowError):
        shift_component(s, (4.0, 0.0), cutoff=1.5)
    shift_component(s, (3.0, 0.0), cutoff=1.5)


# --- fringe estimation ------------------------------------------------------


def _stack(sample, p, orientations=(0.0,), phases=(0.0, 120.0, 240.0), manifest_phases=None,
           modulation=1.0, cfg=CFG):
    spec = PatternSpec.for_sample_frequency(p, orientations=orientations, phases=phases, modulation=modulation)
    st_ = simulate_stack(sample, make_pattern_set(spec, sample.grid), cfg)
    if manifest_phases is not None:
        manifest = PatternSpec.for_sample_frequency(p, orientations=orientations, phases=manifest_phases,
                                                    modulation=modulation)
        st_ = RawStack(st_.frames, manifest, cfg, {"ingested": {"source": "test"}})
    return st_


@pytest.fixture(scope="module")
def beads():
    return gen_beads(GRID, 200, seed=3)


def _components(stack):
    spectra = [forward_fft(im) for im in stack.frames[0]]
    return separate_components(spectra, np.deg2rad(stack.pattern.phases), 1.0)


def test_estimate_recovers_vector(beads):
    stack = _stack(beads, 1.2)
    c0, cp, _ = _components(stack)
    est = estimate_fringe_params(c0, cp, make_otf(CFG, GRID), p_hint=(1.2, 0.0))
    assert np.hypot(est.p_vector[0] - 1.2, est.p_vector[1]) < 0.02
    global_est = estimate_fringe_params(c0, cp, make_otf(CFG, GRID))
    assert np.hypot(global_est.p_vector[0] - 1.2, global_est.p_vector[1]) < 0.02


def test_estimate_recovers_phase_offset(beads):
    stack = _stack(beads, 1.2, phases=(30.0, 150.0, 270.0), manifest_phases=(0.0, 120.0, 240.0))
    c0, cp, _ = _components(stack)
    est = estimate_fringe_params(c0, cp, make_otf(CFG, GRID), p_hint=(1.2, 0.0))
    assert abs(np.rad2deg(est.phase0) - 30.0) < 2.0
    assert est.modulation == pytest.approx(1.0, abs=0.1)


def test_estimate_unmodulated_has_no_peak(beads):
    stack = _stack(beads, 1.2, modulation=0.0)
    c0, cp, _ = _components(stack)
    with pytest.raises(NoPeakError):
        estimate_fringe_params(c0, cp, make_otf(CFG, GRID), p_hint=(1.2, 0.0))


@pytest.mark.parametrize("theta", [45.0, 135.0])
def test_estimate_oblique(beads, theta):
    stack = _stack(beads, 0.9 * RC, orientations=(theta,))
    c0, cp, _ = _components(stack)
    truth = stack.pattern.p_vector(theta)
    est = estimate_fringe_params(c0, cp, make_otf(CFG, GRID), p_hint=truth)
    assert np.hypot(est.p_vector[0] - truth[0], est.p_vector[1] - truth[1]) < 0.02


# --- Wiener synthesis -------------------------------------------------------


def _wiener_oracle(img, w, apod_extent=None):
    """Plain Wiener deconvolution written out directly."""
    grid = img.grid.upsampled(2)
    spec = resample_spectrum(forward_fft(img), grid).data
    h = incoherent_otf(grid.radial_freq(), CFG.na_detection, CFG.wavelength)
    out = h * spec / (h**2 + w**2)
    if apod_extent:
        out = out * np.clip(1 - grid.radial_freq() / apod_extent, 0, None)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(out), norm="ortho")).real


def test_degenerate_protocol_is_plain_wiener(beads):
    stack = _stack(beads, 1e-9, modulation=0.0)  # p effectively 0
    comps, _, _ = decompose(stack, ReconParams(parameter_source="manifest"))
    grid = GRID.upsampled(2)
    s = wiener_combine(shift_all(comps, CFG, grid), CFG, ReconParams())
    got = inverse_fft(s).data
    oracle = _wiener_oracle(stack.conventional(), 0.05, apod_extent=RC)
    assert np.max(np.abs(got - oracle)) <= 1e-9 * np.max(np.abs(oracle))


def _in_band_object(grid):
    """Gaussian blobs (sigma 1 um): spectrum negligible beyond 0.5 rho_c."""
    x, y = grid.coords()
    rng = np.random.default_rng(8)
    data = np.zeros(grid.shape)
    for cx, cy in rng.uniform(-8, 8, size=(12, 2)):
        data += np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / 2)
    return SampleStack.single(Image(data, grid.pixel_pitch))


def test_in_band_object_matches_wiener_conventional():
    sample = _in_band_object(GRID)
    density = sample.planes[0][0]
    radii, mag = radial_spectrum(density)
    assert np.sum(mag[radii > 0.5 * RC] ** 2) < 1e-6 * np.sum(mag**2)
    spec = PatternSpec.for_sample_frequency(0.9 * RC)
    stack = simulate_stack(sample, make_pattern_set(spec, GRID), CFG)
    params = ReconParams(apodization="none", parameter_source="manifest")
    res = run_reconstruction(stack, params)
    diff = np.sum((res.enhanced.data - res.conventional_wiener.data) ** 2)
    assert diff / np.sum(res.conventional_wiener.data ** 2) < 0.02


def test_point_object_support_extension():
    sample = gen_points(GRID, [(0.0, 0.0)])
    spec = PatternSpec.for_sample_frequency(0.9 * RC)
    stack = simulate_stack(sample, make_pattern_set(spec, GRID), CFG)
    comps, _, _ = decompose(stack, ReconParams(parameter_source="manifest"))
    s = wiener_combine(shift_all(comps, CFG, GRID.upsampled(2)), CFG, ReconParams())
    mag = np.abs(s.data)
    rho = s.grid.radial_freq()
    dc = mag[s.grid.height // 2, s.grid.width // 2]
    assert rho[mag > 0.01 * dc].max() >= 1.6 * RC


# --- full pipeline ------------------------------------------------------------


@pytest.fixture(scope="module")
def paper_stack(beads):
    spec = PatternSpec.for_sample_frequency(0.9 * RC)
    return simulate_stack(beads, make_pattern_set(spec, GRID), CFG)


def test_unmodulated_manifest_equals_wiener_conventional(beads):
    spec = PatternSpec.for_sample_frequency(1e-9, modulation=0.0)
    stack = simulate_stack(beads, make_pattern_set(spec, GRID), CFG)
    res = run_reconstruction(stack, ReconParams(parameter_source="manifest"))
    np.testing.assert_allclose(res.enhanced.data, res.conventional_wiener.data, atol=1e-12)


def test_partial_protocol_rejected(beads):
    spec = PatternSpec.for_sample_frequency(1.0, orientations=(0.0,), phases=(0.0, 90.0, 180.0, 270.0))
    stack = simulate_stack(beads, make_pattern_set(spec, GRID), CFG)
    with pytest.raises(PartialProtocolError):
        reconstruct(stack)


def test_synthesized_spectrum_is_hermitian(paper_stack):
    comps, _, _ = decompose(paper_stack, ReconParams())
    s = wiener_combine(shift_all(comps, CFG, GRID.upsampled(2)), CFG, ReconParams()).data
    inner = s[1:, 1:]
    np.testing.assert_allclose(inner[::-1, ::-1], np.conj(inner), atol=1e-6 * np.abs(s).max())


def test_orientation_order_invariance(paper_stack):
    base = reconstruct(paper_stack).data
    order = [2, 0, 3, 1]
    spec = paper_stack.pattern
    permuted_spec = PatternSpec(spec.magnification, spec.freq_dmd,
                                tuple(spec.orientations[i] for i in order), spec.phases,
                                spec.modulation, spec.mean_level)
    permuted = RawStack([paper_stack.frames[i] for i in order], permuted_spec, CFG, paper_stack.provenance)
    out = reconstruct(permuted).data
    assert np.max(np.abs(out - base)) <= 1e-9 * np.max(np.abs(base))


@pytest.mark.parametrize("source", ["manifest", "estimate"])
def test_intensity_homogeneity(paper_stack, source):
    params = ReconParams(parameter_source=source)
    base = reconstruct(paper_stack, params).data
    scaled = reconstruct(paper_stack.scaled(3.7), params).data
    assert np.max(np.abs(scaled - 3.7 * base)) <= 1e-9 * np.max(np.abs(3.7 * base))


def test_estimate_source_close_to_manifest(paper_stack):
    est = run_reconstruction(paper_stack, ReconParams(parameter_source="estimate"))
    man = run_reconstruction(paper_stack, ReconParams(parameter_source="manifest"))
    diff = np.sum((est.enhanced.data - man.enhanced.data) ** 2) / np.sum(man.enhanced.data ** 2)
    assert diff < 0.01
    assert est.parameter_source == "estimate"
    assert len(est.report()) > 4


@settings(max_examples=4, deadline=None)
@given(st.integers(0, 1000))
def test_support_never_shrinks(seed):
    grid = Grid(128, 128, PITCH)
    sample = gen_beads(grid, 15, seed=seed, margin_um=1.0)
    spec = PatternSpec.for_sample_frequency(0.9 * RC)
    stack = simulate_stack(sample, make_pattern_set(spec, grid), CFG)
    res = run_reconstruction(stack)
    assert effective_cutoff(res.enhanced) >= effective_cutoff(res.conventional)
    assert effective_cutoff(res.conventional) <= RC + 2 * grid.freq_step_x


def test_default_source_follows_provenance(paper_stack):
    assert ReconParams().source_for(paper_stack) == "manifest"
    ingested = RawStack(paper_stack.frames, paper_stack.pattern, CFG, {"ingested": {"source": "x"}})
    assert ReconParams().source_for(ingested) == "estimate"


def test_components_require_shifting(paper_stack):
    comps, _, _ = decompose(paper_stack, ReconParams())
    with pytest.raises(ValueError):
        wiener_combine(comps, CFG, ReconParams())


def test_wiener_deconvolve_grid(beads):
    img = beads.planes[0][0]
    out = wiener_deconvolve(img, CFG, ReconParams(upsample_factor=2))
    assert out.data.shape == (512, 512) and out.data.min() >= 0
    assert isinstance(ComponentSet(), ComponentSet) and OrientationComponents
