import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sldf.errors import BadDimsError, GridMismatchError, ImagResidueError
from sldf.imagecore import (
    Filter,
    Grid,
    Image,
    Spectrum,
    apply_filter,
    crop_to,
    forward_fft,
    inverse_fft,
    pad_to,
    resample_image,
)
from sldf.optics import OpticsConfig, make_otf


def test_zero_image_zero_spectrum():
    spec = forward_fft(Image(np.zeros((64, 64)), 0.1))
    assert np.all(spec.data == 0)


def test_constant_image_dc_only():
    c = 3.5
    spec = forward_fft(Image(np.full((64, 64), c), 0.1))
    dc = spec.data[32, 32]
    assert dc == pytest.approx(c * 64, rel=1e-12)
    rest = spec.data.copy()
    rest[32, 32] = 0
    assert np.max(np.abs(rest)) < 1e-12


def _direct_energy(a):
    total = 0.0
    for row in a:
        for v in row:
            total += abs(v) ** 2
    return total


def test_parseval_random_128():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(128, 128))
    spec = forward_fft(Image(x, 0.2))
    assert _direct_energy(spec.data) == pytest.approx(_direct_energy(x), rel=1e-6)


def test_spectrum_freq_step():
    img = Image(np.zeros((32, 64)), 0.25)
    spec = forward_fft(img)
    assert spec.freq_step_x == pytest.approx(1 / (64 * 0.25))
    assert spec.freq_step_y == pytest.approx(1 / (32 * 0.25))


def test_round_trip_delta():
    x = np.zeros((64, 64))
    x[10, 50] = 1.0
    back = inverse_fft(forward_fft(Image(x, 0.1)))
    assert np.max(np.abs(back.data - x)) < 1e-9


def test_inverse_dc_only():
    s = np.zeros((64, 64), dtype=complex)
    s[32, 32] = 64
    img = inverse_fft(Spectrum(s, 0.1))
    np.testing.assert_allclose(img.data, 1.0, rtol=1e-12)


def test_round_trip_random_256():
    rng = np.random.default_rng(2)
    x = rng.random((256, 256))
    back = inverse_fft(forward_fft(Image(x, 0.1)))
    assert np.max(np.abs(back.data - x)) <= 1e-9 * np.max(np.abs(x))


def test_inverse_rejects_asymmetric_spectrum():
    s = np.zeros((16, 16), dtype=complex)
    s[8, 9] = 1.0  # single off-center bin: not Hermitian
    with pytest.raises(ImagResidueError):
        inverse_fft(Spectrum(s, 0.1))


def test_identity_and_zero_filters():
    rng = np.random.default_rng(3)
    spec = forward_fft(Image(rng.random((32, 32)), 0.1))
    same = apply_filter(spec, Filter.ones(spec.grid))
    np.testing.assert_array_equal(same.data, spec.data)
    zero = apply_filter(spec, Filter(np.zeros((32, 32)), 0.1))
    assert np.all(zero.data == 0)


def test_delta_spectrum_times_otf_is_otf_table():
    grid = Grid(64, 64, 0.1)
    amp = 2.0
    x = np.zeros(grid.shape)
    x[32, 32] = amp
    otf = make_otf(OpticsConfig(), grid)
    out = apply_filter(forward_fft(Image(x, grid.pixel_pitch)), otf)
    # a centered delta has a flat unitary spectrum of height amp / sqrt(N)
    expected = otf.data * amp / np.sqrt(grid.width * grid.height)
    np.testing.assert_allclose(out.data, expected, atol=1e-14)


def test_filter_grid_mismatch():
    spec = forward_fft(Image(np.zeros((32, 32)), 0.1))
    with pytest.raises(GridMismatchError):
        apply_filter(spec, Filter.ones(Grid(64, 64, 0.1)))
    with pytest.raises(GridMismatchError):
        apply_filter(spec, Filter.ones(Grid(32, 32, 0.2)))


def test_pad_crop_round_trip_bitwise():
    rng = np.random.default_rng(4)
    x = Image(rng.normal(size=(64, 64)), 0.1)
    back = crop_to(pad_to(x, 128, 128), 64, 64)
    assert np.array_equal(back.data, x.data)


def test_pad_zero_image():
    out = pad_to(Image(np.zeros((64, 64)), 0.1), 128, 128)
    assert out.data.shape == (128, 128) and not out.data.any()


def test_pad_keeps_center_delta():
    x = np.zeros((64, 64))
    x[32, 32] = 1
    out = pad_to(Image(x, 0.1), 128, 128)
    assert out.data[64, 64] == 1 and out.data.sum() == 1


def test_pad_crop_bad_dims():
    img = Image(np.zeros((64, 64)), 0.1)
    with pytest.raises(BadDimsError):
        pad_to(img, 32, 64)
    with pytest.raises(BadDimsError):
        crop_to(img, 128, 64)


@pytest.mark.parametrize("shape", [(7, 8), (8, 7), (9, 10), (4, 4)])
def test_rejects_bad_shapes(shape):
    with pytest.raises(BadDimsError):
        Image(np.zeros(shape), 0.1)


def test_rejects_bad_pitch():
    with pytest.raises(BadDimsError):
        Image(np.zeros((8, 8)), 0.0)


def test_containers_are_immutable():
    img = Image(np.zeros((8, 8)), 0.1)
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0


def test_resample_preserves_band_limited_values():
    grid = Grid(64, 64, 0.2)
    x, y = grid.coords()
    f = 3 * grid.freq_step_x
    img = Image(1 + 0.5 * np.cos(2 * np.pi * f * x), grid.pixel_pitch)
    fine = resample_image(img, grid.upsampled(2))
    xf, _ = fine.grid.coords()
    np.testing.assert_allclose(fine.data, 1 + 0.5 * np.cos(2 * np.pi * f * xf), atol=1e-12)
    back = resample_image(fine, grid)
    np.testing.assert_allclose(back.data, img.data, atol=1e-12)


arrays = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).normal(size=(16, 16)))


@settings(max_examples=30, deadline=None)
@given(arrays)
def test_parseval_property(x):
    spec = forward_fft(Image(x, 0.1))
    assert np.sum(np.abs(spec.data) ** 2) == pytest.approx(np.sum(x**2), rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays, arrays, st.floats(-10, 10), st.floats(-10, 10))
def test_linearity_property(x, y, a, b):
    lhs = forward_fft(Image(a * x + b * y, 0.1)).data
    rhs = a * forward_fft(Image(x, 0.1)).data + b * forward_fft(Image(y, 0.1)).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=20, deadline=None)
@given(arrays, st.floats(-5, 5))
def test_filter_commutes_with_scalar(x, s):
    spec = forward_fft(Image(x, 0.1))
    f = Filter(np.random.default_rng(0).random((16, 16)), 0.1)
    lhs = apply_filter(spec.with_data(s * spec.data), f).data
    rhs = s * apply_filter(spec, f).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(arrays, st.sampled_from([16, 24, 64]), st.sampled_from([16, 32, 40]))
def test_pad_crop_property(x, w, h):
    back = crop_to(pad_to(Image(x, 0.1), w, h), 16, 16)
    assert np.array_equal(back.data, x)
