import numpy as np
import pytest

from imcsearch.nnsim.quantize import (
    adc_dequantize,
    adc_quantize,
    bit_serialize_inputs,
    quantize_slice_weights,
    slice_codes,
)


def test_zero_weights_all_slices_zero_scale_one():
    sliced = quantize_slice_weights(np.zeros((3, 3)))
    assert sliced.scale == 1.0
    for sl in sliced.slices:
        assert np.all(sl == 0)
    assert np.all(sliced.recompose_codes() == 0)


def test_max_magnitude_weight_slices():
    # max magnitude maps to code 127 = 7*16 + 15 -> slices (15, 7) LSB-first
    w = np.array([1.0, -0.25, 0.0])
    sliced = quantize_slice_weights(w, weight_bits=8, slice_bits=4)
    codes = sliced.recompose_codes()
    assert codes[0] == 127
    assert sliced.slices[0][0] == 15  # low nibble
    assert sliced.slices[1][0] == 7   # high nibble
    assert codes[2] == 0


def test_slice_recompose_exhaustive_all_8bit_codes():
    codes = np.arange(-128, 128, dtype=np.int64)
    sliced = slice_codes(codes, weight_bits=8, slice_bits=4)
    assert np.array_equal(sliced.recompose_codes(), codes)
    for sl in sliced.slices:
        assert sl.min() >= 0 and sl.max() <= 15


@pytest.mark.parametrize("slice_bits", [1, 2, 4, 8])
def test_slice_recompose_other_slicings(slice_bits):
    codes = np.arange(-127, 128, dtype=np.int64)
    sliced = slice_codes(codes, weight_bits=8, slice_bits=slice_bits)
    assert len(sliced.slices) == 8 // slice_bits
    assert np.array_equal(sliced.recompose_codes(), codes)


def test_quantize_rejects_nonfinite():
    with pytest.raises(ValueError):
        quantize_slice_weights(np.array([1.0, np.nan]))


def test_bit_serialize_binary_expansion():
    # code 9 at ip=4 -> planes (1, 0, 0, 1) LSB first
    acts = np.array([9.0, 0.0, 15.0])
    planes, scale = bit_serialize_inputs(acts / 15.0 * 15.0, ip=4)
    # max activation 15 -> scale 1 -> codes (9, 0, 15)
    assert scale == pytest.approx(1.0)
    got = [int(p[0]) for p in planes]
    assert got == [1, 0, 0, 1]
    assert [int(p[1]) for p in planes] == [0, 0, 0, 0]
    assert [int(p[2]) for p in planes] == [1, 1, 1, 1]


def test_bit_serialize_single_plane():
    acts = np.array([0.0, 0.2, 0.9, 1.0])
    planes, scale = bit_serialize_inputs(acts, ip=1)
    assert len(planes) == 1
    assert np.array_equal(planes[0], np.array([0, 0, 1, 1]))


@pytest.mark.parametrize("ip", range(1, 9))
def test_bit_serialize_recomposition_exhaustive(ip):
    codes = np.arange(2 ** ip, dtype=float)
    planes, scale = bit_serialize_inputs(codes, ip=ip)
    assert scale == pytest.approx(1.0)
    recomposed = sum(p * (1 << b) for b, p in enumerate(planes))
    assert np.array_equal(recomposed, codes.astype(np.int64))


def test_bit_serialize_rejects_negative():
    with pytest.raises(ValueError):
        bit_serialize_inputs(np.array([-0.1, 0.5]), ip=4)


# ---------------------------------------------------------------------------
# ADC quantizer
# ---------------------------------------------------------------------------

def scalar_bruteforce_adc(value, ap, full_range):
    """Pick the code whose reconstruction is nearest (ties -> larger code)."""
    step = full_range / (2 ** ap)
    best_code, best_err = 0, abs(value - 0.0)
    for code in range(2 ** ap):
        err = abs(value - code * step)
        if err < best_err or (err == best_err and code > best_code):
            best_code, best_err = code, err
    return best_code


def test_adc_quantize_zero_and_full_scale():
    assert adc_quantize(0.0, ap=6, full_range=64.0) == 0
    assert adc_quantize(64.0, ap=6, full_range=64.0) == 63  # clipped
    assert adc_quantize(1e9, ap=4, full_range=64.0) == 15
    assert adc_quantize(-5.0, ap=4, full_range=64.0) == 0


def test_adc_quantize_integer_step_example():
    # full_range 64 at ap=6 -> step exactly 1 -> sum 33 -> code 33
    assert adc_quantize(33.0, ap=6, full_range=64.0) == 33


def test_adc_quantize_matches_scalar_bruteforce():
    rng = np.random.default_rng(9)
    values = rng.uniform(-10.0, 1100.0, size=2000)
    for ap, full_range in ((3, 960.0), (6, 64.0), (8, 960.0), (5, 37.5)):
        got = adc_quantize(values, ap=ap, full_range=full_range)
        want = np.array([scalar_bruteforce_adc(v, ap, full_range)
                         for v in values])
        assert np.array_equal(got, want)


def test_adc_dequantize_roundtrip_when_step_divides():
    # step 0.25: integer sums in range reconstruct exactly
    sums = np.arange(0, 60, dtype=float)
    codes = adc_quantize(sums, ap=8, full_range=64.0)
    assert np.allclose(adc_dequantize(codes, 8, 64.0), sums)


def test_adc_quantize_validates_inputs():
    with pytest.raises(ValueError):
        adc_quantize(1.0, ap=0, full_range=64.0)
    with pytest.raises(ValueError):
        adc_quantize(1.0, ap=4, full_range=0.0)
