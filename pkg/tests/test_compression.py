from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pow2
from services.compression import (
    QuantizationSpec,
    ThresholdCandidates,
    compress_model,
    hard_threshold,
    nearest_power_of_two,
    powerize_matrix,
    powerize_scalar,
    quantize_pixels,
    quantize_sample,
    threshold_candidates,
)
from services.datasets import RawSample
from services.model import (
    RAW_NORM,
    Dictionary,
    Hyperplane,
    ModelBundle,
    SparsityParam,
    build_pow2_matrix,
    load_model,
    pow2_to_real,
    same_model,
    save_model,
)
from utils.errors import ConfigError, EmptyCandidatesError, ModelModeError, NonFiniteError

ONE_THIRD = Fraction(1, 3)

finite_nonzero = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e30, max_value=1e30).filter(
    lambda value: abs(value) > 1e-30
)


def exact_relative_error(x):
    entry = powerize_scalar(x)
    return abs(Fraction(entry.value) - Fraction(x)) / abs(Fraction(x))


@pytest.mark.parametrize('x,sign,exponent', ((5.0, 1, 2), (6.0, 1, 3), (-0.3, -1, -2), (1.0, 1, 0), (0.75, 1, 0)))
def test_powerize_scalar_examples(x, sign, exponent):
    entry = powerize_scalar(x)

    assert (entry.sign, entry.exponent) == (sign, exponent)


def test_powerize_zero_is_the_zero_entry():
    assert powerize_scalar(0.0).value == 0.0
    assert powerize_scalar(-0.0).sign == 0


def test_powerize_rejects_non_finite_values():
    with pytest.raises(NonFiniteError):
        powerize_scalar(float('nan'))
    with pytest.raises(NonFiniteError):
        powerize_matrix(np.array([[1.0, np.inf]]))


@settings(max_examples=500, deadline=None)
@given(finite_nonzero)
def test_powerize_relative_error_is_at_most_one_third(x):
    assert exact_relative_error(x) <= ONE_THIRD
    assert np.sign(powerize_scalar(x).value) == np.sign(x)


@pytest.mark.parametrize('n', range(-60, 61))
def test_one_third_is_attained_at_the_midpoints(n):
    midpoint = 3.0 * 2.0 ** (n - 1)

    assert exact_relative_error(midpoint) == ONE_THIRD
    assert exact_relative_error(-midpoint) == ONE_THIRD
    assert exact_relative_error(np.nextafter(midpoint, 0.0)) < ONE_THIRD
    assert exact_relative_error(np.nextafter(midpoint, np.inf)) < ONE_THIRD


def test_relative_error_bound_over_a_million_values(rng):
    values = rng.standard_normal(10 ** 6) * np.exp2(rng.integers(-40, 40, size=10 ** 6))

    signs, exponents = nearest_power_of_two(values)
    powers = signs * np.ldexp(1.0, exponents)

    relative = np.abs(powers - values) / np.abs(values)
    assert relative.max() <= 1 / 3 * (1 + 1e-15)
    assert np.all(signs == np.sign(values))


def test_powerize_matrix_keeps_zero_matrix_and_caches():
    m = powerize_matrix(np.array([[0.0, 3.1], [-0.2, 0.0]]))

    assert pow2_to_real(m).tolist() == [[0.0, 4.0], [-0.25, 0.0]]
    assert (m.emin, m.emax) == (-2, 2)
    assert powerize_matrix(np.zeros((2, 3))).nonzero_count == 0


def test_hard_threshold_is_strict():
    D = powerize_matrix(np.array([[0.5, -0.125, 0.25]]))

    assert pow2_to_real(hard_threshold(D, 0.25)).tolist() == [[0.5, 0.0, 0.25]]
    assert hard_threshold(D, 1.0).nonzero_count == 0
    assert hard_threshold(D, 0.125).nonzero_count == 3
    assert hard_threshold(D, 0.25).emin == -2
    with pytest.raises(ConfigError):
        hard_threshold(D, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_hard_threshold_sparsity_is_monotone(seed):
    D = random_pow2(np.random.default_rng(seed), 12, 5, -8, 4)
    counts = [hard_threshold(D, 2.0 ** exponent).nonzero_count for exponent in range(-10, 7)]

    assert all(later <= earlier for earlier, later in zip(counts, counts[1:]))


def test_threshold_candidates_are_present_powers():
    D = build_pow2_matrix([[1, -1, 1, 1]], [[-3, -3, 0, 2]])

    assert threshold_candidates(D).values == (0.125, 1.0, 4.0)
    assert len(threshold_candidates(build_pow2_matrix([[1, -1]], [[3, 3]]))) == 1
    with pytest.raises(EmptyCandidatesError):
        threshold_candidates(build_pow2_matrix(np.zeros((2, 2)), np.zeros((2, 2))))


@pytest.mark.parametrize('values', ((1.0, 0.5), (0.5, 0.75), (0.25, 0.25)))
def test_threshold_candidates_reject_bad_values(values):
    with pytest.raises(ConfigError):
        ThresholdCandidates(values)


def test_quantize_sample_examples():
    sample = RawSample([0, 128, 255], 3, 'q')

    quantized = quantize_sample(sample, QuantizationSpec(1))

    assert quantized.pixels.tolist() == [0, 1, 1]
    assert (quantized.label, quantized.pixel_max) == (3, 1)
    assert quantize_pixels(np.arange(256), QuantizationSpec(255)).tolist() == list(range(256))
    assert set(quantize_pixels(np.arange(256), QuantizationSpec(3)).tolist()) == {0, 1, 2, 3}


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 255))
def test_quantization_range_and_monotonicity(quanta):
    levels = quantize_pixels(np.arange(256), QuantizationSpec(quanta))

    assert levels.min() == 0 and levels.max() == quanta
    assert np.all(np.diff(levels) >= 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 255), st.integers(1, 255))
def test_quantization_rounds_half_away_from_zero(pixel, quanta):
    exact = Fraction(pixel * quanta, 255)

    level = int(quantize_pixels(np.array([pixel]), QuantizationSpec(quanta))[0])

    assert level == int(exact + Fraction(1, 2))


@pytest.mark.parametrize('quanta,pixel_max', ((0, 255), (256, 255), (2.5, 255)))
def test_quantization_spec_rejects_out_of_range_levels(quanta, pixel_max):
    with pytest.raises(ConfigError):
        QuantizationSpec(quanta, pixel_max)


def real_texture_like_model(rng, alpha=1.0):
    return ModelBundle(
        Dictionary(rng.standard_normal((9, 5))),
        Hyperplane(rng.standard_normal(5), 0.001),
        SparsityParam('fixed-normalized', alpha),
        class_labels=(0, 1)
    )


def test_compress_model_powerizes_thresholds_and_records_metadata(rng, tmp_path):
    model = real_texture_like_model(rng)

    compressed = compress_model(model, 0.5, QuantizationSpec(7))

    assert compressed.powerized
    assert compressed.sparsity.mode == RAW_NORM
    assert compressed.metadata.z_threshold == 0.5 and compressed.metadata.quanta == 7
    assert np.all(np.abs(pow2_to_real(compressed.dictionary))[compressed.dictionary.signs != 0] >= 0.5)

    save_model(tmp_path / 'compressed.json', compressed)
    assert same_model(load_model(tmp_path / 'compressed.json'), compressed)


def test_threshold_below_every_entry_only_powerizes(rng):
    model = real_texture_like_model(rng)

    thresholded = compress_model(model, 2.0 ** -80, None)
    powerized = compress_model(model, None, None)

    assert np.array_equal(thresholded.dictionary.signs, powerized.dictionary.signs)
    assert np.array_equal(thresholded.dictionary.exponents, powerized.dictionary.exponents)


def test_compressing_twice_is_rejected(rng):
    compressed = compress_model(real_texture_like_model(rng), None, None)

    with pytest.raises(ModelModeError):
        compress_model(compressed, None, None)


def test_compression_needs_unit_alpha(rng):
    with pytest.raises(ModelModeError):
        compress_model(real_texture_like_model(rng, alpha=0.5), None, None)
