from decimal import ROUND_FLOOR, Decimal, localcontext
from fractions import Fraction

import numpy as np
import pytest

import config
from conftest import pow2_model, random_pow2, real_model
from services.datasets import RawSample, normalize
from services.model import FixedPointSpec, build_pow2_matrix, pow2_to_real
from services.shift_inference import (
    FixedPointVector,
    alpha_raw,
    classify_float,
    classify_shift,
    decide_integers,
    evaluate_float,
    evaluate_shift,
    features_shift,
    float_scores_for_pixels,
    kernel_fraction_bits,
    shift_add,
    shift_amounts,
    shift_float_agreement,
)
from utils.errors import (
    AccumulatorOverflowError,
    DegenerateSampleError,
    DimensionError,
    ModelModeError,
    ScaleError,
)


def ones_model():
    return pow2_model(build_pow2_matrix([[1], [1]], [[0], [0]]), build_pow2_matrix([[1]], [[0]]))


def decimal_alpha(pixels, F):
    with localcontext() as context:
        context.prec = 80
        root = Decimal(sum(int(pixel) ** 2 for pixel in pixels)).sqrt() * (Decimal(2) ** F)
        return int((root + Decimal('0.5')).to_integral_value(rounding=ROUND_FLOOR))


def exact_features(D, pixels, alpha_integer, F):
    values = [[Fraction(value) for value in row] for row in pow2_to_real(D).tolist()]
    alpha = Fraction(alpha_integer, 1 << F)
    features = []
    for column in range(D.shape[1]):
        response = sum(values[row][column] * int(pixels[row]) for row in range(D.shape[0]))
        features.append(max(Fraction(0), response - alpha))
    return features


@pytest.mark.parametrize('pixels,F,expected', (([3, 4], 0, 5), ([1, 1], 3, 11), ([1, 1], 0, 1), ([255] * 144, 0, 3060)))
def test_alpha_raw_examples(pixels, F, expected):
    alpha = alpha_raw(RawSample(pixels, 0), F)

    assert alpha.integers == (expected,)
    assert alpha.scale == F


def test_alpha_raw_matches_high_precision_rounding(rng):
    for _ in range(300):
        pixels = rng.integers(0, 256, size=rng.integers(1, 200))
        if not pixels.any():
            continue
        F = int(rng.integers(0, 40))

        assert alpha_raw(pixels, F).integers[0] == decimal_alpha(pixels, F)


def test_alpha_raw_rejects_all_zero_samples():
    with pytest.raises(DegenerateSampleError):
        alpha_raw(RawSample([0, 0], 0), 8)


def test_fixed_point_vector_reads_back_as_fractions():
    vector = FixedPointVector(np.array([3, -8]), 2)

    assert vector.fractions() == [Fraction(3, 4), Fraction(-2)]
    with pytest.raises(ScaleError):
        FixedPointVector((1,), -1)


def test_features_shift_hand_computed():
    D = build_pow2_matrix([[1, 0], [1, 0]], [[0, 0], [0, 0]])

    result = features_shift(D, RawSample([3, 4], 0), FixedPointVector((5,), 0), 0)

    assert result.integers == (2, 0)
    assert result.scale == 0


def test_features_shift_is_bit_exact(rng):
    for _ in range(1000):
        n, N = int(rng.integers(1, 12)), int(rng.integers(1, 6))
        D = random_pow2(rng, n, N, -10, 6)
        pixels = rng.integers(1, 256, size=n)
        F = kernel_fraction_bits(D) + int(rng.integers(0, 3))
        alpha = alpha_raw(pixels, F)

        result = features_shift(D, pixels, alpha, F)

        assert result.fractions() == exact_features(D, pixels, alpha.integers[0], F)


def test_features_shift_rejects_bad_scales():
    D = build_pow2_matrix([[1], [-1]], [[-3], [1]])

    with pytest.raises(ScaleError):
        shift_amounts(D, 2)
    with pytest.raises(ScaleError):
        features_shift(D, [1, 2], FixedPointVector((3,), 4), 3)
    with pytest.raises(DimensionError):
        features_shift(D, [1, 2, 3], FixedPointVector((3,), 3), 3)


def test_shift_amounts_take_a_fixed_point_spec():
    D = build_pow2_matrix([[1], [-1], [0]], [[-3], [1], [0]])

    assert shift_amounts(D, FixedPointSpec(3)).tolist() == [[0], [4], [0]]
    assert shift_amounts(D, FixedPointSpec(5)).tolist() == shift_amounts(D, 5).tolist() == [[2], [6], [0]]
    with pytest.raises(ScaleError):
        shift_amounts(D, FixedPointSpec(2))


def test_classify_shift_hand_computed():
    decision = classify_shift(ones_model(), RawSample([3, 4], 0))

    assert decision.predicted == 1
    assert decision.scores.integers == (512,)
    assert decision.scores.scale == 8
    assert decision.scores.fractions() == [Fraction(2)]

    float_decision = classify_float(real_model([[1.0], [1.0]], [1.0]), normalize(RawSample([3, 4], 0)))
    assert float_decision.predicted == 1
    assert float_decision.scores[0] == pytest.approx(0.4)


def test_classify_shift_stays_in_integers(monkeypatch, random_pow2_model, raw_samples):
    import services.shift_inference as shift_inference

    def forbidden(*args, **kwargs):
        raise AssertionError('floating point used on the shift path')

    def integer_only(array):
        array = np.asarray(array)
        if array.dtype == object:
            assert all(isinstance(value, int) for value in array.ravel())
        else:
            assert np.issubdtype(array.dtype, np.integer)

    def checked(function):
        def wrapper(*args, **kwargs):
            for argument in args:
                if isinstance(argument, np.ndarray):
                    integer_only(argument)
            result = function(*args, **kwargs)
            integer_only(result[0] if isinstance(result, tuple) else result)
            return result
        return wrapper

    for name in ('pow2_to_real', 'predict_scores', 'normalize_rows', 'quantize_pixels'):
        monkeypatch.setattr(shift_inference, name, forbidden)
    monkeypatch.setattr(shift_inference.math, 'sqrt', forbidden)
    monkeypatch.setattr(shift_inference, 'shift_add', checked(shift_inference.shift_add))
    monkeypatch.setattr(shift_inference, 'soft_threshold_integers', checked(shift_inference.soft_threshold_integers))

    model = random_pow2_model(n=16, N=6, C=3)
    for sample in raw_samples(10, 16):
        decision = classify_shift(model, sample)

        assert all(type(score) is int for score in decision.scores.integers)
        assert decision.predicted in model.class_labels


def test_classify_shift_is_homogeneous():
    base = classify_shift(ones_model(), RawSample([3, 4], 0))
    doubled = classify_shift(ones_model(), RawSample([6, 8], 0))

    assert doubled.predicted == base.predicted
    assert doubled.scores.integers == (2 * base.scores.integers[0],)


@pytest.mark.parametrize('scores,expected', (([0], -1), ([1], 1), ([-3], -1)))
def test_binary_decision_is_strictly_positive(scores, expected):
    assert decide_integers(scores, (-1, 1)) == expected


def test_multiclass_ties_go_to_the_lowest_index():
    assert decide_integers([3, 5, 5], (0, 1, 2)) == 1
    assert decide_integers([0, 0, 0], (4, 7, 9)) == 4


def test_classify_float_zero_hyperplane_is_the_negative_class():
    model = real_model(np.eye(2), np.zeros(2))

    decision = classify_float(model, normalize(RawSample([3, 4], 0)))

    assert decision.predicted == -1


def test_wide_accumulators_stay_exact(monkeypatch, random_pow2_model, raw_samples):
    model = random_pow2_model(n=10, N=5, C=3)
    samples = raw_samples(40, 10)

    narrow = evaluate_shift(model, samples)
    monkeypatch.setattr(config, 'ACCUMULATOR_LIMIT_BITS', 0)
    wide = evaluate_shift(model, samples)

    assert wide['scores'].dtype == object
    assert all(isinstance(value, int) for value in wide['scores'].ravel())
    assert np.array_equal(np.asarray(narrow['scores'], dtype=object), wide['scores'])
    assert np.array_equal(narrow['predicted'], wide['predicted'])


def test_large_exponents_take_the_integer_path(rng):
    D = random_pow2(rng, 6, 3, 40, 100, zero_fraction=0.0)
    pixels = rng.integers(1, 256, size=6)
    F = kernel_fraction_bits(D)
    alpha = alpha_raw(pixels, F)

    result = features_shift(D, pixels, alpha, F)

    assert result.fractions() == exact_features(D, pixels, alpha.integers[0], F)


def test_accumulator_overflow_is_checked():
    D = build_pow2_matrix([[1], [1]], [[4], [4]])

    with pytest.raises(AccumulatorOverflowError):
        shift_add(np.array([[255, 255]]), D, 0, accumulator_bits=10)
    sums, largest = shift_add(np.array([[255, 255]]), D, 0, accumulator_bits=14)
    assert sums.tolist() == [[8160]] and largest == 8160


def test_partial_sums_follow_input_order():
    D = build_pow2_matrix([[1], [-1], [1]], [[3], [3], [0]])

    _, largest = shift_add(np.array([[10, 10, 1]]), D, 0, track_partial=True)

    assert largest == 80


def test_raw_integer_decisions_match_normalized_float_decisions(rng):
    checked = 0
    for _ in range(20):
        D = random_pow2(rng, 6, 4, -4, 2)
        W = random_pow2(rng, 4, 1, -3, 3, zero_fraction=0.0)
        powerized = pow2_model(D, W)
        reference = real_model(pow2_to_real(D), pow2_to_real(W))
        samples = [RawSample(pixels, 0) for pixels in rng.integers(0, 256, size=(500, 6)) if pixels.any()]

        shift_result = evaluate_shift(powerized, samples, F=60)
        normalized_scores = float_scores_for_pixels(reference, np.stack([sample.pixels for sample in samples]))[:, 0]
        norms = np.array([np.linalg.norm(sample.pixels.astype(np.float64)) for sample in samples])
        raw_scores = np.array([
            float(Fraction(int(score), 1 << shift_result['score_scale'])) for score in shift_result['scores'][:, 0]
        ])

        decisive = np.abs(normalized_scores) > 1e-4
        assert np.array_equal(raw_scores[decisive] > 0, normalized_scores[decisive] > 0)
        np.testing.assert_allclose(raw_scores[decisive] / normalized_scores[decisive], norms[decisive], rtol=1e-9)
        checked += len(samples)

    assert checked >= 9900


def test_shift_decisions_agree_with_reference_outside_slack(random_pow2_model, raw_samples):
    for C in (1, 3):
        model = random_pow2_model(n=16, N=6, C=C)
        samples = raw_samples(300, 16)

        agreement = shift_float_agreement(model, samples, evaluate_shift(model, samples))

        assert agreement['agreement_rate_outside_slack'] == 1.0
        assert agreement['slack'] > 0


def test_quantized_models_quantize_raw_inputs(random_pow2_model, raw_samples):
    model = random_pow2_model(n=16, N=6, quanta=3)
    samples = raw_samples(50, 16)
    prequantized = [
        RawSample((2 * sample.pixels * 3 + 255) // 510, sample.label, sample.source_id, pixel_max=3)
        for sample in samples
    ]

    direct = evaluate_shift(model, samples)
    again = evaluate_shift(model, prequantized)

    assert np.array_equal(direct['predicted'], again['predicted'])
    assert np.array_equal(np.asarray(direct['scores'], dtype=object), np.asarray(again['scores'], dtype=object))


def test_evaluate_shift_reports_per_sample_results(random_pow2_model, raw_samples):
    model = random_pow2_model(n=16, N=6)
    samples = raw_samples(20, 16)

    result = evaluate_shift(model, samples)

    assert result['fraction_bits'] == max(config.KERNEL_MIN_FRACTION_BITS, -model.dictionary.emin)
    assert len(result['predicted']) == len(result['source_ids']) == 20
    assert 0.0 <= result['feature_sparsity'] <= 1.0
    assert result['largest_partial'] > 0


def test_mode_mismatches_are_rejected(random_pow2_model, raw_samples):
    real = real_model(np.eye(16)[:, :4], np.ones(4))

    with pytest.raises(ModelModeError):
        evaluate_shift(real, raw_samples(3, 16))
    with pytest.raises(ModelModeError):
        evaluate_float(random_pow2_model(), raw_samples(3, 16))
    with pytest.raises(DimensionError):
        evaluate_shift(random_pow2_model(), [])
    with pytest.raises(DimensionError):
        evaluate_shift(random_pow2_model(n=16), raw_samples(3, 15))
