"""Float reference inference and the integer shift-add inference path.

The shift path works on raw integer pixels. A dictionary entry sign * 2**e
contributes sign * (x << (e + F_D)), where F_D = max(0, -emin) is the
smallest lossless scale of D. The finished sums are shifted up to the
feature scale F >= F_D before alpha is subtracted, so the D pass needs
exactly the width `bit_analysis.static_compute_bits` reports at F_D while
alpha keeps F fractional bits. The hyperplane stage repeats the pass with
its own scale F_w. alpha = ||x_int||_2 is the only rounded quantity (round
to nearest at scale F, integer square root).
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

import config
from services.compression import QuantizationSpec, quantize_pixels
from services.datasets import NormalizedSample, RawSample, normalize_rows, stack_labels, stack_pixels
from services.model import FIXED_NORMALIZED, FixedPointSpec, Pow2Matrix, pow2_to_real, required_fraction_bits
from services.training import accuracy, decide, predict_scores
from utils.errors import AccumulatorOverflowError, DegenerateSampleError, DimensionError, ModelModeError, ScaleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FixedPointVector:
    integers: tuple
    scale: int

    def __post_init__(self):
        object.__setattr__(self, 'integers', tuple(int(value) for value in np.ravel(self.integers)))
        if self.scale < 0:
            raise ScaleError(f'fixed-point scale must be nonnegative, got {self.scale}')

    def __len__(self):
        return len(self.integers)

    def fractions(self):
        return [Fraction(value, 1 << self.scale) for value in self.integers]


@dataclass(frozen=True, eq=False)
class Decision:
    predicted: int
    scores: object


def dictionary_fraction_bits(D):
    return required_fraction_bits(D)


def kernel_fraction_bits(D):
    """Scale of alpha and of the features."""
    return max(config.KERNEL_MIN_FRACTION_BITS, dictionary_fraction_bits(D))


def hyperplane_fraction_bits(W):
    return required_fraction_bits(W)


def shift_amounts(m, F):
    scale = F if isinstance(F, FixedPointSpec) else FixedPointSpec(F)
    if not scale.serves(m):
        raise ScaleError(f'fraction bits {scale.fraction_bits} below {-m.emin} needed for exponent {m.emin}')
    return np.where(m.signs != 0, m.exponents + scale.fraction_bits, 0).astype(np.int64)


def worst_case_magnitude(m, input_max, F):
    """n * input_max * 2**(emax + F): bound on any partial sum of the pass."""
    if m.emax is None:
        return 0
    return m.shape[0] * int(input_max) * (1 << (m.emax + F))


def signed_width(magnitude):
    return 1 + int(magnitude).bit_length()


def dictionary_accumulator_bits(D, input_max, F):
    return signed_width(worst_case_magnitude(D, input_max, F))


def hyperplane_accumulator_bits(model, input_max, F):
    """Width of the hyperplane pass over features at scale F."""
    W = model.hyperplane
    if W.emax is None:
        return 1
    feature_bound = worst_case_magnitude(model.dictionary, input_max, F)
    return signed_width(W.shape[0] * feature_bound * (1 << (W.emax + hyperplane_fraction_bits(W))))


def shift_add(values, m, F, accumulator_bits=None, track_partial=False):
    """Shift-add pass of integer rows `values` (rows x n) through `m` (n x k).

    Summation runs over the input index in ascending order for each output
    column. Returns (sums, largest |partial sum|).
    """
    shifts = shift_amounts(m, F)
    input_max = int(np.max(values)) if np.size(values) else 0
    if np.size(values) and int(np.min(values)) < 0:
        raise DimensionError('shift-add inputs must be nonnegative integers')

    bound = worst_case_magnitude(m, input_max, F)
    use_int64 = signed_width(bound) <= config.ACCUMULATOR_LIMIT_BITS
    dtype = np.int64 if use_int64 else object
    values = np.asarray(values).astype(dtype)
    shifts = shifts.astype(dtype)
    positive = m.signs > 0
    negative = m.signs < 0
    sums = np.zeros((values.shape[0], m.shape[1]), dtype=dtype)
    largest_partial = 0

    for start in range(0, values.shape[0], config.KERNEL_CHUNK_SIZE):
        chunk = values[start:start + config.KERNEL_CHUNK_SIZE]
        shifted = np.left_shift(chunk[:, :, None], shifts[None, :, :])
        terms = np.where(positive[None], shifted, np.where(negative[None], -shifted, 0))
        if track_partial or accumulator_bits is not None:
            partial = np.cumsum(terms, axis=1)
            if partial.size:
                largest_partial = max(largest_partial, int(np.max(np.abs(partial))))
            sums[start:start + chunk.shape[0]] = partial[:, -1, :] if partial.shape[1] else 0
        else:
            sums[start:start + chunk.shape[0]] = terms.sum(axis=1)

    if accumulator_bits is not None and signed_width(largest_partial) > accumulator_bits:
        raise AccumulatorOverflowError(
            f'partial sum {largest_partial} needs {signed_width(largest_partial)} bits, '
            f'accumulator has {accumulator_bits}'
        )
    return sums, largest_partial


def rescale_sums(sums, shift):
    if shift == 0:
        return sums
    if sums.dtype != object:
        largest = int(np.max(np.abs(sums))) if sums.size else 0
        if signed_width(largest << shift) > config.ACCUMULATOR_LIMIT_BITS:
            sums = sums.astype(object)
    return np.left_shift(sums, np.array(shift, dtype=sums.dtype))


def dictionary_pass(D, pixels, F, accumulator_bits=None, track_partial=False):
    """D^T x at feature scale F, accumulated at the dictionary scale F_D."""
    F_D = dictionary_fraction_bits(D)
    if F < F_D:
        raise ScaleError(f'feature scale {F} below dictionary scale {F_D}')
    sums, largest_partial = shift_add(pixels, D, F_D, accumulator_bits, track_partial)
    return rescale_sums(sums, F - F_D), largest_partial


def sum_of_squares(pixels):
    return sum(int(pixel) * int(pixel) for pixel in np.ravel(pixels))


def rounded_root(square_sum, F):
    """round(sqrt(square_sum) * 2**F) using integers only."""
    scaled = square_sum << (2 * F)
    root = math.isqrt(scaled)
    # sqrt(scaled) >= root + 1/2  <=>  scaled > root**2 + root
    if scaled > root * root + root:
        root += 1
    return root


def alpha_raw(x_int, F):
    pixels = x_int.pixels if isinstance(x_int, RawSample) else x_int
    square_sum = sum_of_squares(pixels)
    if square_sum == 0:
        raise DegenerateSampleError('all-zero sample has no raw-norm threshold')
    return FixedPointVector((rounded_root(square_sum, F),), F)


def raw_alphas(pixels, F):
    # all-zero rows get alpha 0: every feature is then max(0, 0 - 0) = 0
    return [rounded_root(sum_of_squares(row), F) for row in pixels]


def soft_threshold_integers(sums, alphas):
    alphas = np.array([int(alpha) for alpha in alphas], dtype=object).reshape(-1, 1)
    if sums.dtype != object and (alphas.size == 0 or max(alphas[:, 0]) < 1 << config.ACCUMULATOR_LIMIT_BITS):
        alphas = alphas.astype(np.int64)
    else:
        sums = sums.astype(object)
    return np.maximum(sums - alphas, 0)


def features_shift(D, x_q, alpha_fp, F, accumulator_bits=None):
    pixels = x_q.pixels if isinstance(x_q, RawSample) else np.asarray(x_q)
    if pixels.shape[-1] != D.shape[0]:
        raise DimensionError(f'sample dimension {pixels.shape[-1]} does not match dictionary rows {D.shape[0]}')
    if alpha_fp.scale != F:
        raise ScaleError(f'alpha scale {alpha_fp.scale} differs from kernel scale {F}')

    sums, _ = dictionary_pass(D, np.asarray(pixels, dtype=np.int64)[None, :], F, accumulator_bits)
    return FixedPointVector(soft_threshold_integers(sums, alpha_fp.integers)[0], F)


def require_pow2(model):
    if not model.powerized or not isinstance(model.hyperplane, Pow2Matrix):
        raise ModelModeError('shift inference needs a powerized model', code='model-not-powerized')


def decide_integers(scores, class_labels):
    # integer-only version of `training.decide`: strict > 0, lowest index wins ties
    if len(scores) == 1:
        return class_labels[1] if scores[0] > 0 else class_labels[0]
    best_index = 0
    for index, score in enumerate(scores):
        if score > scores[best_index]:
            best_index = index
    return class_labels[best_index]


def classify_shift(model, x_int, F=None):
    require_pow2(model)
    F = kernel_fraction_bits(model.dictionary) if F is None else F
    F_w = hyperplane_fraction_bits(model.hyperplane)
    input_max = x_int.pixel_max if isinstance(x_int, RawSample) else int(np.max(x_int))

    alpha_fp = alpha_raw(x_int, F)
    feature_vector = features_shift(
        model.dictionary, x_int, alpha_fp, F,
        dictionary_accumulator_bits(model.dictionary, input_max, dictionary_fraction_bits(model.dictionary))
    )
    score_sums, _ = shift_add(
        np.asarray(feature_vector.integers, dtype=object)[None, :], model.hyperplane, F_w,
        hyperplane_accumulator_bits(model, input_max, F)
    )
    scores = FixedPointVector(score_sums[0], F + F_w)
    return Decision(decide_integers(scores.integers, model.class_labels), scores)


def prepare_shift_inputs(model, samples):
    if not samples:
        raise DimensionError('no samples to classify')
    pixels = stack_pixels(samples)
    if model.metadata.quanta is not None:
        pixel_max = max(sample.pixel_max for sample in samples)
        # samples already at the model's level count pass through
        if pixel_max > model.metadata.quanta:
            pixels = quantize_pixels(pixels, QuantizationSpec(model.metadata.quanta, pixel_max))
    return pixels


def shift_input_max(model, samples):
    """Largest pixel value the kernel can see once `prepare_shift_inputs` ran."""
    pixel_max = max(sample.pixel_max for sample in samples)
    quanta = model.metadata.quanta
    return quanta if quanta is not None and pixel_max > quanta else pixel_max


def evaluate_shift(model, samples, F=None, accumulator_bits=None):
    """Batch shift-add classification, results in sample order.

    `accumulator_bits` is the declared width of the dictionary pass; it
    defaults to the static width for the samples' input range.
    """
    require_pow2(model)
    F = kernel_fraction_bits(model.dictionary) if F is None else F
    F_D = dictionary_fraction_bits(model.dictionary)
    F_w = hyperplane_fraction_bits(model.hyperplane)
    pixels = prepare_shift_inputs(model, samples)
    if pixels.shape[1] != model.input_dimension:
        raise DimensionError(f'sample dimension {pixels.shape[1]} does not match dictionary rows {model.input_dimension}')

    input_max = shift_input_max(model, samples)
    if accumulator_bits is None:
        accumulator_bits = dictionary_accumulator_bits(model.dictionary, input_max, F_D)
    sums, largest_partial = dictionary_pass(model.dictionary, pixels, F, accumulator_bits, track_partial=True)
    feature_integers = soft_threshold_integers(sums, raw_alphas(pixels, F))
    scores, _ = shift_add(feature_integers, model.hyperplane, F_w, hyperplane_accumulator_bits(model, input_max, F))
    predicted = np.array([decide_integers(list(row), model.class_labels) for row in scores])
    labels = stack_labels(samples)

    return {
        'fraction_bits': F,
        'dictionary_fraction_bits': F_D,
        'accumulator_bits': accumulator_bits,
        'score_scale': F + F_w,
        'scores': scores,
        'predicted': predicted,
        'labels': labels,
        'accuracy': accuracy(predicted, labels),
        'feature_sparsity': float(np.mean(feature_integers == 0)) if feature_integers.size else 1.0,
        'largest_partial': largest_partial,
        'source_ids': [sample.source_id for sample in samples]
    }


def classify_float(model, x):
    if model.powerized or model.sparsity.mode != FIXED_NORMALIZED:
        raise ModelModeError('float inference needs a real-valued, fixed-normalized model', code='model-not-real')

    values = x.values if isinstance(x, NormalizedSample) else np.asarray(x, dtype=np.float64)
    scores = predict_scores(model.dictionary_values(), model.hyperplane_values(), values[None, :], model.sparsity.value)
    return Decision(decide(scores, model.class_labels)[0], scores[0])


def float_scores_for_pixels(model, pixels, zero_mean=False):
    """Scores of the real-valued model on raw pixels normalized to unit norm.

    All-zero rows normalize to the zero vector, whose features are all zero.
    """
    if model.powerized:
        raise ModelModeError('float inference needs a real-valued model', code='model-not-real')
    normalized = normalize_rows(pixels, zero_mean=zero_mean, allow_zero=True)
    return predict_scores(model.dictionary_values(), model.hyperplane_values(), normalized, model.sparsity.value)


def evaluate_float(model, samples, zero_mean=False):
    scores = float_scores_for_pixels(model, stack_pixels(samples), zero_mean)
    predicted = decide(scores, model.class_labels)
    labels = stack_labels(samples)
    return {
        'scores': scores,
        'predicted': predicted,
        'labels': labels,
        'accuracy': accuracy(predicted, labels),
        'source_ids': [sample.source_id for sample in samples]
    }


def pow2_reference_scores(model, pixels):
    """Float evaluation of a powerized model with alpha = ||x_int||_2 (raw units)."""
    require_pow2(model)
    values = np.asarray(pixels, dtype=np.float64)
    alphas = np.linalg.norm(values, axis=1, keepdims=True)
    responses = values @ pow2_to_real(model.dictionary)
    return np.maximum(0.0, responses - alphas) @ pow2_to_real(model.hyperplane)


def decision_slack(model, F):
    return float(np.max(np.abs(pow2_to_real(model.hyperplane)).sum(axis=0))) * 2.0 ** -F


def shift_float_agreement(model, samples, shift_result):
    """Agreement of shift decisions with the float reference, outside the slack band."""
    pixels = prepare_shift_inputs(model, samples)
    reference = pow2_reference_scores(model, pixels)
    reference_predicted = decide(reference, model.class_labels)
    slack = decision_slack(model, shift_result['fraction_bits'])
    if reference.shape[1] == 1:
        outside_slack = np.abs(reference[:, 0]) > slack
    else:
        ordered = np.sort(reference, axis=1)
        outside_slack = (ordered[:, -1] - ordered[:, -2]) > 2 * slack

    agree = reference_predicted == shift_result['predicted']
    return {
        'agreement_rate': float(np.mean(agree)) if agree.size else 1.0,
        'agreement_rate_outside_slack': float(np.mean(agree[outside_slack])) if outside_slack.any() else 1.0,
        'samples_inside_slack': int(np.count_nonzero(~outside_slack)),
        'slack': slack
    }
