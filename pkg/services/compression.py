"""Powerization, dictionary hard-thresholding and input quantization."""
import logging
from dataclasses import dataclass, replace

import numpy as np

from services.datasets import DEFAULT_PIXEL_MAX, RawSample
from services.model import (
    RAW_NORM,
    CompressionMetadata,
    Dictionary,
    Hyperplane,
    Pow2Entry,
    SparsityParam,
    build_pow2_matrix,
    pow2_to_real,
)
from utils.errors import ConfigError, EmptyCandidatesError, ModelModeError, NonFiniteError

logger = logging.getLogger(__name__)

# mantissa of 3 * 2**(k-1) under frexp: the midpoint between 2**(k-1) and 2**k
POWERIZE_MIDPOINT_MANTISSA = 0.75


@dataclass(frozen=True)
class QuantizationSpec:
    quanta: int
    pixel_max: int = DEFAULT_PIXEL_MAX

    def __post_init__(self):
        if int(self.quanta) != self.quanta or int(self.pixel_max) != self.pixel_max:
            raise ConfigError('quanta and pixel_max must be integers')
        if self.pixel_max < 1 or not 1 <= self.quanta <= self.pixel_max:
            raise ConfigError(f'quanta must lie in [1, {self.pixel_max}], got {self.quanta}')


@dataclass(frozen=True)
class ThresholdCandidates:
    values: tuple

    def __post_init__(self):
        values = tuple(float(value) for value in self.values)
        if any(right <= left for left, right in zip(values, values[1:])):
            raise ConfigError('threshold candidates must be strictly increasing')
        for value in values:
            mantissa, _ = np.frexp(value)
            if not (value > 0 and mantissa == 0.5):
                raise ConfigError(f'threshold candidate {value} is not a power of two')
        object.__setattr__(self, 'values', values)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


def nearest_power_of_two(values):
    """Signs and exponents of the nearest power of two, ties to the larger one.

    No exponent range check; `powerize_matrix` applies it.
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError('cannot powerize non-finite values')

    mantissas, exponents = np.frexp(np.abs(values))
    exponents = np.where(mantissas < POWERIZE_MIDPOINT_MANTISSA, exponents - 1, exponents)
    signs = np.sign(values).astype(np.int8)
    return signs, np.where(signs == 0, 0, exponents).astype(np.int64)


def powerize_scalar(x):
    signs, exponents = nearest_power_of_two(np.array([x]))
    return Pow2Entry(int(signs[0]), int(exponents[0]))


def powerize_matrix(M):
    signs, exponents = nearest_power_of_two(M)
    return build_pow2_matrix(signs, exponents)


def hard_threshold(D, t):
    if not t > 0:
        raise ConfigError(f'hard threshold must be positive, got {t}')

    keep = np.abs(pow2_to_real(D)) >= t
    return build_pow2_matrix(np.where(keep, D.signs, 0), np.where(keep, D.exponents, 0))


def threshold_candidates(D):
    present_exponents = np.unique(D.exponents[D.signs != 0])
    if present_exponents.size == 0:
        raise EmptyCandidatesError('all-zero dictionary has no threshold candidates')

    return ThresholdCandidates(tuple(float(np.ldexp(1.0, int(exponent))) for exponent in present_exponents))


def quantize_pixels(pixels, spec):
    """round(p * q / pixel_max), halves away from zero, in integer arithmetic."""
    pixels = np.asarray(pixels, dtype=np.int64)
    return (2 * pixels * spec.quanta + spec.pixel_max) // (2 * spec.pixel_max)


def quantize_sample(s, spec):
    return RawSample(quantize_pixels(s.pixels, spec), s.label, s.source_id, pixel_max=spec.quanta)


def compress_model(model, t, spec):
    if model.powerized or not isinstance(model.dictionary, Dictionary) or not isinstance(model.hyperplane, Hyperplane):
        raise ModelModeError('model is already powerized', code='model-already-powerized')
    if model.sparsity.value != 1.0:
        raise ModelModeError(f'raw-norm inference needs alpha = 1, model has {model.sparsity.value}', code='alpha-not-one')

    dictionary = powerize_matrix(model.dictionary.entries)
    if t is not None:
        dictionary = hard_threshold(dictionary, t)
    hyperplane = powerize_matrix(model.hyperplane.weights)

    logger.debug(
        'compressed model: z_threshold=%s quanta=%s, %d of %d dictionary entries kept',
        t, spec.quanta if spec else None, dictionary.nonzero_count, dictionary.signs.size
    )
    return replace(
        model,
        dictionary=dictionary,
        hyperplane=hyperplane,
        sparsity=SparsityParam(RAW_NORM, 1.0),
        metadata=CompressionMetadata(
            kappa=model.metadata.kappa,
            z_threshold=float(t) if t is not None else None,
            quanta=spec.quanta if spec is not None else None,
            powerized=True
        )
    )
