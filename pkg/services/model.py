"""Model and arithmetic types shared by every stage of the pipeline.

A trained model is a real transform `D` (n x N) plus a hyperplane (N x C);
compression replaces either of them by a `Pow2Matrix` whose entries are
0 or +-2**e. All types are frozen and hold read-only arrays.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from utils.errors import ConfigError, DataFormatError, NonFiniteError, Pow2RangeError
from utils.result_files import read_json_result, save_json_result

logger = logging.getLogger(__name__)

POW2_EXPONENT_MIN = -127
POW2_EXPONENT_MAX = 127
MODEL_FORMAT_VERSION = 1

FIXED_NORMALIZED = 'fixed-normalized'
RAW_NORM = 'raw-norm'
SPARSITY_MODES = (FIXED_NORMALIZED, RAW_NORM)


def read_only(array, dtype=None):
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dictionary:
    entries: np.ndarray

    def __post_init__(self):
        entries = read_only(self.entries, dtype=np.float64)
        if entries.ndim != 2 or min(entries.shape) < 1:
            raise DataFormatError(f'dictionary must be a non-empty matrix, got shape {entries.shape}')
        if not np.all(np.isfinite(entries)):
            raise NonFiniteError('dictionary has non-finite entries')
        object.__setattr__(self, 'entries', entries)

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def N(self):
        return self.entries.shape[1]


@dataclass(frozen=True, eq=False)
class Hyperplane:
    weights: np.ndarray
    v: float = 0.0

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim == 1:
            weights = weights[:, None]
        if weights.ndim != 2 or min(weights.shape) < 1:
            raise DataFormatError(f'hyperplane must be a non-empty matrix, got shape {weights.shape}')
        if not np.all(np.isfinite(weights)):
            raise NonFiniteError('hyperplane has non-finite weights')
        if not self.v >= 0:
            raise DataFormatError(f'regularizer v must be nonnegative, got {self.v}')
        object.__setattr__(self, 'weights', read_only(weights))
        object.__setattr__(self, 'v', float(self.v))

    @property
    def N(self):
        return self.weights.shape[0]

    @property
    def C(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class SparsityParam:
    mode: str = FIXED_NORMALIZED
    value: float = 1.0

    def __post_init__(self):
        if self.mode not in SPARSITY_MODES:
            raise DataFormatError(f'unknown sparsity mode {self.mode!r}')
        if not (np.isfinite(self.value) and self.value > 0):
            raise DataFormatError(f'sparsity value must be positive, got {self.value}')


@dataclass(frozen=True)
class Pow2Entry:
    sign: int
    exponent: int = 0

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise Pow2RangeError(f'sign must be -1, 0 or +1, got {self.sign}')
        if not POW2_EXPONENT_MIN <= self.exponent <= POW2_EXPONENT_MAX:
            raise Pow2RangeError(f'exponent {self.exponent} outside [{POW2_EXPONENT_MIN}, {POW2_EXPONENT_MAX}]')

    @property
    def value(self):
        if self.sign == 0:
            return 0.0
        return float(np.ldexp(float(self.sign), self.exponent))


@dataclass(frozen=True, eq=False)
class Pow2Matrix:
    """Signs and exponents stored as two aligned integer arrays.

    `emin`/`emax` are cached exponent bounds over nonzero entries (None for
    the zero matrix). Use `build_pow2_matrix` to get consistent caches.
    """
    signs: np.ndarray
    exponents: np.ndarray
    emin: Optional[int] = None
    emax: Optional[int] = None

    def __post_init__(self):
        signs = np.array(self.signs, dtype=np.int8)
        exponents = np.array(self.exponents, dtype=np.int64)
        if signs.ndim == 1:
            signs = signs[:, None]
            exponents = exponents.reshape(signs.shape)
        if signs.ndim != 2 or signs.shape != exponents.shape or min(signs.shape) < 1:
            raise DataFormatError(f'sign/exponent arrays disagree: {signs.shape} vs {exponents.shape}')
        if not np.all(np.isin(signs, (-1, 0, 1))):
            raise Pow2RangeError('pow2 signs must be -1, 0 or +1')
        exponents = np.where(signs == 0, 0, exponents)
        if exponents.min() < POW2_EXPONENT_MIN or exponents.max() > POW2_EXPONENT_MAX:
            raise Pow2RangeError(
                f'pow2 exponents outside [{POW2_EXPONENT_MIN}, {POW2_EXPONENT_MAX}]: '
                f'[{exponents.min()}, {exponents.max()}]'
            )
        object.__setattr__(self, 'signs', read_only(signs))
        object.__setattr__(self, 'exponents', read_only(exponents))

    @property
    def shape(self):
        return self.signs.shape

    @property
    def nonzero_count(self):
        return int(np.count_nonzero(self.signs))

    def entry(self, row, column):
        return Pow2Entry(int(self.signs[row, column]), int(self.exponents[row, column]))


def exponent_bounds(signs, exponents):
    nonzero_exponents = np.asarray(exponents)[np.asarray(signs) != 0]
    if nonzero_exponents.size == 0:
        return None, None

    return int(nonzero_exponents.min()), int(nonzero_exponents.max())


def build_pow2_matrix(signs, exponents):
    signs = np.asarray(signs)
    exponents = np.where(signs == 0, 0, np.asarray(exponents))
    emin, emax = exponent_bounds(signs, exponents)
    return Pow2Matrix(signs, exponents, emin, emax)


def pow2_to_real(m):
    return np.ldexp(m.signs.astype(np.float64), m.exponents.astype(np.int32))


def required_fraction_bits(m):
    if m.emin is None:
        return 0
    return max(0, -m.emin)


@dataclass(frozen=True)
class FixedPointSpec:
    fraction_bits: int

    def __post_init__(self):
        if int(self.fraction_bits) != self.fraction_bits or self.fraction_bits < 0:
            raise DataFormatError(f'fraction bits must be a nonnegative integer, got {self.fraction_bits}')

    def serves(self, m):
        return m.emin is None or self.fraction_bits >= -m.emin


@dataclass(frozen=True)
class CompressionMetadata:
    kappa: Optional[float] = None
    z_threshold: Optional[float] = None
    quanta: Optional[int] = None
    powerized: bool = False


@dataclass(frozen=True, eq=False)
class ModelBundle:
    dictionary: object
    hyperplane: object
    sparsity: SparsityParam = field(default_factory=SparsityParam)
    metadata: CompressionMetadata = field(default_factory=CompressionMetadata)
    class_labels: tuple = (-1, 1)

    def __post_init__(self):
        object.__setattr__(self, 'class_labels', tuple(int(label) for label in self.class_labels))

    @property
    def powerized(self):
        return isinstance(self.dictionary, Pow2Matrix)

    @property
    def atom_count(self):
        if isinstance(self.dictionary, Pow2Matrix):
            return self.dictionary.shape[1]
        return self.dictionary.N

    @property
    def input_dimension(self):
        if isinstance(self.dictionary, Pow2Matrix):
            return self.dictionary.shape[0]
        return self.dictionary.n

    @property
    def hyperplane_shape(self):
        if isinstance(self.hyperplane, Pow2Matrix):
            return self.hyperplane.shape
        return self.hyperplane.weights.shape

    @property
    def is_binary(self):
        return self.hyperplane_shape[1] == 1

    def dictionary_values(self):
        if isinstance(self.dictionary, Pow2Matrix):
            return pow2_to_real(self.dictionary)
        return self.dictionary.entries

    def hyperplane_values(self):
        if isinstance(self.hyperplane, Pow2Matrix):
            return pow2_to_real(self.hyperplane)
        return self.hyperplane.weights


def validate_model(model):
    violations = []

    for part_name, part in (('dictionary', model.dictionary), ('hyperplane', model.hyperplane)):
        if isinstance(part, Pow2Matrix):
            if (part.emin, part.emax) != exponent_bounds(part.signs, part.exponents):
                violations.append(f'stale exponent cache in {part_name}')
        elif part_name == 'dictionary' and not isinstance(part, Dictionary):
            violations.append('dictionary has an unknown type')
        elif part_name == 'hyperplane' and not isinstance(part, Hyperplane):
            violations.append('hyperplane has an unknown type')

    if model.hyperplane_shape[0] != model.atom_count:
        violations.append(
            f'atom-count mismatch: dictionary has {model.atom_count} atoms, '
            f'hyperplane has {model.hyperplane_shape[0]} rows'
        )

    class_count = model.hyperplane_shape[1]
    expected_labels = 2 if class_count == 1 else class_count
    if len(model.class_labels) != expected_labels:
        violations.append(f'class-label count {len(model.class_labels)} does not match {expected_labels} classes')
    if len(set(model.class_labels)) != len(model.class_labels):
        violations.append('class labels are not distinct')

    metadata = model.metadata
    if metadata.powerized != model.powerized:
        violations.append('powerized flag does not match dictionary representation')
    if metadata.powerized != isinstance(model.hyperplane, Pow2Matrix):
        violations.append('powerized flag does not match hyperplane representation')
    if not model.powerized and (metadata.z_threshold is not None or metadata.quanta is not None):
        violations.append('compression metadata present on a real-valued model')
    if metadata.kappa is not None and metadata.kappa < 0:
        violations.append(f'negative kappa {metadata.kappa}')
    if metadata.z_threshold is not None and not metadata.z_threshold > 0:
        violations.append(f'non-positive z_threshold {metadata.z_threshold}')
    if metadata.quanta is not None and metadata.quanta < 1:
        violations.append(f'quanta {metadata.quanta} below 1')
    if model.sparsity.mode == RAW_NORM and not model.powerized:
        violations.append('raw-norm sparsity on a real-valued model')

    return {
        'ok': not violations,
        'violations': violations
    }


def encode_matrix(part):
    if isinstance(part, Pow2Matrix):
        return [[int(sign), int(exponent)] for sign, exponent in zip(part.signs.ravel(), part.exponents.ravel())]
    values = part.entries if isinstance(part, Dictionary) else part.weights
    return [float(value) for value in values.ravel()]


def decode_pow2(encoded, rows, columns):
    pairs = np.asarray(encoded, dtype=np.int64).reshape(rows * columns, 2)
    return build_pow2_matrix(pairs[:, 0].reshape(rows, columns), pairs[:, 1].reshape(rows, columns))


def model_document(model):
    n, N = model.input_dimension, model.atom_count
    metadata = model.metadata
    regularizer = model.hyperplane.v if isinstance(model.hyperplane, Hyperplane) else None

    return {
        'format_version': MODEL_FORMAT_VERSION,
        'n': n,
        'N': N,
        'C': model.hyperplane_shape[1],
        'mode': 'pow2' if model.powerized else 'real',
        'dictionary': encode_matrix(model.dictionary),
        'hyperplane': encode_matrix(model.hyperplane),
        'alpha_mode': model.sparsity.mode,
        'alpha_value': float(model.sparsity.value),
        'regularizer': regularizer,
        'class_labels': list(model.class_labels),
        'metadata': {
            'kappa': metadata.kappa,
            'z_threshold': metadata.z_threshold,
            'quanta': metadata.quanta,
            'powerized': metadata.powerized
        }
    }


def model_from_document(document):
    if document.get('format_version') != MODEL_FORMAT_VERSION:
        raise DataFormatError(f'unsupported model format_version {document.get("format_version")!r}')

    try:
        n, N, C = int(document['n']), int(document['N']), int(document['C'])
        mode = document['mode']
        metadata_document = document.get('metadata') or {}

        if mode == 'pow2':
            dictionary = decode_pow2(document['dictionary'], n, N)
            hyperplane = decode_pow2(document['hyperplane'], N, C)
        elif mode == 'real':
            dictionary = Dictionary(np.asarray(document['dictionary'], dtype=np.float64).reshape(n, N))
            hyperplane = Hyperplane(
                np.asarray(document['hyperplane'], dtype=np.float64).reshape(N, C),
                document.get('regularizer') or 0.0
            )
        else:
            raise DataFormatError(f'unknown model mode {mode!r}')

        quanta = metadata_document.get('quanta')
        return ModelBundle(
            dictionary=dictionary,
            hyperplane=hyperplane,
            sparsity=SparsityParam(document['alpha_mode'], float(document['alpha_value'])),
            metadata=CompressionMetadata(
                kappa=metadata_document.get('kappa'),
                z_threshold=metadata_document.get('z_threshold'),
                quanta=int(quanta) if quanta is not None else None,
                powerized=bool(metadata_document.get('powerized', mode == 'pow2'))
            ),
            class_labels=tuple(document.get('class_labels') or (-1, 1))
        )
    except (KeyError, TypeError, ValueError) as error:
        if isinstance(error, DataFormatError):
            raise
        raise DataFormatError(f'malformed model document: {error}') from None


def same_model(left, right):
    return model_document(left) == model_document(right)


def save_model(model_path, model):
    return save_json_result(model_path, model_document(model))


def load_model(model_path):
    if not Path(model_path).is_file():
        raise ConfigError(f'모델 파일을 찾을 수 없습니다: {model_path}', code='model-not-found', path=str(model_path))
    try:
        document = read_json_result(model_path)
    except ValueError as error:
        raise DataFormatError(f'{model_path}: not a JSON model document ({error})') from None
    model = model_from_document(document)
    logger.debug('loaded %s model from %s', 'powerized' if model.powerized else 'real', model_path)
    return model
