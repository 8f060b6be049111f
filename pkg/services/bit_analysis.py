"""Storage and accumulator bit-widths of powerized models.

All widths are signed fixed-point widths at scale F: one sign bit plus the
magnitude bits of the largest value the stage can hold. F is the scale the
dictionary pass accumulates at; the alpha, feature and hyperplane stages run
at the larger feature scale and are reported per stage.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import config
from services.datasets import DEFAULT_PIXEL_MAX
from services.shift_inference import (
    dictionary_accumulator_bits,
    dictionary_fraction_bits,
    hyperplane_accumulator_bits,
    prepare_shift_inputs,
    require_pow2,
    rounded_root,
    shift_add,
    shift_amounts,
    signed_width,
    worst_case_magnitude,
)
from utils.errors import ConfigError
from utils.result_files import save_csv_result, save_json_result

logger = logging.getLogger(__name__)

FLOAT_BASELINE_BITS = 64
BIT_REPORT_HEADER = (
    'storage_bits_D', 'static_compute_bits', 'empirical_compute_bits',
    'fraction_bits', 'feature_fraction_bits', 'input_max',
    'alpha_bits', 'hyperplane_bits', 'float_baseline_bits'
)


@dataclass(frozen=True)
class BitReport:
    storage_bits_D: int
    static_compute_bits: int
    empirical_compute_bits: Optional[int]
    fraction_bits: int
    input_max: int
    feature_fraction_bits: Optional[int] = None
    stages: dict = field(default_factory=dict)
    float_baseline_bits: int = FLOAT_BASELINE_BITS

    @property
    def reduction(self):
        return 1.0 - self.static_compute_bits / self.float_baseline_bits

    def to_document(self):
        document = asdict(self)
        document['reduction'] = self.reduction
        return document

    def row(self):
        return (
            self.storage_bits_D, self.static_compute_bits, self.empirical_compute_bits,
            self.fraction_bits, self.feature_fraction_bits, self.input_max,
            self.stages.get('alpha'), self.stages.get('hyperplane'), self.float_baseline_bits
        )


def storage_bits(D, F):
    shift_amounts(D, F)
    if D.emax is None:
        return 1
    return signed_width(1 << (D.emax + F))


def check_input_max(input_max):
    if int(input_max) != input_max or input_max < 1:
        raise ConfigError(f'input_max must be a positive integer, got {input_max}')


def static_compute_bits(D, input_max, F):
    check_input_max(input_max)
    shift_amounts(D, F)
    return dictionary_accumulator_bits(D, input_max, F)


def empirical_compute_bits(D, samples, F):
    """Width of the largest |partial sum| of D^T x over the given pixel rows."""
    _, largest_partial = shift_add(samples, D, F, track_partial=True)
    return signed_width(largest_partial)


def alpha_bits(n, input_max, F):
    # alpha stays below ||(input_max, ..., input_max)||_2 at scale F, rounding included
    return signed_width(rounded_root(n * int(input_max) ** 2, F))


def feature_bits(D, input_max, F):
    return signed_width(worst_case_magnitude(D, input_max, F))


def hyperplane_bits(model, input_max, F):
    return hyperplane_accumulator_bits(model, input_max, F)


def default_input_max(model):
    return model.metadata.quanta if model.metadata.quanta is not None else DEFAULT_PIXEL_MAX


def bit_report(model, input_max=None, samples=None, F=None):
    """Widths of every stage of `evaluate_shift` for pixels up to `input_max`.

    F is the dictionary-pass scale (its minimal lossless value by default).
    """
    require_pow2(model)
    D = model.dictionary
    F = dictionary_fraction_bits(D) if F is None else F
    feature_F = max(config.KERNEL_MIN_FRACTION_BITS, F)
    input_max = default_input_max(model) if input_max is None else input_max

    empirical_bits = None
    if samples:
        pixels = prepare_shift_inputs(model, samples)
        if int(pixels.max()) > input_max:
            raise ConfigError(f'samples reach pixel value {int(pixels.max())}, above input_max {input_max}')
        empirical_bits = empirical_compute_bits(D, pixels, F)

    static_bits = static_compute_bits(D, input_max, F)
    report = BitReport(
        storage_bits_D=storage_bits(D, F),
        static_compute_bits=static_bits,
        empirical_compute_bits=empirical_bits,
        fraction_bits=F,
        input_max=int(input_max),
        feature_fraction_bits=feature_F,
        stages={
            'dictionary': static_bits,
            'features': feature_bits(D, input_max, feature_F),
            'alpha': alpha_bits(D.shape[0], input_max, feature_F),
            'hyperplane': hyperplane_bits(model, input_max, feature_F)
        }
    )
    logger.debug(
        'bit report: storage=%d static=%d empirical=%s at F=%d (features at F=%d)',
        report.storage_bits_D, report.static_compute_bits, report.empirical_compute_bits, F, feature_F
    )
    return report


def save_bit_report(output_dir, report):
    save_json_result(output_dir / 'bits.json', report.to_document())
    save_csv_result(output_dir / 'bits.csv', BIT_REPORT_HEADER, [report.row()])
