"""Repeated-training studies: perturbation, hard-threshold, quantization and
dictionary-size sweeps over independently trained model pairs.

A model pair is a trained real-valued model and its powerized version. Each
repeat draws its own training data and training seed from the master seed.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from services.bit_analysis import FLOAT_BASELINE_BITS, storage_bits, static_compute_bits
from services.compression import QuantizationSpec, compress_model, powerize_matrix, quantize_pixels
from services.datasets import DEFAULT_PIXEL_MAX, dataset_digest, normalize_rows, split_80_20, stack_labels, stack_pixels
from services.model import Dictionary, Hyperplane, required_fraction_bits
from services.selection import run_selection
from services.shift_inference import evaluate_float, evaluate_shift
from services.training import accuracy, decide, predict_scores, train_model
from utils.errors import ConfigError
from utils.result_files import save_csv_result
from utils.seeds import derive_seed, derived_rng, repeat_seeds

logger = logging.getLogger(__name__)

DEFAULT_REPEATS = 10
PERTURBATION_LEVELS = tuple(round(0.02 * step, 2) for step in range(1, 51))
POWERIZE_PERTURBATION = 1.0 / 3.0
THRESHOLD_POINTS = 14
THRESHOLD_MAX = 4.0
QUANTIZATION_LEVELS = tuple(range(1, 16))
SWEEP_HEADER = ('x', 'mean', 'std', 'bits')
TABLE_HEADER = ('error_original', 'error_proposed', 'bits_original', 'bits_proposed', 'bit_reduction')


@dataclass(frozen=True, eq=False)
class ModelPair:
    model: object
    powerized: object
    test: list
    seed: int
    train_digest: str = ''


@dataclass(frozen=True)
class SweepResult:
    x: tuple
    mean: tuple
    std: tuple
    repeats: int
    bits: tuple = ()
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError(f'a sweep needs at least one repeat, got {self.repeats}')
        if not len(self.x) == len(self.mean) == len(self.std):
            raise ConfigError('sweep columns differ in length')
        if self.bits and len(self.bits) != len(self.x):
            raise ConfigError('bit column differs in length from the sweep grid')

    def rows(self):
        bits = self.bits or (None,) * len(self.x)
        return list(zip(self.x, self.mean, self.std, bits))


def summarize(accuracy_table):
    """Column mean and sample std (ddof=1) of a repeats x points accuracy table."""
    accuracy_table = np.asarray(accuracy_table, dtype=np.float64)
    mean = accuracy_table.mean(axis=0)
    if accuracy_table.shape[0] > 1:
        std = accuracy_table.std(axis=0, ddof=1)
    else:
        std = np.zeros_like(mean)
    return tuple(float(value) for value in mean), tuple(float(value) for value in std)


def training_matrix(samples):
    return normalize_rows(stack_pixels(samples))


def train_pair(build_task, cfg, repeat_seed):
    train_samples, test_samples = build_task(derive_seed(repeat_seed, 'data'))
    model, _ = train_model(
        training_matrix(train_samples), stack_labels(train_samples), replace(cfg, seed=derive_seed(repeat_seed, 'train'))
    )
    return ModelPair(
        model=model,
        powerized=compress_model(model, None, None),
        test=test_samples,
        seed=repeat_seed,
        train_digest=dataset_digest(train_samples)
    )


def train_model_pairs(build_task, cfg, repeats=DEFAULT_REPEATS, master_seed=0, jobs=1):
    """`repeats` pairs trained on independent draws of `build_task(seed) -> (train, test)`."""
    pair_seeds = repeat_seeds(master_seed, 'pair', repeats)
    pairs = Parallel(n_jobs=jobs)(delayed(train_pair)(build_task, cfg, pair_seed) for pair_seed in pair_seeds)
    logger.info('trained %d model pairs', len(pairs))
    return pairs


def perturb_model(D, w, d, rng):
    if not 0 < d <= 1:
        raise ConfigError(f'perturbation level must lie in (0, 1], got {d}')

    D = np.asarray(D, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    # nextafter keeps the lower end open
    low = np.nextafter(1.0 - d, 2.0)
    high = 1.0 + d
    return D * rng.uniform(low, high, size=D.shape), w * rng.uniform(low, high, size=w.shape)


def perturbed_accuracy(pair, d, rng):
    model = pair.model
    D, W = perturb_model(model.dictionary.entries, model.hyperplane.weights, d, rng)
    perturbed = replace(model, dictionary=Dictionary(D), hyperplane=Hyperplane(W, model.hyperplane.v))
    return evaluate_float(perturbed, pair.test)['accuracy']


def perturbation_sweep(pairs, d_values=PERTURBATION_LEVELS, master_seed=0):
    accuracy_table = [
        [
            perturbed_accuracy(pair, d, derived_rng(master_seed, f'perturb/{repeat_index}/{level_index}'))
            for level_index, d in enumerate(d_values)
        ]
        for repeat_index, pair in enumerate(pairs)
    ]
    mean, std = summarize(accuracy_table)

    reference = [evaluate_float(pair.model, pair.test)['accuracy'] for pair in pairs]
    powerized = [evaluate_shift(pair.powerized, pair.test)['accuracy'] for pair in pairs]
    one_third = [
        perturbed_accuracy(pair, POWERIZE_PERTURBATION, derived_rng(master_seed, f'perturb/{repeat_index}/third'))
        for repeat_index, pair in enumerate(pairs)
    ]
    extras = {}
    for name, values in (('reference', reference), ('powerized', powerized), ('one_third', one_third)):
        value_mean, value_std = summarize(np.asarray(values)[:, None])
        extras[f'{name}_mean'] = value_mean[0]
        extras[f'{name}_std'] = value_std[0]

    return SweepResult(tuple(float(d) for d in d_values), mean, std, len(pairs), extras=extras)


def threshold_grid(points=THRESHOLD_POINTS, limit=THRESHOLD_MAX):
    return tuple(float(value) for value in np.linspace(0.0, limit, points))


def thresholded_entries(entries, t):
    if t == 0:
        return entries
    return np.where(np.abs(entries) >= t, entries, 0.0)


def threshold_point(pair, t):
    """Float accuracy of the thresholded real model and storage bits of its powerized dictionary."""
    model = pair.model
    entries = thresholded_entries(model.dictionary.entries, t)
    thresholded = replace(model, dictionary=Dictionary(entries))
    powerized = powerize_matrix(entries)
    return evaluate_float(thresholded, pair.test)['accuracy'], storage_bits(powerized, required_fraction_bits(powerized))


def threshold_sweep(pairs, thresholds=None):
    thresholds = threshold_grid() if thresholds is None else tuple(float(t) for t in thresholds)
    points = [[threshold_point(pair, t) for t in thresholds] for pair in pairs]
    mean, std = summarize([[accuracy_value for accuracy_value, _ in row] for row in points])
    # bits of the worst pair: the width hardware would have to provide
    bits = tuple(max(row[index][1] for row in points) for index in range(len(thresholds)))
    return SweepResult(thresholds, mean, std, len(pairs), bits=bits)


def quantized_accuracy(model, samples, quanta, pixel_max):
    pixels = quantize_pixels(stack_pixels(samples), QuantizationSpec(quanta, pixel_max))
    scores = predict_scores(
        model.dictionary_values(), model.hyperplane_values(), normalize_rows(pixels, allow_zero=True), model.sparsity.value
    )
    return accuracy(decide(scores, model.class_labels), stack_labels(samples))


def quantization_sweep(pairs, levels=QUANTIZATION_LEVELS, pixel_max=DEFAULT_PIXEL_MAX):
    """Float accuracy on quantized test pixels.

    pixel_max is appended as an unquantized reference row when the levels do not already contain it.
    """
    levels = tuple(int(level) for level in levels)
    if pixel_max not in levels:
        levels += (int(pixel_max),)
    accuracy_table = [[quantized_accuracy(pair.model, pair.test, quanta, pixel_max) for quanta in levels] for pair in pairs]
    mean, std = summarize(accuracy_table)
    bits = tuple(
        max(
            static_compute_bits(pair.powerized.dictionary, quanta, required_fraction_bits(pair.powerized.dictionary))
            for pair in pairs
        )
        for quanta in levels
    )
    return SweepResult(levels, mean, std, len(pairs), bits=bits, extras={'reference_quanta': pixel_max})


def dict_size_point(build_task, cfg, grid, atoms, repeat_seed, jobs):
    train_samples, test_samples = build_task(derive_seed(repeat_seed, 'data'))
    sized_cfg = replace(cfg, atoms=atoms, seed=derive_seed(repeat_seed, 'train'))

    original, _ = train_model(training_matrix(train_samples), stack_labels(train_samples), sized_cfg)
    selection = run_selection(split_80_20(train_samples, derive_seed(repeat_seed, 'split')), grid, sized_cfg, jobs)
    return (
        evaluate_float(original, test_samples)['accuracy'],
        evaluate_shift(selection.chosen.model, test_samples)['accuracy'],
        selection.chosen.bits
    )


def dict_size_sweep(atom_counts, build_task, cfg, grid, repeats=1, master_seed=0, jobs=1):
    """Original (float) and selected compressed models per dictionary size."""
    atom_counts = tuple(int(atoms) for atoms in atom_counts)
    if list(atom_counts) != sorted(atom_counts):
        raise ConfigError(f'atom counts must be ascending, got {atom_counts}')

    size_seeds = repeat_seeds(master_seed, 'dictsize', repeats)
    points = [
        [dict_size_point(build_task, cfg, grid, atoms, repeat_seed, jobs) for atoms in atom_counts]
        for repeat_seed in size_seeds
    ]
    for atoms in atom_counts:
        logger.info('dictionary size %d done', atoms)

    original_mean, original_std = summarize([[point[0] for point in row] for row in points])
    proposed_mean, proposed_std = summarize([[point[1] for point in row] for row in points])
    proposed_bits = tuple(max(row[index][2] for row in points) for index in range(len(atom_counts)))

    original = SweepResult(atom_counts, original_mean, original_std, repeats, bits=(FLOAT_BASELINE_BITS,) * len(atom_counts))
    proposed = SweepResult(atom_counts, proposed_mean, proposed_std, repeats, bits=proposed_bits)
    return original, proposed


def table_report(original_accuracy, proposed_accuracy, proposed_bits, original_bits=FLOAT_BASELINE_BITS):
    return {
        'error_original': 1.0 - original_accuracy,
        'error_proposed': 1.0 - proposed_accuracy,
        'bits_original': original_bits,
        'bits_proposed': proposed_bits,
        'bit_reduction': 1.0 - proposed_bits / original_bits
    }


def table_row(report):
    return tuple(report[column] for column in TABLE_HEADER)


def save_sweep(result_path, result):
    return save_csv_result(result_path, SWEEP_HEADER, result.rows())
