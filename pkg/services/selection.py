"""Model selection over (kappa, z_threshold, quanta).

One model is trained per kappa on the 80% split; each (z_threshold, quanta)
pair compresses it and is scored on the 20% holdout with the shift kernel.
The survivors of the accuracy filter are narrowed to the fewest static
bits, then to the sparsest holdout features.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

from joblib import Parallel, delayed

from services.bit_analysis import static_compute_bits
from services.compression import QuantizationSpec, compress_model, powerize_matrix, threshold_candidates
from services.datasets import normalize_rows, stack_labels, stack_pixels
from services.shift_inference import dictionary_fraction_bits, evaluate_shift
from services.training import train_model
from utils.errors import ConfigError, SelectionError, ShiftClassError
from utils.result_files import save_csv_result, save_json_result

logger = logging.getLogger(__name__)

DEFAULT_KAPPAS = (0.004, 0.008, 0.010, 0.012, 0.014, 0.016, 0.018, 0.020)
DEFAULT_QUANTA = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 31, 127)
DEFAULT_GAMMA = 0.001
GRID_HEADER = ('kappa', 'z_threshold', 'quanta', 'accuracy', 'bits', 'sparsity', 'status')
STATUS_OK = 'ok'
STATUS_FAILED = 'failed'


@dataclass(frozen=True)
class GridSpec:
    kappas: tuple = DEFAULT_KAPPAS
    quanta: tuple = DEFAULT_QUANTA
    gamma: float = DEFAULT_GAMMA
    threshold_limit: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'kappas', tuple(float(kappa) for kappa in self.kappas))
        object.__setattr__(self, 'quanta', tuple(int(quanta) for quanta in self.quanta))
        if not 0 < self.gamma < 1:
            raise ConfigError(f'gamma must lie in (0, 1), got {self.gamma}')
        if not self.kappas or any(kappa < 0 for kappa in self.kappas):
            raise ConfigError(f'kappa values must be nonnegative, got {self.kappas}')
        if not self.quanta or any(quanta < 1 for quanta in self.quanta):
            raise ConfigError(f'quanta values must be at least 1, got {self.quanta}')
        if self.threshold_limit is not None and self.threshold_limit < 1:
            raise ConfigError(f'threshold limit must be at least 1, got {self.threshold_limit}')


@dataclass(frozen=True, eq=False)
class CandidateResult:
    kappa: float
    z_threshold: Optional[float]
    quanta: int
    accuracy: float = 0.0
    bits: Optional[int] = None
    sparsity: float = 0.0
    status: str = STATUS_OK
    error: Optional[str] = None
    model: object = None

    @property
    def params(self):
        return {'kappa': self.kappa, 'z_threshold': self.z_threshold, 'quanta': self.quanta}

    def row(self):
        return (self.kappa, self.z_threshold, self.quanta, self.accuracy, self.bits, self.sparsity, self.status)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    chosen: CandidateResult
    audit: dict
    best_acc: float
    candidates: list = field(default_factory=list)

    def to_document(self):
        return {
            'chosen': {
                **self.chosen.params,
                'accuracy': self.chosen.accuracy,
                'bits': self.chosen.bits,
                'sparsity': self.chosen.sparsity
            },
            'audit': self.audit,
            'best_acc': self.best_acc
        }


def failed_candidate(kappa, z_threshold, quanta, error):
    return CandidateResult(kappa, z_threshold, quanta, status=STATUS_FAILED, error=f'{error.code}: {error}')


def grid_thresholds(model, grid):
    thresholds = threshold_candidates(powerize_matrix(model.dictionary.entries)).values
    if grid.threshold_limit is not None:
        thresholds = thresholds[:grid.threshold_limit]
    return thresholds


def evaluate_candidate(model, kappa, z_threshold, quanta, holdout, pixel_max):
    # quanta above the pixel range act as the identity quantizer
    applied_quanta = min(quanta, pixel_max)
    try:
        compressed = compress_model(model, z_threshold, QuantizationSpec(applied_quanta, pixel_max))
        result = evaluate_shift(compressed, holdout)
        bits = static_compute_bits(
            compressed.dictionary, applied_quanta, dictionary_fraction_bits(compressed.dictionary)
        )
    except ShiftClassError as error:
        return failed_candidate(kappa, z_threshold, applied_quanta, error)

    return CandidateResult(
        kappa=kappa,
        z_threshold=z_threshold,
        quanta=applied_quanta,
        accuracy=result['accuracy'],
        bits=bits,
        sparsity=result['feature_sparsity'],
        model=compressed
    )


def evaluate_kappa(kappa, train80, holdout20, grid, train_cfg):
    """All candidates of one kappa: one training run, then every (z_threshold, quanta)."""
    pixel_max = max(sample.pixel_max for sample in train80 + holdout20)
    try:
        X = normalize_rows(stack_pixels(train80))
        model, _ = train_model(X, stack_labels(train80), replace(train_cfg, kappa=kappa))
        thresholds = grid_thresholds(model, grid)
    except ShiftClassError as error:
        logger.warning('kappa=%s failed: %s', kappa, error)
        return [failed_candidate(kappa, None, min(quanta, pixel_max), error) for quanta in grid.quanta]

    logger.info('kappa=%s: %d thresholds x %d quanta', kappa, len(thresholds), len(grid.quanta))
    return [
        evaluate_candidate(model, kappa, z_threshold, quanta, holdout20, pixel_max)
        for z_threshold in thresholds
        for quanta in grid.quanta
    ]


def build_grid(train80, holdout20, grid, train_cfg, jobs=1):
    kappa_results = Parallel(n_jobs=jobs)(
        delayed(evaluate_kappa)(kappa, train80, holdout20, grid, train_cfg) for kappa in grid.kappas
    )
    return [candidate for candidates in kappa_results for candidate in candidates]


def viable_candidates(results):
    return [result for result in results if result.status == STATUS_OK]


def gamma_filter(results, gamma):
    viable = viable_candidates(results)
    if not viable:
        raise SelectionError('모든 후보 모델이 실패했습니다 (no viable candidate)')

    best_acc = max(result.accuracy for result in viable)
    return [result for result in viable if result.accuracy >= (1.0 - gamma) * best_acc]


def bits_filter(results):
    lowest_bits = min(result.bits for result in results)
    return [result for result in results if result.bits == lowest_bits]


def selection_key(result):
    # sparsest first, then larger z_threshold, smaller quanta, smaller kappa
    z_threshold = result.z_threshold if result.z_threshold is not None else 0.0
    return (-result.sparsity, -z_threshold, result.quanta, result.kappa)


def sparsest_select(results, audit=None, best_acc=None):
    if not results:
        raise SelectionError('no candidate left to select')

    chosen = min(results, key=selection_key)
    audit = dict(audit or {})
    audit['chosen'] = 1
    best_acc = chosen.accuracy if best_acc is None else best_acc
    return SelectionResult(chosen, audit, best_acc)


def select_from_grid(results, gamma):
    viable = viable_candidates(results)
    gamma_set = gamma_filter(results, gamma)
    bits_set = bits_filter(gamma_set)
    audit = {
        'candidates': len(results),
        'viable': len(viable),
        'gamma': len(gamma_set),
        'bits': len(bits_set)
    }
    best_acc = max(result.accuracy for result in viable)

    selection = sparsest_select(bits_set, audit, best_acc)
    logger.info(
        'selection audit: %s; chosen kappa=%s z_threshold=%s quanta=%s',
        selection.audit, selection.chosen.kappa, selection.chosen.z_threshold, selection.chosen.quanta
    )
    return replace(selection, candidates=list(results))


def run_selection(split, grid, train_cfg, jobs=1):
    results = build_grid(split.train, split.holdout, grid, train_cfg, jobs)
    return select_from_grid(results, grid.gamma)


def save_grid(result_path, results):
    return save_csv_result(result_path, GRID_HEADER, [result.row() for result in results])


def save_selection(output_dir, selection):
    save_grid(output_dir / 'grid.csv', selection.candidates)
    failures = [
        {**result.params, 'error': result.error}
        for result in selection.candidates if result.status == STATUS_FAILED
    ]
    save_json_result(output_dir / 'selection.json', {**selection.to_document(), 'failures': failures})
