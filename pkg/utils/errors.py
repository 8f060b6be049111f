"""Error types shared by services and commands.

Services raise; the command layer turns `code` and `exit_status` into the
machine-readable error document and the process exit status.
"""

EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_SELECTION = 3
EXIT_MODEL_MODE = 4
EXIT_DATA_FORMAT = 5


class ShiftClassError(RuntimeError):
    code = 'runtime-error'
    exit_status = EXIT_RUNTIME

    def __init__(self, message, code=None, **details):
        super().__init__(message)
        if code:
            self.code = code
        self.details = details

    def to_document(self):
        document = {
            'success': False,
            'error': self.code,
            'message': str(self)
        }
        if self.details:
            document['details'] = self.details

        return document


class ConfigError(ShiftClassError):
    code = 'invalid-config'
    exit_status = EXIT_USAGE


class DatasetNotFoundError(ConfigError):
    code = 'dataset-not-found'


class DataFormatError(ShiftClassError, ValueError):
    code = 'data-format'
    exit_status = EXIT_DATA_FORMAT


class LengthError(DataFormatError):
    code = 'data-length'


class ConsistencyError(DataFormatError):
    code = 'data-consistency'


class DimensionError(DataFormatError):
    code = 'dimension-mismatch'


class DegenerateSampleError(DataFormatError):
    code = 'degenerate-sample'


class StratificationError(DataFormatError):
    code = 'stratification'


class TrainingError(ShiftClassError):
    code = 'training'


class DivergenceError(TrainingError):
    code = 'divergence'

    def __init__(self, message, epoch):
        super().__init__(message, epoch=epoch)
        self.epoch = epoch


class NonFiniteError(ShiftClassError, ValueError):
    code = 'non-finite'


class Pow2RangeError(ShiftClassError, ValueError):
    code = 'pow2-range'


class EmptyCandidatesError(ShiftClassError):
    code = 'empty-candidates'


class ScaleError(ShiftClassError):
    code = 'fixed-point-scale'


class AccumulatorOverflowError(ShiftClassError, OverflowError):
    code = 'accumulator-overflow'


class ModelModeError(ShiftClassError):
    code = 'model-not-powerized'
    exit_status = EXIT_MODEL_MODE


class SelectionError(ShiftClassError):
    code = 'no-viable-candidate'
    exit_status = EXIT_SELECTION
