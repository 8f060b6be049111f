from pathlib import Path
import os

from utils.errors import ConfigError


BASE_DIR = Path(__file__).resolve().parent
OUTPUT_DIR = Path(os.environ.get('SHIFTCLASS_OUTPUT_DIR', str(BASE_DIR / 'runs')))

JOBS = int(os.environ.get('SHIFTCLASS_JOBS', '1'))
LOG_LEVEL = os.environ.get('SHIFTCLASS_LOG_LEVEL', 'INFO').upper()

TRAIN_ATOMS = int(os.environ.get('SHIFTCLASS_TRAIN_ATOMS', '50'))
TRAIN_LEARNING_RATE = float(os.environ.get('SHIFTCLASS_TRAIN_LR', '0.1'))
TRAIN_EPOCHS = int(os.environ.get('SHIFTCLASS_TRAIN_EPOCHS', '300'))
TRAIN_BATCH_SIZE = int(os.environ.get('SHIFTCLASS_TRAIN_BATCH_SIZE', '64'))
TRAIN_REGULARIZER = float(os.environ.get('SHIFTCLASS_TRAIN_REGULARIZER', '0.001'))
TRAIN_INIT_SCALE = float(os.environ.get('SHIFTCLASS_TRAIN_INIT_SCALE', '2.0'))

KERNEL_MIN_FRACTION_BITS = int(os.environ.get('SHIFTCLASS_KERNEL_MIN_FRACTION_BITS', '8'))
ACCUMULATOR_LIMIT_BITS = int(os.environ.get('SHIFTCLASS_ACCUMULATOR_LIMIT_BITS', '62'))
KERNEL_CHUNK_SIZE = int(os.environ.get('SHIFTCLASS_KERNEL_CHUNK_SIZE', '32'))

MNIST_DIR = os.environ.get('SHIFTCLASS_MNIST_DIR', '')

CONFIG_SECTIONS = ('data', 'train', 'grid', 'sweep', 'compress', 'eval', 'report')
CONFIG_TOP_LEVEL_KEYS = ('seed', 'output', 'jobs')


def parse_config_lines(config_lines, source='<config>'):
    config_items = {}

    for line_number, raw_line in enumerate(config_lines, start=1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'{source}:{line_number}: expected key=value, got {raw_line.strip()!r}')

        config_key, config_value = (part.strip() for part in line.split('=', 1))
        check_config_key(config_key, f'{source}:{line_number}')
        config_items[config_key] = config_value

    return config_items


def check_config_key(config_key, where):
    section = config_key.split('.', 1)[0] if '.' in config_key else None
    if section is None and config_key not in CONFIG_TOP_LEVEL_KEYS:
        raise ConfigError(f'{where}: unknown key {config_key!r}')
    if section is not None and section not in CONFIG_SECTIONS:
        raise ConfigError(f'{where}: unknown section {section!r}')


def load_config_file(config_path):
    config_path = Path(config_path)
    if not config_path.is_file():
        raise ConfigError(f'설정 파일을 찾을 수 없습니다: {config_path}', path=str(config_path))

    return parse_config_lines(config_path.read_text(encoding='utf-8').splitlines(), str(config_path))


def read_config_value(config_items, config_key, default=None, cast=str):
    if config_key not in config_items or config_items[config_key] == '':
        return default

    try:
        if cast is bool:
            return str(config_items[config_key]).lower() in ('1', 'true', 'yes', 'on')
        return cast(config_items[config_key])
    except ValueError:
        raise ConfigError(f'{config_key}: cannot read {config_items[config_key]!r} as {cast.__name__}') from None


def read_config_list(config_items, config_key, default=None, cast=str):
    if config_key not in config_items or config_items[config_key] == '':
        return default

    try:
        return [cast(item.strip()) for item in str(config_items[config_key]).split(',') if item.strip()]
    except ValueError:
        raise ConfigError(f'{config_key}: cannot read {config_items[config_key]!r} as a list of {cast.__name__}') from None
