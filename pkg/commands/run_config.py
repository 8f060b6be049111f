import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import config
from config import load_config_file, parse_config_lines, read_config_list, read_config_value
from services.selection import DEFAULT_GAMMA, DEFAULT_KAPPAS, DEFAULT_QUANTA, GridSpec
from services.training import TrainConfig
from utils.errors import ConfigError
from utils.seeds import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    command: str
    config_items: dict
    seed: Optional[int]
    output_dir: Path
    jobs: int = 1

    def value(self, config_key, default=None, cast=str):
        return read_config_value(self.config_items, config_key, default, cast)

    def values(self, config_key, default=None, cast=str):
        return read_config_list(self.config_items, config_key, default, cast)

    def require_seed(self):
        if self.seed is None:
            raise ConfigError(f'{self.command} 명령에는 seed 값이 필요합니다 (--seed 또는 seed=...)')
        return self.seed

    def derived_seed(self, role):
        return derive_seed(self.seed or 0, role)

    def seeds(self, *roles):
        return {'master': self.seed, **{role: self.derived_seed(role) for role in roles}}


def build_run_config(command, config_path=None, overrides=None, flag_items=None):
    """Config file values, then --set overrides, then dedicated flags."""
    config_items = load_config_file(config_path) if config_path else {}
    config_items.update(parse_config_lines(overrides or [], '--set'))
    config_items.update({
        config_key: str(config_value)
        for config_key, config_value in (flag_items or {}).items()
        if config_value is not None
    })

    seed = read_config_value(config_items, 'seed', None, int)
    output_dir = Path(read_config_value(config_items, 'output', str(config.OUTPUT_DIR / command)))
    jobs = read_config_value(config_items, 'jobs', config.JOBS, int)
    if jobs < 1:
        raise ConfigError(f'jobs must be at least 1, got {jobs}')

    logger.debug('run config for %s: %s', command, config_items)
    return RunConfig(command, config_items, seed, output_dir, jobs)


def train_config(run, seed=None):
    return TrainConfig(
        atoms=run.value('train.atoms', config.TRAIN_ATOMS, int),
        alpha=run.value('train.alpha', 1.0, float),
        regularizer=run.value('train.regularizer', config.TRAIN_REGULARIZER, float),
        kappa=run.value('train.kappa', 0.0, float),
        learning_rate=run.value('train.lr', config.TRAIN_LEARNING_RATE, float),
        epochs=run.value('train.epochs', config.TRAIN_EPOCHS, int),
        batch_size=run.value('train.batch_size', config.TRAIN_BATCH_SIZE, int),
        seed=run.derived_seed('train') if seed is None else seed,
        init_scheme=run.value('train.init', 'samples'),
        init_scale=run.value('train.init_scale', config.TRAIN_INIT_SCALE, float)
    )


def grid_spec(run):
    return GridSpec(
        kappas=tuple(run.values('grid.kappas', DEFAULT_KAPPAS, float)),
        quanta=tuple(run.values('grid.quanta', DEFAULT_QUANTA, int)),
        gamma=run.value('grid.gamma', DEFAULT_GAMMA, float),
        threshold_limit=run.value('grid.threshold_limit', None, int)
    )
