"""Dataset assembly from `data.*` config keys.

A task is a picklable callable `task(seed) -> (train_samples, test_samples)`:
the seed varies the training draw only, so repeats share one test set.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

import config
from services.datasets import build_texture_task, filter_classes, load_cifar10, load_idx, load_pgm, synth_textures
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

DATA_TYPES = ('synthetic-texture', 'texture', 'mnist', 'cifar10')
MNIST_FILE_NAMES = {
    'data.train_images': 'train-images-idx3-ubyte',
    'data.train_labels': 'train-labels-idx1-ubyte',
    'data.test_images': 't10k-images-idx3-ubyte',
    'data.test_labels': 't10k-labels-idx1-ubyte'
}


@dataclass(frozen=True, eq=False)
class TextureTask:
    images: tuple
    patch_size: int
    count: int
    test_seed: int

    def __call__(self, seed):
        return build_texture_task(list(self.images), self.patch_size, self.count, seed, self.test_seed)


@dataclass(frozen=True, eq=False)
class SampledTask:
    train_pool: tuple
    test: tuple
    train_limit: Optional[int] = None

    def __call__(self, seed):
        if self.train_limit is None or self.train_limit >= len(self.train_pool):
            return list(self.train_pool), list(self.test)

        chosen = np.sort(np.random.default_rng(seed).choice(len(self.train_pool), self.train_limit, replace=False))
        return [self.train_pool[index] for index in chosen], list(self.test)


def limit_samples(samples, limit):
    return samples if limit is None else samples[:limit]


def texture_task(run, images):
    return TextureTask(
        images=tuple(images),
        patch_size=run.value('data.patch_size', 12, int),
        count=run.value('data.patch_count', 500, int),
        test_seed=run.derived_seed('test-patches')
    )


def find_mnist_file(run, config_key):
    configured_path = run.value(config_key)
    if configured_path:
        return Path(configured_path)

    mnist_dir = Path(run.value('data.dir', config.MNIST_DIR))
    file_name = MNIST_FILE_NAMES[config_key]
    gzipped_path = mnist_dir / f'{file_name}.gz'
    return gzipped_path if gzipped_path.is_file() else mnist_dir / file_name


def select_classes(run, samples):
    class_names = run.values('data.classes')
    return filter_classes(samples, class_names) if class_names else samples


def mnist_task(run):
    train_pool = select_classes(run, load_idx(find_mnist_file(run, 'data.train_images'), find_mnist_file(run, 'data.train_labels')))
    test = select_classes(run, load_idx(find_mnist_file(run, 'data.test_images'), find_mnist_file(run, 'data.test_labels')))
    return SampledTask(
        tuple(train_pool),
        tuple(limit_samples(test, run.value('data.test_limit', None, int))),
        run.value('data.train_limit', None, int)
    )


def cifar10_task(run):
    train_batches = run.values('data.train_batches')
    test_batches = run.values('data.test_batches')
    if not train_batches or not test_batches:
        raise ConfigError('cifar10 데이터에는 data.train_batches 와 data.test_batches 가 필요합니다')

    train_pool = select_classes(run, load_cifar10(train_batches))
    test = select_classes(run, load_cifar10(test_batches))
    return SampledTask(
        tuple(train_pool),
        tuple(limit_samples(test, run.value('data.test_limit', None, int))),
        run.value('data.train_limit', None, int)
    )


def load_task(run):
    data_type = run.value('data.type', 'synthetic-texture')
    if data_type not in DATA_TYPES:
        raise ConfigError(f'unknown data.type {data_type!r}; expected one of {", ".join(DATA_TYPES)}')

    if data_type == 'synthetic-texture':
        images = synth_textures(
            run.derived_seed('textures'),
            class_count=run.value('data.class_count', 2, int),
            size=run.value('data.image_size', 256, int)
        )
        task = texture_task(run, images)
    elif data_type == 'texture':
        texture_paths = run.values('data.textures', [])
        if len(texture_paths) < 2:
            raise ConfigError('texture 데이터에는 data.textures 에 두 개 이상의 PGM 경로가 필요합니다')
        task = texture_task(run, [load_pgm(texture_path) for texture_path in texture_paths])
    elif data_type == 'mnist':
        task = mnist_task(run)
    else:
        task = cifar10_task(run)

    logger.info('prepared %s task', data_type)
    return task
