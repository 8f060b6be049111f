import numpy as np
import pytest

from services.compression import compress_model
from services.datasets import RawSample, build_texture_task, normalize_rows, stack_labels, stack_pixels, synth_textures
from services.model import (
    RAW_NORM,
    CompressionMetadata,
    Dictionary,
    Hyperplane,
    ModelBundle,
    SparsityParam,
    build_pow2_matrix,
)
from services.training import TrainConfig, train_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_pow2(rng, rows, columns, exponent_low=-6, exponent_high=3, zero_fraction=0.3):
    signs = rng.choice([-1, 1], size=(rows, columns))
    signs = np.where(rng.random((rows, columns)) < zero_fraction, 0, signs)
    exponents = rng.integers(exponent_low, exponent_high + 1, size=(rows, columns))
    return build_pow2_matrix(signs, exponents)


def pow2_model(dictionary, hyperplane, class_labels=(-1, 1), quanta=None):
    return ModelBundle(
        dictionary=dictionary,
        hyperplane=hyperplane,
        sparsity=SparsityParam(RAW_NORM, 1.0),
        metadata=CompressionMetadata(quanta=quanta, powerized=True),
        class_labels=class_labels
    )


def real_model(D, W, class_labels=(-1, 1)):
    return ModelBundle(Dictionary(np.asarray(D, dtype=np.float64)), Hyperplane(W, 0.0), class_labels=class_labels)


@pytest.fixture
def random_pow2_model(rng):
    def build(n=16, N=6, C=1, exponent_low=-6, exponent_high=3, quanta=None):
        class_labels = (-1, 1) if C == 1 else tuple(range(C))
        return pow2_model(
            random_pow2(rng, n, N, exponent_low, exponent_high),
            random_pow2(rng, N, C, -4, 2, zero_fraction=0.1),
            class_labels,
            quanta
        )

    return build


@pytest.fixture
def raw_samples(rng):
    def build(count, n, pixel_max=255, label=0):
        return [
            RawSample(rng.integers(0, pixel_max + 1, size=n), label, f'random:{index}', pixel_max)
            for index in range(count)
        ]

    return build


@pytest.fixture(scope='session')
def texture_task():
    images = synth_textures(7, class_count=2, size=64)
    return build_texture_task(images, patch_size=6, count=60, seed=1, test_seed=2)


@pytest.fixture
def small_train_config():
    return TrainConfig(atoms=8, learning_rate=0.1, epochs=15, batch_size=16, regularizer=0.001, seed=3)


@pytest.fixture
def compressed_texture_model(texture_task, small_train_config):
    train_samples, _ = texture_task
    model, _ = train_model(normalize_rows(stack_pixels(train_samples)), stack_labels(train_samples), small_train_config)
    return model, compress_model(model, None, None)
