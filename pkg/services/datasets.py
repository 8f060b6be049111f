"""Dataset loading and preparation.

Raw samples keep the integer pixels (the raw-domain input of the shift
kernel); normalized samples are the unit-norm floating-point view used for
training and the float reference path.
"""
import gzip
import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from utils.errors import (
    ConsistencyError,
    DataFormatError,
    DatasetNotFoundError,
    DegenerateSampleError,
    DimensionError,
    LengthError,
    StratificationError,
)

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
CIFAR10_RECORD_BYTES = 3073
CIFAR10_PIXELS = 3072
CIFAR10_LABEL_NAMES = ('airplane', 'automobile', 'bird', 'cat', 'deer', 'dog', 'frog', 'horse', 'ship', 'truck')
DEFAULT_PIXEL_MAX = 255
TRAIN_PERCENT = 80
MIN_SAMPLES_PER_CLASS = 5
NORMALIZE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class RawSample:
    pixels: np.ndarray
    label: int
    source_id: str = ''
    pixel_max: int = DEFAULT_PIXEL_MAX

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.int64).ravel()
        if pixels.size and (pixels.min() < 0 or pixels.max() > self.pixel_max):
            raise DataFormatError(f'sample {self.source_id!r} has pixels outside [0, {self.pixel_max}]')
        pixels.setflags(write=False)
        object.__setattr__(self, 'pixels', pixels)
        object.__setattr__(self, 'label', int(self.label))


@dataclass(frozen=True, eq=False)
class NormalizedSample:
    values: np.ndarray
    label: int
    source_id: str = ''

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    holdout: list
    test: list = field(default_factory=list)
    seed: int = 0


def read_dataset_bytes(path):
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(f'데이터 파일을 찾을 수 없습니다: {path}', path=str(path))

    if path.suffix == '.gz':
        with gzip.open(path, 'rb') as dataset_file:
            return dataset_file.read()

    return path.read_bytes()


def load_idx(images_path, labels_path):
    image_bytes = read_dataset_bytes(images_path)
    label_bytes = read_dataset_bytes(labels_path)

    if len(image_bytes) < 16 or len(label_bytes) < 8:
        raise LengthError('IDX header is truncated')

    image_magic, image_count, row_count, column_count = struct.unpack('>IIII', image_bytes[:16])
    label_magic, label_count = struct.unpack('>II', label_bytes[:8])
    if image_magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f'Magic number mismatch in image file ({image_magic})')
    if label_magic != IDX_LABEL_MAGIC:
        raise DataFormatError(f'Magic number mismatch in label file ({label_magic})')
    if image_count != label_count:
        raise ConsistencyError(f'image file has {image_count} records, label file has {label_count}')

    dimension = row_count * column_count
    if len(image_bytes) - 16 < image_count * dimension:
        raise LengthError(f'image payload holds {len(image_bytes) - 16} bytes, header needs {image_count * dimension}')
    if len(label_bytes) - 8 < label_count:
        raise LengthError(f'label payload holds {len(label_bytes) - 8} bytes, header needs {label_count}')

    images = np.frombuffer(image_bytes, dtype=np.uint8, count=image_count * dimension, offset=16)
    images = images.reshape(image_count, dimension)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, count=label_count, offset=8)
    source_prefix = Path(images_path).name

    logger.info('loaded %d IDX samples of dimension %d from %s', image_count, dimension, images_path)
    return [
        RawSample(images[index], int(labels[index]), f'{source_prefix}:{index}')
        for index in range(image_count)
    ]


def load_cifar10(batch_paths):
    samples = []

    for batch_path in batch_paths:
        batch_bytes = read_dataset_bytes(batch_path)
        if len(batch_bytes) == 0 or len(batch_bytes) % CIFAR10_RECORD_BYTES:
            raise DataFormatError(f'{batch_path}: size {len(batch_bytes)} is not a multiple of {CIFAR10_RECORD_BYTES}')

        records = np.frombuffer(batch_bytes, dtype=np.uint8).reshape(-1, CIFAR10_RECORD_BYTES)
        if records[:, 0].max() > 9:
            raise DataFormatError(f'{batch_path}: label outside [0, 9]')

        source_prefix = Path(batch_path).name
        samples.extend(
            RawSample(record[1:], int(record[0]), f'{source_prefix}:{index}')
            for index, record in enumerate(records)
        )
        logger.info('loaded %d CIFAR-10 records from %s', len(records), batch_path)

    return samples


def resolve_class_labels(class_names):
    labels = []
    for class_name in class_names:
        class_name = str(class_name).strip().lower()
        if class_name.isdigit():
            labels.append(int(class_name))
        elif class_name in CIFAR10_LABEL_NAMES:
            labels.append(CIFAR10_LABEL_NAMES.index(class_name))
        else:
            raise DataFormatError(f'unknown class {class_name!r}')
    return labels


def filter_classes(samples, class_names):
    wanted_labels = set(resolve_class_labels(class_names))
    return [sample for sample in samples if sample.label in wanted_labels]


def load_pgm(path):
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(f'텍스처 이미지를 찾을 수 없습니다: {path}', path=str(path))

    try:
        with PILImage.open(path) as image:
            if image.mode not in ('L', 'P', '1'):
                raise DataFormatError(f'{path}: expected a grayscale image, got mode {image.mode}')
            return np.asarray(image.convert('L'), dtype=np.int64)
    except (OSError, SyntaxError) as error:
        raise DataFormatError(f'{path}: cannot read image ({error})') from None


def extract_patches(image, patch_size, count, seed, label=0, source_prefix='patch', row_offset=0):
    image = np.asarray(image)
    height, width = image.shape
    if height < patch_size or width < patch_size:
        raise DimensionError(f'image {height}x{width} is smaller than patch {patch_size}x{patch_size}')

    rng = np.random.default_rng(seed)
    rows = rng.integers(0, height - patch_size + 1, size=count)
    columns = rng.integers(0, width - patch_size + 1, size=count)

    return [
        RawSample(
            image[row:row + patch_size, column:column + patch_size].ravel(),
            label,
            f'{source_prefix}:r{row + row_offset}c{column}'
        )
        for row, column in zip(rows, columns)
    ]


def disjoint_texture_split(image, patch_size=12):
    image = np.asarray(image)
    height = image.shape[0]
    if height < 2 * patch_size:
        raise DimensionError(f'image height {height} cannot hold two disjoint {patch_size}-pixel regions')

    half = height // 2
    return image[:half].copy(), image[half:].copy()


def synth_textures(seed, class_count=2, size=256, pixel_max=DEFAULT_PIXEL_MAX):
    """Band-pass filtered noise images, one per class.

    Class k keeps the radial frequency band centred on 0.05 + 0.2 * k cycles
    per pixel (bandwidth 0.04), so the classes differ in their dominant band.
    """
    rng = np.random.default_rng(seed)
    frequencies = np.fft.fftfreq(size)
    radial_frequency = np.hypot(frequencies[:, None], frequencies[None, :])
    images = []

    for class_index in range(class_count):
        centre = 0.05 + 0.2 * class_index
        band = np.exp(-0.5 * ((radial_frequency - centre) / 0.04) ** 2)
        band[0, 0] = 0.0
        noise = rng.standard_normal((size, size))
        texture = np.real(np.fft.ifft2(np.fft.fft2(noise) * band))
        texture = (texture - texture.mean()) / texture.std()
        pixels = np.clip(np.rint(pixel_max / 2 + texture * pixel_max / 6), 0, pixel_max)
        images.append(pixels.astype(np.int64))

    return images


def build_texture_task(images, patch_size=12, count=500, seed=0, test_seed=0):
    train_samples = []
    test_samples = []
    train_rng = np.random.default_rng(seed)
    test_rng = np.random.default_rng(test_seed)

    for label, image in enumerate(images):
        train_region, test_region = disjoint_texture_split(image, patch_size)
        train_samples.extend(extract_patches(
            train_region, patch_size, count, int(train_rng.integers(2 ** 63)), label, f'class{label}-train'
        ))
        # the test region is fixed across repeats: only the training draw varies
        test_samples.extend(extract_patches(
            test_region, patch_size, count, int(test_rng.integers(2 ** 63)), label, f'class{label}-test', row_offset=train_region.shape[0]
        ))

    return train_samples, test_samples


def normalize(sample, zero_mean=False):
    values = np.asarray(sample.pixels if isinstance(sample, RawSample) else sample.values, dtype=np.float64)
    if zero_mean:
        values = values - values.mean()

    norm = float(np.linalg.norm(values))
    if not norm > NORMALIZE_TOLERANCE:
        raise DegenerateSampleError(f'sample {sample.source_id!r} cannot be normalized (zero vector)')

    return NormalizedSample(values / norm, sample.label, sample.source_id)


def stack_pixels(samples):
    if not samples:
        return np.zeros((0, 0), dtype=np.int64)
    return np.stack([sample.pixels for sample in samples]).astype(np.int64)


def stack_labels(samples):
    return np.array([sample.label for sample in samples], dtype=np.int64)


def normalize_rows(pixels, zero_mean=False, allow_zero=False):
    values = np.asarray(pixels, dtype=np.float64)
    if zero_mean:
        values = values - values.mean(axis=1, keepdims=True)

    norms = np.linalg.norm(values, axis=1, keepdims=True)
    degenerate = ~(norms[:, 0] > NORMALIZE_TOLERANCE)
    if degenerate.any() and not allow_zero:
        raise DegenerateSampleError(f'{int(degenerate.sum())} samples cannot be normalized (zero vector)')

    return np.divide(values, norms, out=np.zeros_like(values), where=~degenerate[:, None])


def split_counts(class_sizes):
    """Per-class train counts summing to ceil(80% of all rows), each class keeping one holdout row."""
    total = -(-sum(class_sizes) * TRAIN_PERCENT // 100)
    counts = [size * TRAIN_PERCENT // 100 for size in class_sizes]
    # largest remainder first, ties in class order
    order = sorted(range(len(class_sizes)), key=lambda index: (-(class_sizes[index] * TRAIN_PERCENT % 100), index))
    extra = total - sum(counts)
    for index in order:
        if extra <= 0:
            break
        if counts[index] < class_sizes[index] - 1:
            counts[index] += 1
            extra -= 1
    return counts


def split_80_20(samples, seed, test=None):
    rng = np.random.default_rng(seed)
    labels = stack_labels(samples)
    train_indices = []
    holdout_indices = []

    class_members = []
    for label in np.unique(labels):
        class_indices = np.flatnonzero(labels == label)
        if class_indices.size < MIN_SAMPLES_PER_CLASS:
            raise StratificationError(
                f'class {label} has {class_indices.size} samples, need at least {MIN_SAMPLES_PER_CLASS}'
            )
        class_members.append(rng.permutation(class_indices))

    for shuffled, train_count in zip(class_members, split_counts([len(members) for members in class_members])):
        train_indices.extend(shuffled[:train_count].tolist())
        holdout_indices.extend(shuffled[train_count:].tolist())

    return DatasetSplit(
        train=[samples[index] for index in sorted(train_indices)],
        holdout=[samples[index] for index in sorted(holdout_indices)],
        test=list(test or []),
        seed=seed
    )


def dataset_digest(samples):
    digest = hashlib.sha256()
    for sample in samples:
        digest.update(np.ascontiguousarray(sample.pixels, dtype=np.int64).tobytes())
        digest.update(int(sample.label).to_bytes(8, 'big', signed=True))
    return digest.hexdigest()
