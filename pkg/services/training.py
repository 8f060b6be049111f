"""Mini-batch subgradient training of the transform/soft-threshold classifier.

Objective over samples x_i with labels y_i in {-1, +1} (one column per class
in the one-vs-all case):

    sum_i hinge(y_i w^T h(D^T x_i)) + v/2 ||w||^2 + kappa/2 ||D||^2

with h(z) = max(0, z - alpha) and ||D||^2 the sum of squared entries.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

import config
from services.model import CompressionMetadata, Dictionary, Hyperplane, ModelBundle, SparsityParam
from utils.errors import ConfigError, DimensionError, DivergenceError, TrainingError
from utils.result_files import save_csv_result

logger = logging.getLogger(__name__)

INIT_SCHEMES = ('samples', 'gaussian')
TRACE_HEADER = ('epoch', 'objective', 'norm_D', 'norm_w', 'train_acc')


@dataclass(frozen=True)
class TrainConfig:
    atoms: int = config.TRAIN_ATOMS
    alpha: float = 1.0
    regularizer: float = config.TRAIN_REGULARIZER
    kappa: float = 0.0
    learning_rate: float = config.TRAIN_LEARNING_RATE
    epochs: int = config.TRAIN_EPOCHS
    batch_size: int = config.TRAIN_BATCH_SIZE
    seed: int = 0
    init_scheme: str = 'samples'
    init_scale: float = config.TRAIN_INIT_SCALE

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f'learning rate must be positive, got {self.learning_rate}')
        if self.atoms < 1:
            raise ConfigError(f'atom count must be at least 1, got {self.atoms}')
        if not self.kappa >= 0:
            raise ConfigError(f'kappa must be nonnegative, got {self.kappa}')
        if not self.regularizer >= 0:
            raise ConfigError(f'regularizer must be nonnegative, got {self.regularizer}')
        if self.batch_size < 1:
            raise ConfigError(f'batch size must be at least 1, got {self.batch_size}')
        if self.epochs < 0:
            raise ConfigError(f'epochs must be nonnegative, got {self.epochs}')
        if not self.alpha > 0:
            raise ConfigError(f'alpha must be positive, got {self.alpha}')
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigError(f'unknown init scheme {self.init_scheme!r}')


@dataclass
class TrainTrace:
    objective: list = field(default_factory=list)
    norm_dictionary: list = field(default_factory=list)
    norm_hyperplane: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)

    def rows(self):
        return [
            (epoch + 1, objective, norm_dictionary, norm_hyperplane, train_accuracy)
            for epoch, (objective, norm_dictionary, norm_hyperplane, train_accuracy) in enumerate(zip(
                self.objective, self.norm_dictionary, self.norm_hyperplane, self.train_accuracy
            ))
        ]


def save_trace(trace_path, trace):
    return save_csv_result(trace_path, TRACE_HEADER, trace.rows())


def hinge(x):
    return np.maximum(0.0, 1.0 - np.asarray(x, dtype=np.float64))


def as_matrix(values):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        return values[:, None]
    return values


def dictionary_entries(D):
    return D.entries if isinstance(D, Dictionary) else np.asarray(D, dtype=np.float64)


def features(D, x, alpha):
    entries = dictionary_entries(D)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != entries.shape[0]:
        raise DimensionError(f'input dimension {x.shape[-1]} does not match dictionary rows {entries.shape[0]}')

    return np.maximum(0.0, x @ entries - alpha)


def check_labels(y):
    y = as_matrix(y)
    if not np.all((y == 1) | (y == -1)):
        raise DimensionError('labels must be -1 or +1')
    return y


def check_shapes(D, W, X, Y):
    if X.ndim != 2 or X.shape[1] != D.shape[0]:
        raise DimensionError(f'samples of shape {X.shape} do not match dictionary rows {D.shape[0]}')
    if W.shape[0] != D.shape[1]:
        raise DimensionError(f'hyperplane rows {W.shape[0]} do not match {D.shape[1]} atoms')
    if Y.shape != (X.shape[0], W.shape[1]):
        raise DimensionError(f'labels of shape {Y.shape} do not match {X.shape[0]} samples x {W.shape[1]} classes')


def objective(D, w, X, y, v, kappa, alpha=1.0):
    D = dictionary_entries(D)
    W = as_matrix(w)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = check_labels(y)
    check_shapes(D, W, X, Y)

    margins = Y * (features(D, X, alpha) @ W)
    return float(hinge(margins).sum() + 0.5 * v * np.sum(W ** 2) + 0.5 * kappa * np.sum(D ** 2))


def subgradients(D, w, batch, v, kappa, alpha=1.0):
    """Subgradients of `objective` over one batch (X, y).

    Kinks take the zero subgradient: a margin of exactly 1 is inactive and so
    is an atom response of exactly alpha.
    """
    D = dictionary_entries(D)
    W = as_matrix(w)
    X, y = batch
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = check_labels(y)
    check_shapes(D, W, X, Y)

    responses = X @ D
    F = np.maximum(0.0, responses - alpha)
    active_atoms = responses > alpha
    margins = Y * (F @ W)
    loss_weights = np.where(margins < 1.0, -Y, 0.0)

    gradient_w = F.T @ loss_weights + v * W
    gradient_D = X.T @ ((loss_weights @ W.T) * active_atoms) + kappa * D

    if np.ndim(w) == 1:
        gradient_w = gradient_w[:, 0]
    return gradient_D, gradient_w


def one_vs_all_targets(labels, class_labels):
    labels = np.asarray(labels)
    if len(class_labels) == 2:
        return np.where(labels == class_labels[1], 1.0, -1.0)[:, None]
    return np.where(labels[:, None] == np.asarray(class_labels)[None, :], 1.0, -1.0)


def predict_scores(D, W, X, alpha):
    return features(D, X, alpha) @ as_matrix(W)


def decide(scores, class_labels):
    scores = as_matrix(scores)
    class_labels = np.asarray(class_labels)
    if scores.shape[1] == 1:
        return np.where(scores[:, 0] > 0, class_labels[1], class_labels[0])
    return class_labels[np.argmax(scores, axis=1)]


def accuracy(predicted, labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(np.asarray(predicted) == labels))


def confusion_matrix(predicted, labels, class_labels):
    """Counts with true classes on rows and predicted classes on columns."""
    index_of = {label: index for index, label in enumerate(class_labels)}
    counts = np.zeros((len(class_labels), len(class_labels)), dtype=np.int64)
    for true_label, predicted_label in zip(np.asarray(labels).tolist(), np.asarray(predicted).tolist()):
        if true_label in index_of:
            counts[index_of[true_label], index_of[predicted_label]] += 1
    return counts


def initial_dictionary(X, cfg, rng):
    if cfg.init_scheme == 'gaussian':
        atoms = rng.standard_normal((X.shape[1], cfg.atoms))
    else:
        atoms = X[rng.integers(0, X.shape[0], size=cfg.atoms)].T.copy()

    norms = np.linalg.norm(atoms, axis=0, keepdims=True)
    norms[norms == 0] = 1.0
    return cfg.init_scale * atoms / norms


def run_training(X, Y, class_labels, cfg, epoch_labels):
    X = np.asarray(X, dtype=np.float64)
    sample_count = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    D = initial_dictionary(X, cfg, rng)
    W = np.zeros((cfg.atoms, Y.shape[1]))
    trace = TrainTrace()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(sample_count)
        with np.errstate(over='ignore', invalid='ignore'):
            for start in range(0, sample_count, cfg.batch_size):
                batch_indices = order[start:start + cfg.batch_size]
                gradient_D, gradient_W = subgradients(
                    D, W, (X[batch_indices], Y[batch_indices]), cfg.regularizer, cfg.kappa, cfg.alpha
                )
                step = cfg.learning_rate / batch_indices.size
                D = D - step * gradient_D
                W = W - step * gradient_W

            objective_value = objective(D, W, X, Y, cfg.regularizer, cfg.kappa, cfg.alpha)

        if not np.isfinite(objective_value):
            raise DivergenceError(f'objective became non-finite at epoch {epoch}', epoch=epoch)

        predicted = decide(predict_scores(D, W, X, cfg.alpha), class_labels)
        trace.objective.append(objective_value)
        trace.norm_dictionary.append(float(np.linalg.norm(D)))
        trace.norm_hyperplane.append(float(np.linalg.norm(W)))
        trace.train_accuracy.append(accuracy(predicted, epoch_labels))
        logger.debug('epoch %d objective %.6f train_acc %.4f', epoch, objective_value, trace.train_accuracy[-1])

    model = ModelBundle(
        dictionary=Dictionary(D),
        hyperplane=Hyperplane(W, cfg.regularizer),
        sparsity=SparsityParam('fixed-normalized', cfg.alpha),
        metadata=CompressionMetadata(kappa=cfg.kappa if cfg.kappa > 0 else None),
        class_labels=tuple(class_labels)
    )
    if trace.objective:
        logger.info(
            'trained %d atoms on %d samples: objective %.4f, train_acc %.4f',
            cfg.atoms, sample_count, trace.objective[-1], trace.train_accuracy[-1]
        )
    return model, trace


def sorted_class_labels(labels):
    class_labels = [int(label) for label in np.unique(np.asarray(labels))]
    if len(class_labels) < 2:
        raise TrainingError(f'training needs at least two classes, got {class_labels}')
    return class_labels


def train(X, y, cfg):
    class_labels = sorted_class_labels(y)
    if len(class_labels) != 2:
        raise TrainingError(f'binary training needs exactly two classes, got {len(class_labels)}')

    Y = one_vs_all_targets(y, class_labels)
    return run_training(X, Y, class_labels, cfg, np.asarray(y))


def train_multiclass(X, labels, cfg):
    """One-vs-all training; two classes reduce to `train` with columns [-w, w]."""
    class_labels = sorted_class_labels(labels)
    if len(class_labels) == 2:
        model, trace = train(X, labels, cfg)
        weights = model.hyperplane.weights[:, 0]
        model = replace(model, hyperplane=Hyperplane(np.stack([-weights, weights], axis=1), model.hyperplane.v))
        return model, trace

    Y = one_vs_all_targets(labels, class_labels)
    return run_training(X, Y, class_labels, cfg, np.asarray(labels))


def train_model(X, labels, cfg):
    if len(np.unique(np.asarray(labels))) == 2:
        return train(X, labels, cfg)
    return train_multiclass(X, labels, cfg)
