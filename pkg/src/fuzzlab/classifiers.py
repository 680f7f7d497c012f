"""Model configurations, deterministic training, prediction and checkpoints."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import DatasetSplit, Sample
from .errors import ConfigError, DataError, EmptyClass, NonFiniteLoss, ParseError, ShapeMismatch
from .nn import (
    LSTM,
    Conv2D,
    Dense,
    Embedding,
    Flatten,
    MaxPool2D,
    ReLU,
    Sequential,
    bce_with_logits,
    hinge,
    sigmoid,
)
from .rng import make_rng

FAMILIES = ("mlp", "lstm", "cnn", "svm")

DEFAULT_FAMILY = {
    "typeseq": "lstm",
    "bytevec": "mlp",
    "bytemat": "cnn",
    "headervec": "mlp",
}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and training hyperparameters of one classifier."""

    family: str
    input_shape: tuple[int, ...]
    hidden: tuple[int, ...] = (64, 32)  # mlp
    vocab: int = 0  # lstm: type ids 0..vocab-1
    embed_dim: int = 16
    lstm_units: int = 32
    head_units: int = 32  # lstm dense layer
    filters: tuple[int, ...] = (8, 16)
    kernel: int = 3
    conv_dense: int = 64
    scale: float = 255.0  # divisor for non-embedded inputs
    seed: int = 0
    epochs: int = 300
    learning_rate: float = 0.05
    batch_size: int = 64
    l2: float = 1e-3  # svm

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "filters", tuple(self.filters))
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        sizes = [*self.input_shape, *self.hidden, *self.filters, self.embed_dim, self.lstm_units]
        sizes += [self.head_units, self.conv_dense, self.kernel, self.epochs, self.batch_size]
        if not self.input_shape or any(v < 1 for v in sizes):
            raise ConfigError(f"model sizes must be positive: {self}")
        if self.learning_rate <= 0 or self.scale <= 0 or self.l2 < 0:
            raise ConfigError("learning rate and scale must be positive, l2 non-negative")
        if self.family == "lstm" and (self.vocab < 1 or len(self.input_shape) != 1):
            raise ConfigError("lstm needs a type vocabulary and 1-d windows")
        if self.family == "cnn":
            if len(self.input_shape) != 2:
                raise ConfigError("cnn needs 2-d inputs")
            h, w = self.input_shape
            if h >> len(self.filters) < 1 or w >> len(self.filters) < 1:
                raise ConfigError(f"input {self.input_shape} too small for {len(self.filters)} pools")

    @property
    def n_features(self) -> int:
        return int(np.prod(self.input_shape))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys {sorted(unknown)}")
        return cls(**data)


def config_for(
    representation: str,
    input_shape: tuple[int, ...],
    family: Optional[str] = None,
    vocab: int = 0,
    **overrides,
) -> ModelConfig:
    """Default configuration for a representation, optionally another family."""
    family = family or DEFAULT_FAMILY[representation]
    scale = 255.0
    if representation == "typeseq":
        if family not in ("lstm", "svm", "mlp"):
            raise ConfigError(f"{family} cannot read type sequences")
        scale = float(max(vocab - 1, 1))
    return ModelConfig(family, tuple(input_shape), vocab=vocab, scale=scale, **overrides)


@dataclass
class Weights:
    """Trained parameters in network order plus the training loss curve."""

    config: ModelConfig
    arrays: list[np.ndarray]
    loss_curve: list[float] = field(default_factory=list)


def build_network(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> Sequential:
    rng = rng if rng is not None else make_rng(config.seed)
    if config.family == "svm":
        return Sequential([Flatten(), Dense(config.n_features, 1, rng)])
    if config.family == "mlp":
        layers, n_in = [Flatten()], config.n_features
        for units in config.hidden:
            layers += [Dense(n_in, units, rng), ReLU()]
            n_in = units
        return Sequential([*layers, Dense(n_in, 1, rng)])
    if config.family == "lstm":
        return Sequential(
            [
                Embedding(config.vocab, config.embed_dim, rng),
                LSTM(config.embed_dim, config.lstm_units, rng),
                Dense(config.lstm_units, config.head_units, rng),
                ReLU(),
                Dense(config.head_units, 1, rng),
            ]
        )
    h, w = config.input_shape
    layers, c_in = [], 1
    for c_out in config.filters:
        layers += [Conv2D(c_in, c_out, config.kernel, rng), ReLU(), MaxPool2D()]
        c_in, h, w = c_out, h // 2, w // 2
    return Sequential(
        [
            *layers,
            Flatten(),
            Dense(c_in * h * w, config.conv_dense, rng),
            ReLU(),
            Dense(config.conv_dense, 1, rng),
        ]
    )


def prepare_inputs(config: ModelConfig, x: np.ndarray) -> np.ndarray:
    """Check shapes and turn raw sample values into network inputs.

    Raises:
        ShapeMismatch: samples do not match config.input_shape
    """
    x = np.asarray(x)
    if x.ndim < 1 or x.shape[1:] != config.input_shape:
        raise ShapeMismatch(f"expected samples of shape {config.input_shape}, got {x.shape[1:]}")
    if config.family == "lstm":
        if x.size and (x.min() < 0 or x.max() >= config.vocab):
            raise ShapeMismatch(f"type ids outside vocabulary of {config.vocab}")
        return x.astype(np.int64)
    x = x.astype(np.float64) / config.scale
    if config.family == "cnn":
        return x[:, None, :, :]
    return x


def samples_to_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([s.x for s in samples])
    y = np.array([s.y for s in samples], dtype=np.float64)
    return x, y


def _as_samples(data) -> list[Sample]:
    return list(data.train) if isinstance(data, DatasetSplit) else list(data)


def train_model(config: ModelConfig, data, verbose: bool = False) -> Weights:
    """Train a classifier with fixed-shuffle mini-batch gradient descent.

    Args:
        config: Model configuration; its seed drives init and batch order
        data: A DatasetSplit (its train part is used) or a sample list

    Raises:
        ShapeMismatch: samples do not fit the configuration
        NonFiniteLoss: training diverged
    """
    if config.family == "svm":
        return train_linear_svm(config, data, verbose)
    samples = _as_samples(data)
    if not samples:
        raise EmptyClass("empty training set")
    x_raw, y = samples_to_arrays(samples)
    x = prepare_inputs(config, x_raw)
    rng = make_rng(config.seed)
    net = build_network(config, rng)
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grad = bce_with_logits(net.forward(x[batch]), y[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at epoch {epoch}")
            net.backward(grad)
            for param, g in net.param_grads():
                param -= config.learning_rate * g
            total += loss * len(batch)
        curve.append(total / len(y))
        if verbose and (epoch + 1) % 50 == 0:
            print(f"  epoch {epoch + 1:>4} loss={curve[-1]:.5f}")
    return Weights(config, [p.copy() for _, p in net.named_params()], curve)


def train_linear_svm(config: ModelConfig, data, verbose: bool = False) -> Weights:
    """Linear SVM by full-batch subgradient descent on hinge loss + L2.

    The step size decays as learning_rate / sqrt(epoch + 1).
    """
    samples = _as_samples(data)
    if not samples:
        raise EmptyClass("empty training set")
    svm_config = config if config.family == "svm" else ModelConfig(**{**config.to_dict(), "family": "svm"})
    x_raw, y = samples_to_arrays(samples)
    x = prepare_inputs(svm_config, x_raw).reshape(len(y), -1)
    w = np.zeros((x.shape[1], 1))
    b = np.zeros(1)
    curve = []
    for epoch in range(svm_config.epochs):
        z = x @ w + b
        loss, grad = hinge(z, y)
        objective = loss + 0.5 * svm_config.l2 * float((w**2).sum())
        if not np.isfinite(objective):
            raise NonFiniteLoss(f"objective {objective} at epoch {epoch}")
        curve.append(objective)
        step = svm_config.learning_rate / np.sqrt(epoch + 1)
        w -= step * (x.T @ grad + svm_config.l2 * w)
        b -= step * grad.sum(axis=0)
        if verbose and (epoch + 1) % 50 == 0:
            print(f"  epoch {epoch + 1:>4} objective={objective:.5f}")
    return Weights(svm_config, [w, b], curve)


class Classifier:
    """A network rebuilt from weights, reusable across predictions."""

    def __init__(self, weights: Weights):
        self.config = weights.config
        self.net = build_network(self.config)
        params = self.net.named_params()
        if len(params) != len(weights.arrays):
            raise ShapeMismatch(f"{len(weights.arrays)} arrays for {len(params)} parameters")
        for (name, param), array in zip(params, weights.arrays):
            if param.shape != array.shape:
                raise ShapeMismatch(f"{name}: expected {param.shape}, got {array.shape}")
            param[...] = array

    def scores(self, x_raw: np.ndarray) -> np.ndarray:
        """Sigmoid scores for networks, raw margins for the svm."""
        x = prepare_inputs(self.config, x_raw)
        z = self.net.forward(x).reshape(-1)
        return z if self.config.family == "svm" else sigmoid(z)

    def labels(self, scores: np.ndarray) -> np.ndarray:
        cut = 0.0 if self.config.family == "svm" else 0.5
        return (scores >= cut).astype(np.int64)


def predict_batch(weights: Weights, samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Scores and labels for many samples."""
    model = Classifier(weights)
    if not samples:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    x, _ = samples_to_arrays(samples)
    scores = model.scores(x)
    return scores, model.labels(scores)


def predict(weights: Weights, sample: Sample) -> tuple[float, int]:
    scores, labels = predict_batch(weights, [sample])
    return float(scores[0]), int(labels[0])


def save_checkpoint(path: Path, weights: Weights) -> None:
    """Write weights as JSON; floats keep their shortest round-trip repr."""
    doc = {
        "config": weights.config.to_dict(),
        "layers": [
            {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}
            for a in weights.arrays
        ],
        "loss_curve": [float(v) for v in weights.loss_curve],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: Path) -> Weights:
    """Read a checkpoint written by save_checkpoint.

    Raises:
        ParseError: not a checkpoint file
        ShapeMismatch: stored arrays do not fit the stored configuration
    """
    try:
        doc = json.loads(Path(path).read_text())
        config = ModelConfig.from_dict(doc["config"])
        arrays = [
            np.array(layer["data"], dtype=np.float64).reshape(layer["shape"])
            for layer in doc["layers"]
        ]
        curve = list(doc.get("loss_curve", []))
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(str(path), 1, f"bad checkpoint: {e}") from None
    weights = Weights(config, arrays, curve)
    Classifier(weights)
    return weights
