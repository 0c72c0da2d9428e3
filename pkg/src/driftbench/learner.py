"""Linear and two-layer-MLP classifiers over fixed features, trained with momentum SGD."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .corpus import Sample, as_arrays

DEFAULT_HIDDEN = 64


class Strategy(Enum):
    """Learner-update rule applied at each timestamp."""

    NAPPING = "napping"
    FROM_SCRATCH = "from_scratch"
    FINETUNING = "finetuning"
    GDUMB_LIKE = "gdumb_like"


def parse_strategy(text: str) -> Strategy:
    canon = text.strip().lower().replace("-", "_")
    try:
        return Strategy(canon)
    except ValueError as exc:
        options = ", ".join(s.value for s in Strategy)
        raise ValueError(f"unknown strategy {text!r}; expected one of: {options}") from exc


@dataclass(frozen=True)
class Architecture:
    """Classifier shape: ``linear`` maps d -> C; ``mlp`` adds one ReLU hidden layer."""

    kind: str
    d: int
    C: int
    hidden: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"kind must be 'linear' or 'mlp', got {self.kind!r}")
        if self.d < 1 or self.C < 1:
            raise ValueError("d and C must be >= 1")
        if self.kind == "mlp" and (self.hidden is None or self.hidden < 1):
            raise ValueError("mlp requires hidden >= 1")

    def __str__(self) -> str:
        return "linear" if self.kind == "linear" else f"mlp:{self.hidden}"


def parse_architecture(text: str, d: int, C: int) -> Architecture:
    """Parse the ``linear`` / ``mlp:<hidden>`` architecture syntax."""
    text = text.strip().lower()
    if text == "linear":
        return Architecture(kind="linear", d=d, C=C)
    if text == "mlp":
        return Architecture(kind="mlp", d=d, C=C, hidden=DEFAULT_HIDDEN)
    if text.startswith("mlp:"):
        try:
            hidden = int(text.split(":", 1)[1])
        except ValueError as exc:
            raise ValueError(f"bad hidden width in {text!r}") from exc
        return Architecture(kind="mlp", d=d, C=C, hidden=hidden)
    raise ValueError(f"expected 'linear' or 'mlp:<hidden>', got {text!r}")


@dataclass(frozen=True)
class Hyperparams:
    """Momentum-SGD settings; the learning rate is multiplied by ``decay_factor``
    once, after ``decay_epoch`` epochs have run."""

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 256
    epochs: int = 100
    decay_epoch: int = 60
    decay_factor: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError("learning_rate must be finite and >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 1 or self.decay_epoch < 1:
            raise ValueError("batch_size, epochs and decay_epoch must be >= 1")
        if self.decay_epoch > self.epochs:
            raise ValueError("decay_epoch must be <= epochs")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must be in (0, 1]")


@dataclass(frozen=True)
class LearnerState:
    """Parameters plus momentum buffers; treated as immutable, training returns a new state."""

    architecture: Architecture
    params: Mapping[str, np.ndarray]
    velocity: Mapping[str, np.ndarray]


def _param_shapes(arch: Architecture) -> dict[str, tuple[int, ...]]:
    if arch.kind == "linear":
        return {"w": (arch.C, arch.d), "b": (arch.C,)}
    h = int(arch.hidden)  # type: ignore[arg-type]
    return {"w1": (h, arch.d), "b1": (h,), "w2": (arch.C, h), "b2": (arch.C,)}


def init_learner(arch: Architecture, seed: int) -> LearnerState:
    """Uniform fan-in initialization: weights in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero."""
    rng = np.random.default_rng([seed, 0])
    fan_in = {"w": arch.d, "w1": arch.d, "w2": arch.hidden or 1}
    params: dict[str, np.ndarray] = {}
    velocity: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(arch).items():
        if name.startswith("w"):
            bound = 1.0 / math.sqrt(fan_in[name])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
        velocity[name] = np.zeros(shape)
    return LearnerState(architecture=arch, params=params, velocity=velocity)


def _logits(arch: Architecture, params: Mapping[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    if arch.kind == "linear":
        return x @ params["w"].T + params["b"]
    pre = x @ params["w1"].T + params["b1"]
    return np.maximum(pre, 0.0) @ params["w2"].T + params["b2"]


def _loss_grad_arrays(
    state: LearnerState, x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    arch, params = state.architecture, state.params
    n = x.shape[0]
    if arch.kind == "linear":
        z = x @ params["w"].T + params["b"]
    else:
        pre = x @ params["w1"].T + params["b1"]
        hid = np.maximum(pre, 0.0)
        z = hid @ params["w2"].T + params["b2"]

    z_shift = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z_shift).sum(axis=1))
    loss = float(np.mean(log_norm - z_shift[np.arange(n), y]))

    probs = np.exp(z_shift - log_norm[:, None])
    dz = probs
    dz[np.arange(n), y] -= 1.0
    dz /= n

    if arch.kind == "linear":
        grads = {"w": dz.T @ x, "b": dz.sum(axis=0)}
    else:
        dhid = dz @ params["w2"]
        dpre = dhid * (pre > 0.0)  # ReLU subgradient at 0 is 0
        grads = {
            "w1": dpre.T @ x,
            "b1": dpre.sum(axis=0),
            "w2": dz.T @ hid,
            "b2": dz.sum(axis=0),
        }
    return loss, grads


def forward_loss_grad(
    state: LearnerState, batch: Sequence[Sample]
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy of the batch and exact analytic gradients.

    Softmax is computed after subtracting the per-row maximum for stability.
    """
    x, y = as_arrays(batch)
    if x.shape[1] != state.architecture.d:
        raise ValueError(f"expected dimension {state.architecture.d}, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value in batch")
    if y.max() >= state.architecture.C:
        raise ValueError("label out of range for this learner")
    return _loss_grad_arrays(state, x, y)


def train(state: LearnerState, dataset: Sequence[Sample], hp: Hyperparams) -> LearnerState:
    """Run momentum SGD for ``hp.epochs`` epochs over seeded shuffles of the dataset.

    Update rule per minibatch: ``v <- momentum * v + g``, ``theta <- theta - lr * v``,
    with weight decay added to the gradient.  The last batch of an epoch may be
    smaller.  Deterministic per ``hp.seed``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    x, y = as_arrays(dataset)
    if x.shape[1] != state.architecture.d:
        raise ValueError(f"expected dimension {state.architecture.d}, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value in dataset")
    rng = np.random.default_rng([hp.seed, 1])
    params = {k: v.copy() for k, v in state.params.items()}
    velocity = {k: v.copy() for k, v in state.velocity.items()}
    work = LearnerState(architecture=state.architecture, params=params, velocity=velocity)
    n = x.shape[0]
    lr = hp.learning_rate
    for epoch in range(1, hp.epochs + 1):
        if epoch == hp.decay_epoch + 1:
            lr *= hp.decay_factor
        order = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            idx = order[start : start + hp.batch_size]
            _, grads = _loss_grad_arrays(work, x[idx], y[idx])
            for name, g in grads.items():
                if hp.weight_decay:
                    g = g + hp.weight_decay * params[name]
                velocity[name] = hp.momentum * velocity[name] + g
                params[name] = params[name] - lr * velocity[name]
    return work


def predict_batch(state: LearnerState, features: np.ndarray) -> np.ndarray:
    """Argmax class per row of ``features``; ties resolve to the lowest class index."""
    if features.ndim != 2 or features.shape[1] != state.architecture.d:
        raise ValueError(f"expected shape (n, {state.architecture.d}), got {features.shape}")
    if not np.all(np.isfinite(features)):
        raise ValueError("non-finite feature value")
    return np.argmax(_logits(state.architecture, state.params, features), axis=1)


def predict(state: LearnerState, features: np.ndarray) -> int:
    """Predicted class for a single feature vector."""
    return int(predict_batch(state, np.asarray(features)[None, :])[0])


def strategy_step(
    strategy: Strategy,
    prev: LearnerState | None,
    timestamp_index: int,
    train_data: Sequence[Sample],
    hp: Hyperparams,
    architecture: Architecture,
) -> LearnerState:
    """Produce the timestamp's predictor according to the update strategy.

    Napping trains only at the first timestamp and afterwards returns ``prev``
    unchanged; From-Scratch and the GDumb-like rule reinitialize and train each
    time; Finetuning continues from the previous weights.
    """
    if strategy is Strategy.NAPPING:
        if timestamp_index == 0:
            return train(init_learner(architecture, hp.seed), train_data, hp)
        if prev is None:
            raise ValueError("napping after the first timestamp requires a previous state")
        return prev
    if strategy in (Strategy.FROM_SCRATCH, Strategy.GDUMB_LIKE):
        return train(init_learner(architecture, hp.seed), train_data, hp)
    if strategy is Strategy.FINETUNING:
        if timestamp_index == 0:
            return train(init_learner(architecture, hp.seed), train_data, hp)
        if prev is None:
            raise ValueError("finetuning after the first timestamp requires a previous state")
        return train(prev, train_data, hp)
    raise ValueError(f"unknown strategy {strategy!r}")
