"""Small feed-forward classifiers with closed-form input derivatives.

Models are plain numpy, float64 throughout. Two kinds exist: a
linear-softmax classifier (no hidden layers) and an MLP whose hidden
activations are twice continuously differentiable (tanh or softplus).
Every derivative here is written out per layer; second-order information
is produced by forward-over-reverse tangent propagation so that
``hvp_input`` is exact, not a finite-difference approximation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, DimensionError, NumericalError

LOSS_CROSS_ENTROPY = "cross-entropy"
LOSS_NEG_TARGET_LOGIT = "neg-target-logit"
LOSS_KINDS = (LOSS_CROSS_ENTROPY, LOSS_NEG_TARGET_LOGIT)

ACTIVATIONS = ("tanh", "softplus")

KIND_LINEAR_SOFTMAX = "linear-softmax"
KIND_MLP = "mlp"

_CHECKPOINT_FORMAT = "ffmodel-v1"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # piecewise form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    return np.logaddexp(0.0, z)  # softplus


def _act_d1(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return _sigmoid(z)


def _act_d2(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    s = _sigmoid(z)
    return s * (1.0 - s)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _logsumexp(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1)
    return m + np.log(np.exp(logits - m[..., None]).sum(axis=-1))


def _check_loss_kind(loss_kind: str) -> None:
    if loss_kind not in LOSS_KINDS:
        raise ConfigurationError(f"unknown loss kind {loss_kind!r}; expected one of {LOSS_KINDS}")


@dataclass
class FeedForwardModel:
    """Fully connected classifier ``x -> logits`` with smooth activations.

    ``weights[i]`` has shape (out_i, in_i); the final layer is linear (no
    activation), so the output is a logit vector of length ``num_classes``.

    ``input_shift`` is a fixed architectural constant subtracted from the
    input before the first layer. It is an exact reparameterization of the
    first-layer bias (the function class is unchanged) that keeps plain
    gradient descent well conditioned when features live in [0, 1]; input
    derivatives are unaffected.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    model_id: str = ""
    input_shift: float = 0.0

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}"
            )
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigurationError("weights and biases must be non-empty and aligned")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DimensionError("each layer needs W of shape (out, in) and b of shape (out,)")

    # -- structure -------------------------------------------------------

    @property
    def kind(self) -> str:
        return KIND_LINEAR_SOFTMAX if len(self.weights) == 1 else KIND_MLP

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    @classmethod
    def random_init(
        cls,
        layer_dims: list[int],
        activation: str = "tanh",
        seed: int = 0,
        scale: float = 1.0,
        model_id: str = "",
        input_shift: float = 0.0,
    ) -> "FeedForwardModel":
        """Gaussian init with per-layer 1/sqrt(fan_in) scaling."""
        if len(layer_dims) < 2:
            raise ConfigurationError("layer_dims needs at least input and output size")
        rng = np.random.Generator(np.random.PCG64(seed))
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(rng.normal(0.0, scale / np.sqrt(fan_in), size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activation=activation, model_id=model_id,
                   input_shift=input_shift)

    def copy(self) -> "FeedForwardModel":
        return FeedForwardModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            activation=self.activation,
            model_id=self.model_id,
            input_shift=self.input_shift,
        )

    # -- forward ---------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise DimensionError(f"input shape {x.shape} does not match ({self.input_dim},)")
        return x

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        a = x - self.input_shift
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(self.activation, w @ a + b)
        out = self.weights[-1] @ a + self.biases[-1]
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite value in model evaluation")
        return out

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.input_dim:
            raise DimensionError(f"batch shape {xs.shape} does not match (n, {self.input_dim})")
        a = xs - self.input_shift
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(self.activation, a @ w.T + b)
        return a @ self.weights[-1].T + self.biases[-1]

    def predict_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits_batch(xs), axis=1)

    # -- losses and input derivatives -------------------------------------

    def _check_label(self, y: int) -> int:
        y = int(y)
        if not 0 <= y < self.num_classes:
            raise ConfigurationError(f"label {y} outside [0, {self.num_classes})")
        return y

    def loss(self, x: np.ndarray, y: int, loss_kind: str = LOSS_CROSS_ENTROPY) -> float:
        _check_loss_kind(loss_kind)
        y = self._check_label(y)
        logits = self.logits(x)
        if loss_kind == LOSS_CROSS_ENTROPY:
            value = float(_logsumexp(logits) - logits[y])
        else:
            value = float(-logits[y])
        if not np.isfinite(value):
            raise NumericalError("non-finite value in model evaluation")
        return value

    def _forward_cache(self, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Pre-activations z_i of every hidden layer and the activations feeding each layer."""
        a = x - self.input_shift
        acts = [a]
        pre = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = w @ a + b
            pre.append(z)
            a = _act(self.activation, z)
            acts.append(a)
        return pre, acts

    def _loss_logit_grad(self, logits: np.ndarray, y: int, loss_kind: str) -> np.ndarray:
        if loss_kind == LOSS_CROSS_ENTROPY:
            g = _softmax(logits)
            g[y] -= 1.0
            return g
        g = np.zeros_like(logits)
        g[y] = -1.0
        return g

    def grad_input(self, x: np.ndarray, y: int, loss_kind: str = LOSS_CROSS_ENTROPY) -> np.ndarray:
        """Exact gradient of ``loss`` with respect to the input."""
        _check_loss_kind(loss_kind)
        y = self._check_label(y)
        x = self._check_input(x)
        pre, acts = self._forward_cache(x)
        logits = self.weights[-1] @ acts[-1] + self.biases[-1]
        g = self.weights[-1].T @ self._loss_logit_grad(logits, y, loss_kind)
        for w, z in zip(reversed(self.weights[:-1]), reversed(pre)):
            g = w.T @ (_act_d1(self.activation, z) * g)
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite value in model evaluation")
        return g

    def hvp_input(
        self, x: np.ndarray, y: int, loss_kind: str, v: np.ndarray
    ) -> np.ndarray:
        """Input-Hessian of ``loss`` applied to ``v``.

        Forward tangents of every pre-activation are pushed alongside the
        forward pass; the reverse pass then propagates the tangent of each
        adjoint, which at the input equals H(x) @ v.
        """
        _check_loss_kind(loss_kind)
        y = self._check_label(y)
        x = self._check_input(x)
        v = np.asarray(v, dtype=np.float64)
        if v.shape != x.shape:
            raise DimensionError(f"direction shape {v.shape} does not match {x.shape}")

        hidden_w = self.weights[:-1]
        pre, acts = self._forward_cache(x)
        # forward tangents
        tangents = []  # tangent of each pre-activation
        r = v
        for w, z in zip(hidden_w, pre):
            rz = w @ r
            tangents.append(rz)
            r = _act_d1(self.activation, z) * rz
        logits = self.weights[-1] @ acts[-1] + self.biases[-1]
        r_logits = self.weights[-1] @ r

        g_logits = self._loss_logit_grad(logits, y, loss_kind)
        if loss_kind == LOSS_CROSS_ENTROPY:
            p = _softmax(logits)
            rg_logits = p * r_logits - p * np.dot(p, r_logits)
        else:
            rg_logits = np.zeros_like(logits)

        g = self.weights[-1].T @ g_logits
        rg = self.weights[-1].T @ rg_logits
        for w, z, rz in zip(reversed(hidden_w), reversed(pre), reversed(tangents)):
            d1 = _act_d1(self.activation, z)
            d2 = _act_d2(self.activation, z)
            rgz = d2 * rz * g + d1 * rg
            g = w.T @ (d1 * g)
            rg = w.T @ rgz
        if not np.all(np.isfinite(rg)):
            raise NumericalError("non-finite value in model evaluation")
        return rg

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        arrays = {
            "format": np.array(_CHECKPOINT_FORMAT),
            "kind": np.array(self.kind),
            "activation": np.array(self.activation),
            "dims": np.array(self.layer_dims, dtype=np.int64),
            "model_id": np.array(self.model_id),
            "input_shift": np.array(self.input_shift, dtype=np.float64),
        }
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "FeedForwardModel":
        with np.load(path, allow_pickle=False) as data:
            fmt = str(data["format"])
            if fmt != _CHECKPOINT_FORMAT:
                raise ConfigurationError(f"unsupported checkpoint format {fmt!r}")
            dims = data["dims"]
            n_layers = len(dims) - 1
            weights = [data[f"W{i}"] for i in range(n_layers)]
            biases = [data[f"b{i}"] for i in range(n_layers)]
            return cls(
                weights,
                biases,
                activation=str(data["activation"]),
                model_id=str(data["model_id"]),
                input_shift=float(data["input_shift"]),
            )


# -- training ---------------------------------------------------------------


@dataclass
class TrainResult:
    model: FeedForwardModel
    final_accuracy: float
    losses: list[float] = field(default_factory=list)


def _weight_grads(
    model: FeedForwardModel, xs: np.ndarray, ys: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Mean cross-entropy weight/bias gradients over a batch, plus the loss."""
    n = xs.shape[0]
    a = xs - model.input_shift
    acts = [a]
    pre = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w.T + b
        pre.append(z)
        a = _act(model.activation, z)
        acts.append(a)
    logits = a @ model.weights[-1].T + model.biases[-1]
    p = _softmax(logits)
    loss = float(np.mean(_logsumexp(logits) - logits[np.arange(n), ys]))
    delta = p
    delta[np.arange(n), ys] -= 1.0
    delta /= n

    w_grads: list[np.ndarray] = [None] * len(model.weights)
    b_grads: list[np.ndarray] = [None] * len(model.biases)
    w_grads[-1] = delta.T @ acts[-1]
    b_grads[-1] = delta.sum(axis=0)
    back = delta @ model.weights[-1]
    for i in range(len(model.weights) - 2, -1, -1):
        back = back * _act_d1(model.activation, pre[i])
        w_grads[i] = back.T @ acts[i]
        b_grads[i] = back.sum(axis=0)
        back = back @ model.weights[i]
    return w_grads, b_grads, loss


def train(
    model: FeedForwardModel,
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    learning_rate: float,
    seed: int,
    batch_size: int = 32,
) -> TrainResult:
    """Mini-batch gradient descent on cross-entropy; deterministic per seed."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.size == 0 or labels.size == 0:
        raise DataError("training dataset is empty")
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise DimensionError("features must be (n, d) aligned with labels (n,)")
    if labels.min() < 0 or labels.max() >= model.num_classes:
        raise DataError("labels outside [0, num_classes)")

    trained = model.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    losses = []
    n = features.shape[0]
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            w_grads, b_grads, loss = _weight_grads(trained, features[idx], labels[idx])
            epoch_loss += loss * len(idx)
            for w, gw in zip(trained.weights, w_grads):
                w -= learning_rate * gw
            for b, gb in zip(trained.biases, b_grads):
                b -= learning_rate * gb
        losses.append(epoch_loss / n)
    accuracy = float(np.mean(trained.predict_batch(features) == labels))
    return TrainResult(model=trained, final_accuracy=accuracy, losses=losses)
