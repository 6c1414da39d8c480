"""Multi-layer perceptron with exact backpropagation.

The functional core (:func:`forward_logits`, :func:`hinge_loss_f`,
:func:`grad_input_hinge`, ...) operates on an :class:`MlpModel`.
:class:`MLPClassifier` wraps training in a scikit-learn estimator.
"""

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ParseError, UsageError
from .optimizers import AdamState, adam_step
from .rng import make_rng

ACTIVATIONS = ("identity", "relu")
_ACT_CODES = {"identity": 0, "relu": 1}
_MAGIC = b"NNW1"


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "identity"

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class MlpModel:
    """Ordered dense layers; the last one emits raw logits."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise UsageError("model needs at least one layer")
        for k, layer in enumerate(layers):
            if layer.activation not in ACTIVATIONS:
                raise UsageError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.weights.ndim != 2 or layer.biases.shape != (layer.out_dim,):
                raise UsageError(f"layer {k}: weights/biases shapes do not agree")
            if k and layers[k - 1].out_dim != layer.in_dim:
                raise UsageError(
                    f"layer {k} expects {layer.in_dim} inputs, "
                    f"previous layer emits {layers[k - 1].out_dim}"
                )
        if layers[-1].activation != "identity":
            raise UsageError("final layer must use the identity activation")
        if layers[-1].out_dim < 2:
            raise UsageError("a classifier needs at least two classes")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def num_classes(self):
        return self.layers[-1].out_dim

    @property
    def sizes(self):
        return (self.input_dim,) + tuple(layer.out_dim for layer in self.layers)


def init_mlp(sizes, rng):
    """Glorot-uniform weights, zero biases, relu on hidden layers.

    ``rng`` is a seed or a :class:`numpy.random.Generator`.
    """
    rng = make_rng(rng)
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise UsageError(f"bad layer sizes {sizes}")
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = "identity" if k == len(sizes) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MlpModel(tuple(layers))


def _check_input(m, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != m.input_dim:
        raise UsageError(f"input of shape {x.shape} does not match input_dim {m.input_dim}")
    return x


def _check_target(m, t):
    if not 0 <= int(t) < m.num_classes:
        raise UsageError(f"class index {t} out of range for {m.num_classes} classes")
    return int(t)


def _forward_cache(m, x):
    """Forward pass keeping pre-activations for backprop. Works on rank 1 or 2."""
    acts = [x]
    pres = []
    h = x
    for layer in m.layers:
        z = h @ layer.weights.T + layer.biases
        pres.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(h)
    return acts, pres


def _backward(m, acts, pres, upstream, want_params):
    """Propagate ``upstream`` (dLoss/dlogits) back through the network.

    Returns ``(grad_input, param_grads)``; ``param_grads`` is a list of
    ``(dW, db)`` summed over the batch, or ``None``.
    """
    delta = upstream
    param_grads = [] if want_params else None
    for k in range(len(m.layers) - 1, -1, -1):
        layer = m.layers[k]
        if layer.activation == "relu":
            delta = delta * (pres[k] > 0.0)
        if want_params:
            a = acts[k]
            if delta.ndim == 1:
                param_grads.append((np.outer(delta, a), delta.copy()))
            else:
                param_grads.append((delta.T @ a, delta.sum(axis=0)))
        delta = delta @ layer.weights
    if want_params:
        param_grads.reverse()
    return delta, param_grads


def forward_logits(m, x):
    """Logits ``Z(x)`` for one input vector (or a batch of rows)."""
    x = _check_input(m, x)
    return _forward_cache(m, x)[0][-1]


def argmax_lowest(z):
    """Index of the largest entry; ties go to the lowest index."""
    return int(np.argmax(z))


def classify(m, x):
    return argmax_lowest(forward_logits(m, x))


def _runner_up(z, t):
    """Largest logit other than ``t`` and its index (lowest index on ties)."""
    masked = np.where(np.arange(z.shape[0]) == t, -np.inf, z)
    j = int(np.argmax(masked))
    return j, masked[j]


def target_margin(z, t):
    """``Z_t - max_{i != t} Z_i``."""
    _, other = _runner_up(z, t)
    return float(z[t] - other)


def hinge_from_logits(z, t, kappa):
    _, other = _runner_up(z, t)
    return max(float(other - z[t]), -float(kappa))


def hinge_loss_f(m, x, t, kappa=0.0):
    """``max(max_{i != t} Z_i - Z_t, -kappa)``."""
    t = _check_target(m, t)
    if kappa < 0:
        raise UsageError("kappa must be non-negative")
    return hinge_from_logits(forward_logits(m, x), t, kappa)


def hinge_value_and_grad(m, x, t, kappa=0.0):
    """Hinge value and its gradient with respect to ``x`` in one pass.

    At the kink the logit-difference branch is active; the runner-up is the
    lowest index among tied logits. Below the floor the gradient is zero.
    """
    t = _check_target(m, t)
    x = _check_input(m, x)
    if x.ndim != 1:
        raise UsageError("hinge gradient is defined for a single input vector")
    acts, pres = _forward_cache(m, x)
    z = acts[-1]
    j, other = _runner_up(z, t)
    diff = float(other - z[t])
    if diff < -kappa:
        return -float(kappa), np.zeros_like(x)
    upstream = np.zeros_like(z)
    upstream[j] = 1.0
    upstream[t] = -1.0
    grad, _ = _backward(m, acts, pres, upstream, want_params=False)
    return diff, grad


def grad_input_hinge(m, x, t, kappa=0.0):
    return hinge_value_and_grad(m, x, t, kappa)[1]


def _softmax_ce(z, labels):
    """Mean cross-entropy and dLoss/dlogits for a batch of logits."""
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    n = z.shape[0]
    loss = -float(log_p[np.arange(n), labels].mean())
    dz = np.exp(log_p)
    dz[np.arange(n), labels] -= 1.0
    return loss, dz / n


def ce_loss(m, x, labels):
    x = np.atleast_2d(_check_input(m, x))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    return _softmax_ce(forward_logits(m, x), labels)[0]


def grad_params_ce(m, x, labels):
    """Softmax cross-entropy loss and its parameter gradients.

    ``x`` may be a single vector (with a scalar label) or a batch; the loss
    is the batch mean.

    Returns
    -------
    loss : float
    grads : list of (dW, db)
    """
    x = np.atleast_2d(_check_input(m, x))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape[0] != x.shape[0]:
        raise UsageError("labels and inputs differ in length")
    if labels.min() < 0 or labels.max() >= m.num_classes:
        raise UsageError("label out of range")
    acts, pres = _forward_cache(m, x)
    loss, dz = _softmax_ce(acts[-1], labels)
    _, grads = _backward(m, acts, pres, dz, want_params=True)
    return loss, grads


def _flatten(m):
    return np.concatenate([np.concatenate([l.weights.ravel(), l.biases]) for l in m.layers])


def _unflatten(m, flat):
    layers = []
    pos = 0
    for layer in m.layers:
        nw = layer.weights.size
        w = flat[pos:pos + nw].reshape(layer.weights.shape)
        pos += nw
        b = flat[pos:pos + layer.out_dim]
        pos += layer.out_dim
        layers.append(Layer(w.copy(), b.copy(), layer.activation))
    return MlpModel(tuple(layers))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.learning_rate) <= 0 or self.seed < 0:
            raise UsageError(f"invalid training config {self}")


def train_classifier(m, X, y, cfg=TrainConfig(), *, return_history=False):
    """Mini-batch Adam on softmax cross-entropy.

    The shuffling order is drawn from ``cfg.seed``, so training is
    deterministic. Returns the trained model (and the per-epoch mean losses
    when ``return_history`` is set).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise UsageError("cannot train on an empty dataset")
    _check_input(m, X)
    if y.shape != (X.shape[0],) or y.min() < 0 or y.max() >= m.num_classes:
        raise UsageError("labels must be one class index per example")
    rng = make_rng(cfg.seed)
    params = _flatten(m)
    state = AdamState.zeros_like(params, lr=cfg.learning_rate)
    history = []
    n = X.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = grad_params_ce(m, X[idx], y[idx])
            flat_grad = np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])
            state, params = adam_step(state, params, flat_grad)
            m = _unflatten(m, params)
            total += loss * idx.size
        history.append(total / n)
    return (m, history) if return_history else m


def save_weights(m, path):
    """Write the model in the little-endian ``NNW1`` layout."""
    with open(path, "wb") as fh:
        fh.write(dump_weights(m))


def dump_weights(m):
    parts = [_MAGIC, struct.pack("<I", len(m.layers))]
    for layer in m.layers:
        parts.append(struct.pack("<IIB", layer.in_dim, layer.out_dim, _ACT_CODES[layer.activation]))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())
    return b"".join(parts)


def load_weights(path):
    with open(path, "rb") as fh:
        return parse_weights(fh.read())


def parse_weights(buf):
    if len(buf) < 8:
        raise ParseError("weight file too short for header", 0)
    if buf[:4] != _MAGIC:
        raise ParseError(f"bad magic {bytes(buf[:4])!r}, expected {_MAGIC!r}", 0)
    (count,) = struct.unpack_from("<I", buf, 4)
    if count == 0:
        raise ParseError("weight file declares zero layers", 4)
    pos = 8
    codes = {v: k for k, v in _ACT_CODES.items()}
    layers = []
    prev_out = None
    for k in range(count):
        if pos + 9 > len(buf):
            raise ParseError(f"truncated header of layer {k}", pos)
        in_dim, out_dim, code = struct.unpack_from("<IIB", buf, pos)
        if code not in codes:
            raise ParseError(f"layer {k}: unknown activation code {code}", pos + 8)
        if in_dim == 0 or out_dim == 0:
            raise ParseError(f"layer {k}: zero dimension", pos)
        if prev_out is not None and in_dim != prev_out:
            raise ParseError(f"layer {k}: in_dim {in_dim} does not chain to {prev_out}", pos)
        pos += 9
        nbytes = 8 * (out_dim * in_dim + out_dim)
        if pos + nbytes > len(buf):
            raise ParseError(f"layer {k}: truncated weights", pos)
        w = np.frombuffer(buf, dtype="<f8", count=out_dim * in_dim, offset=pos)
        b = np.frombuffer(buf, dtype="<f8", count=out_dim, offset=pos + 8 * out_dim * in_dim)
        pos += nbytes
        layers.append(Layer(w.reshape(out_dim, in_dim).astype(np.float64),
                            b.astype(np.float64), codes[code]))
        prev_out = out_dim
    if pos != len(buf):
        raise ParseError(f"{len(buf) - pos} trailing bytes", pos)
    try:
        return MlpModel(tuple(layers))
    except UsageError as exc:
        raise ParseError(str(exc), pos) from None


def fold_input_affine(m, mean, std):
    """Absorb ``x -> (x - mean) / std`` into the first layer of ``m``."""
    first = m.layers[0]
    w = first.weights / std
    b = first.biases - w @ mean
    return MlpModel((Layer(w, b, first.activation),) + m.layers[1:])


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """ReLU MLP trained with mini-batch Adam on cross-entropy.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(16, 16)
    epochs : int, default=200
    batch_size : int, default=64
    learning_rate : float, default=1e-3
    random_state : int, default=0
        Seeds both initialization and shuffling.
    standardize : bool, default=True
        Train on per-feature standardized inputs, then fold the affine map
        into the first layer so ``model_`` consumes raw inputs.
    n_classes : int or None
        Number of output logits; inferred from ``y`` when ``None``.

    Attributes
    ----------
    model_ : MlpModel
    classes_ : ndarray
        ``arange(n_classes)``; labels must already be class indices.
    loss_curve_ : list of float
    """

    def __init__(self, hidden_layer_sizes=(16, 16), epochs=200, batch_size=64,
                 learning_rate=1e-3, random_state=0, standardize=True, n_classes=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state
        self.standardize = standardize
        self.n_classes = n_classes

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise UsageError("cannot fit on an empty dataset")
        n_classes = self.n_classes or int(y.max()) + 1
        n_classes = max(n_classes, 2)
        rng = make_rng(self.random_state)
        init_seed = int(rng.integers(2**32))
        sizes = (X.shape[1], *self.hidden_layer_sizes, n_classes)
        cfg = TrainConfig(self.epochs, self.batch_size, self.learning_rate,
                          int(rng.integers(2**32)))
        if self.standardize:
            mean = X.mean(axis=0)
            std = np.maximum(X.std(axis=0), 1e-6)
        else:
            mean, std = np.zeros(X.shape[1]), np.ones(X.shape[1])
        model, self.loss_curve_ = train_classifier(
            init_mlp(sizes, init_seed), (X - mean) / std, y, cfg, return_history=True)
        self.model_ = fold_input_affine(model, mean, std)
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model):
        """Wrap an already-trained :class:`MlpModel`."""
        hidden = tuple(layer.out_dim for layer in model.layers[:-1])
        est = cls(hidden_layer_sizes=hidden, n_classes=model.num_classes)
        est.model_ = model
        est.classes_ = np.arange(model.num_classes)
        est.n_features_in_ = model.input_dim
        est.loss_curve_ = []
        return est

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return forward_logits(self.model_, np.atleast_2d(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)
